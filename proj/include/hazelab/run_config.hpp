#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "hazelab/dataset.hpp"
#include "hazelab/network.hpp"
#include "hazelab/training.hpp"

namespace hazelab {

struct DataConfig {
    // RGB-D source manifest; procedural scenes are generated when absent.
    std::optional<std::filesystem::path> manifest;
    int procedural_train = 200;
    int procedural_val = 20;
    int procedural_test = 50;
    SourceOptions sources;
};

// Everything a command needs. Every field has a default; see README for the
// JSON layout. Unknown keys are rejected with their field path.
struct RunConfig {
    std::uint64_t seed = 0;
    ModelConfig model;
    DataConfig data;
    Protocol haze = Protocol::testset_a();
    TrainConfig train;
    std::optional<std::filesystem::path> init_weights;

    // Copies seed and haze into train and validates the whole document.
    void finalize();

    // Sources of one split, from the manifest or procedurally.
    std::vector<Source> sources(const std::string& split) const;
};

RunConfig parse_run_config(const std::string& json_text, const std::filesystem::path& base = {});
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace hazelab
