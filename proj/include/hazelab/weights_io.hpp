#pragma once

#include <filesystem>
#include <iosfwd>

#include "hazelab/network.hpp"

namespace hazelab {

// HZW1 named-tensor file: "HZW1", u32 tensor count, u8 normalisation flag
// (followed by 3 mean and 3 std floats when set), then per tensor a u16 name
// length, the UTF-8 name and an HZT1 payload.
void write_weights(std::ostream& out, const Model& model);
void save_weights(const std::filesystem::path& path, const Model& model);

// Loads into a freshly built model for config. Every declared tensor must be
// present exactly once with its declared shape; errors name the offender.
Model read_weights(std::istream& in, const ModelConfig& config);
Model load_weights(const std::filesystem::path& path, const ModelConfig& config);

}  // namespace hazelab
