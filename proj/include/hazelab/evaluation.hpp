#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hazelab/dataset.hpp"
#include "hazelab/dcp.hpp"
#include "hazelab/network.hpp"

namespace hazelab {

struct MetricsRow {
    std::string id;
    float beta = 0.0f;
    Illumination illumination;
    double mse = 0.0;
    double psnr = 0.0;
    double ssim = 0.0;
};

struct Aggregates {
    double mse = 0.0;
    double psnr = 0.0;
    double ssim = 0.0;
};

struct MetricsReport {
    std::string protocol;
    std::string method;
    std::string weights_hash;  // empty for weight-free methods
    std::uint64_t seed = 0;
    std::vector<MetricsRow> rows;

    // Arithmetic means of the rows; empty when there are no rows.
    std::optional<Aggregates> aggregates() const;
};

// Maps a hazy sample to a predicted clean image. The sample is passed whole so
// methods that are given the true illumination (the ablation baseline) can use it.
using DehazeMethod = std::function<RgbImage(const HazySample&)>;

DehazeMethod identity_method();
DehazeMethod dcp_method(const DcpOptions& options = {});
// model must outlive the returned method.
DehazeMethod model_method(Model& model);

// Hex digest of the parameter names and values.
std::string weights_fingerprint(const Model& model);

struct EvalOptions {
    // Writes "<id>.ppm" triptychs (hazy | predicted | clean) for the first
    // max_triptychs samples when set.
    std::optional<std::filesystem::path> triptych_dir;
    std::size_t max_triptychs = 8;
};

MetricsRow score_sample(const HazySample& sample, const RgbImage& prediction);

MetricsReport evaluate_samples(std::span<const HazySample> samples, const DehazeMethod& method,
                               const EvalOptions& options = {});
// Regenerates the protocol's hazy set from seed (sources in order, then betas)
// and scores the method on it.
MetricsReport evaluate_set(std::span<const Source> sources, const Protocol& protocol,
                           std::uint64_t seed, const DehazeMethod& method,
                           const EvalOptions& options = {});

constexpr int kTriptychSeparator = 4;
RgbImage triptych(const RgbImage& hazy, const RgbImage& predicted, const RgbImage& clean);

// CSV columns id,beta,A_r,A_g,A_b,mse,psnr,ssim; JSON summary with metadata and
// aggregates (null when there are no rows).
void write_csv(const std::filesystem::path& path, const MetricsReport& report);
void write_summary(const std::filesystem::path& path, const MetricsReport& report);
void emit_report(const MetricsReport& report, const std::filesystem::path& csv_path,
                 const std::filesystem::path& json_path);
std::vector<MetricsRow> read_csv(const std::filesystem::path& path);

}  // namespace hazelab
