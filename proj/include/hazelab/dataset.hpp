#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hazelab/haze.hpp"
#include "hazelab/image.hpp"

namespace hazelab {

// One RGB-D source as listed in a dataset manifest.
struct ManifestEntry {
    std::filesystem::path image;
    std::filesystem::path structure;
    StructureKind kind = StructureKind::metric_depth;
    std::string split;  // "train", "val" or "test"
};

// Manifest file: JSON list of {"image", "structure", "kind", "split"}. Relative
// paths are resolved against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries);

// A clean image with a fully valid structure map at the working resolution.
struct Source {
    std::string id;
    RgbImage image;
    StructureMap structure;
};

struct SourceOptions {
    int height = 256;
    int width = 256;
    // Margins removed from disparity sources before resizing.
    double crop_left = 0.15;
    double crop_bottom = 0.2;
};

// Load pipeline per entry: read, crop margins (disparity only), fill
// occlusions, resize.
Source load_source(const ManifestEntry& entry, const SourceOptions& options);
std::vector<Source> load_sources(std::span<const ManifestEntry> entries, const std::string& split,
                                 const SourceOptions& options);

// Procedural sources for one split; the split name enters the per-image seeds
// so train, val and test never share scenes.
std::vector<Source> procedural_sources(int count, int height, int width, std::uint64_t seed,
                                       const std::string& split);

// Scattering coefficients per structure kind.
struct BetaSchedule {
    std::vector<float> depth{0.1f, 0.2f, 0.3f, 0.4f};
    std::vector<float> disparity{5.0f, 7.5f, 12.5f, 20.0f};

    const std::vector<float>& for_kind(StructureKind kind) const {
        return kind == StructureKind::metric_depth ? depth : disparity;
    }
    void validate(const std::string& prefix = "haze.beta") const;
};

// Haze protocol: which betas, which illumination, which sources qualify.
struct Protocol {
    std::string name = "custom";
    BetaSchedule betas;
    IlluminationRanges illumination;
    bool metric_depth_only = false;

    // 4 betas per source with coloured illumination.
    static Protocol testset_a();
    // Grayscale illumination; metric-depth sources only.
    static Protocol testset_b();
    static Protocol by_name(const std::string& name);

    bool accepts(const Source& s) const {
        return !metric_depth_only || s.structure.kind == StructureKind::metric_depth;
    }
};

// Lazily synthesises one epoch: every (source, beta) pair once, in an order
// shuffled by (seed, epoch). Sample contents depend only on
// hash(seed, epoch, image index, beta index), never on visiting order.
class EpochStream {
public:
    EpochStream(std::span<const Source> sources, const Protocol& protocol, std::uint64_t seed,
                std::uint64_t epoch, bool shuffle = true);

    std::size_t size() const { return order_.size(); }
    HazySample operator[](std::size_t i) const;

    struct Key {
        std::size_t image;
        std::size_t beta;
    };
    Key key(std::size_t i) const { return order_[i]; }

private:
    std::span<const Source> sources_;
    Protocol protocol_;
    std::uint64_t seed_;
    std::uint64_t epoch_;
    std::vector<Key> order_;
};

// Static sample set on disk: "<dir>/samples.json" listing, per sample, the
// hazy and clean PPMs, the HZT1 transmission, beta, illumination and source id.
struct SampleSetInfo {
    std::string protocol;
    std::uint64_t seed = 0;
};
void write_sample_set(const std::filesystem::path& dir, std::span<const HazySample> samples,
                      const SampleSetInfo& info);
std::vector<HazySample> read_sample_set(const std::filesystem::path& samples_json,
                                        SampleSetInfo* info = nullptr);
bool is_sample_set(const std::filesystem::path& path);

}  // namespace hazelab
