#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hazelab/tensor.hpp"

namespace hazelab {

// Single-channel float image, row-major.
struct Plane {
    int height = 0;
    int width = 0;
    std::vector<float> data;

    Plane() = default;
    Plane(int h, int w, float fill = 0.0f)
        : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

    float& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
    float at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return data.size(); }
};

// Planar RGB image with values in [0, 1].
struct RgbImage {
    int height = 0;
    int width = 0;
    std::vector<float> data;  // channel-major: data[c * H * W + y * W + x]

    RgbImage() = default;
    RgbImage(int h, int w, float fill = 0.0f)
        : height(h), width(w), data(static_cast<std::size_t>(3) * h * w, fill) {}

    std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }
    float& at(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    float at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    std::span<float> channel(int c) { return {data.data() + c * pixels(), pixels()}; }
    std::span<const float> channel(int c) const { return {data.data() + c * pixels(), pixels()}; }
    bool same_size(const RgbImage& o) const { return height == o.height && width == o.width; }
};

enum class StructureKind { metric_depth, disparity };

std::string to_string(StructureKind kind);
StructureKind structure_kind_from_string(const std::string& s);

// Depth (metres) or disparity map with a per-pixel validity mask.
struct StructureMap {
    Plane values;
    std::vector<std::uint8_t> valid;  // 1 where the value is trusted
    StructureKind kind = StructureKind::metric_depth;

    StructureMap() = default;
    StructureMap(Plane v, StructureKind k)
        : values(std::move(v)), valid(values.size(), 1), kind(k) {}

    int height() const { return values.height; }
    int width() const { return values.width; }
    bool all_valid() const;
};

// Bilinear resampling with half-pixel centres; output clamped to the source range.
RgbImage resize_bilinear(const RgbImage& image, int height, int width);
Plane resize_bilinear(const Plane& plane, int height, int width);
// The structure map must be fully valid (fill occlusions first).
StructureMap resize_bilinear(const StructureMap& map, int height, int width);

struct CroppedPair {
    RgbImage image;
    StructureMap structure;
};

// Removes the left left_frac of columns and bottom bottom_frac of rows from
// both image and structure; the top-right corner stays anchored.
CroppedPair crop_margins(const RgbImage& image, const StructureMap& structure, double left_frac,
                         double bottom_frac);

// N x 3 x H x W from equally sized images, and the inverse for batch item n.
Tensor to_tensor(std::span<const RgbImage> images);
Tensor to_tensor(const RgbImage& image);
RgbImage image_from_tensor(const Tensor& t, int n = 0);
Tensor to_tensor(const Plane& plane);

// P6 binary PPM, maxval 255. Values are clamped and rounded on write.
void write_ppm(const std::filesystem::path& path, const RgbImage& image);
RgbImage read_ppm(const std::filesystem::path& path);

// 16-bit P5 PGM (maxval 65535) of raw levels.
void write_pgm16(const std::filesystem::path& path, int height, int width,
                 std::span<const std::uint16_t> levels);
std::vector<std::uint16_t> read_pgm16(const std::filesystem::path& path, int& height, int& width);

// Structure maps on disk: 16-bit PGM plus a JSON sidecar ("<path>.json") with
// {"kind": "metric_depth"|"disparity", "scale": units per level}. Level 0 is
// invalid. Paths ending in ".hzt" are read as HZT1 floats instead (all valid,
// kind taken from the argument).
void write_structure(const std::filesystem::path& path, const StructureMap& map, double scale);
StructureMap read_structure(const std::filesystem::path& path,
                            StructureKind fallback_kind = StructureKind::metric_depth);

// Side-by-side image of the given panels with separator-pixel gaps (white).
RgbImage hstack(std::span<const RgbImage> panels, int separator);

}  // namespace hazelab
