#pragma once

#include <array>
#include <string>

#include "hazelab/image.hpp"
#include "hazelab/rng.hpp"

namespace hazelab {

// Ambient illumination colour, each channel in [0, 1].
struct Illumination {
    std::array<float, 3> rgb{1.0f, 1.0f, 1.0f};

    static Illumination gray(float v) { return {{v, v, v}}; }
    bool is_gray() const { return rgb[0] == rgb[1] && rgb[1] == rgb[2]; }
};

struct Range {
    double lo = 0.0;
    double hi = 1.0;
};

// Half-open HSV sampling intervals for the illumination colour.
struct IlluminationRanges {
    Range hue{0.0, 1.0};
    Range saturation{0.0, 0.5};
    Range value{0.6, 1.0};

    // Grayscale haze: saturation pinned to 0.
    static IlluminationRanges grayscale() { return {{0.0, 1.0}, {0.0, 0.0}, {0.6, 1.0}}; }
    // Throws ConfigError naming "<prefix>.hue" etc. on a bad range.
    void validate(const std::string& prefix = "haze.illumination") const;
};

struct HazeParams {
    float beta = 0.0f;
    StructureKind kind = StructureKind::metric_depth;
    IlluminationRanges illumination;

    void validate() const;
};

struct HazySample {
    RgbImage hazy;
    RgbImage clean;
    Plane transmission;
    Illumination illumination;
    float beta = 0.0f;
    std::string id;
};

// t = exp(-beta * d). Requires a fully valid map with d >= 0.
Plane transmission_from_depth(const StructureMap& depth, float beta);
// t = exp(-beta / D), with D = 0 mapped to t = 0. Requires D >= 0 and a full mask.
Plane transmission_from_disparity(const StructureMap& disparity, float beta);
// Dispatches on map.kind.
Plane transmission(const StructureMap& map, float beta);

// Each invalid pixel copies its nearest valid pixel (Euclidean distance; on
// ties the candidate earliest in row-major order wins).
StructureMap fill_occlusions_nearest(const StructureMap& map);

// Standard hexcone HSV -> RGB, all components in [0, 1].
std::array<float, 3> hsv_to_rgb(double h, double s, double v);
Illumination sample_illumination(const IlluminationRanges& ranges, Rng& rng);

// I = J * t + A * (1 - t).
RgbImage compose_haze(const RgbImage& clean, const Plane& t, const Illumination& a);
// J = (I - A * (1 - t)) / max(t, t_floor), clamped to [0, 1].
RgbImage invert_haze(const RgbImage& hazy, const Plane& t, const Illumination& a,
                     float t_floor = 0.1f);

// Full synthesis of one sample from a clean image and its structure map.
HazySample synthesize(const RgbImage& clean, const StructureMap& structure, float beta,
                      const Illumination& a, std::string id);

}  // namespace hazelab
