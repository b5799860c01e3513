#pragma once

#include "hazelab/haze.hpp"
#include "hazelab/image.hpp"

namespace hazelab {

struct DcpOptions {
    float omega = 0.95f;
    int patch = 15;
    float t_floor = 0.1f;
    int guided_radius = 40;
    float guided_eps = 1e-3f;
    // Fraction of brightest dark-channel pixels averaged into A.
    double top_fraction = 0.001;
};

struct DcpResult {
    RgbImage image;
    Illumination illumination;
    Plane transmission;  // refined
};

// Per-pixel minimum over RGB, then a patch x patch minimum filter (windows
// truncated at the borders).
Plane dark_channel(const RgbImage& image, int patch);
Plane min_filter(const Plane& src, int patch);
Illumination estimate_illumination(const RgbImage& hazy, const Plane& dark, double top_fraction);
// Edge-preserving guided filter with box windows of radius r.
Plane guided_filter(const Plane& guide, const Plane& src, int radius, float eps);
Plane grayscale(const RgbImage& image);

DcpResult dcp_dehaze(const RgbImage& hazy, const DcpOptions& options = {});

}  // namespace hazelab
