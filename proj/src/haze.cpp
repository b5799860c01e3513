#include "hazelab/haze.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hazelab/error.hpp"

namespace hazelab {

void IlluminationRanges::validate(const std::string& prefix) const {
    auto check = [&](const Range& r, const char* field) {
        if (!(r.lo >= 0.0 && r.hi <= 1.0 && r.lo <= r.hi)) {
            throw ConfigError(prefix + "." + field + ": range must satisfy 0 <= lo <= hi <= 1");
        }
    };
    check(hue, "hue");
    check(saturation, "saturation");
    check(value, "value");
}

void HazeParams::validate() const {
    if (!(beta >= 0.0f) || !std::isfinite(beta)) {
        throw ConfigError("haze.beta: must be a finite value >= 0");
    }
    illumination.validate();
}

namespace {

void require_filled(const StructureMap& map, const char* what) {
    if (!map.all_valid()) {
        throw NumericError(std::string(what) + ": structure map has unfilled invalid pixels");
    }
}

}  // namespace

Plane transmission_from_depth(const StructureMap& depth, float beta) {
    require_filled(depth, "transmission_from_depth");
    Plane t(depth.height(), depth.width());
    for (std::size_t i = 0; i < t.size(); ++i) {
        const float d = depth.values.data[i];
        if (!(d >= 0.0f) || !std::isfinite(d)) {
            throw NumericError("transmission_from_depth: negative or non-finite depth " +
                               std::to_string(d) + " at index " + std::to_string(i));
        }
        t.data[i] = static_cast<float>(std::exp(-double{beta} * d));
    }
    return t;
}

Plane transmission_from_disparity(const StructureMap& disparity, float beta) {
    require_filled(disparity, "transmission_from_disparity");
    Plane t(disparity.height(), disparity.width());
    for (std::size_t i = 0; i < t.size(); ++i) {
        const float d = disparity.values.data[i];
        if (!(d >= 0.0f) || !std::isfinite(d)) {
            throw NumericError("transmission_from_disparity: negative or non-finite disparity " +
                               std::to_string(d) + " at index " + std::to_string(i));
        }
        t.data[i] = d == 0.0f ? 0.0f : static_cast<float>(std::exp(-double{beta} / d));
    }
    return t;
}

Plane transmission(const StructureMap& map, float beta) {
    return map.kind == StructureKind::metric_depth ? transmission_from_depth(map, beta)
                                                   : transmission_from_disparity(map, beta);
}

StructureMap fill_occlusions_nearest(const StructureMap& map) {
    const int h = map.height();
    const int w = map.width();
    if (std::none_of(map.valid.begin(), map.valid.end(), [](std::uint8_t v) { return v != 0; })) {
        throw NumericError("fill_occlusions_nearest: map has no valid pixel");
    }
    StructureMap out = map;
    auto valid_at = [&](int y, int x) { return map.valid[static_cast<std::size_t>(y) * w + x] != 0; };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (valid_at(y, x)) continue;
            // Expanding square rings; a ring at Chebyshev radius r holds no
            // point closer than r, so stop once r^2 exceeds the best distance.
            long best_d2 = std::numeric_limits<long>::max();
            long best_index = 0;
            const int max_r = std::max(h, w);
            for (int r = 1; r <= max_r && static_cast<long>(r) * r <= best_d2; ++r) {
                for (int yy = std::max(0, y - r); yy <= std::min(h - 1, y + r); ++yy) {
                    const bool edge_row = yy == y - r || yy == y + r;
                    const int step = edge_row ? 1 : 2 * r;
                    for (int xx = x - r; xx <= x + r; xx += step) {
                        if (xx < 0 || xx >= w || !valid_at(yy, xx)) continue;
                        const long dy = yy - y;
                        const long dx = xx - x;
                        const long d2 = dy * dy + dx * dx;
                        const long index = static_cast<long>(yy) * w + xx;
                        if (d2 < best_d2 || (d2 == best_d2 && index < best_index)) {
                            best_d2 = d2;
                            best_index = index;
                        }
                    }
                }
            }
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            out.values.data[i] = map.values.data[static_cast<std::size_t>(best_index)];
        }
    }
    std::fill(out.valid.begin(), out.valid.end(), std::uint8_t{1});
    return out;
}

std::array<float, 3> hsv_to_rgb(double h, double s, double v) {
    const double c = v * s;
    const double hp = std::fmod(h * 6.0, 6.0);
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0.0;
    double g = 0.0;
    double b = 0.0;
    switch (static_cast<int>(hp)) {
        case 0: r = c; g = x; break;
        case 1: r = x; g = c; break;
        case 2: g = c; b = x; break;
        case 3: g = x; b = c; break;
        case 4: r = x; b = c; break;
        default: r = c; b = x; break;
    }
    const double m = v - c;
    auto out = [&](double value) { return static_cast<float>(std::clamp(value + m, 0.0, 1.0)); };
    return {out(r), out(g), out(b)};
}

Illumination sample_illumination(const IlluminationRanges& ranges, Rng& rng) {
    const double h = rng.uniform(ranges.hue.lo, ranges.hue.hi);
    const double s = rng.uniform(ranges.saturation.lo, ranges.saturation.hi);
    const double v = rng.uniform(ranges.value.lo, ranges.value.hi);
    return {hsv_to_rgb(h, s, v)};
}

namespace {

void require_plane_matches(const RgbImage& image, const Plane& t, const char* what) {
    if (image.height != t.height || image.width != t.width) {
        throw ShapeError(std::string(what) + ": image " + std::to_string(image.height) + "x" +
                         std::to_string(image.width) + " vs transmission " +
                         std::to_string(t.height) + "x" + std::to_string(t.width));
    }
}

}  // namespace

RgbImage compose_haze(const RgbImage& clean, const Plane& t, const Illumination& a) {
    require_plane_matches(clean, t, "compose_haze");
    for (float v : t.data) {
        if (!(v >= 0.0f && v <= 1.0f)) {
            throw NumericError("compose_haze: transmission value " + std::to_string(v) +
                               " outside [0, 1]");
        }
    }
    RgbImage out(clean.height, clean.width);
    const std::size_t n = clean.pixels();
    for (int c = 0; c < 3; ++c) {
        const float ac = a.rgb[c];
        const float* j = clean.channel(c).data();
        float* dst = out.channel(c).data();
        for (std::size_t i = 0; i < n; ++i) {
            const float ti = t.data[i];
            dst[i] = j[i] * ti + ac * (1.0f - ti);
        }
    }
    return out;
}

RgbImage invert_haze(const RgbImage& hazy, const Plane& t, const Illumination& a, float t_floor) {
    require_plane_matches(hazy, t, "invert_haze");
    RgbImage out(hazy.height, hazy.width);
    const std::size_t n = hazy.pixels();
    for (int c = 0; c < 3; ++c) {
        const double ac = a.rgb[c];
        const float* src = hazy.channel(c).data();
        float* dst = out.channel(c).data();
        for (std::size_t i = 0; i < n; ++i) {
            const double ti = t.data[i];
            const double j = (src[i] - ac * (1.0 - ti)) / std::max(ti, double{t_floor});
            dst[i] = static_cast<float>(std::clamp(j, 0.0, 1.0));
        }
    }
    return out;
}

HazySample synthesize(const RgbImage& clean, const StructureMap& structure, float beta,
                      const Illumination& a, std::string id) {
    HazySample s;
    s.transmission = transmission(structure, beta);
    s.hazy = compose_haze(clean, s.transmission, a);
    s.clean = clean;
    s.illumination = a;
    s.beta = beta;
    s.id = std::move(id);
    return s;
}

}  // namespace hazelab
