#include "hazelab/scene.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "hazelab/error.hpp"
#include "hazelab/haze.hpp"
#include "hazelab/rng.hpp"

namespace hazelab {
namespace {

// Lattice value noise in [0, 1] with smoothstep interpolation.
class ValueNoise {
public:
    ValueNoise(std::uint64_t seed, double cell) : seed_(seed), cell_(cell) {}

    double operator()(double y, double x) const {
        const double fy = y / cell_;
        const double fx = x / cell_;
        const auto iy = static_cast<std::int64_t>(std::floor(fy));
        const auto ix = static_cast<std::int64_t>(std::floor(fx));
        const double ty = smooth(fy - static_cast<double>(iy));
        const double tx = smooth(fx - static_cast<double>(ix));
        const double a = lattice(iy, ix);
        const double b = lattice(iy, ix + 1);
        const double c = lattice(iy + 1, ix);
        const double d = lattice(iy + 1, ix + 1);
        return (a + (b - a) * tx) * (1.0 - ty) + (c + (d - c) * tx) * ty;
    }

private:
    static double smooth(double t) { return t * t * (3.0 - 2.0 * t); }
    double lattice(std::int64_t y, std::int64_t x) const {
        const std::uint64_t h = hash_seed({seed_, static_cast<std::uint64_t>(y),
                                           static_cast<std::uint64_t>(x)});
        return static_cast<double>(h >> 11) * 0x1.0p-53;
    }

    std::uint64_t seed_;
    double cell_;
};

// Two-octave noise centred on 0, roughly in [-0.5, 0.5].
class Texture {
public:
    Texture(std::uint64_t seed, double coarse)
        : low_(hash_seed({seed, 1}), coarse), high_(hash_seed({seed, 2}), coarse / 4.0) {}
    double operator()(double y, double x) const {
        return 0.65 * (low_(y, x) - 0.5) + 0.35 * (high_(y, x) - 0.5);
    }

private:
    ValueNoise low_;
    ValueNoise high_;
};

enum class BlobKind { vegetation, object };

struct Blob {
    BlobKind kind;
    double cy, cx;  // centre
    double ry, rx;  // radii
    double base;    // bottom row, decides depth and paint order
    double hue, sat, val;
    double tex_amp;
    std::uint64_t tex_seed;
};

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

}  // namespace

ProceduralScene generate_procedural_scene(std::uint64_t seed, int height, int width,
                                          float max_depth) {
    if (height < 8 || width < 8) throw ShapeError("procedural scene must be at least 8x8");
    if (!(max_depth > 0.0f)) throw ConfigError("scene.max_depth: must be positive");

    Rng rng(hash_seed({seed, 0x5cee7eULL}));
    const double h = height;
    const double w = width;
    const double size = std::max(h, w);

    const double horizon = h * rng.uniform(0.25, 0.45);
    const double near_depth = rng.uniform(1.5, 3.0);
    const double ground_cap = 0.9 * max_depth;

    ProceduralScene scene{RgbImage(height, width), StructureMap(Plane(height, width),
                                                                 StructureKind::metric_depth)};

    auto ground_depth = [&](double y) {
        const double below = std::max(y - horizon, 0.5);
        return std::min(near_depth * (h - horizon) / below, ground_cap);
    };

    const double sky_hue = rng.uniform(0.53, 0.66);
    const double sky_sat = rng.uniform(0.25, 0.65);
    const double sky_val = rng.uniform(0.65, 0.95);
    const Texture sky_tex(hash_seed({seed, 10}), size / 2.0);

    const double ground_hue = rng.uniform(0.03, 0.12);
    const double ground_sat = rng.uniform(0.0, 0.35);
    const double ground_val = rng.uniform(0.3, 0.6);
    const Texture ground_tex(hash_seed({seed, 11}), size / 6.0);

    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            std::array<float, 3> rgb;
            float depth;
            if (y + 0.5 < horizon) {
                const double lift = 0.25 * (y + 0.5) / horizon;
                rgb = hsv_to_rgb(sky_hue, sky_sat * (1.0 - lift),
                                 std::clamp(sky_val + 0.08 * sky_tex(y, x), 0.0, 1.0));
                depth = max_depth;
            } else {
                const double v = ground_val * (1.0 + 0.6 * ground_tex(y, x));
                rgb = hsv_to_rgb(ground_hue, ground_sat, std::clamp(v, 0.0, 1.0));
                depth = static_cast<float>(ground_depth(y + 0.5));
            }
            for (int c = 0; c < 3; ++c) scene.image.at(c, y, x) = rgb[c];
            scene.depth.values.at(y, x) = depth;
        }
    }

    std::vector<Blob> blobs;
    const int vegetation = 1 + static_cast<int>(rng.below(3));
    const int objects = 1 + static_cast<int>(rng.below(4));
    for (int i = 0; i < vegetation + objects; ++i) {
        Blob b{};
        b.kind = i < vegetation ? BlobKind::vegetation : BlobKind::object;
        b.tex_seed = hash_seed({seed, 100 + static_cast<std::uint64_t>(i)});
        if (b.kind == BlobKind::vegetation) {
            b.rx = w * rng.uniform(0.12, 0.3);
            b.ry = h * rng.uniform(0.12, 0.28);
            b.base = rng.uniform(horizon + 0.05 * h, h + 0.1 * h);
            b.hue = rng.uniform(0.22, 0.4);
            b.sat = rng.uniform(0.45, 0.85);
            b.val = rng.uniform(0.3, 0.65);
            b.tex_amp = 0.7;
        } else {
            b.rx = w * rng.uniform(0.06, 0.18);
            b.ry = h * rng.uniform(0.08, 0.22);
            b.base = rng.uniform(horizon + 0.1 * h, h + 0.05 * h);
            b.hue = rng.uniform();
            b.sat = rng.uniform(0.2, 0.9);
            b.val = rng.uniform(0.35, 0.95);
            b.tex_amp = 0.15;
        }
        b.cx = rng.uniform(0.0, w);
        b.cy = b.base - b.ry;
        blobs.push_back(b);
    }
    std::stable_sort(blobs.begin(), blobs.end(),
                     [](const Blob& a, const Blob& b) { return a.base < b.base; });

    for (const Blob& b : blobs) {
        const Texture tex(b.tex_seed, b.kind == BlobKind::vegetation ? size / 12.0 : size / 4.0);
        const Texture edge(hash_seed({b.tex_seed, 7}), size / 8.0);
        const float depth = static_cast<float>(ground_depth(b.base));
        const int y0 = std::max(0, static_cast<int>(std::floor(b.cy - b.ry)));
        const int y1 = std::min(height - 1, static_cast<int>(std::ceil(b.cy + b.ry)));
        const int x0 = std::max(0, static_cast<int>(std::floor(b.cx - b.rx)));
        const int x1 = std::min(width - 1, static_cast<int>(std::ceil(b.cx + b.rx)));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const double dy = (y + 0.5 - b.cy) / b.ry;
                const double dx = (x + 0.5 - b.cx) / b.rx;
                double r2;
                if (b.kind == BlobKind::vegetation) {
                    r2 = dx * dx + dy * dy;
                    r2 *= 1.0 + 0.8 * edge(y, x);
                } else {
                    r2 = std::pow(std::abs(dx), 4.0) + std::pow(std::abs(dy), 4.0);
                }
                if (r2 > 1.0) continue;
                const double shade = 1.0 + b.tex_amp * tex(y, x) - 0.15 * dy;
                const auto rgb = hsv_to_rgb(b.hue, b.sat, std::clamp(b.val * shade, 0.0, 1.0));
                for (int c = 0; c < 3; ++c) scene.image.at(c, y, x) = clamp01(rgb[c]);
                scene.depth.values.at(y, x) = depth;
            }
        }
    }
    return scene;
}

}  // namespace hazelab
