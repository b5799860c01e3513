#include "hazelab/dcp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "hazelab/error.hpp"

namespace hazelab {

Plane min_filter(const Plane& src, int patch) {
    if (patch < 1 || patch % 2 == 0) throw ConfigError("dcp.patch: must be a positive odd size");
    const int r = patch / 2;
    const int h = src.height;
    const int w = src.width;
    Plane rows(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            float m = src.at(y, x);
            for (int k = std::max(0, x - r); k <= std::min(w - 1, x + r); ++k) m = std::min(m, src.at(y, k));
            rows.at(y, x) = m;
        }
    }
    Plane out(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            float m = rows.at(y, x);
            for (int k = std::max(0, y - r); k <= std::min(h - 1, y + r); ++k) m = std::min(m, rows.at(k, x));
            out.at(y, x) = m;
        }
    }
    return out;
}

Plane dark_channel(const RgbImage& image, int patch) {
    Plane minimum(image.height, image.width);
    for (std::size_t i = 0; i < minimum.size(); ++i) {
        minimum.data[i] = std::min({image.data[i], image.data[i + image.pixels()],
                                    image.data[i + 2 * image.pixels()]});
    }
    return min_filter(minimum, patch);
}

Illumination estimate_illumination(const RgbImage& hazy, const Plane& dark, double top_fraction) {
    const std::size_t n = dark.size();
    if (n == 0) throw ShapeError("estimate_illumination: empty image");
    const auto count = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(top_fraction * n)));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dark.data[a] > dark.data[b]; });
    Illumination a;
    for (int c = 0; c < 3; ++c) {
        const auto ch = hazy.channel(c);
        double acc = 0.0;
        for (std::size_t k = 0; k < count; ++k) acc += ch[order[k]];
        a.rgb[c] = static_cast<float>(acc / static_cast<double>(count));
    }
    return a;
}

namespace {

// Mean over the (2r+1)^2 window clipped to the image, via an integral image.
std::vector<double> box_mean(const std::vector<double>& src, int h, int w, int r) {
    std::vector<double> integral(static_cast<std::size_t>(h + 1) * (w + 1), 0.0);
    auto I = [&](int y, int x) -> double& { return integral[static_cast<std::size_t>(y) * (w + 1) + x]; };
    for (int y = 0; y < h; ++y) {
        double row = 0.0;
        for (int x = 0; x < w; ++x) {
            row += src[static_cast<std::size_t>(y) * w + x];
            I(y + 1, x + 1) = I(y, x + 1) + row;
        }
    }
    std::vector<double> out(src.size());
    for (int y = 0; y < h; ++y) {
        const int y0 = std::max(0, y - r);
        const int y1 = std::min(h, y + r + 1);
        for (int x = 0; x < w; ++x) {
            const int x0 = std::max(0, x - r);
            const int x1 = std::min(w, x + r + 1);
            const double sum = I(y1, x1) - I(y0, x1) - I(y1, x0) + I(y0, x0);
            out[static_cast<std::size_t>(y) * w + x] = sum / ((y1 - y0) * (x1 - x0));
        }
    }
    return out;
}

}  // namespace

Plane guided_filter(const Plane& guide, const Plane& src, int radius, float eps) {
    if (guide.height != src.height || guide.width != src.width) {
        throw ShapeError("guided_filter: guide and source sizes differ");
    }
    const int h = src.height;
    const int w = src.width;
    const std::size_t n = src.size();
    std::vector<double> g(n), p(n), gg(n), gp(n);
    for (std::size_t i = 0; i < n; ++i) {
        g[i] = guide.data[i];
        p[i] = src.data[i];
        gg[i] = g[i] * g[i];
        gp[i] = g[i] * p[i];
    }
    const auto mean_g = box_mean(g, h, w, radius);
    const auto mean_p = box_mean(p, h, w, radius);
    const auto corr_gg = box_mean(gg, h, w, radius);
    const auto corr_gp = box_mean(gp, h, w, radius);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double var = corr_gg[i] - mean_g[i] * mean_g[i];
        const double cov = corr_gp[i] - mean_g[i] * mean_p[i];
        a[i] = cov / (var + eps);
        b[i] = mean_p[i] - a[i] * mean_g[i];
    }
    const auto mean_a = box_mean(a, h, w, radius);
    const auto mean_b = box_mean(b, h, w, radius);
    Plane out(h, w);
    for (std::size_t i = 0; i < n; ++i) out.data[i] = static_cast<float>(mean_a[i] * g[i] + mean_b[i]);
    return out;
}

Plane grayscale(const RgbImage& image) {
    Plane out(image.height, image.width);
    const std::size_t n = image.pixels();
    for (std::size_t i = 0; i < n; ++i) {
        out.data[i] = 0.299f * image.data[i] + 0.587f * image.data[i + n] + 0.114f * image.data[i + 2 * n];
    }
    return out;
}

DcpResult dcp_dehaze(const RgbImage& hazy, const DcpOptions& options) {
    DcpResult result;
    result.illumination = estimate_illumination(hazy, dark_channel(hazy, options.patch),
                                                options.top_fraction);
    const auto& a = result.illumination.rgb;

    RgbImage normalized = hazy;
    for (int c = 0; c < 3; ++c) {
        const float ac = std::max(a[c], 1e-6f);
        for (float& v : normalized.channel(c)) v /= ac;
    }
    Plane t = dark_channel(normalized, options.patch);
    for (float& v : t.data) v = 1.0f - options.omega * v;
    result.transmission = guided_filter(grayscale(hazy), t, options.guided_radius, options.guided_eps);

    result.image = RgbImage(hazy.height, hazy.width);
    const std::size_t n = hazy.pixels();
    for (int c = 0; c < 3; ++c) {
        const float* src = hazy.channel(c).data();
        float* dst = result.image.channel(c).data();
        for (std::size_t i = 0; i < n; ++i) {
            const float ti = std::max(result.transmission.data[i], options.t_floor);
            const float j = (src[i] - a[c]) / ti + a[c];
            dst[i] = std::isfinite(j) ? std::clamp(j, 0.0f, 1.0f) : 0.0f;
        }
    }
    return result;
}

}  // namespace hazelab
