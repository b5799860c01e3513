#include "hazelab/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "hazelab/error.hpp"

namespace hazelab {
namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

void require_same(const RgbImage& a, const RgbImage& b, const char* what) {
    if (!a.same_size(b)) {
        throw ShapeError(std::string(what) + ": image sizes differ (" + std::to_string(a.height) +
                         "x" + std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                         std::to_string(b.width) + ")");
    }
}

std::array<double, kWindow> gaussian_taps() {
    std::array<double, kWindow> taps{};
    double sum = 0.0;
    for (int i = 0; i < kWindow; ++i) {
        const double d = i - kWindow / 2;
        taps[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
        sum += taps[i];
    }
    for (double& t : taps) t /= sum;
    return taps;
}

// Separable Gaussian filter over valid window positions only.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w) {
    static const auto taps = gaussian_taps();
    const int oh = h - kWindow + 1;
    const int ow = w - kWindow + 1;
    std::vector<double> rows(static_cast<std::size_t>(h) * ow);
    for (int y = 0; y < h; ++y) {
        const double* s = &src[static_cast<std::size_t>(y) * w];
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kWindow; ++k) acc += taps[k] * s[x + k];
            rows[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kWindow; ++k) acc += taps[k] * rows[static_cast<std::size_t>(y + k) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    }
    return out;
}

}  // namespace

double mse(const RgbImage& pred, const RgbImage& truth) {
    require_same(pred, truth, "mse");
    if (pred.data.empty()) throw ShapeError("mse: empty images");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const double d = double{pred.data[i]} - truth.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.data.size());
}

double psnr_from_mse(double value) {
    if (value <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, -10.0 * std::log10(value));
}

double psnr(const RgbImage& pred, const RgbImage& truth) { return psnr_from_mse(mse(pred, truth)); }

double ssim_plane(const float* a, const float* b, int height, int width) {
    if (height < kWindow || width < kWindow) {
        throw ShapeError("ssim: image " + std::to_string(height) + "x" + std::to_string(width) +
                         " is smaller than the 11x11 window");
    }
    const std::size_t n = static_cast<std::size_t>(height) * width;
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = a[i];
        y[i] = b[i];
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, height, width);
    const auto my = filter_valid(y, height, width);
    const auto sxx = filter_valid(xx, height, width);
    const auto syy = filter_valid(yy, height, width);
    const auto sxy = filter_valid(xy, height, width);
    double total = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
        const double vx = std::max(0.0, sxx[i] - mx[i] * mx[i]);
        const double vy = std::max(0.0, syy[i] - my[i] * my[i]);
        const double cov = sxy[i] - mx[i] * my[i];
        const double num = (2.0 * mx[i] * my[i] + kC1) * (2.0 * cov + kC2);
        const double den = (mx[i] * mx[i] + my[i] * my[i] + kC1) * (vx + vy + kC2);
        total += num / den;
    }
    return total / static_cast<double>(mx.size());
}

double ssim(const RgbImage& pred, const RgbImage& truth) {
    require_same(pred, truth, "ssim");
    double acc = 0.0;
    for (int c = 0; c < 3; ++c) {
        acc += ssim_plane(pred.channel(c).data(), truth.channel(c).data(), pred.height, pred.width);
    }
    return acc / 3.0;
}

}  // namespace hazelab
