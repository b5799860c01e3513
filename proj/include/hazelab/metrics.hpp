#pragma once

#include "hazelab/image.hpp"

namespace hazelab {

constexpr double kPsnrCap = 99.0;

double mse(const RgbImage& pred, const RgbImage& truth);
// -10 log10(MSE) with peak 1, capped at 99 dB.
double psnr(const RgbImage& pred, const RgbImage& truth);
double psnr_from_mse(double mse);

// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
// L = 1, averaged over valid window positions and then over the RGB channels.
double ssim(const RgbImage& pred, const RgbImage& truth);
double ssim_plane(const float* a, const float* b, int height, int width);

}  // namespace hazelab
