#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

namespace hazelab::detail {

// One output sample of a 1-D bilinear resampling: value = (1-frac)*in[i0] + frac*in[i1].
struct Tap {
    int i0;
    int i1;
    float frac;
};

// Half-pixel-centre sampling, src = (dst + 0.5) * in/out - 0.5, clamped to
// the border. For out = 2*in this is src = (dst + 0.5)/2 - 0.5.
inline std::vector<Tap> bilinear_taps(int in_size, int out_size) {
    std::vector<Tap> taps(static_cast<std::size_t>(out_size));
    const double scale = static_cast<double>(in_size) / out_size;
    for (int o = 0; o < out_size; ++o) {
        double src = (o + 0.5) * scale - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(in_size - 1));
        const int i0 = static_cast<int>(std::floor(src));
        const int i1 = std::min(i0 + 1, in_size - 1);
        taps[o] = Tap{i0, i1, static_cast<float>(src - i0)};
    }
    return taps;
}

// Resample one plane (in_h x in_w) into out (out_h x out_w).
inline void resample_plane(const float* in, int in_h, int in_w, float* out, int out_h, int out_w,
                           const std::vector<Tap>& ty, const std::vector<Tap>& tx) {
    for (int y = 0; y < out_h; ++y) {
        const Tap& a = ty[y];
        const float* r0 = in + static_cast<std::size_t>(a.i0) * in_w;
        const float* r1 = in + static_cast<std::size_t>(a.i1) * in_w;
        float* o = out + static_cast<std::size_t>(y) * out_w;
        for (int x = 0; x < out_w; ++x) {
            const Tap& b = tx[x];
            const float top = r0[b.i0] + b.frac * (r0[b.i1] - r0[b.i0]);
            const float bottom = r1[b.i0] + b.frac * (r1[b.i1] - r1[b.i0]);
            o[x] = top + a.frac * (bottom - top);
        }
    }
    (void)in_h;
}

// Transpose of resample_plane: scatters out-gradients back onto the input grid.
inline void resample_plane_transpose(const float* grad_out, int out_h, int out_w, float* grad_in,
                                     int in_w, const std::vector<Tap>& ty,
                                     const std::vector<Tap>& tx) {
    for (int y = 0; y < out_h; ++y) {
        const Tap& a = ty[y];
        float* r0 = grad_in + static_cast<std::size_t>(a.i0) * in_w;
        float* r1 = grad_in + static_cast<std::size_t>(a.i1) * in_w;
        const float* g = grad_out + static_cast<std::size_t>(y) * out_w;
        for (int x = 0; x < out_w; ++x) {
            const Tap& b = tx[x];
            const float top = g[x] * (1.0f - a.frac);
            const float bottom = g[x] * a.frac;
            r0[b.i0] += top * (1.0f - b.frac);
            r0[b.i1] += top * b.frac;
            r1[b.i0] += bottom * (1.0f - b.frac);
            r1[b.i1] += bottom * b.frac;
        }
    }
}

}  // namespace hazelab::detail
