#include <cblas.h>

#include <algorithm>
#include <cstring>
#include <vector>

#include "conv_kernels.hpp"
#include "hazelab/threads.hpp"

namespace hazelab::kernels {
namespace {

// Upper bound on the im2col scratch buffer, in floats.
constexpr std::size_t kMaxColumnFloats = std::size_t{1} << 21;

struct ConvGeometry {
    int cin, h, w;
    int cout, kh, kw;
    int pad_h, pad_w;
    int ho, wo;

    int patch() const { return cin * kh * kw; }
    bool pointwise() const { return kh == 1 && kw == 1 && pad_h == 0 && pad_w == 0; }
    int rows_per_stripe() const {
        const std::size_t per_row = static_cast<std::size_t>(patch()) * wo;
        return static_cast<int>(std::clamp<std::size_t>(kMaxColumnFloats / per_row, 1, ho));
    }
};

ConvGeometry geometry(const Tensor& input, const Tensor& weight, int pad_h, int pad_w) {
    const Shape& in = input.shape();
    const Shape& k = weight.shape();
    return ConvGeometry{in.c, in.h, in.w, k.n, k.h, k.w, pad_h, pad_w,
                        in.h + 2 * pad_h - k.h + 1, in.w + 2 * pad_w - k.w + 1};
}

// Column matrix for output rows [r0, r1): patch() rows by (r1 - r0) * wo columns.
void im2col(const float* x, const ConvGeometry& g, int r0, int r1, float* col) {
    const int cols = (r1 - r0) * g.wo;
    for (int ci = 0; ci < g.cin; ++ci) {
        for (int ky = 0; ky < g.kh; ++ky) {
            for (int kx = 0; kx < g.kw; ++kx) {
                float* dst = col + static_cast<std::size_t>((ci * g.kh + ky) * g.kw + kx) * cols;
                const int lo = std::clamp(g.pad_w - kx, 0, g.wo);
                const int hi = std::clamp(g.w + g.pad_w - kx, lo, g.wo);
                for (int r = r0; r < r1; ++r) {
                    float* d = dst + static_cast<std::size_t>(r - r0) * g.wo;
                    const int iy = r + ky - g.pad_h;
                    if (iy < 0 || iy >= g.h) {
                        std::fill(d, d + g.wo, 0.0f);
                        continue;
                    }
                    const float* src = x + (static_cast<std::size_t>(ci) * g.h + iy) * g.w;
                    std::fill(d, d + lo, 0.0f);
                    std::memcpy(d + lo, src + lo + kx - g.pad_w,
                                static_cast<std::size_t>(hi - lo) * sizeof(float));
                    std::fill(d + hi, d + g.wo, 0.0f);
                }
            }
        }
    }
}

void col2im_add(const float* col, const ConvGeometry& g, int r0, int r1, float* x) {
    const int cols = (r1 - r0) * g.wo;
    for (int ci = 0; ci < g.cin; ++ci) {
        for (int ky = 0; ky < g.kh; ++ky) {
            for (int kx = 0; kx < g.kw; ++kx) {
                const float* src =
                    col + static_cast<std::size_t>((ci * g.kh + ky) * g.kw + kx) * cols;
                const int lo = std::clamp(g.pad_w - kx, 0, g.wo);
                const int hi = std::clamp(g.w + g.pad_w - kx, lo, g.wo);
                for (int r = r0; r < r1; ++r) {
                    const int iy = r + ky - g.pad_h;
                    if (iy < 0 || iy >= g.h) continue;
                    const float* s = src + static_cast<std::size_t>(r - r0) * g.wo;
                    float* d = x + (static_cast<std::size_t>(ci) * g.h + iy) * g.w;
                    const int shift = kx - g.pad_w;
                    for (int xo = lo; xo < hi; ++xo) d[xo + shift] += s[xo];
                }
            }
        }
    }
}


// Zero-padded copy of one sample: cin planes of (h + 2 pad_h) x (w + 2 pad_w).
std::vector<float> pad_sample(const float* x, int c, int h, int w, int pad_h, int pad_w) {
    const int hp = h + 2 * pad_h;
    const int wp = w + 2 * pad_w;
    std::vector<float> out(static_cast<std::size_t>(c) * hp * wp, 0.0f);
    for (int ci = 0; ci < c; ++ci) {
        for (int y = 0; y < h; ++y) {
            std::memcpy(out.data() + (static_cast<std::size_t>(ci) * hp + y + pad_h) * wp + pad_w,
                        x + (static_cast<std::size_t>(ci) * h + y) * w,
                        static_cast<std::size_t>(w) * sizeof(float));
        }
    }
    return out;
}

using Vec8 = float __attribute__((vector_size(32)));
constexpr int kVecs = 4;
constexpr int kSegment = 8 * kVecs;

inline Vec8 load8(const float* p) {
    Vec8 v;
    std::memcpy(&v, p, sizeof v);
    return v;
}
inline void store8(float* p, Vec8 v) { std::memcpy(p, &v, sizeof v); }

// NB output channels by kSegment columns held in registers while the
// (ci, ky, kx) taps stream past.
template <int NB>
void direct_segment(const float* xp, int cin, int hp, int wp, const float* wk0,
                    std::size_t wstride, int kh, int kw, float* const* dst, int yo, int x0) {
    const std::size_t taps = static_cast<std::size_t>(kh) * kw;
    Vec8 acc[NB][kVecs];
    for (int j = 0; j < NB; ++j) {
        for (int v = 0; v < kVecs; ++v) acc[j][v] = load8(dst[j] + 8 * v);
    }
    for (int ci = 0; ci < cin; ++ci) {
        for (int ky = 0; ky < kh; ++ky) {
            const float* row = xp + (static_cast<std::size_t>(ci) * hp + yo + ky) * wp + x0;
            const float* wk = wk0 + static_cast<std::size_t>(ci) * taps +
                              static_cast<std::size_t>(ky) * kw;
            for (int kx = 0; kx < kw; ++kx) {
                Vec8 r[kVecs];
                for (int v = 0; v < kVecs; ++v) r[v] = load8(row + kx + 8 * v);
                for (int j = 0; j < NB; ++j) {
                    const float w = wk[j * wstride + kx];
                    for (int v = 0; v < kVecs; ++v) acc[j][v] += w * r[v];
                }
            }
        }
    }
    for (int j = 0; j < NB; ++j) {
        for (int v = 0; v < kVecs; ++v) store8(dst[j] + 8 * v, acc[j][v]);
    }
}

// Scalar fallback for the ragged right edge of a row.
template <int NB>
void direct_tail(const float* xp, int cin, int hp, int wp, const float* wk0, std::size_t wstride,
                 int kh, int kw, float* const* dst, int yo, int x0, int n) {
    const std::size_t taps = static_cast<std::size_t>(kh) * kw;
    for (int j = 0; j < NB; ++j) {
        for (int x = 0; x < n; ++x) {
            float a = dst[j][x];
            for (int ci = 0; ci < cin; ++ci) {
                for (int ky = 0; ky < kh; ++ky) {
                    const float* row = xp + (static_cast<std::size_t>(ci) * hp + yo + ky) * wp + x0 + x;
                    const float* wk = wk0 + j * wstride + static_cast<std::size_t>(ci) * taps +
                                      static_cast<std::size_t>(ky) * kw;
                    for (int kx = 0; kx < kw; ++kx) a += wk[kx] * row[kx];
                }
            }
            dst[j][x] = a;
        }
    }
}

template <int NB>
void direct_block(const float* xp, int cin, int hp, int wp, const float* weight, int kh, int kw,
                  int co0, int ho, int wo, float* y) {
    const std::size_t wstride = static_cast<std::size_t>(cin) * kh * kw;
    const float* wk0 = weight + static_cast<std::size_t>(co0) * wstride;
    float* dst[NB];
    for (int yo = 0; yo < ho; ++yo) {
        for (int j = 0; j < NB; ++j) dst[j] = y + (static_cast<std::size_t>(co0 + j) * ho + yo) * wo;
        int x0 = 0;
        for (; x0 + kSegment <= wo; x0 += kSegment) {
            float* d[NB];
            for (int j = 0; j < NB; ++j) d[j] = dst[j] + x0;
            direct_segment<NB>(xp, cin, hp, wp, wk0, wstride, kh, kw, d, yo, x0);
        }
        if (x0 < wo) {
            float* d[NB];
            for (int j = 0; j < NB; ++j) d[j] = dst[j] + x0;
            direct_tail<NB>(xp, cin, hp, wp, wk0, wstride, kh, kw, d, yo, x0, wo - x0);
        }
    }
}

// Accumulating stride-1 correlation of an already padded sample.
void direct_conv(const float* xp, int cin, int hp, int wp, const float* weight, int cout, int kh,
                 int kw, float* y) {
    const int ho = hp - kh + 1;
    const int wo = wp - kw + 1;
    int co = 0;
    for (; co + 4 <= cout; co += 4) direct_block<4>(xp, cin, hp, wp, weight, kh, kw, co, ho, wo, y);
    switch (cout - co) {
        case 3: direct_block<3>(xp, cin, hp, wp, weight, kh, kw, co, ho, wo, y); break;
        case 2: direct_block<2>(xp, cin, hp, wp, weight, kh, kw, co, ho, wo, y); break;
        case 1: direct_block<1>(xp, cin, hp, wp, weight, kh, kw, co, ho, wo, y); break;
        default: break;
    }
}

// Small output channel counts leave a GEMM with too few rows to amortise the
// column matrix; those layers go through the direct kernels instead.
bool use_direct(const ConvGeometry& g) {
    return !g.pointwise() && g.cout <= 16 && g.wo >= kSegment;
}

void direct_forward(const float* x, const ConvGeometry& g, const float* weight, float* y) {
    const auto xp = pad_sample(x, g.cin, g.h, g.w, g.pad_h, g.pad_w);
    direct_conv(xp.data(), g.cin, g.h + 2 * g.pad_h, g.w + 2 * g.pad_w, weight, g.cout, g.kh,
                g.kw, y);
}

void direct_backward(const float* x, const float* gy, const ConvGeometry& g, const float* weight,
                     float* grad_input, float* grad_weight) {
    const std::size_t taps = static_cast<std::size_t>(g.kh) * g.kw;
    if (grad_input) {
        // Full correlation of the output gradient with the flipped, transposed kernel.
        std::vector<float> flipped(static_cast<std::size_t>(g.cin) * g.cout * taps);
        for (int co = 0; co < g.cout; ++co) {
            for (int ci = 0; ci < g.cin; ++ci) {
                const float* src = weight + (static_cast<std::size_t>(co) * g.cin + ci) * taps;
                float* dst = flipped.data() + (static_cast<std::size_t>(ci) * g.cout + co) * taps;
                for (std::size_t t = 0; t < taps; ++t) dst[t] = src[taps - 1 - t];
            }
        }
        const int ph = g.kh - 1 - g.pad_h;
        const int pw = g.kw - 1 - g.pad_w;
        const auto gp = pad_sample(gy, g.cout, g.ho, g.wo, ph, pw);
        direct_conv(gp.data(), g.cout, g.ho + 2 * ph, g.wo + 2 * pw, flipped.data(), g.cin, g.kh,
                    g.kw, grad_input);
    }
    if (grad_weight) {
        const int hp = g.h + 2 * g.pad_h;
        const int wp = g.w + 2 * g.pad_w;
        const auto xp = pad_sample(x, g.cin, g.h, g.w, g.pad_h, g.pad_w);
        const std::size_t per_ci = static_cast<std::size_t>(g.cout) * taps;
        std::vector<Vec8> acc(per_ci);
        std::vector<float> tail(per_ci);
        for (int ci = 0; ci < g.cin; ++ci) {
            std::fill(acc.begin(), acc.end(), Vec8{});
            std::fill(tail.begin(), tail.end(), 0.0f);
            for (int ky = 0; ky < g.kh; ++ky) {
                for (int yo = 0; yo < g.ho; ++yo) {
                    const float* row = xp.data() + (static_cast<std::size_t>(ci) * hp + yo + ky) * wp;
                    const float* grow0 = gy + static_cast<std::size_t>(yo) * g.wo;
                    int x0 = 0;
                    for (; x0 + kSegment <= g.wo; x0 += kSegment) {
                        for (int kx = 0; kx < g.kw; ++kx) {
                            Vec8 r[kVecs];
                            for (int v = 0; v < kVecs; ++v) r[v] = load8(row + x0 + kx + 8 * v);
                            for (int co = 0; co < g.cout; ++co) {
                                const float* gr = grow0 + static_cast<std::size_t>(co) * g.ho * g.wo + x0;
                                Vec8 sum = load8(gr) * r[0];
                                for (int v = 1; v < kVecs; ++v) sum += load8(gr + 8 * v) * r[v];
                                acc[(static_cast<std::size_t>(co) * g.kh + ky) * g.kw + kx] += sum;
                            }
                        }
                    }
                    for (int co = 0; co < g.cout; ++co) {
                        const float* gr = grow0 + static_cast<std::size_t>(co) * g.ho * g.wo;
                        float* t = tail.data() + (static_cast<std::size_t>(co) * g.kh + ky) * g.kw;
                        for (int xo = x0; xo < g.wo; ++xo) {
                            for (int kx = 0; kx < g.kw; ++kx) t[kx] += gr[xo] * row[xo + kx];
                        }
                    }
                }
            }
            for (int co = 0; co < g.cout; ++co) {
                float* dst = grad_weight + (static_cast<std::size_t>(co) * g.cin + ci) * taps;
                for (std::size_t t = 0; t < taps; ++t) {
                    const std::size_t i = static_cast<std::size_t>(co) * taps + t;
                    float s = tail[i];
                    for (int l = 0; l < 8; ++l) s += acc[i][l];
                    dst[t] += s;
                }
            }
        }
    }
}

}  // namespace

void conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor& bias, int pad_h,
                    int pad_w, Tensor& out) {
    ensure_threads_configured();
    const ConvGeometry g = geometry(input, weight, pad_h, pad_w);
    const int batch = input.shape().n;
    const int out_plane = g.ho * g.wo;
    const int patch = g.patch();
    const int stripe = g.rows_per_stripe();
    std::vector<float> col;
    if (!g.pointwise() && !use_direct(g)) {
        col.resize(static_cast<std::size_t>(patch) * stripe * g.wo);
    }

    for (int n = 0; n < batch; ++n) {
        const float* x = input.plane(n, 0);
        float* y = out.plane(n, 0);
        for (int co = 0; co < g.cout; ++co) {
            std::fill(y + static_cast<std::size_t>(co) * out_plane,
                      y + static_cast<std::size_t>(co + 1) * out_plane, bias[co]);
        }
        if (use_direct(g)) {
            direct_forward(x, g, weight.ptr(), y);
            continue;
        }
        if (g.pointwise()) {
            cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, g.cout, out_plane, patch, 1.0f,
                        weight.ptr(), patch, x, out_plane, 1.0f, y, out_plane);
            continue;
        }
        for (int r0 = 0; r0 < g.ho; r0 += stripe) {
            const int r1 = std::min(g.ho, r0 + stripe);
            const int cols = (r1 - r0) * g.wo;
            im2col(x, g, r0, r1, col.data());
            cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, g.cout, cols, patch, 1.0f,
                        weight.ptr(), patch, col.data(), cols, 1.0f,
                        y + static_cast<std::size_t>(r0) * g.wo, out_plane);
        }
    }
}

void conv2d_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_out,
                     int pad_h, int pad_w, Tensor* grad_input, Tensor* grad_weight,
                     Tensor* grad_bias) {
    ensure_threads_configured();
    const ConvGeometry g = geometry(input, weight, pad_h, pad_w);
    const int batch = input.shape().n;
    const int out_plane = g.ho * g.wo;
    const int patch = g.patch();
    const int stripe = g.rows_per_stripe();
    std::vector<float> col;
    std::vector<float> dcol;
    if (!g.pointwise() && !use_direct(g)) {
        const std::size_t size = static_cast<std::size_t>(patch) * stripe * g.wo;
        if (grad_weight) col.resize(size);
        if (grad_input) dcol.resize(size);
    }

    for (int n = 0; n < batch; ++n) {
        const float* x = input.plane(n, 0);
        const float* gy = grad_out.plane(n, 0);
        if (grad_bias) {
            for (int co = 0; co < g.cout; ++co) {
                const float* row = gy + static_cast<std::size_t>(co) * out_plane;
                double sum = 0.0;
                for (int i = 0; i < out_plane; ++i) sum += row[i];
                (*grad_bias)[co] += static_cast<float>(sum);
            }
        }
        if (use_direct(g)) {
            direct_backward(x, gy, g, weight.ptr(), grad_input ? grad_input->plane(n, 0) : nullptr,
                            grad_weight ? grad_weight->ptr() : nullptr);
            continue;
        }
        if (g.pointwise()) {
            if (grad_weight) {
                cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, g.cout, patch, out_plane,
                            1.0f, gy, out_plane, x, out_plane, 1.0f, grad_weight->ptr(), patch);
            }
            if (grad_input) {
                cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, patch, out_plane, g.cout,
                            1.0f, weight.ptr(), patch, gy, out_plane, 1.0f,
                            grad_input->plane(n, 0), out_plane);
            }
            continue;
        }
        for (int r0 = 0; r0 < g.ho; r0 += stripe) {
            const int r1 = std::min(g.ho, r0 + stripe);
            const int cols = (r1 - r0) * g.wo;
            const float* gy_stripe = gy + static_cast<std::size_t>(r0) * g.wo;
            if (grad_weight) {
                im2col(x, g, r0, r1, col.data());
                cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, g.cout, patch, cols, 1.0f,
                            gy_stripe, out_plane, col.data(), cols, 1.0f, grad_weight->ptr(),
                            patch);
            }
            if (grad_input) {
                cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, patch, cols, g.cout, 1.0f,
                            weight.ptr(), patch, gy_stripe, out_plane, 0.0f, dcol.data(), cols);
                col2im_add(dcol.data(), g, r0, r1, grad_input->plane(n, 0));
            }
        }
    }
}

}  // namespace hazelab::kernels
