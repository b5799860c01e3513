#pragma once

#include "hazelab/tensor.hpp"

namespace hazelab::kernels {

// Stride-1 cross-correlation with symmetric zero padding (pad_h, pad_w).
// out must already have shape N x Cout x (H + 2*pad_h - kH + 1) x (W + 2*pad_w - kW + 1).
void conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor& bias, int pad_h,
                    int pad_w, Tensor& out);

// Accumulates (+=) into whichever of grad_input/grad_weight/grad_bias is non-null.
void conv2d_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_out,
                     int pad_h, int pad_w, Tensor* grad_input, Tensor* grad_weight,
                     Tensor* grad_bias);

}  // namespace hazelab::kernels
