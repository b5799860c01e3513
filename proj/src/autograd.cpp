#include "hazelab/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bilinear.hpp"
#include "conv_kernels.hpp"
#include "hazelab/error.hpp"

namespace hazelab {

const Tensor& Var::value() const { return graph_->value(id_); }
const Tensor& Var::grad() const { return graph_->grad(id_); }
bool Var::requires_grad() const { return graph_->requires_grad(id_); }

Var Graph::constant(Tensor value) {
    Node node;
    node.op = "constant";
    node.owned = std::move(value);
    nodes_.push_back(std::move(node));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::leaf(Tensor value) {
    Node node;
    node.op = "leaf";
    node.owned = std::move(value);
    node.requires_grad = true;
    nodes_.push_back(std::move(node));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::parameter(Param& param) {
    Node node;
    node.op = "parameter";
    node.external = &param.value;
    node.requires_grad = param.trainable;
    if (param.trainable) node.grad_sink = &param.grad;
    nodes_.push_back(std::move(node));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::record(std::string_view op, std::vector<Var> inputs, Tensor output,
                  BackwardFn backward) {
    Node node;
    node.op = op;
    for (const Var& v : inputs) {
        if (&v.graph() != this) throw Error("operation mixes nodes of different graphs");
        node.inputs.push_back(v.id());
        node.requires_grad = node.requires_grad || nodes_[v.id()].requires_grad;
    }
    node.owned = std::move(output);
    if (node.requires_grad) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

const Tensor& Graph::value(int id) const {
    const Node& node = nodes_[id];
    return node.external ? *node.external : node.owned;
}

const Tensor& Graph::grad(int id) const {
    const Node& node = nodes_[id];
    return node.grad_sink ? *node.grad_sink : node.grad;
}

Tensor* Graph::grad_buffer(int id) {
    Node& node = nodes_[id];
    if (!node.requires_grad) return nullptr;
    if (node.grad_sink) return node.grad_sink;
    if (node.grad.empty() && value(id).numel() > 0) node.grad = Tensor(value(id).shape());
    return &node.grad;
}

void Graph::backward(Var loss) {
    if (loss.value().numel() != 1) {
        throw ShapeError("backward(loss) needs a single-element loss, got " +
                         loss.shape().str());
    }
    backward(loss, Tensor(loss.shape(), 1.0f));
}

void Graph::backward(Var output, const Tensor& seed) {
    require_same_shape(output.shape(), seed.shape(), "backward seed");
    trace_.clear();
    for (Node& node : nodes_) {
        if (!node.grad_sink) node.grad = Tensor();
    }
    if (!requires_grad(output.id())) return;
    Tensor* root = grad_buffer(output.id());
    for (std::size_t i = 0; i < seed.numel(); ++i) (*root)[i] += seed[i];

    std::vector<Tensor*> input_grads;
    for (int id = output.id(); id >= 0; --id) {
        Node& node = nodes_[id];
        if (!node.requires_grad || !node.backward || node.grad.empty()) continue;
        input_grads.clear();
        for (int in : node.inputs) input_grads.push_back(grad_buffer(in));
        node.backward(node.grad, input_grads);
        trace_.push_back(id);
    }
}

namespace {

void require_4d_channels(const Var& v, int channels, const char* what) {
    if (v.shape().c != channels) {
        throw ShapeError(std::string(what) + ": expected " + std::to_string(channels) +
                         " channel(s), got shape " + v.shape().str());
    }
}

}  // namespace

Var conv2d(Var input, Var weight, Var bias, Padding padding) {
    const Shape in = input.shape();
    const Shape k = weight.shape();
    if (k.c != in.c) {
        throw ShapeError("conv2d: input " + in.str() + " incompatible with weights " + k.str());
    }
    if (!(bias.shape() == Shape{1, k.n, 1, 1})) {
        throw ShapeError("conv2d: bias " + bias.shape().str() + " does not match weights " +
                         k.str());
    }
    int pad_h = 0;
    int pad_w = 0;
    if (padding == Padding::same) {
        if (k.h % 2 == 0 || k.w % 2 == 0) {
            throw ShapeError("conv2d: 'same' padding requires odd kernel, got " + k.str());
        }
        pad_h = k.h / 2;
        pad_w = k.w / 2;
    } else if (in.h < k.h || in.w < k.w) {
        throw ShapeError("conv2d: input " + in.str() + " smaller than kernel " + k.str());
    }
    Tensor out({in.n, k.n, in.h + 2 * pad_h - k.h + 1, in.w + 2 * pad_w - k.w + 1});
    kernels::conv2d_forward(input.value(), weight.value(), bias.value(), pad_h, pad_w, out);

    Graph& g = input.graph();
    const int in_id = input.id();
    const int w_id = weight.id();
    return g.record("conv2d", {input, weight, bias}, std::move(out),
                    [&g, in_id, w_id, pad_h, pad_w](const Tensor& grad_out,
                                                    std::span<Tensor* const> grads) {
                        kernels::conv2d_backward(g.value(in_id), g.value(w_id), grad_out, pad_h,
                                                 pad_w, grads[0], grads[1], grads[2]);
                    });
}

Var relu(Var input) {
    const Tensor& x = input.value();
    Tensor out(x.shape());
    // NaN passes through so divergence surfaces as a non-finite loss.
    for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] <= 0.0f ? 0.0f : x[i];
    Graph& g = input.graph();
    const int in_id = input.id();
    return g.record("relu", {input}, std::move(out),
                    [&g, in_id](const Tensor& grad_out, std::span<Tensor* const> grads) {
                        const Tensor& x = g.value(in_id);
                        Tensor& gx = *grads[0];
                        for (std::size_t i = 0; i < x.numel(); ++i) {
                            if (x[i] > 0.0f) gx[i] += grad_out[i];
                        }
                    });
}

Var maxpool2(Var input) {
    const Shape in = input.shape();
    if (in.h % 2 != 0 || in.w % 2 != 0) {
        throw ShapeError("maxpool2: spatial size must be even, got " + in.str());
    }
    const Shape os{in.n, in.c, in.h / 2, in.w / 2};
    Tensor out(os);
    std::vector<std::uint32_t> argmax(os.numel());
    const Tensor& x = input.value();
    std::size_t o = 0;
    for (int n = 0; n < in.n; ++n) {
        for (int c = 0; c < in.c; ++c) {
            const float* p = x.plane(n, c);
            const std::size_t base = x.offset(n, c, 0, 0);
            for (int y = 0; y < os.h; ++y) {
                for (int xo = 0; xo < os.w; ++xo, ++o) {
                    const std::size_t cand[4] = {
                        static_cast<std::size_t>(2 * y) * in.w + 2 * xo,
                        static_cast<std::size_t>(2 * y) * in.w + 2 * xo + 1,
                        static_cast<std::size_t>(2 * y + 1) * in.w + 2 * xo,
                        static_cast<std::size_t>(2 * y + 1) * in.w + 2 * xo + 1};
                    std::size_t best = cand[0];
                    for (int i = 1; i < 4; ++i) {
                        if (p[cand[i]] > p[best]) best = cand[i];
                    }
                    out[o] = p[best];
                    argmax[o] = static_cast<std::uint32_t>(base + best);
                }
            }
        }
    }
    Graph& g = input.graph();
    return g.record("maxpool2", {input}, std::move(out),
                    [argmax = std::move(argmax)](const Tensor& grad_out,
                                                 std::span<Tensor* const> grads) {
                        Tensor& gx = *grads[0];
                        for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += grad_out[i];
                    });
}

Var upsample2_bilinear(Var input) {
    const Shape in = input.shape();
    const Shape os{in.n, in.c, in.h * 2, in.w * 2};
    auto ty = detail::bilinear_taps(in.h, os.h);
    auto tx = detail::bilinear_taps(in.w, os.w);
    Tensor out(os);
    const Tensor& x = input.value();
    for (int n = 0; n < in.n; ++n) {
        for (int c = 0; c < in.c; ++c) {
            detail::resample_plane(x.plane(n, c), in.h, in.w, out.plane(n, c), os.h, os.w, ty, tx);
        }
    }
    Graph& g = input.graph();
    return g.record("upsample2_bilinear", {input}, std::move(out),
                    [in, os, ty = std::move(ty), tx = std::move(tx)](
                        const Tensor& grad_out, std::span<Tensor* const> grads) {
                        Tensor& gx = *grads[0];
                        for (int n = 0; n < in.n; ++n) {
                            for (int c = 0; c < in.c; ++c) {
                                detail::resample_plane_transpose(grad_out.plane(n, c), os.h, os.w,
                                                                 gx.plane(n, c), in.w, ty, tx);
                            }
                        }
                    });
}

Var concat_channels(std::initializer_list<Var> inputs) {
    return concat_channels(std::span<const Var>(inputs.begin(), inputs.size()));
}

Var concat_channels(std::span<const Var> inputs) {
    if (inputs.empty()) throw ShapeError("concat_channels: no inputs");
    const Shape first = inputs[0].shape();
    std::vector<int> offsets;
    int channels = 0;
    for (const Var& v : inputs) {
        const Shape s = v.shape();
        if (s.n != first.n || s.h != first.h || s.w != first.w) {
            throw ShapeError("concat_channels: " + s.str() + " does not align with " +
                             first.str());
        }
        offsets.push_back(channels);
        channels += s.c;
    }
    const Shape os{first.n, channels, first.h, first.w};
    Tensor out(os);
    const std::size_t plane = os.plane();
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const Tensor& x = inputs[i].value();
        for (int n = 0; n < os.n; ++n) {
            std::copy_n(x.plane(n, 0), x.shape().c * plane, out.plane(n, offsets[i]));
        }
    }
    std::vector<Var> in(inputs.begin(), inputs.end());
    std::vector<int> widths;
    for (const Var& v : inputs) widths.push_back(v.shape().c);
    Graph& g = inputs[0].graph();
    return g.record("concat_channels", std::move(in), std::move(out),
                    [os, offsets, widths](const Tensor& grad_out, std::span<Tensor* const> grads) {
                        const std::size_t plane = os.plane();
                        for (std::size_t i = 0; i < grads.size(); ++i) {
                            if (!grads[i]) continue;
                            for (int n = 0; n < os.n; ++n) {
                                const float* src = grad_out.plane(n, offsets[i]);
                                float* dst = grads[i]->plane(n, 0);
                                for (std::size_t j = 0; j < widths[i] * plane; ++j) dst[j] += src[j];
                            }
                        }
                    });
}

Var slice_channels(Var input, int begin, int end) {
    const Shape in = input.shape();
    if (begin < 0 || end > in.c || begin >= end) {
        throw ShapeError("slice_channels: range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") invalid for " + in.str());
    }
    const Shape os{in.n, end - begin, in.h, in.w};
    Tensor out(os);
    const std::size_t count = static_cast<std::size_t>(os.c) * os.plane();
    for (int n = 0; n < in.n; ++n) {
        std::copy_n(input.value().plane(n, begin), count, out.plane(n, 0));
    }
    Graph& g = input.graph();
    return g.record("slice_channels", {input}, std::move(out),
                    [os, begin, count](const Tensor& grad_out, std::span<Tensor* const> grads) {
                        for (int n = 0; n < os.n; ++n) {
                            const float* src = grad_out.plane(n, 0);
                            float* dst = grads[0]->plane(n, begin);
                            for (std::size_t j = 0; j < count; ++j) dst[j] += src[j];
                        }
                    });
}

Var softmax_spatial(Var logits) {
    require_4d_channels(logits, 1, "softmax_spatial");
    const Shape s = logits.shape();
    const std::size_t plane = s.plane();
    const Tensor& x = logits.value();
    Tensor out(s);
    for (int n = 0; n < s.n; ++n) {
        const float* p = x.plane(n, 0);
        float* o = out.plane(n, 0);
        const float peak = *std::max_element(p, p + plane);
        double total = 0.0;
        for (std::size_t i = 0; i < plane; ++i) {
            const double e = std::exp(static_cast<double>(p[i]) - peak);
            o[i] = static_cast<float>(e);
            total += e;
        }
        for (std::size_t i = 0; i < plane; ++i) o[i] = static_cast<float>(o[i] / total);
    }
    Graph& g = logits.graph();
    // Id the recorded node will receive; the backward pass reads its output.
    const int out_id = static_cast<int>(g.size());
    return g.record("softmax_spatial", {logits}, std::move(out),
                    [&g, out_id, s](const Tensor& grad_out, std::span<Tensor* const> grads) {
                        const Tensor& y = g.value(out_id);
                        const std::size_t plane = s.plane();
                        for (int n = 0; n < s.n; ++n) {
                            const float* yp = y.plane(n, 0);
                            const float* gp = grad_out.plane(n, 0);
                            double dot = 0.0;
                            for (std::size_t i = 0; i < plane; ++i) dot += double{yp[i]} * gp[i];
                            float* dx = grads[0]->plane(n, 0);
                            for (std::size_t i = 0; i < plane; ++i) {
                                dx[i] += static_cast<float>(yp[i] * (gp[i] - dot));
                            }
                        }
                    });
}

Var weighted_global_pool(Var features, Var weights) {
    const Shape fs = features.shape();
    const Shape ws = weights.shape();
    if (ws.c != 1 || ws.n != fs.n || ws.h != fs.h || ws.w != fs.w) {
        throw ShapeError("weighted_global_pool: weights " + ws.str() +
                         " incompatible with features " + fs.str());
    }
    const std::size_t plane = fs.plane();
    const Tensor& f = features.value();
    const Tensor& c = weights.value();
    for (int n = 0; n < fs.n; ++n) {
        const float* cp = c.plane(n, 0);
        double total = 0.0;
        for (std::size_t i = 0; i < plane; ++i) total += cp[i];
        if (std::abs(total - 1.0) > 1e-4) {
            throw NumericError("weighted_global_pool: weights of item " + std::to_string(n) +
                               " sum to " + std::to_string(total) + ", expected 1");
        }
    }
    Tensor out({fs.n, fs.c, 1, 1});
    for (int n = 0; n < fs.n; ++n) {
        const float* cp = c.plane(n, 0);
        for (int ch = 0; ch < fs.c; ++ch) {
            const float* fp = f.plane(n, ch);
            double acc = 0.0;
            for (std::size_t i = 0; i < plane; ++i) acc += double{fp[i]} * cp[i];
            out.at(n, ch, 0, 0) = static_cast<float>(acc);
        }
    }
    Graph& g = features.graph();
    const int f_id = features.id();
    const int c_id = weights.id();
    return g.record("weighted_global_pool", {features, weights}, std::move(out),
                    [&g, f_id, c_id, fs](const Tensor& grad_out, std::span<Tensor* const> grads) {
                        const Tensor& f = g.value(f_id);
                        const Tensor& c = g.value(c_id);
                        const std::size_t plane = fs.plane();
                        for (int n = 0; n < fs.n; ++n) {
                            const float* cp = c.plane(n, 0);
                            for (int ch = 0; ch < fs.c; ++ch) {
                                const float go = grad_out.at(n, ch, 0, 0);
                                if (grads[0]) {
                                    float* df = grads[0]->plane(n, ch);
                                    for (std::size_t i = 0; i < plane; ++i) df[i] += go * cp[i];
                                }
                                if (grads[1]) {
                                    const float* fp = f.plane(n, ch);
                                    float* dc = grads[1]->plane(n, 0);
                                    for (std::size_t i = 0; i < plane; ++i) dc[i] += go * fp[i];
                                }
                            }
                        }
                    });
}

Var broadcast_spatial(Var input, int height, int width) {
    const Shape in = input.shape();
    if (in.h != 1 || in.w != 1) {
        throw ShapeError("broadcast_spatial: input must be Nx Fx1x1, got " + in.str());
    }
    const Shape os{in.n, in.c, height, width};
    Tensor out(os);
    const std::size_t plane = os.plane();
    for (int n = 0; n < in.n; ++n) {
        for (int c = 0; c < in.c; ++c) {
            std::fill_n(out.plane(n, c), plane, input.value().at(n, c, 0, 0));
        }
    }
    Graph& g = input.graph();
    return g.record("broadcast_spatial", {input}, std::move(out),
                    [os](const Tensor& grad_out, std::span<Tensor* const> grads) {
                        const std::size_t plane = os.plane();
                        for (int n = 0; n < os.n; ++n) {
                            for (int c = 0; c < os.c; ++c) {
                                const float* gp = grad_out.plane(n, c);
                                double sum = 0.0;
                                for (std::size_t i = 0; i < plane; ++i) sum += gp[i];
                                grads[0]->at(n, c, 0, 0) += static_cast<float>(sum);
                            }
                        }
                    });
}

Var mse_loss(Var prediction, Var target) {
    require_same_shape(prediction.shape(), target.shape(), "mse_loss");
    const Tensor& p = prediction.value();
    const Tensor& t = target.value();
    const std::size_t count = p.numel();
    if (count == 0) throw ShapeError("mse_loss: empty tensors");
    double acc = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        const double d = double{p[i]} - t[i];
        acc += d * d;
    }
    Graph& g = prediction.graph();
    const int p_id = prediction.id();
    const int t_id = target.id();
    return g.record("mse_loss", {prediction, target},
                    Tensor::scalar(static_cast<float>(acc / count)),
                    [&g, p_id, t_id, count](const Tensor& grad_out,
                                            std::span<Tensor* const> grads) {
                        const Tensor& p = g.value(p_id);
                        const Tensor& t = g.value(t_id);
                        const float scale = 2.0f * grad_out[0] / static_cast<float>(count);
                        for (std::size_t i = 0; i < count; ++i) {
                            const float d = scale * (p[i] - t[i]);
                            if (grads[0]) (*grads[0])[i] += d;
                            if (grads[1]) (*grads[1])[i] -= d;
                        }
                    });
}

Var k_head(Var k, Var hazy) {
    require_same_shape(k.shape(), hazy.shape(), "k_head");
    const Tensor& kv = k.value();
    const Tensor& iv = hazy.value();
    Tensor out(kv.shape());
    for (std::size_t i = 0; i < kv.numel(); ++i) out[i] = kv[i] * iv[i] + (1.0f - kv[i]);
    Graph& g = k.graph();
    const int k_id = k.id();
    const int i_id = hazy.id();
    return g.record("k_head", {k, hazy}, std::move(out),
                    [&g, k_id, i_id](const Tensor& grad_out, std::span<Tensor* const> grads) {
                        const Tensor& kv = g.value(k_id);
                        const Tensor& iv = g.value(i_id);
                        for (std::size_t i = 0; i < kv.numel(); ++i) {
                            if (grads[0]) (*grads[0])[i] += grad_out[i] * (iv[i] - 1.0f);
                            if (grads[1]) (*grads[1])[i] += grad_out[i] * kv[i];
                        }
                    });
}

}  // namespace hazelab
