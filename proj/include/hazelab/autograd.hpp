#pragma once

#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "hazelab/optim.hpp"
#include "hazelab/tensor.hpp"

namespace hazelab {

class Graph;

// Handle to a node of a Graph. Cheap to copy; only valid while the graph lives.
class Var {
public:
    Var() = default;
    Var(Graph* graph, int id) : graph_(graph), id_(id) {}

    const Tensor& value() const;
    // Gradient accumulated by the last backward(); empty if none reached it.
    const Tensor& grad() const;
    const Shape& shape() const { return value().shape(); }
    bool requires_grad() const;
    Graph& graph() const { return *graph_; }
    int id() const { return id_; }
    bool valid() const { return graph_ != nullptr; }

private:
    Graph* graph_ = nullptr;
    int id_ = -1;
};

// Receives d(loss)/d(output) and accumulates into the gradient buffers of the
// node's inputs. input_grads[i] is null when input i needs no gradient.
using BackwardFn = std::function<void(const Tensor& grad_out, std::span<Tensor* const> input_grads)>;

// Tape of forward operations. backward() walks the nodes in exact reverse
// creation order, which is a reverse topological order of the forward pass.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // Leaf that never receives a gradient.
    Var constant(Tensor value);
    // Leaf whose gradient is kept on the node (readable via Var::grad()).
    Var leaf(Tensor value);
    // Leaf bound to a parameter: reads its value in place and accumulates into
    // its gradient buffer. Frozen parameters behave as constants.
    Var parameter(Param& param);

    Var record(std::string_view op, std::vector<Var> inputs, Tensor output, BackwardFn backward);

    // loss must hold a single element; seeds its gradient with 1.
    void backward(Var loss);
    void backward(Var output, const Tensor& seed);

    const Tensor& value(int id) const;
    const Tensor& grad(int id) const;
    bool requires_grad(int id) const { return nodes_[id].requires_grad; }
    std::string_view op(int id) const { return nodes_[id].op; }
    std::size_t size() const { return nodes_.size(); }

    // Node ids whose backward function ran during the last backward(), in order.
    const std::vector<int>& backward_trace() const { return trace_; }

private:
    struct Node {
        std::string_view op;
        std::vector<int> inputs;
        Tensor owned;
        const Tensor* external = nullptr;
        Tensor grad;
        Tensor* grad_sink = nullptr;
        bool requires_grad = false;
        BackwardFn backward;
    };

    Tensor* grad_buffer(int id);

    std::vector<Node> nodes_;
    std::vector<int> trace_;
};

enum class Padding { same, valid };

// Differentiable operations. All tensors are NCHW.

// Cross-correlation with stride 1. weight: Cout x Cin x kH x kW; bias: 1 x Cout x 1 x 1.
Var conv2d(Var input, Var weight, Var bias, Padding padding);
Var relu(Var input);
// 2x2 window, stride 2; gradient routes to the first maximum in row-major order.
Var maxpool2(Var input);
// Bilinear 2x upsampling with half-pixel centres and border clamp.
Var upsample2_bilinear(Var input);
Var concat_channels(std::span<const Var> inputs);
Var concat_channels(std::initializer_list<Var> inputs);
// Channels [begin, end) of the input.
Var slice_channels(Var input, int begin, int end);
// Softmax over all spatial positions of a single-channel map, per batch item.
Var softmax_spatial(Var logits);
// Confidence-weighted average: out[n,f] = sum_p features[n,f,p] * weights[n,0,p].
// Weights must sum to 1 (+-1e-4) for every batch item.
Var weighted_global_pool(Var features, Var weights);
// Replicate an N x F x 1 x 1 tensor over an H x W grid.
Var broadcast_spatial(Var input, int height, int width);
// Mean squared error over all elements; returns a 1x1x1x1 node.
Var mse_loss(Var prediction, Var target);
// AOD-Net output parameterisation: J = K * I - K + 1, elementwise.
Var k_head(Var k, Var hazy);

}  // namespace hazelab
