#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hazelab/autograd.hpp"
#include "hazelab/haze.hpp"
#include "hazelab/optim.hpp"

namespace hazelab {

struct EncoderBlock {
    int convs = 0;
    int channels = 0;
};

// Five conv blocks, each ending in a 2x2 max pool.
struct EncoderConfig {
    std::string preset = "tiny";
    std::vector<EncoderBlock> blocks;
    bool trainable = true;

    static EncoderConfig vgg16();  // frozen by default
    static EncoderConfig tiny();   // trainable by default
    static EncoderConfig by_name(const std::string& name);

    int block4_channels() const { return blocks.at(3).channels; }
    int block5_channels() const { return blocks.at(4).channels; }
    void validate() const;
};

enum class ModelKind { full, baseline };
// k_model: J = K * I - K + 1. direct: the last conv regresses J itself.
enum class ColorHead { k_model, direct };

struct ModelConfig {
    ModelKind kind = ModelKind::full;
    EncoderConfig encoder = EncoderConfig::tiny();
    ColorHead head = ColorHead::k_model;

    static ModelConfig full(const std::string& encoder_preset = "tiny");
    static ModelConfig baseline();

    // Width of the two hidden convs of the global module.
    std::array<int, 2> global_widths() const;
    // Output widths of the three upsampling stages.
    std::array<int, 3> upsample_widths() const;
    // Filter count of the first color-module conv.
    int color_conv1_width() const { return kind == ModelKind::full ? 16 : 24; }
    int color_input_channels() const { return kind == ModelKind::full ? 51 : 6; }

    // Every parameter name with its shape, in creation order.
    std::vector<std::pair<std::string, Shape>> declared_shapes() const;
    // Stable textual description used for config hashing.
    std::string describe() const;
    void validate() const;
};

constexpr int kSemanticChannels = 16;
constexpr int kGlobalChannels = 32;

// Per-channel affine transform applied to encoder inputs: (x - mean) / std.
struct InputNormalization {
    std::array<float, 3> mean{0.0f, 0.0f, 0.0f};
    std::array<float, 3> std{1.0f, 1.0f, 1.0f};
};

struct Model {
    ModelConfig config;
    ParamSet params;
    std::optional<InputNormalization> normalization;
};

// He-initialised conv weights (std sqrt(2 / fan_in)) and zero biases.
Model init_model(const ModelConfig& config, std::uint64_t seed);

struct EncoderTaps {
    Var block4;  // last conv of block 4 after activation, before its pool
    Var block5;  // after the block-5 pool
};

// Graph-building pieces. H and W of the image must be multiples of 32.
EncoderTaps semantic_encode(Var image, Model& model);
Var upsample_subnet(Var block4, Model& model);
struct GlobalEstimate {
    Var features;    // N x 32 x 1 x 1
    Var confidence;  // N x 1 x h x w, sums to 1 per item
};
GlobalEstimate global_estimate(Var block5, Model& model);
Var color_module(Var hazy, Var semantic, Var global_broadcast, Model& model);

struct ForwardVars {
    Var semantic;
    Var global;
    Var confidence;
    Var prediction;  // unclamped
};
ForwardVars full_forward(Var hazy, Model& model);
// illumination: N x 3 x 1 x 1.
Var baseline_forward(Var hazy, Var illumination, Model& model);

// Builds the right graph for model.config.kind; returns the unclamped output.
Var model_forward(Graph& graph, const Tensor& hazy, const Tensor& illumination, Model& model);

// Tensors of one full-model forward pass with a clamped prediction.
struct ForwardTrace {
    Tensor semantic;
    Tensor global;
    Tensor confidence;
    Tensor prediction;
};
ForwardTrace trace_forward(const Tensor& hazy, Model& model);

// Inference: output clamped to [0, 1].
Tensor predict(const Tensor& hazy, const Tensor& illumination, Model& model);

// N x 3 x 1 x 1 tensor of illumination colours.
Tensor illumination_tensor(std::span<const Illumination> colours);

}  // namespace hazelab
