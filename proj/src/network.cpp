#include "hazelab/network.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hazelab/error.hpp"
#include "hazelab/rng.hpp"

namespace hazelab {

EncoderConfig EncoderConfig::vgg16() {
    return {"vgg16", {{2, 64}, {2, 128}, {3, 256}, {3, 512}, {3, 512}}, false};
}

EncoderConfig EncoderConfig::tiny() {
    return {"tiny", {{1, 8}, {1, 16}, {2, 24}, {2, 32}, {2, 32}}, true};
}

EncoderConfig EncoderConfig::by_name(const std::string& name) {
    if (name == "tiny") return tiny();
    if (name == "vgg16") return vgg16();
    throw ConfigError("model.encoder: unknown preset '" + name + "' (tiny, vgg16)");
}

void EncoderConfig::validate() const {
    if (blocks.size() != 5) {
        throw ConfigError("model.encoder: exactly 5 blocks required, got " +
                          std::to_string(blocks.size()));
    }
    for (const auto& b : blocks) {
        if (b.convs < 1 || b.channels < 1) {
            throw ConfigError("model.encoder: conv and channel counts must be positive");
        }
    }
    if (block4_channels() < 4) throw ConfigError("model.encoder: block 4 needs >= 4 channels");
}

ModelConfig ModelConfig::full(const std::string& encoder_preset) {
    ModelConfig c;
    c.encoder = EncoderConfig::by_name(encoder_preset);
    return c;
}

ModelConfig ModelConfig::baseline() {
    ModelConfig c;
    c.kind = ModelKind::baseline;
    return c;
}

std::array<int, 2> ModelConfig::global_widths() const {
    if (encoder.preset == "vgg16") return {256, 64};
    return {32, 16};
}

std::array<int, 3> ModelConfig::upsample_widths() const {
    const int c4 = encoder.block4_channels();
    return {c4 / 2, c4 / 4, kSemanticChannels};
}

void ModelConfig::validate() const {
    if (kind == ModelKind::full) encoder.validate();
}

std::vector<std::pair<std::string, Shape>> ModelConfig::declared_shapes() const {
    std::vector<std::pair<std::string, Shape>> out;
    auto conv = [&](const std::string& prefix, int cout, int cin, int k) {
        out.emplace_back(prefix + ".weight", Shape{cout, cin, k, k});
        out.emplace_back(prefix + ".bias", Shape{1, cout, 1, 1});
    };
    if (kind == ModelKind::full) {
        int cin = 3;
        for (std::size_t b = 0; b < encoder.blocks.size(); ++b) {
            for (int j = 0; j < encoder.blocks[b].convs; ++j) {
                conv("encoder.block" + std::to_string(b + 1) + ".conv" + std::to_string(j + 1),
                     encoder.blocks[b].channels, cin, 3);
                cin = encoder.blocks[b].channels;
            }
        }
        int up_in = encoder.block4_channels();
        const auto up = upsample_widths();
        for (int s = 0; s < 3; ++s) {
            conv("upsample.stage" + std::to_string(s + 1), up[s], up_in, 3);
            up_in = up[s];
        }
        const auto gw = global_widths();
        conv("global.conv1", gw[0], encoder.block5_channels(), 5);
        conv("global.conv2", gw[1], gw[0], 5);
        conv("global.conv3", kGlobalChannels + 1, gw[1], 1);
    }
    const int c1 = color_conv1_width();
    conv("color.conv1", c1, color_input_channels(), 1);
    conv("color.conv2", 16, c1, 3);
    conv("color.conv3", 8, c1 + 16, 5);
    conv("color.conv4", 4, 16 + 8, 7);
    conv("color.conv5", 3, c1 + 16 + 8 + 4, 3);
    return out;
}

std::string ModelConfig::describe() const {
    std::ostringstream s;
    s << (kind == ModelKind::full ? "full" : "baseline") << ";head="
      << (head == ColorHead::k_model ? "k_model" : "direct");
    if (kind == ModelKind::full) {
        s << ";encoder=" << encoder.preset << ":";
        for (const auto& b : encoder.blocks) s << b.convs << "x" << b.channels << ",";
    }
    return s.str();
}

Model init_model(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Model model;
    model.config = config;
    std::uint64_t index = 0;
    for (const auto& [name, shape] : config.declared_shapes()) {
        Tensor value(shape);
        const bool is_bias = name.ends_with(".bias");
        if (!is_bias) {
            Rng rng(hash_seed({seed, 0x1417ULL, index}));
            const double fan_in = static_cast<double>(shape.c) * shape.h * shape.w;
            const double sd = std::sqrt(2.0 / fan_in);
            for (auto& v : value.data()) v = static_cast<float>(sd * rng.normal());
        }
        const bool trainable = !name.starts_with("encoder.") || config.encoder.trainable;
        model.params.add(name, std::move(value), trainable);
        ++index;
    }
    return model;
}

namespace {

Var conv_relu(Var x, Model& model, const std::string& prefix) {
    Graph& g = x.graph();
    Var w = g.parameter(model.params.at(prefix + ".weight"));
    Var b = g.parameter(model.params.at(prefix + ".bias"));
    return relu(conv2d(x, w, b, Padding::same));
}

Var conv_linear(Var x, Model& model, const std::string& prefix) {
    Graph& g = x.graph();
    Var w = g.parameter(model.params.at(prefix + ".weight"));
    Var b = g.parameter(model.params.at(prefix + ".bias"));
    return conv2d(x, w, b, Padding::same);
}

// (x - mean) / std per channel.
Var normalize_input(Var x, const InputNormalization& norm) {
    const Shape s = x.shape();
    Tensor out(s);
    const std::size_t plane = s.plane();
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < 3; ++c) {
            const float* src = x.value().plane(n, c);
            float* dst = out.plane(n, c);
            for (std::size_t i = 0; i < plane; ++i) dst[i] = (src[i] - norm.mean[c]) / norm.std[c];
        }
    }
    return x.graph().record("normalize", {x}, std::move(out),
                            [s, plane, norm](const Tensor& grad_out, std::span<Tensor* const> grads) {
                                if (!grads[0]) return;
                                for (int n = 0; n < s.n; ++n) {
                                    for (int c = 0; c < 3; ++c) {
                                        const float* go = grad_out.plane(n, c);
                                        float* gi = grads[0]->plane(n, c);
                                        for (std::size_t i = 0; i < plane; ++i) {
                                            gi[i] += go[i] / norm.std[c];
                                        }
                                    }
                                }
                            });
}

void require_image(const Var& x, int channels, const char* what) {
    const Shape& s = x.shape();
    if (s.c != channels) {
        throw ShapeError(std::string(what) + ": expected " + std::to_string(channels) +
                         " channels, got " + s.str());
    }
}

}  // namespace

EncoderTaps semantic_encode(Var image, Model& model) {
    require_image(image, 3, "semantic_encode");
    const Shape& s = image.shape();
    if (s.h % 32 != 0 || s.w % 32 != 0 || s.h == 0 || s.w == 0) {
        throw ShapeError("semantic_encode: height and width must be multiples of 32, got " +
                         s.str());
    }
    Var x = model.normalization ? normalize_input(image, *model.normalization) : image;
    EncoderTaps taps;
    const auto& blocks = model.config.encoder.blocks;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        for (int j = 0; j < blocks[b].convs; ++j) {
            x = conv_relu(x, model,
                          "encoder.block" + std::to_string(b + 1) + ".conv" + std::to_string(j + 1));
        }
        if (b == 3) taps.block4 = x;
        x = maxpool2(x);
    }
    taps.block5 = x;
    return taps;
}

Var upsample_subnet(Var block4, Model& model) {
    Var x = block4;
    for (int stage = 1; stage <= 3; ++stage) {
        x = upsample2_bilinear(conv_relu(x, model, "upsample.stage" + std::to_string(stage)));
    }
    return x;
}

GlobalEstimate global_estimate(Var block5, Model& model) {
    Var x = conv_relu(block5, model, "global.conv1");
    x = conv_relu(x, model, "global.conv2");
    x = conv_linear(x, model, "global.conv3");
    Var local = slice_channels(x, 0, kGlobalChannels);
    Var confidence = softmax_spatial(slice_channels(x, kGlobalChannels, kGlobalChannels + 1));
    return {weighted_global_pool(local, confidence), confidence};
}

Var color_module(Var hazy, Var semantic, Var global_broadcast, Model& model) {
    require_image(hazy, 3, "color_module");
    Var input = model.config.kind == ModelKind::full
                    ? concat_channels({hazy, semantic, global_broadcast})
                    : concat_channels({hazy, global_broadcast});
    Var c1 = conv_relu(input, model, "color.conv1");
    Var c2 = conv_relu(c1, model, "color.conv2");
    Var c3 = conv_relu(concat_channels({c1, c2}), model, "color.conv3");
    Var c4 = conv_relu(concat_channels({c2, c3}), model, "color.conv4");
    Var c5 = conv_relu(concat_channels({c1, c2, c3, c4}), model, "color.conv5");
    return model.config.head == ColorHead::k_model ? k_head(c5, hazy) : c5;
}

ForwardVars full_forward(Var hazy, Model& model) {
    if (model.config.kind != ModelKind::full) {
        throw ConfigError("full_forward: model is not a full model");
    }
    const Shape& s = hazy.shape();
    EncoderTaps taps = semantic_encode(hazy, model);
    ForwardVars out;
    out.semantic = upsample_subnet(taps.block4, model);
    GlobalEstimate ge = global_estimate(taps.block5, model);
    out.global = ge.features;
    out.confidence = ge.confidence;
    Var broadcast = broadcast_spatial(ge.features, s.h, s.w);
    out.prediction = color_module(hazy, out.semantic, broadcast, model);
    return out;
}

Var baseline_forward(Var hazy, Var illumination, Model& model) {
    if (model.config.kind != ModelKind::baseline) {
        throw ConfigError("baseline_forward: model is not a baseline model");
    }
    const Shape& s = hazy.shape();
    const Shape& a = illumination.shape();
    if (a.n != s.n || a.c != 3 || a.h != 1 || a.w != 1) {
        throw ShapeError("baseline_forward: illumination must be " + std::to_string(s.n) +
                         "x3x1x1, got " + a.str());
    }
    Var broadcast = broadcast_spatial(illumination, s.h, s.w);
    return color_module(hazy, Var{}, broadcast, model);
}

Var model_forward(Graph& graph, const Tensor& hazy, const Tensor& illumination, Model& model) {
    Var x = graph.constant(hazy);
    if (model.config.kind == ModelKind::full) return full_forward(x, model).prediction;
    return baseline_forward(x, graph.constant(illumination), model);
}

namespace {

Tensor clamped(const Tensor& t) {
    Tensor out = t;
    for (auto& v : out.data()) v = std::clamp(v, 0.0f, 1.0f);
    return out;
}

}  // namespace

ForwardTrace trace_forward(const Tensor& hazy, Model& model) {
    Graph g;
    ForwardVars v = full_forward(g.constant(hazy), model);
    return {v.semantic.value(), v.global.value(), v.confidence.value(),
            clamped(v.prediction.value())};
}

Tensor predict(const Tensor& hazy, const Tensor& illumination, Model& model) {
    Graph g;
    Tensor out = clamped(model_forward(g, hazy, illumination, model).value());
    if (!out.all_finite()) throw NumericError("predict: non-finite network output");
    return out;
}

Tensor illumination_tensor(std::span<const Illumination> colours) {
    Tensor t({static_cast<int>(colours.size()), 3, 1, 1});
    for (std::size_t n = 0; n < colours.size(); ++n) {
        for (int c = 0; c < 3; ++c) t.at(static_cast<int>(n), c, 0, 0) = colours[n].rgb[c];
    }
    return t;
}

}  // namespace hazelab
