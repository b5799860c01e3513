#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "hazelab/error.hpp"
#include "hazelab/network.hpp"
#include "hazelab/training.hpp"
#include "hazelab/weights_io.hpp"
#include "support.hpp"

using namespace hazelab;
using testing_support::uniform_tensor;

namespace {

std::size_t param_count(const Model& m, const std::string& prefix) {
    std::size_t n = 0;
    for (const auto& p : m.params) {
        if (p.name.rfind(prefix, 0) == 0) n += p.value.numel();
    }
    return n;
}

}  // namespace

TEST(Encoder, Presets) {
    const auto vgg = EncoderConfig::vgg16();
    const std::vector<std::pair<int, int>> expect_vgg{{2, 64}, {2, 128}, {3, 256}, {3, 512}, {3, 512}};
    ASSERT_EQ(vgg.blocks.size(), 5u);
    for (int i = 0; i < 5; ++i) {
        EXPECT_EQ(vgg.blocks[i].convs, expect_vgg[i].first);
        EXPECT_EQ(vgg.blocks[i].channels, expect_vgg[i].second);
    }
    EXPECT_FALSE(vgg.trainable);
    const auto tiny = EncoderConfig::tiny();
    const std::vector<std::pair<int, int>> expect_tiny{{1, 8}, {1, 16}, {2, 24}, {2, 32}, {2, 32}};
    for (int i = 0; i < 5; ++i) {
        EXPECT_EQ(tiny.blocks[i].convs, expect_tiny[i].first);
        EXPECT_EQ(tiny.blocks[i].channels, expect_tiny[i].second);
    }
    EXPECT_TRUE(tiny.trainable);
    EncoderConfig four = tiny;
    four.blocks.pop_back();
    EXPECT_THROW(four.validate(), ConfigError);
}

TEST(Encoder, Vgg16TapsAt256) {
    Model m = init_model(ModelConfig::full("vgg16"), 1);
    Graph g;
    const EncoderTaps taps = semantic_encode(g.constant(Tensor({1, 3, 256, 256}, 0.5f)), m);
    EXPECT_EQ(taps.block4.shape(), (Shape{1, 512, 32, 32}));
    EXPECT_EQ(taps.block5.shape(), (Shape{1, 512, 8, 8}));
}

TEST(Encoder, TinyTapsAt256) {
    Model m = init_model(ModelConfig::full("tiny"), 1);
    Graph g;
    const EncoderTaps taps = semantic_encode(g.constant(uniform_tensor({1, 3, 256, 256}, 2, 0, 1)), m);
    EXPECT_EQ(taps.block4.shape(), (Shape{1, 32, 32, 32}));
    EXPECT_EQ(taps.block5.shape(), (Shape{1, 32, 8, 8}));
}

TEST(Encoder, RejectsSizesNotDivisibleBy32) {
    Model m = init_model(ModelConfig::full("tiny"), 1);
    Graph g;
    EXPECT_THROW(semantic_encode(g.constant(Tensor({1, 3, 48, 64})), m), ShapeError);
}

TEST(Upsample, StageWidths) {
    EXPECT_EQ(ModelConfig::full("vgg16").upsample_widths(), (std::array<int, 3>{256, 128, 16}));
    EXPECT_EQ(ModelConfig::full("tiny").upsample_widths(), (std::array<int, 3>{16, 8, 16}));
    Model m = init_model(ModelConfig::full("tiny"), 3);
    Graph g;
    const Var out = upsample_subnet(g.constant(uniform_tensor({1, 32, 8, 8}, 4, 0, 1)), m);
    EXPECT_EQ(out.shape(), (Shape{1, 16, 64, 64}));
}

TEST(Upsample, DeclaredShapesFollowHalvingRule) {
    const auto shapes = ModelConfig::full("vgg16").declared_shapes();
    auto find = [&](const std::string& name) {
        for (const auto& [n, s] : shapes) {
            if (n == name) return s;
        }
        return Shape{};
    };
    EXPECT_EQ(find("upsample.stage1.weight"), (Shape{256, 512, 3, 3}));
    EXPECT_EQ(find("upsample.stage2.weight"), (Shape{128, 256, 3, 3}));
    EXPECT_EQ(find("upsample.stage3.weight"), (Shape{16, 128, 3, 3}));
    EXPECT_EQ(find("global.conv1.weight"), (Shape{256, 512, 5, 5}));
    EXPECT_EQ(find("global.conv2.weight"), (Shape{64, 256, 5, 5}));
    EXPECT_EQ(find("global.conv3.weight"), (Shape{33, 64, 1, 1}));
    EXPECT_EQ(find("color.conv1.weight"), (Shape{16, 51, 1, 1}));
    EXPECT_EQ(find("color.conv5.weight"), (Shape{3, 44, 3, 3}));
}

TEST(Global, ShapeIndependentOfInputSize) {
    Model m = init_model(ModelConfig::full("tiny"), 5);
    for (int s : {1, 2, 5}) {
        Graph g;
        const GlobalEstimate ge = global_estimate(g.constant(uniform_tensor({2, 32, s, s}, 6, 0, 1)), m);
        EXPECT_EQ(ge.features.shape(), (Shape{2, 32, 1, 1}));
        EXPECT_EQ(ge.confidence.shape(), (Shape{2, 1, s, s}));
        for (int n = 0; n < 2; ++n) {
            double sum = 0.0;
            for (int i = 0; i < s * s; ++i) sum += ge.confidence.value().at(n, 0, i / s, i % s);
            EXPECT_NEAR(sum, 1.0, 1e-6);
        }
    }
}

TEST(Global, ConstantInputGivesUniformConfidence) {
    // Zero padding breaks the symmetry at borders, so keep only the centre tap
    // of the 5x5 convs; a constant map then yields identical local estimates.
    Model m = init_model(ModelConfig::full("tiny"), 5);
    for (const char* name : {"global.conv1.weight", "global.conv2.weight"}) {
        Tensor& w = m.params.at(name).value;
        const Shape s = w.shape();
        for (int o = 0; o < s.n; ++o) {
            for (int i = 0; i < s.c; ++i) {
                for (int y = 0; y < s.h; ++y) {
                    for (int x = 0; x < s.w; ++x) {
                        if (y != s.h / 2 || x != s.w / 2) w.at(o, i, y, x) = 0.0f;
                    }
                }
            }
        }
    }
    Graph g;
    const GlobalEstimate ge = global_estimate(g.constant(Tensor({1, 32, 4, 4}, 0.3f)), m);
    const Tensor& c = ge.confidence.value();
    for (std::size_t i = 0; i < c.numel(); ++i) EXPECT_NEAR(c[i], 1.0f / 16, 1e-7);
    const GlobalEstimate one = global_estimate(g.constant(Tensor({1, 32, 1, 1}, 0.3f)), m);
    EXPECT_FLOAT_EQ(one.confidence.value()[0], 1.0f);
    for (int k = 0; k < 32; ++k) EXPECT_NEAR(ge.features.value()[k], one.features.value()[k], 1e-6);
}

TEST(ColorModule, InputWidthAndIdentityAtKEqualsOne) {
    Model m = init_model(ModelConfig::full("tiny"), 7);
    EXPECT_EQ(m.config.color_input_channels(), 51);
    EXPECT_EQ(m.params.at("color.conv1.weight").value.shape().c, 51);
    // K == 1 everywhere: conv5 weights zero, bias one (ReLU(1) = 1).
    m.params.at("color.conv5.weight").value.fill(0.0f);
    m.params.at("color.conv5.bias").value.fill(1.0f);
    const Tensor hazy = uniform_tensor({1, 3, 32, 32}, 8, 0, 1);
    Graph g;
    const Var out = color_module(g.constant(hazy), g.constant(uniform_tensor({1, 16, 32, 32}, 9)),
                                 g.constant(uniform_tensor({1, 32, 32, 32}, 10)), m);
    EXPECT_EQ(out.shape(), hazy.shape());
    EXPECT_TRUE(out.value().identical(hazy));
}

TEST(ColorModule, MisalignedInputsRejected) {
    Model m = init_model(ModelConfig::full("tiny"), 7);
    Graph g;
    EXPECT_THROW(color_module(g.constant(Tensor({1, 3, 32, 32})), g.constant(Tensor({1, 16, 32, 32})),
                              g.constant(Tensor({1, 32, 16, 32})), m),
                 ShapeError);
}

TEST(ColorModule, BaselineHasSlightlyMoreParameters) {
    const Model full = init_model(ModelConfig::full("tiny"), 1);
    const Model base = init_model(ModelConfig::baseline(), 1);
    const std::size_t full_color = param_count(full, "color.");
    const std::size_t base_color = param_count(base, "color.");
    EXPECT_EQ(full_color, 15459u);
    EXPECT_EQ(base_color, 17763u);
    EXPECT_GT(base_color, full_color);
    EXPECT_EQ(base.params.size(), 10u);
}

TEST(FullForward, ShapesDeterminismAndFiniteness) {
    Model m = init_model(ModelConfig::full("tiny"), 11);
    const Tensor hazy = uniform_tensor({2, 3, 64, 96}, 12, 0, 1);
    const ForwardTrace a = trace_forward(hazy, m);
    const ForwardTrace b = trace_forward(hazy, m);
    EXPECT_EQ(a.prediction.shape(), hazy.shape());
    EXPECT_EQ(a.semantic.shape(), (Shape{2, 16, 64, 96}));
    EXPECT_EQ(a.global.shape(), (Shape{2, 32, 1, 1}));
    EXPECT_EQ(a.confidence.shape(), (Shape{2, 1, 2, 3}));
    EXPECT_TRUE(a.prediction.identical(b.prediction));
    EXPECT_TRUE(a.prediction.all_finite());
    for (float v : a.prediction.data()) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
    }
}

TEST(FullForward, At256) {
    Model m = init_model(ModelConfig::full("tiny"), 13);
    const Tensor out = predict(uniform_tensor({1, 3, 256, 256}, 14, 0, 1), Tensor({1, 3, 1, 1}), m);
    EXPECT_EQ(out.shape(), (Shape{1, 3, 256, 256}));
}

TEST(FullForward, GradientReachesEveryParameter) {
    Model m = init_model(ModelConfig::full("tiny"), 15);
    // Positive conv5 bias keeps the K head active for the reachability check.
    m.params.at("color.conv5.bias").value.fill(0.5f);
    Graph g;
    const Tensor hazy = uniform_tensor({2, 3, 128, 128}, 16, 0, 1);
    Var pred = model_forward(g, hazy, Tensor({2, 3, 1, 1}), m);
    g.backward(mse_loss(pred, g.constant(uniform_tensor(hazy.shape(), 17, 0, 1))));
    // Counted per parameter tensor: single weights behind a ReLU that is dead
    // for the whole input legitimately get zero gradient.
    std::size_t reached = 0;
    for (const auto& p : m.params) {
        ASSERT_TRUE(p.grad.all_finite()) << p.name;
        const auto g = p.grad.data();
        const bool any = std::any_of(g.begin(), g.end(), [](float v) { return v != 0.0f; });
        EXPECT_TRUE(any) << p.name;
        reached += any;
    }
    EXPECT_GE(static_cast<double>(reached) / m.params.size(), 0.99);
}

TEST(FullForward, TranslationCovariantSemantics) {
    // Shift by 32 px: every pool stage stays aligned, so semantic features of
    // the shifted image equal the originals away from the differing left edge.
    Model m = init_model(ModelConfig::full("tiny"), 19);
    const int h = 64, w = 128, shift = 32;
    const Tensor x = uniform_tensor({1, 3, h, w}, 20, 0, 1);
    Tensor y({1, 3, h, w + shift}, 0.5f);
    for (int c = 0; c < 3; ++c) {
        for (int r = 0; r < h; ++r) {
            for (int q = 0; q < w; ++q) y.at(0, c, r, q + shift) = x.at(0, c, r, q);
        }
    }
    const ForwardTrace tx = trace_forward(x, m);
    const ForwardTrace ty = trace_forward(y, m);
    for (int c = 0; c < 16; ++c) {
        for (int r = 0; r < h; ++r) {
            for (int q = 72; q < w; ++q) {
                ASSERT_NEAR(ty.semantic.at(0, c, r, q + shift), tx.semantic.at(0, c, r, q), 1e-4)
                    << c << "," << r << "," << q;
            }
        }
    }
}

TEST(Baseline, SixChannelInputAnd24Filters) {
    const ModelConfig cfg = ModelConfig::baseline();
    EXPECT_EQ(cfg.color_input_channels(), 6);
    EXPECT_EQ(cfg.color_conv1_width(), 24);
    Model m = init_model(cfg, 21);
    EXPECT_EQ(m.params.at("color.conv1.weight").value.shape(), (Shape{24, 6, 1, 1}));
    EXPECT_FALSE(m.params.contains("encoder.block1.conv1.weight"));
    const Tensor hazy = uniform_tensor({2, 3, 32, 64}, 22, 0, 1);
    const std::vector<Illumination> a{Illumination::gray(0.8f), Illumination{{0.9f, 0.7f, 0.6f}}};
    const Tensor out = predict(hazy, illumination_tensor(a), m);
    EXPECT_EQ(out.shape(), hazy.shape());
}

TEST(Baseline, UsesTheIllumination) {
    Model m = init_model(ModelConfig::baseline(), 23);
    m.params.at("color.conv5.bias").value.fill(0.5f);
    const Tensor hazy = uniform_tensor({1, 3, 32, 32}, 24, 0, 1);
    const std::vector<Illumination> a1{Illumination::gray(0.6f)};
    const std::vector<Illumination> a2{Illumination{{0.9f, 0.5f, 0.7f}}};
    EXPECT_FALSE(predict(hazy, illumination_tensor(a1), m).identical(predict(hazy, illumination_tensor(a2), m)));
}

TEST(Weights, RoundTripIsBitExact) {
    Model m = init_model(ModelConfig::full("tiny"), 25);
    m.normalization = InputNormalization{{0.485f, 0.456f, 0.406f}, {0.229f, 0.224f, 0.225f}};
    std::stringstream buf;
    write_weights(buf, m);
    EXPECT_EQ(buf.str().substr(0, 4), "HZW1");
    const Model back = read_weights(buf, m.config);
    ASSERT_EQ(back.params.size(), m.params.size());
    for (const auto& p : m.params) EXPECT_TRUE(back.params.at(p.name).value.identical(p.value)) << p.name;
    ASSERT_TRUE(back.normalization.has_value());
    EXPECT_EQ(back.normalization->std, m.normalization->std);
}

TEST(Weights, RenamedTensorIsNamedInTheError) {
    Model m = init_model(ModelConfig::full("tiny"), 26);
    std::stringstream buf;
    write_weights(buf, m);
    std::string bytes = buf.str();
    const std::string from = "color.conv3.weight";
    const std::string to = "color.convX.weight";
    bytes.replace(bytes.find(from), from.size(), to);
    std::stringstream in(bytes);
    try {
        read_weights(in, m.config);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find(to), std::string::npos) << e.what();
    }
}

TEST(Weights, TinyFileAgainstVgg16IsAShapeError) {
    Model m = init_model(ModelConfig::full("tiny"), 27);
    std::stringstream buf;
    write_weights(buf, m);
    EXPECT_THROW(read_weights(buf, ModelConfig::full("vgg16")), ShapeError);
}

TEST(Weights, BadMagicIsAnIoError) {
    std::stringstream in("NOPE....");
    EXPECT_THROW(read_weights(in, ModelConfig::full("tiny")), IoError);
}

TEST(Training, FrozenEncoderIsBitIdenticalAfterAStep) {
    ModelConfig cfg = ModelConfig::full("vgg16");
    Model m = init_model(cfg, 28);
    const auto sources = procedural_sources(1, 32, 32, 3, "train");
    TrainConfig tc;
    Trainer trainer(m, sources, sources, tc);
    EpochStream stream(sources, tc.protocol, 1, 0, false);
    const std::vector<HazySample> batch{stream[0]};
    trainer.step(batch);
    std::size_t changed_other = 0;
    for (const auto& p : trainer.model().params) {
        const Param& before = m.params.at(p.name);
        if (p.name.rfind("encoder.", 0) == 0) {
            EXPECT_FALSE(p.trainable);
            EXPECT_TRUE(p.value.identical(before.value)) << p.name;
        } else if (!p.value.identical(before.value)) {
            ++changed_other;
        }
    }
    EXPECT_GT(changed_other, 0u);
}
