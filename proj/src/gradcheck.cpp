#include "hazelab/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "hazelab/rng.hpp"

namespace hazelab {
namespace {

constexpr float kStep = 1e-3f;

Tensor random_tensor(Shape shape, Rng& rng, float lo = -1.0f, float hi = 1.0f) {
    Tensor t(shape);
    for (auto& v : t.data()) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

double projected_objective(const GraphBuilder& op, const std::vector<Tensor>& inputs,
                           const Tensor& projection) {
    Graph g;
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const auto& t : inputs) vars.push_back(g.constant(t));
    const Tensor& out = op(vars).value();
    double acc = 0.0;
    for (std::size_t i = 0; i < out.numel(); ++i) acc += double{out[i]} * projection[i];
    return acc;
}

}  // namespace

GradCheckReport grad_check(const std::string& name, const GraphBuilder& op,
                           std::vector<Tensor> inputs, double tolerance, std::uint64_t seed) {
    GradCheckReport report;
    report.name = name;
    report.tolerance = tolerance;

    std::vector<Tensor> analytic;
    Tensor projection;
    {
        Graph g;
        std::vector<Var> vars;
        for (const auto& t : inputs) vars.push_back(g.leaf(t));
        Var out = op(vars);
        Rng rng(hash_seed({seed, 0x9a0dULL}));
        projection = random_tensor(out.shape(), rng);
        g.backward(out, projection);
        for (const Var& v : vars) {
            analytic.push_back(v.grad().empty() ? Tensor(v.shape()) : v.grad());
        }
    }

    for (std::size_t k = 0; k < inputs.size(); ++k) {
        std::vector<double> numeric(inputs[k].numel());
        for (std::size_t j = 0; j < inputs[k].numel(); ++j) {
            const float original = inputs[k][j];
            const float plus = original + kStep;
            const float minus = original - kStep;
            inputs[k][j] = plus;
            const double f_plus = projected_objective(op, inputs, projection);
            inputs[k][j] = minus;
            const double f_minus = projected_objective(op, inputs, projection);
            inputs[k][j] = original;
            numeric[j] = (f_plus - f_minus) / (double{plus} - double{minus});
        }
        double scale = 0.0;
        for (double n : numeric) scale = std::max(scale, std::abs(n));
        const double floor = scale > 0.0 ? 0.1 * scale : 1e-12;
        for (std::size_t j = 0; j < numeric.size(); ++j) {
            const double a = analytic[k][j];
            const double n = numeric[j];
            const double denom = std::max({std::abs(a), std::abs(n), floor});
            report.max_rel_error = std::max(report.max_rel_error, std::abs(a - n) / denom);
        }
        report.elements_checked += numeric.size();
    }
    report.passed = std::isfinite(report.max_rel_error) && report.max_rel_error < tolerance;
    return report;
}

std::vector<GradCheckReport> run_gradcheck_suite(std::span<const std::uint64_t> seeds,
                                                 double tolerance) {
    std::vector<GradCheckReport> reports;
    for (std::uint64_t seed : seeds) {
        Rng rng(hash_seed({seed, 0x5017eULL}));
        const std::string tag = " [seed " + std::to_string(seed) + "]";
        auto check = [&](const std::string& name, const GraphBuilder& op,
                         std::vector<Tensor> inputs) {
            reports.push_back(grad_check(name + tag, op, std::move(inputs), tolerance, seed));
        };

        check("conv2d same 3x3",
              [](std::span<const Var> v) { return conv2d(v[0], v[1], v[2], Padding::same); },
              {random_tensor({1, 2, 5, 5}, rng), random_tensor({3, 2, 3, 3}, rng),
               random_tensor({1, 3, 1, 1}, rng)});
        check("conv2d valid 3x3",
              [](std::span<const Var> v) { return conv2d(v[0], v[1], v[2], Padding::valid); },
              {random_tensor({1, 2, 5, 5}, rng), random_tensor({3, 2, 3, 3}, rng),
               random_tensor({1, 3, 1, 1}, rng)});
        check("conv2d same 3x3 wide",
              [](std::span<const Var> v) { return conv2d(v[0], v[1], v[2], Padding::same); },
              {random_tensor({1, 2, 4, 5}, rng), random_tensor({10, 2, 3, 3}, rng),
               random_tensor({1, 10, 1, 1}, rng)});
        check("conv2d same 5x5 batch 2",
              [](std::span<const Var> v) { return conv2d(v[0], v[1], v[2], Padding::same); },
              {random_tensor({2, 3, 3, 4}, rng), random_tensor({2, 3, 5, 5}, rng),
               random_tensor({1, 2, 1, 1}, rng)});
        check("conv2d pointwise batch 2",
              [](std::span<const Var> v) { return conv2d(v[0], v[1], v[2], Padding::same); },
              {random_tensor({2, 3, 4, 4}, rng), random_tensor({4, 3, 1, 1}, rng),
               random_tensor({1, 4, 1, 1}, rng)});

        Tensor relu_in = random_tensor({1, 2, 4, 4}, rng, 0.1f, 1.0f);
        for (auto& x : relu_in.data()) {
            if (rng.uniform() < 0.5) x = -x;
        }
        check("relu", [](std::span<const Var> v) { return relu(v[0]); }, {relu_in});

        // Window entries spaced 0.05 apart so a 1e-3 step never changes the argmax.
        Tensor pool_in({1, 2, 4, 4});
        {
            std::vector<float> levels(pool_in.numel());
            for (std::size_t i = 0; i < levels.size(); ++i) {
                levels[i] = -0.8f + 0.05f * static_cast<float>(i);
            }
            rng.shuffle(levels);
            std::copy(levels.begin(), levels.end(), pool_in.data().begin());
        }
        check("maxpool2", [](std::span<const Var> v) { return maxpool2(v[0]); }, {pool_in});

        check("upsample2_bilinear", [](std::span<const Var> v) { return upsample2_bilinear(v[0]); },
              {random_tensor({1, 2, 3, 4}, rng)});
        check("concat_channels",
              [](std::span<const Var> v) { return concat_channels(v); },
              {random_tensor({1, 1, 3, 3}, rng), random_tensor({1, 2, 3, 3}, rng),
               random_tensor({1, 1, 3, 3}, rng)});
        check("slice_channels", [](std::span<const Var> v) { return slice_channels(v[0], 1, 3); },
              {random_tensor({1, 4, 3, 3}, rng)});
        check("softmax_spatial", [](std::span<const Var> v) { return softmax_spatial(v[0]); },
              {random_tensor({2, 1, 3, 3}, rng)});
        check("weighted_global_pool",
              [](std::span<const Var> v) {
                  return weighted_global_pool(v[0], softmax_spatial(v[1]));
              },
              {random_tensor({2, 3, 3, 3}, rng), random_tensor({2, 1, 3, 3}, rng)});
        check("broadcast_spatial",
              [](std::span<const Var> v) { return broadcast_spatial(v[0], 4, 5); },
              {random_tensor({1, 3, 1, 1}, rng)});
        check("mse_loss", [](std::span<const Var> v) { return mse_loss(v[0], v[1]); },
              {random_tensor({1, 3, 4, 4}, rng), random_tensor({1, 3, 4, 4}, rng)});
        check("k_head", [](std::span<const Var> v) { return k_head(v[0], v[1]); },
              {random_tensor({1, 3, 4, 4}, rng), random_tensor({1, 3, 4, 4}, rng, 0.0f, 1.0f)});
    }
    return reports;
}

}  // namespace hazelab
