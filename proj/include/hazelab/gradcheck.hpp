#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hazelab/autograd.hpp"

namespace hazelab {

struct GradCheckReport {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t elements_checked = 0;
    double tolerance = 0.0;
    bool passed = false;
};

// Builds the operation under test on a fresh graph from leaf inputs.
using GraphBuilder = std::function<Var(std::span<const Var>)>;

// Compares the analytic gradient of L = sum(out * R), R a fixed random
// projection drawn from seed, against central finite differences with step
// h = 1e-3 applied in float32. Per-element relative error is
// |analytic - numeric| / max(|analytic|, |numeric|, 0.1 * G), where G is the
// largest |numeric| over the input being checked.
GradCheckReport grad_check(const std::string& name, const GraphBuilder& op,
                           std::vector<Tensor> inputs, double tolerance, std::uint64_t seed);

// The oracle suite behind `hazelab gradcheck`: every differentiable operation,
// once per seed.
std::vector<GradCheckReport> run_gradcheck_suite(std::span<const std::uint64_t> seeds,
                                                 double tolerance = 1e-2);

}  // namespace hazelab
