#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <string_view>
#include <unordered_map>

#include "hazelab/tensor.hpp"

namespace hazelab {

// A named trainable tensor with its gradient accumulator and Adam moments.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor m;
    Tensor v;
    bool trainable = true;
};

// Insertion-ordered collection of parameters. References returned by add()
// and at() stay valid for the lifetime of the set.
class ParamSet {
public:
    Param& add(std::string name, Tensor value, bool trainable = true);

    Param& at(std::string_view name);
    const Param& at(std::string_view name) const;
    Param* find(std::string_view name);
    const Param* find(std::string_view name) const;
    bool contains(std::string_view name) const { return find(name) != nullptr; }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }
    std::size_t size() const { return params_.size(); }
    std::size_t scalar_count() const;

    void zero_grad();

    // Number of Adam updates applied so far (the bias-correction exponent).
    std::int64_t adam_steps = 0;

private:
    std::deque<Param> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct AdamConfig {
    float lr = 1e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

// One bias-corrected Adam update of every trainable parameter, then zeroes
// all gradient accumulators. Frozen parameters are left untouched.
void adam_step(ParamSet& params, const AdamConfig& config = {});

}  // namespace hazelab
