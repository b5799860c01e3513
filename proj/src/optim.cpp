#include "hazelab/optim.hpp"

#include <cmath>

#include "hazelab/error.hpp"

namespace hazelab {

Param& ParamSet::add(std::string name, Tensor value, bool trainable) {
    if (index_.contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    const Shape shape = value.shape();
    index_.emplace(name, params_.size());
    params_.push_back(Param{std::move(name), std::move(value), Tensor(shape), Tensor(shape),
                            Tensor(shape), trainable});
    return params_.back();
}

Param* ParamSet::find(std::string_view name) {
    auto it = index_.find(std::string(name));
    return it == index_.end() ? nullptr : &params_[it->second];
}

const Param* ParamSet::find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    return it == index_.end() ? nullptr : &params_[it->second];
}

Param& ParamSet::at(std::string_view name) {
    if (Param* p = find(name)) return *p;
    throw ConfigError("unknown parameter '" + std::string(name) + "'");
}

const Param& ParamSet::at(std::string_view name) const {
    if (const Param* p = find(name)) return *p;
    throw ConfigError("unknown parameter '" + std::string(name) + "'");
}

std::size_t ParamSet::scalar_count() const {
    std::size_t total = 0;
    for (const auto& p : params_) total += p.value.numel();
    return total;
}

void ParamSet::zero_grad() {
    for (auto& p : params_) p.grad.fill(0.0f);
}

void adam_step(ParamSet& params, const AdamConfig& config) {
    params.adam_steps += 1;
    const double t = static_cast<double>(params.adam_steps);
    const float correction1 = static_cast<float>(1.0 - std::pow(double{config.beta1}, t));
    const float correction2 = static_cast<float>(1.0 - std::pow(double{config.beta2}, t));
    const float b1 = config.beta1;
    const float b2 = config.beta2;

    for (auto& p : params) {
        if (p.trainable) {
            float* value = p.value.ptr();
            const float* grad = p.grad.ptr();
            float* m = p.m.ptr();
            float* v = p.v.ptr();
            const std::size_t count = p.value.numel();
            for (std::size_t i = 0; i < count; ++i) {
                const float g = grad[i];
                m[i] = b1 * m[i] + (1.0f - b1) * g;
                v[i] = b2 * v[i] + (1.0f - b2) * g * g;
                const float m_hat = m[i] / correction1;
                const float v_hat = v[i] / correction2;
                value[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
            }
        }
        p.grad.fill(0.0f);
    }
}

}  // namespace hazelab
