#pragma once

#include <cstdint>

#include "distill/numerics/tensor.hpp"

namespace distill::nn {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    AdamConfig config;
    std::int64_t step = 0;
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;
};

/// One bias-corrected Adam update. Parameters without a gradient buffer are
/// treated as having zero gradient.
inline void adam_step(std::span<Tensor> params, AdamState& state) {
    if (state.first_moment.empty()) {
        for (const Tensor& p : params) {
            state.first_moment.emplace_back(p.numel(), 0.0);
            state.second_moment.emplace_back(p.numel(), 0.0);
        }
    }
    if (state.first_moment.size() != params.size()) {
        throw ShapeError("adam_step: state tracks " + std::to_string(state.first_moment.size()) +
                         " parameters, got " + std::to_string(params.size()));
    }
    ++state.step;
    const auto& cfg = state.config;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(cfg.beta1, t);
    const double correction2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = params[k];
        auto& m = state.first_moment[k];
        auto& v = state.second_moment[k];
        if (m.size() != p.numel()) throw ShapeError("adam_step: moment buffer does not match parameter");
        const bool has_grad = p.has_grad();
        auto values = p.mutable_data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double g = has_grad ? p.grad()[i] : 0.0;
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            const double mhat = m[i] / correction1;
            const double vhat = v[i] / correction2;
            values[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

}  // namespace distill::nn
