#pragma once

// Bias-corrected Adam over flat parameter lists.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "ditto/tensor.hpp"

namespace ditto {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    AdamConfig cfg;
    std::vector<Tensor> first_moment;
    std::vector<Tensor> second_moment;
    long step_count = 0;

    explicit AdamState(AdamConfig c = {}) : cfg(c) {}

    void init(const std::vector<Tensor*>& params) {
        first_moment.clear();
        second_moment.clear();
        for (const Tensor* p : params) {
            first_moment.emplace_back(p->shape());
            second_moment.emplace_back(p->shape());
        }
        step_count = 0;
    }
};

inline void adam_step(const std::vector<Tensor*>& params,
                      const std::vector<const Tensor*>& grads, AdamState& state) {
    if (params.size() != grads.size() || params.size() != state.first_moment.size())
        throw std::invalid_argument("adam_step: parameter/gradient/state count mismatch");
    state.step_count += 1;
    const double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        const Tensor& g = *grads[k];
        Tensor& m = state.first_moment[k];
        Tensor& v = state.second_moment[k];
        if (!p.same_shape(g) || !p.same_shape(m))
            throw std::invalid_argument("adam_step: shape mismatch at parameter " +
                                        std::to_string(k) + ", param " + p.shape_str() +
                                        " vs grad " + g.shape_str());
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            p[i] -= state.cfg.lr * mhat / (std::sqrt(vhat) + state.cfg.epsilon);
        }
    }
}

}  // namespace ditto
