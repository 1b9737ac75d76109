#include "mtsconv/adam.hpp"

#include <cmath>

#include "mtsconv/errors.hpp"

namespace mtsconv {

void adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads, AdamState& state) {
    if (params.size() != grads.size()) {
        throw ShapeError("adam: parameter and gradient counts differ");
    }
    if (state.first_moment.empty()) {
        for (const Tensor* p : params) {
            state.first_moment.emplace_back(p->shape());
            state.second_moment.emplace_back(p->shape());
        }
    }
    if (state.first_moment.size() != params.size()) {
        throw ShapeError("adam: parameter count changed between steps");
    }

    const AdamConfig& c = state.config;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(c.beta1, t);
    const double correction2 = 1.0 - std::pow(c.beta2, t);

    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = *grads[i];
        Tensor& m = state.first_moment[i];
        Tensor& v = state.second_moment[i];
        if (g.shape() != p.shape() || m.shape() != p.shape()) {
            throw ShapeError("adam: shape mismatch for parameter " + std::to_string(i));
        }
        for (std::size_t k = 0; k < p.size(); ++k) {
            const double grad = g[k] + c.l2 * p[k];
            m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * grad;
            v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * grad * grad;
            const double m_hat = m[k] / correction1;
            const double v_hat = v[k] / correction2;
            p[k] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
        }
    }
}

}  // namespace mtsconv
