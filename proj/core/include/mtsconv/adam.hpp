#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mtsconv/tensor.hpp"

namespace mtsconv {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double l2 = 0.0;  // coupled: lambda * param is added to the gradient
};

struct AdamState {
    AdamConfig config;
    std::uint64_t step = 0;
    std::vector<Tensor> first_moment;
    std::vector<Tensor> second_moment;

    explicit AdamState(AdamConfig cfg = {}) : config(cfg) {}
};

// One bias-corrected Adam update. Moments are created lazily on the first
// call and must keep matching the parameter shapes afterwards.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads, AdamState& state);

}  // namespace mtsconv
