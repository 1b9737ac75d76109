#include <cmath>

#include "doctest.h"
#include "mtsconv/adam.hpp"
#include "test_util.hpp"

using namespace mtsconv;

TEST_CASE("first Adam step moves each parameter by about the learning rate") {
    Tensor p({3}, {1.0, -2.0, 0.5});
    const Tensor g({3}, {0.3, -4.0, 1e-3});
    AdamState state(AdamConfig{});
    Tensor* params[] = {&p};
    const Tensor* grads[] = {&g};
    adam_step(params, grads, state);
    CHECK(p.values()[0] == doctest::Approx(1.0 - 1e-3).epsilon(1e-6));
    CHECK(p.values()[1] == doctest::Approx(-2.0 + 1e-3).epsilon(1e-6));
    CHECK(state.step == 1);
}

TEST_CASE("Adam with coupled L2 follows the scalar recurrence") {
    const AdamConfig cfg{0.01, 0.9, 0.999, 1e-8, 0.1};
    Tensor p({2}, {0.7, -1.3});
    AdamState state(cfg);
    double m[2] = {0, 0}, v[2] = {0, 0}, ref[2] = {0.7, -1.3};
    std::mt19937_64 rng(4);
    for (int t = 1; t <= 25; ++t) {
        const Tensor g = testutil::random_tensor({2}, rng);
        Tensor* params[] = {&p};
        const Tensor* grads[] = {&g};
        adam_step(params, grads, state);
        for (int i = 0; i < 2; ++i) {
            const double gi = g.values()[i] + cfg.l2 * ref[i];
            m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * gi * gi;
            const double mh = m[i] / (1 - std::pow(cfg.beta1, t));
            const double vh = v[i] / (1 - std::pow(cfg.beta2, t));
            ref[i] -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.epsilon);
        }
    }
    CHECK(p.values()[0] == doctest::Approx(ref[0]).epsilon(1e-12));
    CHECK(p.values()[1] == doctest::Approx(ref[1]).epsilon(1e-12));
}

TEST_CASE("Adam minimises a quadratic") {
    Tensor p({1}, {5.0});
    AdamState state(AdamConfig{0.1, 0.9, 0.999, 1e-8, 0.0});
    for (int t = 0; t < 500; ++t) {
        const Tensor g({1}, {2.0 * (p.values()[0] - 1.5)});
        Tensor* params[] = {&p};
        const Tensor* grads[] = {&g};
        adam_step(params, grads, state);
    }
    CHECK(p.values()[0] == doctest::Approx(1.5).epsilon(1e-2));
}
