#include <numeric>

#include "doctest.h"
#include "mtsconv/errors.hpp"
#include "mtsconv/interp.hpp"
#include "mtsconv/layers.hpp"
#include "mtsconv/mts_layer.hpp"
#include "test_util.hpp"

using namespace mtsconv;
using testutil::random_tensor;
using testutil::relative_error;

TEST_CASE("a single unit branch reproduces the plain convolution bit for bit") {
    std::mt19937_64 rng(31);
    const Conv2d conv{random_tensor({3, 2, 4, 3}, rng), random_tensor({3}, rng)};
    MtsConv2d layer(conv, ScaleSet());
    const Tensor x = random_tensor({2, 2, 9, 6}, rng);
    const MtsForwardResult r = mts_forward(x, layer);
    CHECK(r.output == conv2d_forward(x, conv));

    const Tensor g = random_tensor(r.output.shape(), rng);
    const MtsGrads mg = mts_backward(g, r.cache, layer);
    const Conv2dGrads cg = conv2d_backward(g, x, conv);
    CHECK(mg.input == cg.input);
    CHECK(mg.branch_kernels.front() == cg.kernels);
    CHECK(mg.bias == cg.bias);
}

TEST_CASE("branch banks are time-resampled copies of the canonical bank") {
    std::mt19937_64 rng(32);
    MtsConv2d layer(Conv2d{random_tensor({2, 1, 10, 5}, rng), Tensor({2})}, ScaleSet({0.5, 1.0, 2.0}));
    REQUIRE(layer.branch_kernels.size() == 3);
    CHECK(layer.branch_kernels[0].shape() == Shape{2, 1, 5, 5});
    CHECK(layer.branch_kernels[1] == layer.canonical.kernels);
    CHECK(layer.branch_kernels[2].shape() == Shape{2, 1, 20, 5});
    CHECK(layer.longest_branch_time() == 20);
    CHECK(layer.parameter_count() == 2 * 10 * 5 + 2);
}

TEST_CASE("forward output equals the elementwise max over resampled branch maps") {
    std::mt19937_64 rng(33);
    MtsConv2d layer(Conv2d{random_tensor({2, 1, 4, 2}, rng), random_tensor({2}, rng)}, ScaleSet({0.5, 1.0, 2.0}));
    const Tensor x = random_tensor({1, 1, 12, 5}, rng);
    const MtsForwardResult r = mts_forward(x, layer, false);
    const std::size_t t_out = 12 - 4 + 1;
    std::vector<Tensor> maps;
    for (const Tensor& k : layer.branch_kernels) {
        maps.push_back(resample_to_length(conv_valid(x, k), t_out, 2));
    }
    for (std::size_t i = 0; i < r.output.size(); ++i) {
        double best = maps[0][i];
        std::size_t arg = 0;
        for (std::size_t s = 1; s < maps.size(); ++s) {
            if (maps[s][i] > best) {
                best = maps[s][i];
                arg = s;
            }
        }
        const std::size_t channel = (i / (t_out * 4)) % 2;
        CHECK(r.output[i] == doctest::Approx(best + layer.canonical.bias[channel]).epsilon(1e-14));
        CHECK(r.cache.winners.indices[i] == arg);
    }
}

TEST_CASE("mts gradients match finite differences away from branch ties") {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        std::mt19937_64 rng(seed * 7);
        MtsConv2d layer(Conv2d{random_tensor({2, 2, 4, 2}, rng), random_tensor({2}, rng)}, ScaleSet({0.5, 1.0, 2.0}));
        Tensor x = random_tensor({1, 2, 11, 4}, rng);
        const MtsForwardResult base = mts_forward(x, layer, false);
        const Tensor g = random_tensor(base.output.shape(), rng);
        bool flipped = false;
        const auto loss = [&] {
            const MtsForwardResult r = mts_forward(x, layer, false);
            flipped = flipped || r.cache.winners.indices != base.cache.winners.indices;
            return dot(g, r.output);
        };
        const MtsGrads grads = mts_backward(g, base.cache, layer);
        const Tensor nx = testutil::numeric_gradient(x, loss);
        std::vector<Tensor> nk;
        for (auto& k : layer.branch_kernels) {
            nk.push_back(testutil::numeric_gradient(k, loss));
        }
        const Tensor nb = testutil::numeric_gradient(layer.canonical.bias, loss);
        if (flipped) {
            continue;
        }
        CHECK(relative_error(grads.input, nx) < 1e-6);
        for (std::size_t s = 0; s < 3; ++s) {
            CHECK(relative_error(grads.branch_kernels[s], nk[s]) < 1e-6);
        }
        CHECK(relative_error(grads.bias, nb) < 1e-6);
    }
}

TEST_CASE("usage fractions sum to one and respect the phase counter") {
    std::mt19937_64 rng(34);
    MtsConv2d layer(Conv2d{random_tensor({3, 1, 6, 3}, rng), Tensor({3})}, ScaleSet({0.5, 0.7, 1.0, 1.428, 2.0}));
    CHECK_THROWS_AS(branch_usage(layer), StateError);
    mts_forward(random_tensor({4, 1, 20, 8}, rng), layer, true);
    const auto u = branch_usage(layer);
    CHECK(u.size() == 5);
    CHECK(std::abs(std::accumulate(u.begin(), u.end(), 0.0) - 1.0) < 1e-12);
    reset_usage(layer);
    CHECK_THROWS_AS(branch_usage(layer), StateError);
}

TEST_CASE("average_weights folds branches back to the canonical bank") {
    std::mt19937_64 rng(35);
    MtsConv2d layer(Conv2d{random_tensor({1, 1, 6, 2}, rng), Tensor({1})}, ScaleSet({0.5, 1.0, 2.0}));
    layer.branch_kernels[0] += Tensor::filled(layer.branch_kernels[0].shape(), 0.3);
    std::vector<Tensor> mapped;
    for (const Tensor& k : layer.branch_kernels) {
        mapped.push_back(resample_to_length(k, 6, 2));
    }
    average_weights(layer);
    for (std::size_t i = 0; i < layer.canonical.kernels.size(); ++i) {
        const double mean = (mapped[0][i] + mapped[1][i] + mapped[2][i]) / 3.0;
        CHECK(layer.canonical.kernels[i] == doctest::Approx(mean).epsilon(1e-14));
    }
    CHECK(layer.branch_kernels[1] == layer.canonical.kernels);
    CHECK(layer.branch_kernels[2] == resample_time(layer.canonical.kernels, 2.0, 2));
}

TEST_CASE("mts shape and state errors") {
    std::mt19937_64 rng(36);
    MtsConv2d layer(Conv2d{random_tensor({1, 1, 6, 2}, rng), Tensor({1})}, ScaleSet({0.5, 1.0, 2.0}));
    CHECK_THROWS_AS(mts_forward(Tensor({1, 1, 11, 4}), layer), ShapeError);
    CHECK_THROWS_AS(mts_backward(Tensor({1, 1, 7, 3}), MtsCache{}, layer), StateError);
}
