#include <cmath>

#include "doctest.h"
#include "mtsconv/errors.hpp"
#include "mtsconv/layers.hpp"
#include "test_util.hpp"

using namespace mtsconv;
using testutil::draw;
using testutil::numeric_gradient;
using testutil::random_tensor;
using testutil::relative_error;

namespace {

// Direct seven-loop cross-correlation.
Tensor naive_conv(const Tensor& x, const Tensor& k) {
    const std::size_t b = x.extent(0), ci = x.extent(1), t = x.extent(2), f = x.extent(3);
    const std::size_t co = k.extent(0), kt = k.extent(2), kf = k.extent(3);
    Tensor y({b, co, t - kt + 1, f - kf + 1});
    for (std::size_t n = 0; n < b; ++n)
        for (std::size_t o = 0; o < co; ++o)
            for (std::size_t i = 0; i + kt <= t; ++i)
                for (std::size_t j = 0; j + kf <= f; ++j) {
                    double s = 0.0;
                    for (std::size_t c = 0; c < ci; ++c)
                        for (std::size_t a = 0; a < kt; ++a)
                            for (std::size_t e = 0; e < kf; ++e)
                                s += x.at({n, c, i + a, j + e}) * k.at({o, c, a, e});
                    y.at({n, o, i, j}) = s;
                }
    return y;
}

}  // namespace

TEST_CASE("conv_valid matches the nested-loop definition") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t kt = draw(rng, 1, 4), kf = draw(rng, 1, 3);
        const Tensor x = random_tensor({draw(rng, 1, 2), draw(rng, 1, 3), kt + draw(rng, 0, 5), kf + draw(rng, 0, 4)}, rng);
        const Tensor k = random_tensor({draw(rng, 1, 3), x.extent(1), kt, kf}, rng);
        const Tensor y = conv_valid(x, k);
        const Tensor expect = naive_conv(x, k);
        REQUIRE(y.shape() == expect.shape());
        CHECK(max_abs(y - expect) < 1e-12);
    }
}

TEST_CASE("conv shape errors") {
    CHECK_THROWS_AS(conv_valid(Tensor({1, 1, 3, 3}), Tensor({1, 1, 4, 1})), ShapeError);
    CHECK_THROWS_AS(conv_valid(Tensor({1, 2, 5, 5}), Tensor({1, 1, 2, 2})), ShapeError);
}

TEST_CASE("A2 first-layer shape arithmetic on a 99x161 input") {
    std::mt19937_64 rng(1);
    const Conv2d conv = Conv2d::glorot(10, 1, 10, 5, rng);
    const Tensor y = conv2d_forward(Tensor({1, 1, 99, 161}), conv);
    CHECK(y.shape() == Shape{1, 10, 90, 157});
    CHECK(y.size() == 141300);
}

TEST_CASE("glorot bounds") {
    std::mt19937_64 rng(7);
    const Conv2d c = Conv2d::glorot(4, 2, 3, 3, rng);
    const double limit = std::sqrt(6.0 / (2 * 9 + 4 * 9));
    CHECK(max_abs(c.kernels) <= limit);
    CHECK(max_abs(c.bias) == 0.0);
}

TEST_CASE("conv2d gradients match finite differences") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        std::mt19937_64 rng(seed);
        const std::size_t kt = draw(rng, 1, 3), kf = draw(rng, 1, 3);
        Tensor x = random_tensor({2, 2, kt + 3, kf + 2}, rng);
        Conv2d layer{random_tensor({3, 2, kt, kf}, rng), random_tensor({3}, rng)};
        const Tensor g = random_tensor(conv2d_forward(x, layer).shape(), rng);
        const auto loss = [&] { return dot(g, conv2d_forward(x, layer)); };
        const auto grads = conv2d_backward(g, x, layer);
        CHECK(relative_error(grads.input, numeric_gradient(x, loss)) < 1e-6);
        CHECK(relative_error(grads.kernels, numeric_gradient(layer.kernels, loss)) < 1e-6);
        CHECK(relative_error(grads.bias, numeric_gradient(layer.bias, loss)) < 1e-6);
    }
}

TEST_CASE("dense forward and gradients") {
    const Dense d{Tensor({2, 2}, {1, 2, 3, 4}), Tensor({2}, {0.5, -0.5})};
    const Tensor y = dense_forward(Tensor({1, 2}, {1, 1}), d);
    CHECK(y.values()[0] == 4.5);
    CHECK(y.values()[1] == 5.5);

    std::mt19937_64 rng(8);
    Tensor x = random_tensor({3, 4}, rng);
    Dense layer{random_tensor({4, 2}, rng), random_tensor({2}, rng)};
    const Tensor g = random_tensor({3, 2}, rng);
    const auto loss = [&] { return dot(g, dense_forward(x, layer)); };
    const auto grads = dense_backward(g, x, layer);
    CHECK(relative_error(grads.input, numeric_gradient(x, loss)) < 1e-6);
    CHECK(relative_error(grads.weights, numeric_gradient(layer.weights, loss)) < 1e-6);
    CHECK(relative_error(grads.bias, numeric_gradient(layer.bias, loss)) < 1e-6);
}

TEST_CASE("maxpool drops partial windows and routes gradients to the argmax") {
    const Tensor x({1, 1, 3, 3}, {1, 9, 2, 3, 4, 5, 6, 7, 8});
    const PoolResult p = maxpool2d(x, {2, 2});
    CHECK(p.output.shape() == Shape{1, 1, 1, 1});
    CHECK(p.output.values()[0] == 9.0);
    const Tensor g = maxpool2d_backward(Tensor({1, 1, 1, 1}, {2.0}), p.argmax, x.shape());
    CHECK(g.values()[1] == 2.0);
    CHECK(sum(g) == 2.0);

    const PoolResult tie = maxpool2d(Tensor({1, 1, 2, 2}, {3, 3, 3, 3}), {2, 2});
    CHECK(tie.argmax.front() == 0);
}

TEST_CASE("relu, softmax and cross entropy") {
    const Tensor x({1, 4}, {-1.0, 0.0, 2.0, -3.0});
    CHECK(relu(x).values()[2] == 2.0);
    CHECK(relu(x).values()[0] == 0.0);
    CHECK(relu_backward(Tensor::filled({1, 4}, 1.0), x).values()[1] == 0.0);

    const Tensor p = softmax(Tensor({2, 3}, {1000.0, 1000.0, 1000.0, 0.0, 0.0, std::log(2.0)}));
    CHECK(p.at({0, 1}) == doctest::Approx(1.0 / 3.0));
    CHECK(p.at({1, 2}) == doctest::Approx(0.5));
    const std::vector<int> labels{0, 2};
    CHECK(cross_entropy(p, labels) == doctest::Approx(0.5 * (std::log(3.0) + std::log(2.0))));
    const std::vector<int> bad{0, 3};
    CHECK_THROWS_AS(cross_entropy(p, bad), DataError);

    std::mt19937_64 rng(12);
    Tensor logits = random_tensor({3, 4}, rng);
    const std::vector<int> y{1, 0, 3};
    const auto loss = [&] { return cross_entropy(softmax(logits), y); };
    CHECK(relative_error(softmax_cross_entropy_grad(softmax(logits), y), numeric_gradient(logits, loss)) < 1e-6);
}
