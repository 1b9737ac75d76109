#include <sstream>

#include "doctest.h"
#include "mtsconv/errors.hpp"
#include "mtsconv/tensor.hpp"
#include "test_util.hpp"

using namespace mtsconv;

TEST_CASE("matmul agrees with a triple-loop product") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t m = testutil::draw(rng, 1, 6), k = testutil::draw(rng, 1, 6), n = testutil::draw(rng, 1, 6);
        const Tensor a = testutil::random_tensor({m, k}, rng);
        const Tensor b = testutil::random_tensor({k, n}, rng);
        const Tensor c = matmul(a, b);
        REQUIRE(c.shape() == Shape{m, n});
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                double s = 0.0;
                for (std::size_t p = 0; p < k; ++p) {
                    s += a.at({i, p}) * b.at({p, j});
                }
                CHECK(c.at({i, j}) == doctest::Approx(s).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("matmul rejects mismatched inner extents") {
    CHECK_THROWS_AS(matmul(Tensor({2, 3}), Tensor({2, 3})), ShapeError);
}

TEST_CASE("transpose and elementwise helpers") {
    const Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
    const Tensor t = transpose(a);
    CHECK(t.shape() == Shape{3, 2});
    CHECK(t.at({2, 1}) == 6.0);
    CHECK(sum(a) == 21.0);
    CHECK(dot(a, a) == 91.0);
    CHECK(max_abs(a - a) == 0.0);
    CHECK((a + a).at({1, 2}) == 12.0);
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0}), ShapeError);
}

TEST_CASE("reduce_and_argmax keeps the first maximum on ties") {
    // [2 scales, 3 positions]: position 1 ties between scales.
    const Tensor t({2, 3}, {1.0, 5.0, 2.0, 3.0, 5.0, 1.0});
    const ArgmaxResult r = reduce_and_argmax(t, 0);
    CHECK(r.values.shape() == Shape{3});
    CHECK(r.values.values()[0] == 3.0);
    CHECK(r.argmax.indices == std::vector<std::size_t>{1, 0, 0});

    const ArgmaxResult flat = reduce_and_argmax(Tensor({4}, {2.0, 7.0, 7.0, 1.0}), 0);
    CHECK(flat.values.shape() == Shape{1});
    CHECK(flat.argmax.indices.front() == 1);
}

TEST_CASE("reduce_and_argmax along a middle axis") {
    std::mt19937_64 rng(11);
    const Tensor t = testutil::random_tensor({2, 3, 4}, rng);
    const ArgmaxResult r = reduce_and_argmax(t, 1);
    REQUIRE(r.values.shape() == Shape{2, 4});
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            std::size_t best = 0;
            for (std::size_t s = 1; s < 3; ++s) {
                if (t.at({i, s, j}) > t.at({i, best, j})) {
                    best = s;
                }
            }
            CHECK(r.argmax.indices[i * 4 + j] == best);
            CHECK(r.values.at({i, j}) == t.at({i, best, j}));
        }
    }
}

TEST_CASE("tensor dump round-trips bit-exactly") {
    std::mt19937_64 rng(5);
    const Tensor t = testutil::random_tensor({3, 1, 4, 2}, rng);
    std::stringstream buf;
    write_tensor(buf, t);
    CHECK(read_tensor(buf) == t);

    std::stringstream truncated(buf.str().substr(0, 10));
    CHECK_THROWS_AS(read_tensor(truncated), FormatError);
}

TEST_CASE("reshape preserves data and rejects size changes") {
    const Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
    const Tensor r = a.reshaped({3, 2});
    CHECK(r.values()[4] == 5.0);
    CHECK_THROWS_AS(a.reshaped({4, 2}), ShapeError);
}
