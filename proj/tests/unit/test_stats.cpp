#include <cmath>
#include <map>

#include "doctest.h"
#include "mtsconv/errors.hpp"
#include "mtsconv/stats.hpp"
#include "test_util.hpp"

using namespace mtsconv;

namespace {

// Null distribution of W+ for untied ranks 1..n by the counting recurrence
// c_n(w) = c_{n-1}(w) + c_{n-1}(w - n).
std::vector<double> signed_rank_counts(std::size_t n) {
    std::vector<double> c(n * (n + 1) / 2 + 1, 0.0);
    c[0] = 1.0;
    for (std::size_t k = 1; k <= n; ++k) {
        for (std::size_t w = c.size() - 1; w >= k; --w) {
            c[w] += c[w - k];
        }
    }
    return c;
}

double table_p(std::size_t n, double w) {
    const auto c = signed_rank_counts(n);
    const double total = std::pow(2.0, static_cast<double>(n));
    double tail = 0.0;
    for (std::size_t v = 0; v < c.size(); ++v) {
        if (static_cast<double>(v) <= w + 1e-9) {
            tail += c[v];
        }
    }
    return std::min(1.0, 2.0 * tail / total);
}

// Brute force over sign vectors, with ranks given.
double brute_force_p(const std::vector<double>& ranks, double w) {
    const std::size_t n = ranks.size();
    double total = 0.0;
    for (double r : ranks) {
        total += r;
    }
    std::size_t hits = 0;
    for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
        double wp = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (mask >> i & 1u) {
                wp += ranks[i];
            }
        }
        if (std::abs(total - 2.0 * wp) >= std::abs(total - 2.0 * w) - 1e-9) {
            ++hits;
        }
    }
    return static_cast<double>(hits) / std::pow(2.0, static_cast<double>(n));
}

}  // namespace

TEST_CASE("eight positive differences give p = 2/256") {
    const std::vector<double> d{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
    const auto r = wilcoxon_signed_rank(d);
    CHECK(r.statistic == 0.0);
    CHECK(r.exact);
    CHECK(r.p_value == 0.0078125);
}

TEST_CASE("exact p matches the recurrence table for untied n <= 10") {
    std::mt19937_64 rng(61);
    for (std::size_t n = 1; n <= 10; ++n) {
        for (int trial = 0; trial < 5; ++trial) {
            std::vector<double> d;
            for (std::size_t i = 0; i < n; ++i) {
                const double mag = static_cast<double>(i + 1) + 0.01 * static_cast<double>(trial);
                d.push_back(testutil::draw(rng, 0, 1) ? mag : -mag);
            }
            const auto r = wilcoxon_signed_rank(d);
            CHECK(r.p_value == doctest::Approx(table_p(n, r.statistic)).epsilon(1e-12));
        }
    }
}

TEST_CASE("exact p matches brute force with tied ranks") {
    std::mt19937_64 rng(62);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = testutil::draw(rng, 2, 10);
        std::vector<double> d;
        for (std::size_t i = 0; i < n; ++i) {
            const double mag = static_cast<double>(testutil::draw(rng, 1, 4));
            d.push_back(testutil::draw(rng, 0, 1) ? mag : -mag);
        }
        const auto r = wilcoxon_signed_rank(d);
        const auto ranks = signed_rank_magnitudes(d);
        CHECK(r.p_value == doctest::Approx(brute_force_p(ranks, r.statistic)).epsilon(1e-12));
    }
}

TEST_CASE("average ranks for ties") {
    const std::vector<double> d{1.0, -2.0, 2.0, 3.0};
    CHECK(signed_rank_magnitudes(d) == std::vector<double>{1.0, 2.5, 2.5, 4.0});
}

TEST_CASE("symmetric differences and degenerate input") {
    const std::vector<double> sym{1.0, -1.0, 2.0, -2.0, 3.0, -3.0};
    const auto r = wilcoxon_signed_rank(sym);
    CHECK(r.w_plus == r.w_minus);
    CHECK(r.p_value == 1.0);

    const std::vector<double> zeros{0.0, 0.0, 0.0};
    const auto z = wilcoxon_signed_rank(zeros);
    CHECK(z.degenerate);
    CHECK(z.p_value == 1.0);

    const std::vector<double> with_zero{0.0, 1.0, 2.0};
    CHECK(wilcoxon_signed_rank(with_zero).n == 2);
}

TEST_CASE("p is invariant to positive rescaling") {
    std::mt19937_64 rng(63);
    const Tensor d = testutil::random_tensor({12}, rng);
    std::vector<double> a(d.values().begin(), d.values().end()), b;
    for (double v : a) {
        b.push_back(v * 37.5);
    }
    CHECK(wilcoxon_signed_rank(a).p_value == wilcoxon_signed_rank(b).p_value);
}

TEST_CASE("exact and normal paths agree at n = 20") {
    std::mt19937_64 rng(64);
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor d = testutil::random_tensor({20}, rng);
        std::vector<double> v(d.values().begin(), d.values().end());
        for (double& x : v) {
            x += 0.3;
        }
        const auto r = wilcoxon_signed_rank(v);
        REQUIRE(r.exact);
        const auto ranks = signed_rank_magnitudes(v);
        CHECK(std::abs(r.p_value - wilcoxon_normal_p(ranks, r.statistic)) < 0.01);
    }
    std::vector<double> big(25, 1.0);
    CHECK_FALSE(wilcoxon_signed_rank(big).exact);
}

TEST_CASE("improvement summary arithmetic") {
    const PairedResults one{{0.40, 0.45, "d", "A1"}};
    const auto s = improvement_summary(one);
    CHECK(s.mean == doctest::Approx(5.0));
    CHECK(s.max == doctest::Approx(5.0));
    CHECK(s.stddev == 0.0);

    const PairedResults same{{0.5, 0.5, "d", "A1"}, {0.6, 0.6, "e", "A1"}};
    const auto z = improvement_summary(same);
    CHECK(z.mean == 0.0);
    CHECK(z.stddev == 0.0);
    CHECK(z.max == 0.0);
    CHECK(z.per_dataset_mean.at("e") == 0.0);

    const PairedResults two{{0.1, 0.2, "d", "A1"}, {0.1, 0.4, "d", "A2"}};
    const auto t = improvement_summary(two);
    CHECK(t.stddev == doctest::Approx(std::sqrt(200.0)));
    CHECK(t.per_dataset_mean.at("d") == doctest::Approx(20.0));
    CHECK_THROWS_AS(improvement_summary({}), ParameterError);
}
