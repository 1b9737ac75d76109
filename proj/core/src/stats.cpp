#include "mtsconv/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "mtsconv/errors.hpp"

namespace mtsconv {

namespace {

constexpr double kTieTolerance = 1e-12;

bool nearly_equal(double a, double b) {
    return std::abs(a - b) <= kTieTolerance * std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

}  // namespace

std::vector<double> signed_rank_magnitudes(std::span<const double> differences) {
    const std::size_t n = differences.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return std::abs(differences[a]) < std::abs(differences[b]); });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i + 1;
        while (j < n && nearly_equal(std::abs(differences[order[j]]), std::abs(differences[order[i]]))) {
            ++j;
        }
        const double average = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k) {
            ranks[order[k]] = average;
        }
        i = j;
    }
    return ranks;
}

double wilcoxon_exact_p(std::span<const double> ranks, double statistic) {
    const std::size_t n = ranks.size();
    if (n == 0) {
        return 1.0;
    }
    if (n > 30) {
        throw ParameterError("exact Wilcoxon enumeration is limited to n <= 30");
    }
    // Ranks are multiples of 1/2; doubled integer sums keep comparisons exact.
    std::vector<std::int64_t> doubled(n);
    std::int64_t total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        doubled[i] = std::llround(2.0 * ranks[i]);
        total += doubled[i];
    }
    const std::int64_t observed = std::llround(2.0 * statistic);
    const std::int64_t observed_gap = std::llabs(total - 2 * observed);

    // Gray-code walk: each step flips one sign, so W+ updates in O(1).
    const std::uint64_t assignments = std::uint64_t{1} << n;
    std::uint64_t at_least_as_extreme = 0;
    std::int64_t w_plus = 0;
    std::uint64_t gray = 0;
    for (std::uint64_t step = 0; step < assignments; ++step) {
        if (step > 0) {
            const auto bit = static_cast<std::size_t>(std::countr_zero(step));
            gray ^= std::uint64_t{1} << bit;
            w_plus += (gray >> bit) & 1u ? doubled[bit] : -doubled[bit];
        }
        if (std::llabs(total - 2 * w_plus) >= observed_gap) {
            ++at_least_as_extreme;
        }
    }
    return std::min(1.0, static_cast<double>(at_least_as_extreme) / static_cast<double>(assignments));
}

double wilcoxon_normal_p(std::span<const double> ranks, double statistic) {
    const auto n = static_cast<double>(ranks.size());
    if (ranks.empty()) {
        return 1.0;
    }
    const double mean = n * (n + 1.0) / 4.0;
    double variance = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0;
    std::vector<double> sorted(ranks.begin(), ranks.end());
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size();) {
        std::size_t j = i;
        while (j < sorted.size() && sorted[j] == sorted[i]) {
            ++j;
        }
        const auto t = static_cast<double>(j - i);
        variance -= (t * t * t - t) / 48.0;
        i = j;
    }
    if (!(variance > 0.0)) {
        return 1.0;
    }
    const double z = std::max(0.0, std::abs(statistic - mean) - 0.5) / std::sqrt(variance);
    return std::min(1.0, std::erfc(z / std::sqrt(2.0)));
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> differences) {
    std::vector<double> nonzero;
    for (double d : differences) {
        if (d != 0.0) {
            nonzero.push_back(d);
        }
    }
    WilcoxonResult r;
    r.n = nonzero.size();
    if (nonzero.empty()) {
        r.degenerate = true;
        return r;
    }
    const auto ranks = signed_rank_magnitudes(nonzero);
    for (std::size_t i = 0; i < nonzero.size(); ++i) {
        (nonzero[i] > 0.0 ? r.w_plus : r.w_minus) += ranks[i];
    }
    r.statistic = std::min(r.w_plus, r.w_minus);
    r.exact = r.n <= kWilcoxonExactLimit;
    r.p_value = r.exact ? wilcoxon_exact_p(ranks, r.statistic) : wilcoxon_normal_p(ranks, r.statistic);
    return r;
}

WilcoxonResult wilcoxon_signed_rank(const PairedResults& pairs) {
    std::vector<double> d;
    d.reserve(pairs.size());
    for (const auto& p : pairs) {
        d.push_back(p.mts - p.standard);
    }
    return wilcoxon_signed_rank(d);
}

ImprovementSummary improvement_summary(const PairedResults& pairs) {
    if (pairs.empty()) {
        throw ParameterError("improvement summary needs at least one pair");
    }
    std::vector<double> deltas;
    std::map<std::string, std::pair<double, std::size_t>> by_dataset;
    for (const auto& p : pairs) {
        const double d = 100.0 * (p.mts - p.standard);
        deltas.push_back(d);
        auto& [s, n] = by_dataset[p.dataset];
        s += d;
        ++n;
    }
    ImprovementSummary out;
    const auto n = static_cast<double>(deltas.size());
    out.mean = std::accumulate(deltas.begin(), deltas.end(), 0.0) / n;
    out.max = *std::max_element(deltas.begin(), deltas.end());
    if (deltas.size() > 1) {
        double sq = 0.0;
        for (double d : deltas) {
            sq += (d - out.mean) * (d - out.mean);
        }
        out.stddev = std::sqrt(sq / (n - 1.0));
    }
    for (const auto& [name, acc] : by_dataset) {
        out.per_dataset_mean[name] = acc.first / static_cast<double>(acc.second);
    }
    return out;
}

}  // namespace mtsconv
