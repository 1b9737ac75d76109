#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace mtsconv {

/// One comparison cell: accuracies (fractions in [0, 1]) of the standard and
/// MTS variant trained under the same fold plan and seeds.
struct PairedResult {
    double standard = 0.0;
    double mts = 0.0;
    std::string dataset;
    std::string arch;
};

using PairedResults = std::vector<PairedResult>;

struct WilcoxonResult {
    double statistic = 0.0;  // min(W+, W-)
    double w_plus = 0.0;
    double w_minus = 0.0;
    std::size_t n = 0;  // non-zero differences
    double p_value = 1.0;
    bool exact = true;
    bool degenerate = false;  // every difference was zero
};

inline constexpr std::size_t kWilcoxonExactLimit = 20;

// Ranks of |d| with average ranks for ties (d == 0 entries must be removed first).
std::vector<double> signed_rank_magnitudes(std::span<const double> differences);

// Two-sided p by enumerating all 2^n sign assignments of the given ranks.
double wilcoxon_exact_p(std::span<const double> ranks, double statistic);

// Normal approximation with continuity and tie correction.
double wilcoxon_normal_p(std::span<const double> ranks, double statistic);

// Two-sided signed-rank test on d = mts - standard. Zero differences are
// dropped; exact enumeration up to n = 20, normal approximation above.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> differences);
WilcoxonResult wilcoxon_signed_rank(const PairedResults& pairs);

struct ImprovementSummary {
    double mean = 0.0;  // percentage points, MTS - standard
    double stddev = 0.0;  // sample standard deviation (n - 1)
    double max = 0.0;
    std::map<std::string, double> per_dataset_mean;
};

ImprovementSummary improvement_summary(const PairedResults& pairs);

}  // namespace mtsconv
