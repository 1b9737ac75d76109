#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "mtsconv/tensor.hpp"

namespace mtsconv {

/// Ordered set of time-stretch factors for the branches of an MTS layer.
///
/// Strictly increasing, all positive, and always containing 1.0 (the
/// original-scale branch).
class ScaleSet {
public:
    ScaleSet() : factors_{1.0} {}
    explicit ScaleSet(std::vector<double> factors);

    // Parses "0.5,1,2".
    static ScaleSet parse(std::string_view text);

    const std::vector<double>& factors() const noexcept { return factors_; }
    std::size_t size() const noexcept { return factors_.size(); }
    double operator[](std::size_t i) const noexcept { return factors_[i]; }
    std::size_t unit_index() const noexcept;

    std::string to_string() const;

    friend bool operator==(const ScaleSet&, const ScaleSet&) = default;

private:
    std::vector<double> factors_;
};

// The scale-factor combinations evaluated in the original experiments.
std::vector<ScaleSet> default_scale_sets();

// max(1, round(length * factor)), rounding half away from zero.
std::size_t scaled_length(std::size_t length, double factor);

// One output sample of endpoint-aligned linear interpolation:
// out = in[lo] + weight * (in[lo + 1] - in[lo]), with weight == 0 when the
// sample lands exactly on a source position.
struct InterpTap {
    std::size_t lo = 0;
    double weight = 0.0;
};

// Output index i samples source position i*(L-1)/(L'-1); a single output
// sample reads the source midpoint (L-1)/2.
std::vector<InterpTap> interpolation_taps(std::size_t source_len, std::size_t target_len);

Tensor resample_time(const Tensor& t, double factor, std::size_t time_axis);
Tensor resample_to_length(const Tensor& t, std::size_t target_len, std::size_t time_axis);

// Transpose of resample_to_length: maps a gradient over the resampled axis
// (length L') back onto the source axis of length `source_len`.
Tensor adjoint_resample(const Tensor& grad_out, std::size_t source_len, std::size_t time_axis);

// Dense L'xL matrix A with resample_to_length(x, L') == A x for 1-D x.
Tensor interpolation_matrix(std::size_t source_len, std::size_t target_len);

}  // namespace mtsconv
