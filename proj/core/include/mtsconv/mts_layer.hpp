#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mtsconv/interp.hpp"
#include "mtsconv/layers.hpp"
#include "mtsconv/tensor.hpp"

namespace mtsconv {

/// Multi-time-scale convolution.
///
/// One canonical kernel bank is evaluated at several time scales. Branch s
/// convolves the input with the canonical kernels resampled along time to
/// max(1, round(k_t * s)) taps. Each branch map is resampled back to the time
/// length of the scale-1 map, the branches are merged by an elementwise max
/// (first branch wins ties), and the shared bias is added after the max.
///
/// The branch banks are the trainable tensors between optimizer steps;
/// average_weights() folds them back into the canonical bank after each step
/// and re-derives every branch from it. Trainable parameter count equals that
/// of the plain Conv2d over the canonical bank.
struct MtsConv2d {
    Conv2d canonical;
    ScaleSet scales;
    std::vector<Tensor> branch_kernels;
    std::vector<std::uint64_t> usage_counts;

    MtsConv2d() = default;
    MtsConv2d(Conv2d canonical_bank, ScaleSet scale_set);

    std::size_t branch_count() const noexcept { return scales.size(); }
    std::size_t kernel_time() const { return canonical.kernel_time(); }
    std::size_t longest_branch_time() const;
    std::size_t parameter_count() const noexcept { return canonical.kernels.size() + canonical.bias.size(); }
};

// branch_kernels[s] = resample_time(canonical, scales[s]); the factor-1 branch
// is a bit-exact copy of the canonical bank.
void derive_branch_kernels(MtsConv2d& layer);

struct MtsCache {
    Tensor input;
    IndexTensor winners;  // branch index per output position

    bool valid() const noexcept { return !input.empty(); }
};

struct MtsForwardResult {
    Tensor output;
    MtsCache cache;
};

// Output shape [B, Co, T-k_t+1, F-k_f+1]. When `count_usage` is set the
// per-branch win counts are added to layer.usage_counts.
MtsForwardResult mts_forward(const Tensor& input, MtsConv2d& layer, bool count_usage = true);

struct MtsGrads {
    Tensor input;
    std::vector<Tensor> branch_kernels;
    Tensor bias;
};

// Routes each output gradient to the winning branch only, through the adjoint
// of the map re-interpolation, then through that branch's convolution.
// Throws StateError when the cache is empty.
MtsGrads mts_backward(const Tensor& grad_out, const MtsCache& cache, const MtsConv2d& layer);

// canonical := mean over branches of resample_to_length(branch, k_t), then
// derive_branch_kernels.
void average_weights(MtsConv2d& layer);

// Fraction of observed output positions won by each branch.
std::vector<double> branch_usage(const MtsConv2d& layer);
void reset_usage(MtsConv2d& layer) noexcept;

}  // namespace mtsconv
