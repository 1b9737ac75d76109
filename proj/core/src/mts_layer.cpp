#include "mtsconv/mts_layer.hpp"

#include <algorithm>
#include <numeric>

#include "mtsconv/errors.hpp"

namespace mtsconv {

namespace {
constexpr std::size_t kTimeAxis = 2;
}

MtsConv2d::MtsConv2d(Conv2d canonical_bank, ScaleSet scale_set)
    : canonical(std::move(canonical_bank)), scales(std::move(scale_set)), usage_counts(scales.size(), 0) {
    if (canonical.kernels.rank() != 4) {
        throw ShapeError("MTS canonical kernels must be rank 4, got " + shape_to_string(canonical.kernels.shape()));
    }
    derive_branch_kernels(*this);
}

std::size_t MtsConv2d::longest_branch_time() const {
    std::size_t longest = 0;
    for (double s : scales.factors()) {
        longest = std::max(longest, scaled_length(kernel_time(), s));
    }
    return longest;
}

void derive_branch_kernels(MtsConv2d& layer) {
    layer.branch_kernels.clear();
    layer.branch_kernels.reserve(layer.scales.size());
    for (double s : layer.scales.factors()) {
        layer.branch_kernels.push_back(resample_time(layer.canonical.kernels, s, kTimeAxis));
    }
    layer.usage_counts.resize(layer.scales.size(), 0);
}

MtsForwardResult mts_forward(const Tensor& input, MtsConv2d& layer, bool count_usage) {
    if (input.rank() != 4) {
        throw ShapeError("MTS input must be [batch, channels, time, freq], got " + shape_to_string(input.shape()));
    }
    if (layer.branch_kernels.size() != layer.scales.size()) {
        throw StateError("MTS branch kernels not derived");
    }
    const std::size_t longest = layer.longest_branch_time();
    if (input.extent(2) < longest) {
        throw ShapeError("MTS input time extent " + std::to_string(input.extent(2)) +
                         " shorter than longest branch kernel " + std::to_string(longest));
    }
    const std::size_t out_time = input.extent(2) - layer.kernel_time() + 1;

    // Stack branch maps along a leading scale axis, then reduce over it.
    const std::size_t branches = layer.scales.size();
    Tensor first = resample_to_length(conv_valid(input, layer.branch_kernels[0]), out_time, kTimeAxis);
    Shape stacked_shape = first.shape();
    stacked_shape.insert(stacked_shape.begin(), branches);
    Tensor stacked(stacked_shape);
    const std::size_t map_size = first.size();
    std::copy(first.data(), first.data() + map_size, stacked.data());
    for (std::size_t s = 1; s < branches; ++s) {
        Tensor map = resample_to_length(conv_valid(input, layer.branch_kernels[s]), out_time, kTimeAxis);
        std::copy(map.data(), map.data() + map_size, stacked.data() + s * map_size);
    }

    ArgmaxResult merged = reduce_and_argmax(stacked, 0);
    add_channel_bias(merged.values, layer.canonical.bias);

    if (count_usage) {
        for (std::size_t w : merged.argmax.indices) {
            ++layer.usage_counts[w];
        }
    }
    return MtsForwardResult{std::move(merged.values), MtsCache{input, std::move(merged.argmax)}};
}

MtsGrads mts_backward(const Tensor& grad_out, const MtsCache& cache, const MtsConv2d& layer) {
    if (!cache.valid()) {
        throw StateError("MTS backward called without a forward cache");
    }
    if (grad_out.shape() != cache.winners.shape) {
        throw ShapeError("MTS backward: gradient shape " + shape_to_string(grad_out.shape()) +
                         " does not match forward output " + shape_to_string(cache.winners.shape));
    }
    const Tensor& input = cache.input;
    const std::size_t branches = layer.scales.size();

    MtsGrads grads;
    grads.bias = channel_sums(grad_out);
    grads.branch_kernels.reserve(branches);
    for (std::size_t s = 0; s < branches; ++s) {
        Tensor routed = grad_out;
        if (branches > 1) {
            for (std::size_t i = 0; i < routed.size(); ++i) {
                if (cache.winners.indices[i] != s) {
                    routed[i] = 0.0;
                }
            }
        }
        const std::size_t branch_len = input.extent(2) - layer.branch_kernels[s].extent(2) + 1;
        Tensor branch_grad = adjoint_resample(routed, branch_len, kTimeAxis);
        auto conv = conv_valid_backward(branch_grad, input, layer.branch_kernels[s]);
        if (s == 0) {
            grads.input = std::move(conv.input);
        } else {
            grads.input += conv.input;
        }
        grads.branch_kernels.push_back(std::move(conv.kernels));
    }
    return grads;
}

void average_weights(MtsConv2d& layer) {
    const std::size_t kt = layer.kernel_time();
    Tensor mean = resample_to_length(layer.branch_kernels[0], kt, kTimeAxis);
    for (std::size_t s = 1; s < layer.branch_kernels.size(); ++s) {
        mean += resample_to_length(layer.branch_kernels[s], kt, kTimeAxis);
    }
    if (layer.branch_kernels.size() > 1) {
        mean *= 1.0 / static_cast<double>(layer.branch_kernels.size());
    }
    layer.canonical.kernels = std::move(mean);
    derive_branch_kernels(layer);
}

std::vector<double> branch_usage(const MtsConv2d& layer) {
    const std::uint64_t total = std::accumulate(layer.usage_counts.begin(), layer.usage_counts.end(), std::uint64_t{0});
    if (total == 0) {
        throw StateError("branch usage requested before any positions were observed");
    }
    std::vector<double> fractions;
    fractions.reserve(layer.usage_counts.size());
    for (std::uint64_t c : layer.usage_counts) {
        fractions.push_back(static_cast<double>(c) / static_cast<double>(total));
    }
    return fractions;
}

void reset_usage(MtsConv2d& layer) noexcept { std::fill(layer.usage_counts.begin(), layer.usage_counts.end(), 0); }

}  // namespace mtsconv
