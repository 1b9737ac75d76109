#pragma once

#include <array>
#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "mtsconv/tensor.hpp"

namespace mtsconv {

/// Kernel bank [out_ch, in_ch, k_t, k_f] plus one bias per output channel.
struct Conv2d {
    Tensor kernels;
    Tensor bias;

    std::size_t out_channels() const { return kernels.extent(0); }
    std::size_t in_channels() const { return kernels.extent(1); }
    std::size_t kernel_time() const { return kernels.extent(2); }
    std::size_t kernel_freq() const { return kernels.extent(3); }

    // Uniform in +-sqrt(6 / (fan_in + fan_out)), zero bias.
    static Conv2d glorot(std::size_t out_ch, std::size_t in_ch, std::size_t k_t, std::size_t k_f,
                         std::mt19937_64& rng);
};

// Valid, stride-1 cross-correlation without bias:
// [B, Ci, T, F] x [Co, Ci, kt, kf] -> [B, Co, T-kt+1, F-kf+1].
Tensor conv_valid(const Tensor& input, const Tensor& kernels);

struct ConvValidGrads {
    Tensor input;
    Tensor kernels;
};

ConvValidGrads conv_valid_backward(const Tensor& grad_out, const Tensor& input, const Tensor& kernels);

// conv_valid followed by a per-channel bias.
Tensor conv2d_forward(const Tensor& input, const Conv2d& layer);

struct Conv2dGrads {
    Tensor input;
    Tensor kernels;
    Tensor bias;
};

Conv2dGrads conv2d_backward(const Tensor& grad_out, const Tensor& input, const Conv2d& layer);

// Sum of a [B, C, T, F] gradient over batch, time and frequency.
Tensor channel_sums(const Tensor& grad_out);
void add_channel_bias(Tensor& maps, const Tensor& bias);

struct PoolResult {
    Tensor output;
    std::vector<std::size_t> argmax;  // flat input index per output entry
};

// Non-overlapping max over [p_t, p_f] windows; trailing partial windows are dropped.
PoolResult maxpool2d(const Tensor& input, std::array<std::size_t, 2> window);
Tensor maxpool2d_backward(const Tensor& grad_out, std::span<const std::size_t> argmax, const Shape& input_shape);

/// Fully connected layer, y = x W + b with W of shape [in, out].
struct Dense {
    Tensor weights;
    Tensor bias;

    static Dense glorot(std::size_t in, std::size_t out, std::mt19937_64& rng);
};

Tensor dense_forward(const Tensor& input, const Dense& layer);

struct DenseGrads {
    Tensor input;
    Tensor weights;
    Tensor bias;
};

DenseGrads dense_backward(const Tensor& grad_out, const Tensor& input, const Dense& layer);

Tensor relu(const Tensor& input);
Tensor relu_backward(const Tensor& grad_out, const Tensor& input);

// Row-wise softmax of [batch, classes] logits.
Tensor softmax(const Tensor& logits);

// Mean over the batch of -log p[label].
double cross_entropy(const Tensor& probabilities, std::span<const int> labels);

// Gradient of cross_entropy(softmax(logits)) w.r.t. the logits: (p - onehot) / batch.
Tensor softmax_cross_entropy_grad(const Tensor& probabilities, std::span<const int> labels);

}  // namespace mtsconv
