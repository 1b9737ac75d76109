#include "mtsconv/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mtsconv/errors.hpp"

namespace mtsconv {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
    if (t.rank() != rank) {
        throw ShapeError(std::string(what) + " expects rank " + std::to_string(rank) + ", got " +
                         shape_to_string(t.shape()));
    }
}

Tensor glorot_tensor(Shape shape, double fan_in, double fan_out, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Tensor t(std::move(shape));
    for (double& v : t.values()) {
        v = dist(rng);
    }
    return t;
}

void check_labels(const Tensor& probabilities, std::span<const int> labels) {
    require_rank(probabilities, 2, "cross entropy");
    if (labels.size() != probabilities.extent(0)) {
        throw ShapeError("label count does not match batch size");
    }
    const auto classes = static_cast<int>(probabilities.extent(1));
    for (int label : labels) {
        if (label < 0 || label >= classes) {
            throw DataError("label " + std::to_string(label) + " outside [0, " + std::to_string(classes) + ")");
        }
    }
}

}  // namespace

Conv2d Conv2d::glorot(std::size_t out_ch, std::size_t in_ch, std::size_t k_t, std::size_t k_f,
                      std::mt19937_64& rng) {
    const double receptive = static_cast<double>(k_t * k_f);
    return Conv2d{glorot_tensor({out_ch, in_ch, k_t, k_f}, static_cast<double>(in_ch) * receptive,
                                static_cast<double>(out_ch) * receptive, rng),
                  Tensor({out_ch})};
}

Dense Dense::glorot(std::size_t in, std::size_t out, std::mt19937_64& rng) {
    return Dense{glorot_tensor({in, out}, static_cast<double>(in), static_cast<double>(out), rng), Tensor({out})};
}

Tensor conv_valid(const Tensor& input, const Tensor& kernels) {
    require_rank(input, 4, "convolution input");
    require_rank(kernels, 4, "convolution kernels");
    const std::size_t batch = input.extent(0);
    const std::size_t in_ch = input.extent(1);
    const std::size_t T = input.extent(2);
    const std::size_t F = input.extent(3);
    const std::size_t out_ch = kernels.extent(0);
    const std::size_t kt = kernels.extent(2);
    const std::size_t kf = kernels.extent(3);
    if (kernels.extent(1) != in_ch) {
        throw ShapeError("kernel input channels " + std::to_string(kernels.extent(1)) +
                         " do not match input channels " + std::to_string(in_ch));
    }
    if (kt > T || kf > F) {
        throw ShapeError("kernel " + shape_to_string(kernels.shape()) + " larger than input " +
                         shape_to_string(input.shape()));
    }
    const std::size_t To = T - kt + 1;
    const std::size_t Fo = F - kf + 1;
    Tensor out({batch, out_ch, To, Fo});
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t co = 0; co < out_ch; ++co) {
            double* omap = out.data() + (b * out_ch + co) * To * Fo;
            for (std::size_t ci = 0; ci < in_ch; ++ci) {
                const double* imap = input.data() + (b * in_ch + ci) * T * F;
                const double* kmap = kernels.data() + (co * in_ch + ci) * kt * kf;
                for (std::size_t dt = 0; dt < kt; ++dt) {
                    for (std::size_t df = 0; df < kf; ++df) {
                        const double w = kmap[dt * kf + df];
                        for (std::size_t t = 0; t < To; ++t) {
                            const double* irow = imap + (t + dt) * F + df;
                            double* orow = omap + t * Fo;
                            for (std::size_t f = 0; f < Fo; ++f) {
                                orow[f] += w * irow[f];
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

ConvValidGrads conv_valid_backward(const Tensor& grad_out, const Tensor& input, const Tensor& kernels) {
    require_rank(grad_out, 4, "convolution gradient");
    const std::size_t batch = input.extent(0);
    const std::size_t in_ch = input.extent(1);
    const std::size_t T = input.extent(2);
    const std::size_t F = input.extent(3);
    const std::size_t out_ch = kernels.extent(0);
    const std::size_t kt = kernels.extent(2);
    const std::size_t kf = kernels.extent(3);
    if (kt > T || kf > F || kernels.extent(1) != in_ch) {
        throw ShapeError("convolution backward: kernel " + shape_to_string(kernels.shape()) +
                         " incompatible with input " + shape_to_string(input.shape()));
    }
    const std::size_t To = T - kt + 1;
    const std::size_t Fo = F - kf + 1;
    if (grad_out.shape() != Shape{batch, out_ch, To, Fo}) {
        throw ShapeError("convolution backward: gradient shape " + shape_to_string(grad_out.shape()) +
                         " does not match forward output");
    }
    ConvValidGrads grads{Tensor(input.shape()), Tensor(kernels.shape())};
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t co = 0; co < out_ch; ++co) {
            const double* gmap = grad_out.data() + (b * out_ch + co) * To * Fo;
            for (std::size_t ci = 0; ci < in_ch; ++ci) {
                const double* imap = input.data() + (b * in_ch + ci) * T * F;
                double* gimap = grads.input.data() + (b * in_ch + ci) * T * F;
                const double* kmap = kernels.data() + (co * in_ch + ci) * kt * kf;
                double* gkmap = grads.kernels.data() + (co * in_ch + ci) * kt * kf;
                for (std::size_t dt = 0; dt < kt; ++dt) {
                    for (std::size_t df = 0; df < kf; ++df) {
                        const double w = kmap[dt * kf + df];
                        double acc = 0.0;
                        for (std::size_t t = 0; t < To; ++t) {
                            const double* irow = imap + (t + dt) * F + df;
                            double* girow = gimap + (t + dt) * F + df;
                            const double* grow = gmap + t * Fo;
                            for (std::size_t f = 0; f < Fo; ++f) {
                                acc += grow[f] * irow[f];
                                girow[f] += w * grow[f];
                            }
                        }
                        gkmap[dt * kf + df] += acc;
                    }
                }
            }
        }
    }
    return grads;
}

Tensor channel_sums(const Tensor& grad_out) {
    require_rank(grad_out, 4, "bias gradient");
    const std::size_t batch = grad_out.extent(0);
    const std::size_t channels = grad_out.extent(1);
    const std::size_t plane = grad_out.extent(2) * grad_out.extent(3);
    Tensor sums({channels});
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < channels; ++c) {
            const double* g = grad_out.data() + (b * channels + c) * plane;
            double acc = 0.0;
            for (std::size_t i = 0; i < plane; ++i) {
                acc += g[i];
            }
            sums[c] += acc;
        }
    }
    return sums;
}

void add_channel_bias(Tensor& maps, const Tensor& bias) {
    require_rank(maps, 4, "bias addition");
    const std::size_t batch = maps.extent(0);
    const std::size_t channels = maps.extent(1);
    if (bias.size() != channels) {
        throw ShapeError("bias length does not match channel count");
    }
    const std::size_t plane = maps.extent(2) * maps.extent(3);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < channels; ++c) {
            double* m = maps.data() + (b * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                m[i] += bias[c];
            }
        }
    }
}

Tensor conv2d_forward(const Tensor& input, const Conv2d& layer) {
    Tensor out = conv_valid(input, layer.kernels);
    add_channel_bias(out, layer.bias);
    return out;
}

Conv2dGrads conv2d_backward(const Tensor& grad_out, const Tensor& input, const Conv2d& layer) {
    auto valid = conv_valid_backward(grad_out, input, layer.kernels);
    return Conv2dGrads{std::move(valid.input), std::move(valid.kernels), channel_sums(grad_out)};
}

PoolResult maxpool2d(const Tensor& input, std::array<std::size_t, 2> window) {
    require_rank(input, 4, "max pooling");
    const auto [pt, pf] = window;
    const std::size_t batch = input.extent(0);
    const std::size_t channels = input.extent(1);
    const std::size_t T = input.extent(2);
    const std::size_t F = input.extent(3);
    if (pt == 0 || pf == 0 || pt > T || pf > F) {
        throw ShapeError("pooling window [" + std::to_string(pt) + "," + std::to_string(pf) +
                         "] does not fit input " + shape_to_string(input.shape()));
    }
    const std::size_t To = T / pt;
    const std::size_t Fo = F / pf;
    PoolResult r{Tensor({batch, channels, To, Fo}), std::vector<std::size_t>(batch * channels * To * Fo)};
    std::size_t o = 0;
    for (std::size_t bc = 0; bc < batch * channels; ++bc) {
        const std::size_t base = bc * T * F;
        for (std::size_t t = 0; t < To; ++t) {
            for (std::size_t f = 0; f < Fo; ++f, ++o) {
                std::size_t best = base + (t * pt) * F + f * pf;
                for (std::size_t dt = 0; dt < pt; ++dt) {
                    for (std::size_t df = 0; df < pf; ++df) {
                        const std::size_t idx = base + (t * pt + dt) * F + f * pf + df;
                        if (input[idx] > input[best]) {
                            best = idx;
                        }
                    }
                }
                r.output[o] = input[best];
                r.argmax[o] = best;
            }
        }
    }
    return r;
}

Tensor maxpool2d_backward(const Tensor& grad_out, std::span<const std::size_t> argmax, const Shape& input_shape) {
    if (argmax.size() != grad_out.size()) {
        throw ShapeError("pooling backward: argmax size does not match gradient");
    }
    Tensor grad_in(input_shape);
    for (std::size_t i = 0; i < argmax.size(); ++i) {
        grad_in[argmax[i]] += grad_out[i];
    }
    return grad_in;
}

Tensor dense_forward(const Tensor& input, const Dense& layer) {
    require_rank(input, 2, "dense input");
    Tensor out = matmul(input, layer.weights);
    const std::size_t batch = out.extent(0);
    const std::size_t width = out.extent(1);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t j = 0; j < width; ++j) {
            out[b * width + j] += layer.bias[j];
        }
    }
    return out;
}

DenseGrads dense_backward(const Tensor& grad_out, const Tensor& input, const Dense& layer) {
    require_rank(grad_out, 2, "dense gradient");
    if (grad_out.extent(0) != input.extent(0) || grad_out.extent(1) != layer.weights.extent(1)) {
        throw ShapeError("dense backward: gradient shape " + shape_to_string(grad_out.shape()) +
                         " does not match forward output");
    }
    DenseGrads g;
    g.input = matmul(grad_out, transpose(layer.weights));
    g.weights = matmul(transpose(input), grad_out);
    g.bias = Tensor({grad_out.extent(1)});
    const std::size_t width = grad_out.extent(1);
    for (std::size_t b = 0; b < grad_out.extent(0); ++b) {
        for (std::size_t j = 0; j < width; ++j) {
            g.bias[j] += grad_out[b * width + j];
        }
    }
    return g;
}

Tensor relu(const Tensor& input) {
    Tensor out = input;
    for (double& v : out.values()) {
        v = v > 0.0 ? v : 0.0;
    }
    return out;
}

Tensor relu_backward(const Tensor& grad_out, const Tensor& input) {
    if (grad_out.shape() != input.shape()) {
        throw ShapeError("relu backward: shape mismatch");
    }
    Tensor g = grad_out;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!(input[i] > 0.0)) {
            g[i] = 0.0;
        }
    }
    return g;
}

Tensor softmax(const Tensor& logits) {
    require_rank(logits, 2, "softmax");
    const std::size_t batch = logits.extent(0);
    const std::size_t classes = logits.extent(1);
    Tensor p = logits;
    for (std::size_t b = 0; b < batch; ++b) {
        double* row = p.data() + b * classes;
        const double m = *std::max_element(row, row + classes);
        double z = 0.0;
        for (std::size_t j = 0; j < classes; ++j) {
            row[j] = std::exp(row[j] - m);
            z += row[j];
        }
        for (std::size_t j = 0; j < classes; ++j) {
            row[j] /= z;
        }
    }
    return p;
}

double cross_entropy(const Tensor& probabilities, std::span<const int> labels) {
    check_labels(probabilities, labels);
    const std::size_t classes = probabilities.extent(1);
    double loss = 0.0;
    for (std::size_t b = 0; b < labels.size(); ++b) {
        const double p = probabilities[b * classes + static_cast<std::size_t>(labels[b])];
        loss -= std::log(std::max(p, std::numeric_limits<double>::min()));
    }
    return loss / static_cast<double>(labels.size());
}

Tensor softmax_cross_entropy_grad(const Tensor& probabilities, std::span<const int> labels) {
    check_labels(probabilities, labels);
    const std::size_t classes = probabilities.extent(1);
    Tensor g = probabilities;
    for (std::size_t b = 0; b < labels.size(); ++b) {
        g[b * classes + static_cast<std::size_t>(labels[b])] -= 1.0;
    }
    g *= 1.0 / static_cast<double>(labels.size());
    return g;
}

}  // namespace mtsconv
