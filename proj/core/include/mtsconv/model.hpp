#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mtsconv/interp.hpp"
#include "mtsconv/layers.hpp"
#include "mtsconv/mts_layer.hpp"
#include "mtsconv/tensor.hpp"

namespace mtsconv {

enum class Phase { Train, Eval };

struct ParameterRef {
    std::string name;
    Tensor* value = nullptr;
    Tensor* grad = nullptr;
};

/// A differentiable stage with a hand-written backward pass. forward() caches
/// what backward() needs; backward() accumulates parameter gradients into the
/// layer-owned gradient tensors and returns the input gradient.
class Layer {
public:
    virtual ~Layer() = default;

    virtual std::string kind() const = 0;
    virtual std::string describe() const = 0;
    virtual Shape output_shape(const Shape& input) const = 0;

    virtual Tensor forward(const Tensor& input, Phase phase) = 0;
    virtual Tensor backward(const Tensor& grad_out) = 0;

    // Tensors the optimizer updates.
    virtual std::vector<ParameterRef> parameters() { return {}; }
    // Tensors that fully determine the layer (for checkpoints and snapshots).
    virtual std::vector<std::pair<std::string, Tensor*>> state() { return {}; }
    virtual void after_update() {}
    virtual void state_restored() {}
    virtual std::size_t parameter_count() const { return 0; }
};

class ConvLayer final : public Layer {
public:
    explicit ConvLayer(Conv2d conv) : conv_(std::move(conv)) {}

    std::string kind() const override { return "conv"; }
    std::string describe() const override;
    Shape output_shape(const Shape& input) const override;
    Tensor forward(const Tensor& input, Phase phase) override;
    Tensor backward(const Tensor& grad_out) override;
    std::vector<ParameterRef> parameters() override;
    std::vector<std::pair<std::string, Tensor*>> state() override;
    std::size_t parameter_count() const override { return conv_.kernels.size() + conv_.bias.size(); }

    const Conv2d& conv() const noexcept { return conv_; }

private:
    Conv2d conv_;
    Tensor input_;
    Tensor grad_kernels_;
    Tensor grad_bias_;
};

class MtsLayer final : public Layer {
public:
    explicit MtsLayer(MtsConv2d layer) : mts_(std::move(layer)) {}

    std::string kind() const override { return "mts"; }
    std::string describe() const override;
    Shape output_shape(const Shape& input) const override;
    // Branch usage is counted in Eval phase only.
    Tensor forward(const Tensor& input, Phase phase) override;
    Tensor backward(const Tensor& grad_out) override;
    std::vector<ParameterRef> parameters() override;
    std::vector<std::pair<std::string, Tensor*>> state() override;
    void after_update() override { average_weights(mts_); }
    void state_restored() override { derive_branch_kernels(mts_); }
    std::size_t parameter_count() const override { return mts_.parameter_count(); }

    MtsConv2d& mts() noexcept { return mts_; }
    const MtsConv2d& mts() const noexcept { return mts_; }

private:
    MtsConv2d mts_;
    MtsCache cache_;
    std::vector<Tensor> grad_branches_;
    Tensor grad_bias_;
};

class MaxPoolLayer final : public Layer {
public:
    explicit MaxPoolLayer(std::array<std::size_t, 2> window) : window_(window) {}

    std::string kind() const override { return "maxpool"; }
    std::string describe() const override;
    Shape output_shape(const Shape& input) const override;
    Tensor forward(const Tensor& input, Phase phase) override;
    Tensor backward(const Tensor& grad_out) override;

private:
    std::array<std::size_t, 2> window_;
    Shape input_shape_;
    std::vector<std::size_t> argmax_;
};

class ReluLayer final : public Layer {
public:
    std::string kind() const override { return "relu"; }
    std::string describe() const override { return "relu"; }
    Shape output_shape(const Shape& input) const override { return input; }
    Tensor forward(const Tensor& input, Phase phase) override;
    Tensor backward(const Tensor& grad_out) override;

private:
    Tensor input_;
};

class FlattenLayer final : public Layer {
public:
    std::string kind() const override { return "flatten"; }
    std::string describe() const override { return "flatten"; }
    Shape output_shape(const Shape& input) const override;
    Tensor forward(const Tensor& input, Phase phase) override;
    Tensor backward(const Tensor& grad_out) override;

private:
    Shape input_shape_;
};

class DenseLayer final : public Layer {
public:
    explicit DenseLayer(Dense dense) : dense_(std::move(dense)) {}

    std::string kind() const override { return "dense"; }
    std::string describe() const override;
    Shape output_shape(const Shape& input) const override;
    Tensor forward(const Tensor& input, Phase phase) override;
    Tensor backward(const Tensor& grad_out) override;
    std::vector<ParameterRef> parameters() override;
    std::vector<std::pair<std::string, Tensor*>> state() override;
    std::size_t parameter_count() const override { return dense_.weights.size() + dense_.bias.size(); }

    const Dense& dense() const noexcept { return dense_; }

private:
    Dense dense_;
    Tensor input_;
    Tensor grad_weights_;
    Tensor grad_bias_;
};

enum class ArchId { A1, A2, A3, A4 };

std::string to_string(ArchId id);
ArchId parse_arch(const std::string& text);

/// Which architecture, whether its designated convolutions are MTS, and the
/// shared scale set of all MTS layers.
struct ArchitectureSpec {
    ArchId id = ArchId::A1;
    bool mts = false;
    ScaleSet scales;

    std::string type_name() const { return mts ? "MTS" : "Standard"; }
};

class Model {
public:
    Model() = default;
    Model(ArchitectureSpec spec, Shape input_shape, std::size_t classes);

    void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

    // [B, 1, T, F] -> logits [B, C].
    Tensor forward(const Tensor& input, Phase phase);
    void backward(const Tensor& grad_logits);
    void after_update();

    std::vector<ParameterRef> parameters();
    std::vector<std::pair<std::string, Tensor*>> state();
    std::vector<Tensor> snapshot();
    void restore(const std::vector<Tensor>& snapshot);

    std::size_t parameter_count() const;
    std::vector<MtsLayer*> mts_layers();
    void reset_usage();

    const ArchitectureSpec& spec() const noexcept { return spec_; }
    const Shape& input_shape() const noexcept { return input_shape_; }
    std::size_t classes() const noexcept { return classes_; }
    const std::vector<std::unique_ptr<Layer>>& layers() const noexcept { return layers_; }

    std::string topology() const;

private:
    ArchitectureSpec spec_;
    Shape input_shape_;  // {T, F}
    std::size_t classes_ = 0;
    std::vector<std::unique_ptr<Layer>> layers_;
};

// Layer stacks: A1 conv(1,[10,5]); A2 conv(10,[10,5]); A3 conv(10,[10,5]),
// pool[2,2], conv(10,[10,5]); each followed by dense(200) and the output layer.
// A4 is a five-convolution AlexNet-style stack (16-32-64-64-32 channels) with
// two hidden dense layers of 256; only its first two convolutions become MTS.
// Throws ShapeError with a per-layer shape trace when the input is too small.
Model build_model(const ArchitectureSpec& spec, std::size_t time_frames, std::size_t bins, std::size_t classes,
                  std::uint64_t seed);

// Versioned container: text header (topology + metadata) followed by named
// tensors in the tensor dump format. MTS layers store only their canonical
// bank and bias; branch banks are re-derived on load.
void save_checkpoint(const std::filesystem::path& path, Model& model);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace mtsconv
