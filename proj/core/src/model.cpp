#include "mtsconv/model.hpp"

#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "mtsconv/errors.hpp"

namespace mtsconv {

namespace {

constexpr const char* kCheckpointMagic = "MTSCONV-CHECKPOINT";
constexpr int kCheckpointVersion = 1;

std::string kernel_string(const Tensor& kernels) {
    return std::to_string(kernels.extent(2)) + "x" + std::to_string(kernels.extent(3));
}

Shape conv_output(const Shape& input, std::size_t out_ch, std::size_t in_ch, std::size_t kt, std::size_t kf,
                  std::size_t min_time) {
    if (input.size() != 3) {
        throw ShapeError("convolution expects a [C, T, F] activation, got " + shape_to_string(input));
    }
    if (input[0] != in_ch) {
        throw ShapeError("convolution expects " + std::to_string(in_ch) + " input channels, got " +
                         std::to_string(input[0]));
    }
    if (input[1] < std::max(kt, min_time) || input[2] < kf) {
        throw ShapeError("activation " + shape_to_string(input) + " smaller than kernel [" + std::to_string(kt) + "," +
                         std::to_string(kf) + "]" +
                         (min_time > kt ? " (longest MTS branch " + std::to_string(min_time) + ")" : std::string()));
    }
    return {out_ch, input[1] - kt + 1, input[2] - kf + 1};
}

}  // namespace

// --- layers -----------------------------------------------------------------

std::string ConvLayer::describe() const {
    return "conv out=" + std::to_string(conv_.out_channels()) + " in=" + std::to_string(conv_.in_channels()) +
           " kernel=" + kernel_string(conv_.kernels);
}

Shape ConvLayer::output_shape(const Shape& input) const {
    return conv_output(input, conv_.out_channels(), conv_.in_channels(), conv_.kernel_time(), conv_.kernel_freq(), 0);
}

Tensor ConvLayer::forward(const Tensor& input, Phase) {
    input_ = input;
    return conv2d_forward(input, conv_);
}

Tensor ConvLayer::backward(const Tensor& grad_out) {
    if (input_.empty()) {
        throw StateError("conv backward called before forward");
    }
    auto g = conv2d_backward(grad_out, input_, conv_);
    grad_kernels_ = std::move(g.kernels);
    grad_bias_ = std::move(g.bias);
    return std::move(g.input);
}

std::vector<ParameterRef> ConvLayer::parameters() {
    if (grad_kernels_.empty()) {
        grad_kernels_ = Tensor(conv_.kernels.shape());
        grad_bias_ = Tensor(conv_.bias.shape());
    }
    return {{"kernels", &conv_.kernels, &grad_kernels_}, {"bias", &conv_.bias, &grad_bias_}};
}

std::vector<std::pair<std::string, Tensor*>> ConvLayer::state() {
    return {{"kernels", &conv_.kernels}, {"bias", &conv_.bias}};
}

std::string MtsLayer::describe() const {
    return "mts out=" + std::to_string(mts_.canonical.out_channels()) +
           " in=" + std::to_string(mts_.canonical.in_channels()) + " kernel=" + kernel_string(mts_.canonical.kernels) +
           " scales=" + mts_.scales.to_string();
}

Shape MtsLayer::output_shape(const Shape& input) const {
    const Conv2d& c = mts_.canonical;
    return conv_output(input, c.out_channels(), c.in_channels(), c.kernel_time(), c.kernel_freq(),
                       mts_.longest_branch_time());
}

Tensor MtsLayer::forward(const Tensor& input, Phase phase) {
    auto result = mts_forward(input, mts_, phase == Phase::Eval);
    cache_ = std::move(result.cache);
    return std::move(result.output);
}

Tensor MtsLayer::backward(const Tensor& grad_out) {
    auto g = mts_backward(grad_out, cache_, mts_);
    // Element-wise so ParameterRef pointers into grad_branches_ stay valid.
    grad_branches_.resize(g.branch_kernels.size());
    for (std::size_t s = 0; s < g.branch_kernels.size(); ++s) {
        grad_branches_[s] = std::move(g.branch_kernels[s]);
    }
    grad_bias_ = std::move(g.bias);
    return std::move(g.input);
}

std::vector<ParameterRef> MtsLayer::parameters() {
    if (grad_branches_.size() != mts_.branch_kernels.size()) {
        grad_branches_.clear();
        for (const Tensor& k : mts_.branch_kernels) {
            grad_branches_.emplace_back(k.shape());
        }
        grad_bias_ = Tensor(mts_.canonical.bias.shape());
    }
    std::vector<ParameterRef> refs;
    for (std::size_t s = 0; s < mts_.branch_kernels.size(); ++s) {
        refs.push_back({"branch" + std::to_string(s), &mts_.branch_kernels[s], &grad_branches_[s]});
    }
    refs.push_back({"bias", &mts_.canonical.bias, &grad_bias_});
    return refs;
}

std::vector<std::pair<std::string, Tensor*>> MtsLayer::state() {
    return {{"kernels", &mts_.canonical.kernels}, {"bias", &mts_.canonical.bias}};
}

std::string MaxPoolLayer::describe() const {
    return "maxpool window=" + std::to_string(window_[0]) + "x" + std::to_string(window_[1]);
}

Shape MaxPoolLayer::output_shape(const Shape& input) const {
    if (input.size() != 3 || input[1] < window_[0] || input[2] < window_[1]) {
        throw ShapeError("activation " + shape_to_string(input) + " smaller than pooling window");
    }
    return {input[0], input[1] / window_[0], input[2] / window_[1]};
}

Tensor MaxPoolLayer::forward(const Tensor& input, Phase) {
    auto r = maxpool2d(input, window_);
    input_shape_ = input.shape();
    argmax_ = std::move(r.argmax);
    return std::move(r.output);
}

Tensor MaxPoolLayer::backward(const Tensor& grad_out) {
    if (input_shape_.empty()) {
        throw StateError("maxpool backward called before forward");
    }
    return maxpool2d_backward(grad_out, argmax_, input_shape_);
}

Tensor ReluLayer::forward(const Tensor& input, Phase) {
    input_ = input;
    return relu(input);
}

Tensor ReluLayer::backward(const Tensor& grad_out) {
    if (input_.empty()) {
        throw StateError("relu backward called before forward");
    }
    return relu_backward(grad_out, input_);
}

Shape FlattenLayer::output_shape(const Shape& input) const { return {shape_size(input)}; }

Tensor FlattenLayer::forward(const Tensor& input, Phase) {
    input_shape_ = input.shape();
    const std::size_t batch = input.extent(0);
    return input.reshaped({batch, input.size() / batch});
}

Tensor FlattenLayer::backward(const Tensor& grad_out) {
    if (input_shape_.empty()) {
        throw StateError("flatten backward called before forward");
    }
    return grad_out.reshaped(input_shape_);
}

std::string DenseLayer::describe() const {
    return "dense in=" + std::to_string(dense_.weights.extent(0)) + " out=" + std::to_string(dense_.weights.extent(1));
}

Shape DenseLayer::output_shape(const Shape& input) const {
    if (input.size() != 1 || input[0] != dense_.weights.extent(0)) {
        throw ShapeError("dense layer expects " + std::to_string(dense_.weights.extent(0)) + " inputs, got " +
                         shape_to_string(input));
    }
    return {dense_.weights.extent(1)};
}

Tensor DenseLayer::forward(const Tensor& input, Phase) {
    input_ = input;
    return dense_forward(input, dense_);
}

Tensor DenseLayer::backward(const Tensor& grad_out) {
    if (input_.empty()) {
        throw StateError("dense backward called before forward");
    }
    auto g = dense_backward(grad_out, input_, dense_);
    grad_weights_ = std::move(g.weights);
    grad_bias_ = std::move(g.bias);
    return std::move(g.input);
}

std::vector<ParameterRef> DenseLayer::parameters() {
    if (grad_weights_.empty()) {
        grad_weights_ = Tensor(dense_.weights.shape());
        grad_bias_ = Tensor(dense_.bias.shape());
    }
    return {{"weights", &dense_.weights, &grad_weights_}, {"bias", &dense_.bias, &grad_bias_}};
}

std::vector<std::pair<std::string, Tensor*>> DenseLayer::state() {
    return {{"weights", &dense_.weights}, {"bias", &dense_.bias}};
}

// --- architectures ----------------------------------------------------------

std::string to_string(ArchId id) {
    switch (id) {
        case ArchId::A1: return "A1";
        case ArchId::A2: return "A2";
        case ArchId::A3: return "A3";
        case ArchId::A4: return "A4";
    }
    return "?";
}

ArchId parse_arch(const std::string& text) {
    if (text == "A1") return ArchId::A1;
    if (text == "A2") return ArchId::A2;
    if (text == "A3") return ArchId::A3;
    if (text == "A4") return ArchId::A4;
    throw ParameterError("unknown architecture '" + text + "' (expected A1..A4)");
}

Model::Model(ArchitectureSpec spec, Shape input_shape, std::size_t classes)
    : spec_(std::move(spec)), input_shape_(std::move(input_shape)), classes_(classes) {}

Tensor Model::forward(const Tensor& input, Phase phase) {
    Tensor x = input;
    for (auto& layer : layers_) {
        x = layer->forward(x, phase);
    }
    return x;
}

void Model::backward(const Tensor& grad_logits) {
    Tensor g = grad_logits;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
        g = (*it)->backward(g);
    }
}

void Model::after_update() {
    for (auto& layer : layers_) {
        layer->after_update();
    }
}

std::vector<ParameterRef> Model::parameters() {
    std::vector<ParameterRef> refs;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        for (auto& p : layers_[i]->parameters()) {
            p.name = "layer" + std::to_string(i) + "." + p.name;
            refs.push_back(p);
        }
    }
    return refs;
}

std::vector<std::pair<std::string, Tensor*>> Model::state() {
    std::vector<std::pair<std::string, Tensor*>> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        for (auto& [name, t] : layers_[i]->state()) {
            out.emplace_back("layer" + std::to_string(i) + "." + name, t);
        }
    }
    return out;
}

std::vector<Tensor> Model::snapshot() {
    std::vector<Tensor> out;
    for (auto& [name, t] : state()) {
        out.push_back(*t);
    }
    return out;
}

void Model::restore(const std::vector<Tensor>& snapshot) {
    auto slots = state();
    if (slots.size() != snapshot.size()) {
        throw StateError("snapshot does not match model topology");
    }
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (slots[i].second->shape() != snapshot[i].shape()) {
            throw StateError("snapshot tensor " + slots[i].first + " has the wrong shape");
        }
        *slots[i].second = snapshot[i];
    }
    for (auto& layer : layers_) {
        layer->state_restored();
    }
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers_) {
        n += layer->parameter_count();
    }
    return n;
}

std::vector<MtsLayer*> Model::mts_layers() {
    std::vector<MtsLayer*> out;
    for (auto& layer : layers_) {
        if (auto* m = dynamic_cast<MtsLayer*>(layer.get())) {
            out.push_back(m);
        }
    }
    return out;
}

void Model::reset_usage() {
    for (MtsLayer* m : mts_layers()) {
        mtsconv::reset_usage(m->mts());
    }
}

std::string Model::topology() const {
    std::ostringstream os;
    os << "arch=" << to_string(spec_.id) << '\n'
       << "type=" << spec_.type_name() << '\n'
       << "scales=" << spec_.scales.to_string() << '\n'
       << "input=" << input_shape_.at(0) << 'x' << input_shape_.at(1) << '\n'
       << "classes=" << classes_ << '\n'
       << "parameters=" << parameter_count() << '\n';
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        os << "layer" << i << '=' << layers_[i]->describe() << '\n';
    }
    return os.str();
}

Model build_model(const ArchitectureSpec& spec, std::size_t time_frames, std::size_t bins, std::size_t classes,
                  std::uint64_t seed) {
    if (classes < 2) {
        throw ParameterError("a classifier needs at least 2 classes");
    }
    Model model(spec, {time_frames, bins}, classes);
    std::mt19937_64 rng(seed);

    Shape shape{1, time_frames, bins};
    std::ostringstream trace;
    trace << "input " << shape_to_string(shape);
    auto push = [&](std::unique_ptr<Layer> layer) {
        try {
            shape = layer->output_shape(shape);
        } catch (const ShapeError& e) {
            throw ShapeError(to_string(spec.id) + ": input " + std::to_string(time_frames) + "x" +
                             std::to_string(bins) + " too small at '" + layer->describe() + "': " + e.what() +
                             "\n  trace: " + trace.str());
        }
        trace << " -> " << layer->describe() << ' ' << shape_to_string(shape);
        model.add(std::move(layer));
    };

    struct ConvPlan {
        std::size_t channels, kt, kf;
        bool mts;
        bool pool_after;
    };
    std::vector<ConvPlan> convs;
    std::vector<std::size_t> hidden;
    switch (spec.id) {
        case ArchId::A1:
            convs = {{1, 10, 5, true, false}};
            hidden = {200};
            break;
        case ArchId::A2:
            convs = {{10, 10, 5, true, false}};
            hidden = {200};
            break;
        case ArchId::A3:
            convs = {{10, 10, 5, true, true}, {10, 10, 5, true, false}};
            hidden = {200};
            break;
        case ArchId::A4:
            convs = {{16, 11, 5, true, true},
                     {32, 7, 5, true, true},
                     {64, 5, 3, false, false},
                     {64, 5, 3, false, false},
                     {32, 5, 3, false, true}};
            hidden = {256, 256};
            break;
    }

    std::size_t in_ch = 1;
    for (const auto& c : convs) {
        Conv2d conv = Conv2d::glorot(c.channels, in_ch, c.kt, c.kf, rng);
        if (spec.mts && c.mts) {
            push(std::make_unique<MtsLayer>(MtsConv2d(std::move(conv), spec.scales)));
        } else {
            push(std::make_unique<ConvLayer>(std::move(conv)));
        }
        push(std::make_unique<ReluLayer>());
        if (c.pool_after) {
            push(std::make_unique<MaxPoolLayer>(std::array<std::size_t, 2>{2, 2}));
        }
        in_ch = c.channels;
    }
    push(std::make_unique<FlattenLayer>());
    std::size_t width = shape[0];
    for (std::size_t h : hidden) {
        push(std::make_unique<DenseLayer>(Dense::glorot(width, h, rng)));
        push(std::make_unique<ReluLayer>());
        width = h;
    }
    push(std::make_unique<DenseLayer>(Dense::glorot(width, classes, rng)));
    return model;
}

void save_checkpoint(const std::filesystem::path& path, Model& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError("cannot write checkpoint " + path.string());
    }
    auto slots = model.state();
    out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n' << model.topology() << "tensors=" << slots.size()
        << '\n';
    for (const auto& [name, t] : slots) {
        out << "tensor=" << name << ' ' << shape_to_string(t->shape()) << '\n';
    }
    out << "end\n";
    for (const auto& [name, t] : slots) {
        write_tensor(out, *t);
    }
}

Model load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw UsageError("cannot open checkpoint " + path.string());
    }
    std::string line;
    std::getline(in, line);
    if (line != std::string(kCheckpointMagic) + " " + std::to_string(kCheckpointVersion)) {
        throw FormatError("unsupported checkpoint header '" + line + "'");
    }
    std::map<std::string, std::string> fields;
    std::vector<std::string> tensor_names;
    while (std::getline(in, line) && line != "end") {
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw FormatError("malformed checkpoint header line '" + line + "'");
        }
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "tensor") {
            tensor_names.push_back(value.substr(0, value.find(' ')));
        } else {
            fields[key] = value;
        }
    }
    if (line != "end") {
        throw FormatError("checkpoint header is not terminated");
    }
    try {
        ArchitectureSpec spec;
        spec.id = parse_arch(fields.at("arch"));
        spec.mts = fields.at("type") == "MTS";
        spec.scales = ScaleSet::parse(fields.at("scales"));
        const std::string& input = fields.at("input");
        const auto x = input.find('x');
        Model model = build_model(spec, std::stoul(input.substr(0, x)), std::stoul(input.substr(x + 1)),
                                  std::stoul(fields.at("classes")), 0);
        auto slots = model.state();
        if (slots.size() != tensor_names.size()) {
            throw FormatError("checkpoint tensor count does not match topology");
        }
        std::vector<Tensor> values;
        for (std::size_t i = 0; i < slots.size(); ++i) {
            if (slots[i].first != tensor_names[i]) {
                throw FormatError("checkpoint tensor '" + tensor_names[i] + "' where '" + slots[i].first +
                                  "' was expected");
            }
            values.push_back(read_tensor(in));
        }
        model.restore(values);
        return model;
    } catch (const std::out_of_range&) {
        throw FormatError("checkpoint header is missing required fields");
    } catch (const StateError& e) {
        throw FormatError(std::string("checkpoint does not match its topology: ") + e.what());
    }
}

}  // namespace mtsconv
