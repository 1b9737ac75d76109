#include "mtsconv/tensor.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "mtsconv/errors.hpp"

namespace mtsconv {

namespace {

void validate_shape(const Shape& shape) {
    if (shape.empty()) {
        throw ShapeError("tensor shape must have at least one extent");
    }
    for (std::size_t extent : shape) {
        if (extent == 0) {
            throw ShapeError("tensor extents must be >= 1, got " + shape_to_string(shape));
        }
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
    }
}

void put_u32(std::ostream& out, std::uint32_t v) {
    std::array<char, 4> bytes{};
    for (int i = 0; i < 4; ++i) {
        bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
    }
    out.write(bytes.data(), bytes.size());
}

void put_u64(std::ostream& out, std::uint64_t v) {
    std::array<char, 8> bytes{};
    for (int i = 0; i < 8; ++i) {
        bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
    }
    out.write(bytes.data(), bytes.size());
}

std::uint32_t get_u32(std::istream& in) {
    std::array<unsigned char, 4> bytes{};
    in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
    if (!in) {
        throw FormatError("tensor dump truncated in header");
    }
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) {
        v = (v << 8) | bytes[i];
    }
    return v;
}

}  // namespace

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i != 0) {
            os << ',';
        }
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) {
        n *= e;
    }
    return n;
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
    validate_shape(shape_);
    data_.assign(shape_size(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape(shape_);
    if (shape_size(shape_) != data_.size()) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_to_string(shape_));
    }
}

Tensor Tensor::zeros(Shape shape) { return Tensor(std::move(shape)); }

Tensor Tensor::filled(Shape shape, double value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
}

std::size_t Tensor::extent(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_to_string(shape_));
    }
    return shape_[axis];
}

std::size_t Tensor::flat_index(std::span<const std::size_t> index) const {
    if (index.size() != shape_.size()) {
        throw ShapeError("index rank " + std::to_string(index.size()) + " does not match tensor rank " +
                         std::to_string(shape_.size()));
    }
    std::size_t flat = 0;
    for (std::size_t axis = 0; axis < shape_.size(); ++axis) {
        if (index[axis] >= shape_[axis]) {
            throw ShapeError("index out of bounds on axis " + std::to_string(axis));
        }
        flat = flat * shape_[axis] + index[axis];
    }
    return flat;
}

double& Tensor::at(std::initializer_list<std::size_t> index) {
    return data_[flat_index(std::span<const std::size_t>(index.begin(), index.size()))];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
    return data_[flat_index(std::span<const std::size_t>(index.begin(), index.size()))];
}

Tensor Tensor::reshaped(Shape shape) const& {
    Tensor copy = *this;
    return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
    validate_shape(shape);
    if (shape_size(shape) != data_.size()) {
        throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
    }
    shape_ = std::move(shape);
    return std::move(*this);
}

void Tensor::fill(double value) noexcept { std::fill(data_.begin(), data_.end(), value); }

Tensor& Tensor::operator+=(const Tensor& other) {
    require_same_shape(*this, other, "add");
    for (std::size_t i = 0; i < data_.size(); ++i) {
        data_[i] += other.data_[i];
    }
    return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
    require_same_shape(*this, other, "subtract");
    for (std::size_t i = 0; i < data_.size(); ++i) {
        data_[i] -= other.data_[i];
    }
    return *this;
}

Tensor& Tensor::operator*=(double factor) noexcept {
    for (double& v : data_) {
        v *= factor;
    }
    return *this;
}

Tensor operator+(Tensor lhs, const Tensor& rhs) { return lhs += rhs; }
Tensor operator-(Tensor lhs, const Tensor& rhs) { return lhs -= rhs; }
Tensor operator*(Tensor lhs, double factor) { return lhs *= factor; }

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw ShapeError("matmul expects rank-2 operands, got " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()));
    }
    const std::size_t rows = a.extent(0);
    const std::size_t inner = a.extent(1);
    const std::size_t cols = b.extent(1);
    if (b.extent(0) != inner) {
        throw ShapeError("matmul inner dimension mismatch: " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
    }
    Tensor out({rows, cols});
    for (std::size_t i = 0; i < rows; ++i) {
        double* row = out.data() + i * cols;
        for (std::size_t k = 0; k < inner; ++k) {
            const double aik = a[i * inner + k];
            const double* brow = b.data() + k * cols;
            for (std::size_t j = 0; j < cols; ++j) {
                row[j] += aik * brow[j];
            }
        }
    }
    return out;
}

Tensor transpose(const Tensor& matrix) {
    if (matrix.rank() != 2) {
        throw ShapeError("transpose expects a rank-2 tensor, got " + shape_to_string(matrix.shape()));
    }
    const std::size_t rows = matrix.extent(0);
    const std::size_t cols = matrix.extent(1);
    Tensor out({cols, rows});
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            out[j * rows + i] = matrix[i * cols + j];
        }
    }
    return out;
}

double sum(const Tensor& t) noexcept {
    double s = 0.0;
    for (double v : t.values()) {
        s += v;
    }
    return s;
}

double dot(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

double max_abs(const Tensor& t) noexcept {
    double m = 0.0;
    for (double v : t.values()) {
        m = std::max(m, std::abs(v));
    }
    return m;
}

double l2_norm(const Tensor& t) noexcept {
    double s = 0.0;
    for (double v : t.values()) {
        s += v * v;
    }
    return std::sqrt(s);
}

ArgmaxResult reduce_and_argmax(const Tensor& t, std::size_t axis) {
    if (axis >= t.rank()) {
        throw ShapeError("reduce axis " + std::to_string(axis) + " out of range for shape " +
                         shape_to_string(t.shape()));
    }
    const Shape& shape = t.shape();
    std::size_t outer = 1;
    for (std::size_t i = 0; i < axis; ++i) {
        outer *= shape[i];
    }
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < shape.size(); ++i) {
        inner *= shape[i];
    }
    const std::size_t len = shape[axis];

    Shape out_shape;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i != axis) {
            out_shape.push_back(shape[i]);
        }
    }
    if (out_shape.empty()) {
        out_shape.push_back(1);
    }

    ArgmaxResult result{Tensor(out_shape), IndexTensor{out_shape, std::vector<std::size_t>(outer * inner, 0)}};
    for (std::size_t o = 0; o < outer; ++o) {
        const double* base = t.data() + o * len * inner;
        double* values = result.values.data() + o * inner;
        std::size_t* indices = result.argmax.indices.data() + o * inner;
        for (std::size_t i = 0; i < inner; ++i) {
            values[i] = base[i];
        }
        for (std::size_t k = 1; k < len; ++k) {
            const double* slice = base + k * inner;
            for (std::size_t i = 0; i < inner; ++i) {
                // Strict comparison keeps the lowest index on ties.
                if (slice[i] > values[i]) {
                    values[i] = slice[i];
                    indices[i] = k;
                }
            }
        }
    }
    return result;
}

void write_tensor(std::ostream& out, const Tensor& t) {
    if (t.empty()) {
        throw ShapeError("cannot serialize an empty tensor");
    }
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) {
        if (e > std::numeric_limits<std::uint32_t>::max()) {
            throw ShapeError("extent too large for tensor dump");
        }
        put_u32(out, static_cast<std::uint32_t>(e));
    }
    for (double v : t.values()) {
        put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
    if (!out) {
        throw FormatError("failed writing tensor dump");
    }
}

Tensor read_tensor(std::istream& in) {
    const std::uint32_t rank = get_u32(in);
    if (rank == 0 || rank > 16) {
        throw FormatError("tensor dump has invalid rank " + std::to_string(rank));
    }
    Shape shape(rank);
    for (auto& e : shape) {
        e = get_u32(in);
        if (e == 0) {
            throw FormatError("tensor dump has a zero extent");
        }
    }
    std::vector<double> data(shape_size(shape));
    std::vector<unsigned char> raw(data.size() * 8);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!in) {
        throw FormatError("tensor dump truncated: expected " + std::to_string(data.size()) + " values");
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 7; b >= 0; --b) {
            bits = (bits << 8) | raw[i * 8 + static_cast<std::size_t>(b)];
        }
        data[i] = std::bit_cast<double>(bits);
    }
    return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError("cannot open " + path.string() + " for writing");
    }
    write_tensor(out, t);
}

Tensor load_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open " + path.string());
    }
    return read_tensor(in);
}

}  // namespace mtsconv
