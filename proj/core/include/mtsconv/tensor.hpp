#pragma once

#include <cstddef>
#include <filesystem>
#include <initializer_list>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace mtsconv {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

/// Dense row-major array of doubles.
///
/// A default-constructed tensor is empty (rank 0, no data) and acts as a
/// placeholder; every constructed tensor has rank >= 1 and extents >= 1.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(Shape shape);
    static Tensor filled(Shape shape, double value);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t extent(std::size_t axis) const;
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }

    double& operator[](std::size_t flat) noexcept { return data_[flat]; }
    double operator[](std::size_t flat) const noexcept { return data_[flat]; }

    std::size_t flat_index(std::span<const std::size_t> index) const;
    double& at(std::initializer_list<std::size_t> index);
    double at(std::initializer_list<std::size_t> index) const;

    // Same data, new shape of equal size.
    Tensor reshaped(Shape shape) const&;
    Tensor reshaped(Shape shape) &&;

    void fill(double value) noexcept;

    Tensor& operator+=(const Tensor& other);
    Tensor& operator-=(const Tensor& other);
    Tensor& operator*=(double factor) noexcept;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

Tensor operator+(Tensor lhs, const Tensor& rhs);
Tensor operator-(Tensor lhs, const Tensor& rhs);
Tensor operator*(Tensor lhs, double factor);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& matrix);

double sum(const Tensor& t) noexcept;
double dot(const Tensor& a, const Tensor& b);
double max_abs(const Tensor& t) noexcept;
double l2_norm(const Tensor& t) noexcept;

struct IndexTensor {
    Shape shape;
    std::vector<std::size_t> indices;

    friend bool operator==(const IndexTensor&, const IndexTensor&) = default;
};

struct ArgmaxResult {
    Tensor values;
    IndexTensor argmax;
};

// Max over `axis` and the position of the first maximal entry along it.
// The reduced axis is removed from the output shape; reducing a rank-1
// tensor yields shape {1}.
ArgmaxResult reduce_and_argmax(const Tensor& t, std::size_t axis);

// Binary dump: u32 rank, u32 extents, then f64 values, all little-endian.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);
void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace mtsconv
