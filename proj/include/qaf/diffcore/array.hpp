#pragma once

#include <qaf/error.hpp>

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace qaf {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape)
{
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

/// Dense row-major array of doubles. Rank 0 is a scalar, rank 1 a vector,
/// rank 2 a matrix (rows x cols).
class Array {
public:
    Array() = default;

    explicit Array(Shape shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(shape_size(shape_), fill)
    {
        check_dims();
    }

    Array(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data))
    {
        check_dims();
        if (data_.size() != shape_size(shape_))
            throw ShapeError("Array: data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(shape_));
    }

    static Array scalar(double v) { return Array(Shape{}, std::vector<double>{v}); }

    static Array vector(std::vector<double> v)
    {
        const auto n = v.size();
        return Array(Shape{n}, std::move(v));
    }

    static Array vector(std::initializer_list<double> v) { return vector(std::vector<double>(v)); }

    static Array matrix(std::size_t rows, std::size_t cols, std::vector<double> v)
    {
        return Array(Shape{rows, cols}, std::move(v));
    }

    static Array zeros_like(const Array& a) { return Array(a.shape_, 0.0); }

    /// Same data under a new shape of equal size.
    Array reshaped(Shape shape) const { return Array(std::move(shape), data_); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    bool is_scalar() const noexcept { return data_.size() == 1 && shape_.size() <= 1; }

    std::size_t rows() const { return rank() == 2 ? shape_[0] : 1; }
    std::size_t cols() const { return rank() == 2 ? shape_[1] : (rank() == 1 ? shape_[0] : 1); }

    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }
    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    const std::vector<double>& storage() const noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
    double item() const
    {
        if (!is_scalar()) throw ShapeError("Array::item: not a scalar, shape " + shape_str(shape_));
        return data_[0];
    }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }

    bool all_finite() const noexcept
    {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool operator==(const Array& other) const = default;

private:
    void check_dims() const
    {
        for (auto d : shape_)
            if (d == 0) throw ShapeError("Array: zero-sized dimension in shape " + shape_str(shape_));
    }

    Shape shape_;
    std::vector<double> data_{0.0};
};

} // namespace qaf
