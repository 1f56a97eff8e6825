#pragma once

#include "psg/errors.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace psg {

/// Dense row-major array of 64-bit floats. Plain value type: copies copy the
/// payload, const access never allocates.
class Array {
public:
    Array() = default;

    /// Zero-filled array of the given shape.
    explicit Array(std::vector<std::size_t> shape);

    Array(std::vector<std::size_t> shape, std::vector<double> data);

    static Array zeros(std::vector<std::size_t> shape) { return Array(std::move(shape)); }
    static Array full(std::vector<std::size_t> shape, double value);
    static Array scalar(double value) { return Array({1}, {value}); }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_[axis]; }
    std::size_t numel() const { return data_.size(); }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at2(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at2(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    double& at3(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double at3(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    bool same_shape(const Array& other) const { return shape_ == other.shape_; }

    /// True when the array holds exactly one element (shape {} or {1} or {1,1,...}).
    bool is_scalar() const { return data_.size() == 1; }

    /// True when every element is finite (no NaN/Inf).
    bool all_finite() const;

    void fill(double value);

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

/// "3x4x5" style rendering for error messages.
std::string shape_str(const std::vector<std::size_t>& shape);
std::string shape_str(const Array& a);

std::size_t shape_numel(const std::vector<std::size_t>& shape);

/// Throws ShapeError naming both shapes unless they are equal.
void require_same_shape(const Array& a, const Array& b, const char* op);

} // namespace psg
