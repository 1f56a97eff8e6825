#include "psg/array.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace psg {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

Array::Array(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {}

Array::Array(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_numel(shape_)) {
        throw ShapeError("array data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_str(shape_));
    }
}

Array Array::full(std::vector<std::size_t> shape, double value) {
    Array a(std::move(shape));
    a.fill(value);
    return a;
}

bool Array::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Array::fill(double value) {
    std::fill(data_.begin(), data_.end(), value);
}

std::string shape_str(const std::vector<std::size_t>& shape) {
    if (shape.empty()) return "scalar";
    std::ostringstream out;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) out << 'x';
        out << shape[i];
    }
    return out.str();
}

std::string shape_str(const Array& a) { return shape_str(a.shape()); }

void require_same_shape(const Array& a, const Array& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                         shape_str(b));
    }
}

} // namespace psg
