#include "caver/tensor.hpp"

#include <cmath>
#include <cstring>

namespace caver {

namespace {

std::size_t checked_element_count(const std::vector<std::size_t>& shape) {
    if (shape.empty() || shape.size() > 4) {
        throw ShapeError(detail::msg("tensor rank must be 1..4, got ", shape.size()));
    }
    std::size_t n = 1;
    for (std::size_t e : shape) {
        if (e == 0) {
            throw ShapeError(detail::msg("zero extent in shape ", shape_string(shape)));
        }
        n *= e;
    }
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(checked_element_count(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
    const std::size_t expect = checked_element_count(shape_);
    if (data_.size() != expect) {
        throw ShapeError(detail::msg("data length ", data_.size(), " does not match shape ",
                                     shape_string(shape_), " (", expect, " elements)"));
    }
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
    Tensor t(std::move(shape));
    for (double& v : t.data_) v = value;
    return t;
}

std::size_t Tensor::extent(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw ShapeError(detail::msg("axis ", axis, " out of range for rank ", shape_.size()));
    }
    return shape_[axis];
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
    const std::size_t expect = checked_element_count(shape);
    if (expect != data_.size()) {
        throw ShapeError(detail::msg("cannot reshape ", shape_string(shape_), " to ",
                                     shape_string(shape), ": element count differs"));
    }
    return Tensor(std::move(shape), data_);
}

void Tensor::ensure_finite(const char* context) const {
    for (double v : data_) {
        if (!std::isfinite(v)) {
            throw NumericError(detail::msg("non-finite value in ", context));
        }
    }
}

bool Tensor::bit_equal(const Tensor& other) const {
    if (shape_ != other.shape_) return false;
    return std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0;
}

std::string shape_string(const std::vector<std::size_t>& shape) {
    std::string s;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s;
}

std::string shape_string(const Tensor& t) { return shape_string(t.shape()); }

}  // namespace caver
