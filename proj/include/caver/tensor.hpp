#pragma once

#include <cstddef>
#include <vector>

#include "caver/errors.hpp"

namespace caver {

// Dense row-major tensor of rank 1..4. All arithmetic runs in 64-bit reals;
// the on-disk format narrows to 32-bit (see io.hpp). Values are expected to
// stay finite across operation boundaries; ops verify their outputs.
class Tensor {
  public:
    Tensor() = default;

    // Zero-filled tensor of the given extents.
    explicit Tensor(std::vector<std::size_t> shape);

    Tensor(std::vector<std::size_t> shape, std::vector<double> values);

    static Tensor full(std::vector<std::size_t> shape, double value);

    std::size_t rank() const { return shape_.size(); }
    std::size_t extent(std::size_t axis) const;
    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator()(std::size_t i) { return data_[i]; }
    double operator()(std::size_t i) const { return data_[i]; }
    double& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    double& operator()(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double& operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    // Reinterprets the buffer under new extents with the same element count.
    Tensor reshaped(std::vector<std::size_t> shape) const;

    // Throws NumericError if any element is NaN or infinite.
    void ensure_finite(const char* context) const;

    // Exact elementwise equality, including shape.
    bool bit_equal(const Tensor& other) const;

  private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);
std::string shape_string(const Tensor& t);

}  // namespace caver
