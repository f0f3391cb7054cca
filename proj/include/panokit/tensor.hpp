#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "panokit/rng.hpp"

namespace panokit {

// Dense row-major tensor of doubles. All arithmetic in this project is
// 64-bit; there is no other element type.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<size_t> shape);
  Tensor(std::initializer_list<size_t> shape);

  static Tensor zeros(std::vector<size_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<size_t> shape, double value);
  // Elements from a flat list, row-major.
  static Tensor from(std::vector<size_t> shape, std::vector<double> values);
  static Tensor gaussian(std::vector<size_t> shape, Rng& rng, double stddev);

  size_t ndim() const { return shape_.size(); }
  size_t dim(size_t i) const { return shape_.at(i); }
  const std::vector<size_t>& shape() const { return shape_; }
  size_t size() const { return data_.size(); }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  double* ptr() { return data_.data(); }
  const double* ptr() const { return data_.data(); }
  double& operator[](size_t i) { return data_[i]; }
  double operator[](size_t i) const { return data_[i]; }

  double& at(size_t i0) { return data_[i0]; }
  double& at(size_t i0, size_t i1) { return data_[i0 * stride(0) + i1]; }
  double& at(size_t i0, size_t i1, size_t i2) {
    return data_[(i0 * dim(1) + i1) * dim(2) + i2];
  }
  double& at(size_t i0, size_t i1, size_t i2, size_t i3) {
    return data_[((i0 * dim(1) + i1) * dim(2) + i2) * dim(3) + i3];
  }
  double at(size_t i0) const { return data_[i0]; }
  double at(size_t i0, size_t i1) const { return data_[i0 * stride(0) + i1]; }
  double at(size_t i0, size_t i1, size_t i2) const {
    return data_[(i0 * dim(1) + i1) * dim(2) + i2];
  }
  double at(size_t i0, size_t i1, size_t i2, size_t i3) const {
    return data_[((i0 * dim(1) + i1) * dim(2) + i2) * dim(3) + i3];
  }

  void fill(double v);
  void zero() { fill(0.0); }
  // Reinterprets the buffer with a new shape of identical element count.
  Tensor reshaped(std::vector<size_t> shape) const;

  void add_scaled(const Tensor& other, double scale);  // this += scale * other
  double min() const;
  double max() const;
  double sum() const;
  bool all_finite() const;

 private:
  size_t stride(size_t i) const;
  std::vector<size_t> shape_;
  std::vector<double> data_;
};

// Throws DimensionError mentioning `where` if shapes differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* where);

}  // namespace panokit
