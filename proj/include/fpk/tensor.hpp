#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "fpk/errors.hpp"

namespace fpk {

// Dense row-major tensor of doubles. The library only ever needs rank 1 and
// rank 2; rank-1 tensors are treated as a single row where a matrix is
// expected.
class Tensor {
 public:
  Tensor() = default;

  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : shape_{rows, cols}, data_(rows * cols, fill) {}

  explicit Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor row(std::initializer_list<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::initializer_list<double> values);
  static Tensor zeros_like(const Tensor& t);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  // Rank-1 tensors act as a 1 x n row.
  std::size_t rows() const {
    return shape_.size() == 2 ? shape_[0] : (shape_.empty() ? 0 : 1);
  }
  std::size_t cols() const {
    return shape_.size() == 2 ? shape_[1] : (shape_.empty() ? 0 : shape_[0]);
  }

  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  // Scalar extraction; requires size() == 1.
  double scalar() const;

  Tensor row_slice(std::size_t r) const;  // one row as a [1, cols] tensor

  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_str() const;

  double frobenius_norm() const;

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// Throws DimensionError naming both shapes unless they agree.
void check_same_shape(const Tensor& a, const Tensor& b, const char* where);

}  // namespace fpk
