#include "fpk/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace fpk {

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  std::size_t expect = 1;
  for (std::size_t d : shape_) expect *= d;
  if (shape_.empty()) expect = 0;
  if (expect != data_.size()) {
    throw DimensionError("tensor: shape " + shape_str() + " expects " +
                         std::to_string(expect) + " values, got " +
                         std::to_string(data_.size()));
  }
}

Tensor Tensor::row(std::initializer_list<double> values) {
  return Tensor({1, values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::initializer_list<double> values) {
  return Tensor({rows, cols}, std::vector<double>(values));
}

Tensor Tensor::zeros_like(const Tensor& t) {
  return Tensor(t.shape(), std::vector<double>(t.size(), 0.0));
}

double Tensor::scalar() const {
  if (size() != 1) {
    throw DimensionError("tensor: scalar() on shape " + shape_str());
  }
  return data_[0];
}

Tensor Tensor::row_slice(std::size_t r) const {
  const std::size_t c = cols();
  std::vector<double> out(data_.begin() + r * c, data_.begin() + (r + 1) * c);
  return Tensor({1, c}, std::move(out));
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << ",";
    os << shape_[i];
  }
  os << "]";
  return os.str();
}

double Tensor::frobenius_norm() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return std::sqrt(s);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* where) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(where) + ": shape mismatch " +
                         a.shape_str() + " vs " + b.shape_str());
  }
}

}  // namespace fpk
