#include "fpk/kernel.hpp"

#include <cmath>

namespace fpk {

Tensor gram_from_features(const Tensor& fx, const Tensor& fy) {
  if (fx.cols() != fy.cols()) {
    throw DimensionError("gram: feature dims disagree, " + fx.shape_str() +
                         " vs " + fy.shape_str());
  }
  Tensor out(fx.rows(), fy.rows());
  for (std::size_t i = 0; i < fx.rows(); ++i) {
    for (std::size_t j = 0; j < fy.rows(); ++j) {
      double d = 0.0;
      for (std::size_t l = 0; l < fx.cols(); ++l) {
        const double diff = fx.at(i, l) - fy.at(j, l);
        d += diff * diff;
      }
      out.at(i, j) = std::exp(-d);
    }
  }
  return out;
}

double DeepKernel::eval(const Tensor& x, const Tensor& y) const {
  return gram(x, y).scalar();
}

Tensor DeepKernel::gram(const Tensor& X, const Tensor& Y) const {
  return gram_from_features(features.forward(X), features.forward(Y));
}

}  // namespace fpk
