#pragma once

#include <array>
#include <string>
#include <vector>

#include "fpk/rng.hpp"
#include "fpk/tensor.hpp"

namespace fpk {

// 2-D Gaussian mixture target.
struct GaussianComponent {
  std::array<double, 2> mean;
  std::array<double, 4> cov;  // row-major 2x2, SPD
  double weight;
};

struct GaussianMixture2D {
  std::vector<GaussianComponent> components;

  void validate() const;  // >=1 component, SPD covs, weights sum to 1
  std::size_t mode_count() const { return components.size(); }
};

// Eight equal-weight isotropic modes (sigma) on a circle of the given radius.
GaussianMixture2D ring8_preset(double radius = 2.0, double sigma = 0.05);

// Same geometry, weights proportional to 1..8.
GaussianMixture2D ring8_weighted_preset(double radius = 2.0,
                                        double sigma = 0.05);

GaussianMixture2D mixture_preset(const std::string& name);

// i.i.d. draws: categorical over weights, then the component Gaussian.
Tensor sample_mixture(const GaussianMixture2D& mix, std::size_t n, Rng& rng);

struct CoverageReport {
  int modes_captured = 0;
  std::vector<double> per_mode_fraction;
  double high_quality_fraction = 0.0;
};

// A mode counts as captured when at least `min_fraction` of the samples lie
// within `radius_sigmas` Mahalanobis units of its mean; high_quality_fraction
// is the fraction of samples within that radius of any mode.
CoverageReport mode_coverage(const Tensor& samples,
                             const GaussianMixture2D& mix,
                             double radius_sigmas = 3.0,
                             double min_fraction = 0.02);

struct GridBounds {
  double x_min, x_max, y_min, y_max;
};

struct GridDensity {
  Tensor histogram;  // [res_y, res_x], non-negative, sums to 1
  std::size_t clipped = 0;  // samples clamped into edge bins
};

GridDensity grid_density(const Tensor& samples, const GridBounds& bounds,
                         std::size_t res_x, std::size_t res_y);

}  // namespace fpk
