#include "fpk/targets.hpp"

#include <cmath>

#include "fpk/errors.hpp"

namespace fpk {

void GaussianMixture2D::validate() const {
  if (components.empty()) {
    throw ConfigError("mixture: need at least one component");
  }
  double wsum = 0.0;
  for (const GaussianComponent& c : components) {
    if (c.weight < 0.0) throw ConfigError("mixture: negative weight");
    const double det = c.cov[0] * c.cov[3] - c.cov[1] * c.cov[2];
    if (!(c.cov[0] > 0.0) || !(det > 0.0)) {
      throw ConfigError("mixture: covariance not SPD");
    }
    wsum += c.weight;
  }
  if (std::abs(wsum - 1.0) > 1e-12) {
    throw ConfigError("mixture: weights sum to " + std::to_string(wsum) +
                      ", expected 1");
  }
}

static GaussianMixture2D ring8(double radius, double sigma,
                               const std::vector<double>& raw_weights) {
  GaussianMixture2D mix;
  double wsum = 0.0;
  for (double w : raw_weights) wsum += w;
  for (std::size_t k = 0; k < 8; ++k) {
    const double angle = 2.0 * M_PI * static_cast<double>(k) / 8.0;
    GaussianComponent c;
    c.mean = {radius * std::cos(angle), radius * std::sin(angle)};
    c.cov = {sigma * sigma, 0.0, 0.0, sigma * sigma};
    c.weight = raw_weights[k] / wsum;
    mix.components.push_back(c);
  }
  return mix;
}

GaussianMixture2D ring8_preset(double radius, double sigma) {
  return ring8(radius, sigma, std::vector<double>(8, 1.0));
}

GaussianMixture2D ring8_weighted_preset(double radius, double sigma) {
  return ring8(radius, sigma, {1, 2, 3, 4, 5, 6, 7, 8});
}

GaussianMixture2D mixture_preset(const std::string& name) {
  if (name == "ring8") return ring8_preset();
  if (name == "ring8-weighted") return ring8_weighted_preset();
  throw ConfigError("unknown mixture preset: '" + name +
                    "' (expected ring8 or ring8-weighted)");
}

Tensor sample_mixture(const GaussianMixture2D& mix, std::size_t n, Rng& rng) {
  mix.validate();
  if (n < 1) throw PreconditionError("sample_mixture: n must be >= 1");
  Tensor out(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    // Categorical draw over weights.
    double u = rng.uniform();
    std::size_t k = 0;
    for (; k + 1 < mix.components.size(); ++k) {
      if (u < mix.components[k].weight) break;
      u -= mix.components[k].weight;
    }
    const GaussianComponent& c = mix.components[k];
    // Cholesky of the 2x2 covariance.
    const double l00 = std::sqrt(c.cov[0]);
    const double l10 = c.cov[2] / l00;
    const double l11 = std::sqrt(c.cov[3] - l10 * l10);
    const double n0 = rng.normal();
    const double n1 = rng.normal();
    out.at(i, 0) = c.mean[0] + l00 * n0;
    out.at(i, 1) = c.mean[1] + l10 * n0 + l11 * n1;
  }
  return out;
}

CoverageReport mode_coverage(const Tensor& samples,
                             const GaussianMixture2D& mix,
                             double radius_sigmas, double min_fraction) {
  mix.validate();
  if (samples.rows() == 0) {
    throw PreconditionError("mode_coverage: empty sample set");
  }
  const std::size_t n = samples.rows();
  const std::size_t m = mix.components.size();
  CoverageReport report;
  report.per_mode_fraction.assign(m, 0.0);
  std::size_t high_quality = 0;
  const double r2 = radius_sigmas * radius_sigmas;
  for (std::size_t i = 0; i < n; ++i) {
    bool near_any = false;
    for (std::size_t k = 0; k < m; ++k) {
      const GaussianComponent& c = mix.components[k];
      const double dx = samples.at(i, 0) - c.mean[0];
      const double dy = samples.at(i, 1) - c.mean[1];
      // Mahalanobis^2 via the covariance inverse.
      const double det = c.cov[0] * c.cov[3] - c.cov[1] * c.cov[2];
      const double maha2 =
          (c.cov[3] * dx * dx - (c.cov[1] + c.cov[2]) * dx * dy +
           c.cov[0] * dy * dy) /
          det;
      if (maha2 <= r2) {
        report.per_mode_fraction[k] += 1.0;
        near_any = true;
      }
    }
    if (near_any) ++high_quality;
  }
  for (std::size_t k = 0; k < m; ++k) {
    report.per_mode_fraction[k] /= static_cast<double>(n);
    if (report.per_mode_fraction[k] >= min_fraction) ++report.modes_captured;
  }
  report.high_quality_fraction =
      static_cast<double>(high_quality) / static_cast<double>(n);
  return report;
}

GridDensity grid_density(const Tensor& samples, const GridBounds& bounds,
                         std::size_t res_x, std::size_t res_y) {
  if (res_x < 2 || res_y < 2) {
    throw PreconditionError("grid_density: resolution must be >= 2 per axis");
  }
  if (samples.rows() == 0) {
    throw PreconditionError("grid_density: empty sample set");
  }
  GridDensity out;
  out.histogram = Tensor(res_y, res_x);
  const double sx =
      static_cast<double>(res_x) / (bounds.x_max - bounds.x_min);
  const double sy =
      static_cast<double>(res_y) / (bounds.y_max - bounds.y_min);
  for (std::size_t i = 0; i < samples.rows(); ++i) {
    long bx = static_cast<long>(std::floor((samples.at(i, 0) - bounds.x_min) * sx));
    long by = static_cast<long>(std::floor((samples.at(i, 1) - bounds.y_min) * sy));
    bool clipped = false;
    if (bx < 0) { bx = 0; clipped = true; }
    if (bx >= static_cast<long>(res_x)) { bx = res_x - 1; clipped = true; }
    if (by < 0) { by = 0; clipped = true; }
    if (by >= static_cast<long>(res_y)) { by = res_y - 1; clipped = true; }
    if (clipped) ++out.clipped;
    out.histogram.at(static_cast<std::size_t>(by),
                     static_cast<std::size_t>(bx)) += 1.0;
  }
  for (double& v : out.histogram.data())
    v /= static_cast<double>(samples.rows());
  return out;
}

}  // namespace fpk
