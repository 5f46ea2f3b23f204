#include "fpk/divergence.hpp"

#include <cmath>
#include <limits>

#include "fpk/errors.hpp"

namespace fpk {

std::string to_string(FDivergenceKind kind) {
  switch (kind) {
    case FDivergenceKind::KL: return "kl";
    case FDivergenceKind::ReverseKL: return "rkl";
    case FDivergenceKind::JensenShannon: return "js";
    case FDivergenceKind::SquaredHellinger: return "sh";
  }
  return "?";
}

FDivergenceKind fdivergence_from_string(const std::string& name) {
  if (name == "kl") return FDivergenceKind::KL;
  if (name == "rkl") return FDivergenceKind::ReverseKL;
  if (name == "js") return FDivergenceKind::JensenShannon;
  if (name == "sh") return FDivergenceKind::SquaredHellinger;
  throw ConfigError("unknown f-divergence kind: '" + name +
                    "' (expected kl, rkl, js or sh)");
}

double f_value(FDivergenceKind kind, double u) {
  if (!(u > 0.0)) {
    throw DomainError("f_value(" + to_string(kind) + "): u must be > 0, got " +
                      std::to_string(u));
  }
  switch (kind) {
    case FDivergenceKind::KL:
      return u * std::log(u);
    case FDivergenceKind::ReverseKL:
      return -std::log(u);
    case FDivergenceKind::JensenShannon:
      return -(u + 1.0) * std::log((1.0 + u) / 2.0) + u * std::log(u);
    case FDivergenceKind::SquaredHellinger: {
      const double s = std::sqrt(u) - 1.0;
      return s * s;
    }
  }
  return 0.0;
}

double conjugate_domain_upper(FDivergenceKind kind) {
  switch (kind) {
    case FDivergenceKind::KL:
      return std::numeric_limits<double>::infinity();
    case FDivergenceKind::ReverseKL:
      return 0.0;
    case FDivergenceKind::JensenShannon:
      return std::log(2.0);
    case FDivergenceKind::SquaredHellinger:
      return 1.0;
  }
  return 0.0;
}

bool in_conjugate_domain(FDivergenceKind kind, double t) {
  return t < conjugate_domain_upper(kind);
}

static void check_conjugate_domain(FDivergenceKind kind, double t) {
  if (!in_conjugate_domain(kind, t)) {
    throw DomainError("f_conjugate(" + to_string(kind) + "): t=" +
                      std::to_string(t) + " outside domain t < " +
                      std::to_string(conjugate_domain_upper(kind)));
  }
}

double f_conjugate(FDivergenceKind kind, double t) {
  check_conjugate_domain(kind, t);
  switch (kind) {
    case FDivergenceKind::KL:
      return std::exp(t - 1.0);
    case FDivergenceKind::ReverseKL:
      return -1.0 - std::log(-t);
    case FDivergenceKind::JensenShannon:
      return -std::log(2.0 - std::exp(t));
    case FDivergenceKind::SquaredHellinger:
      return t / (1.0 - t);
  }
  return 0.0;
}

double f_conjugate_deriv(FDivergenceKind kind, double t) {
  check_conjugate_domain(kind, t);
  switch (kind) {
    case FDivergenceKind::KL:
      return std::exp(t - 1.0);
    case FDivergenceKind::ReverseKL:
      return -1.0 / t;
    case FDivergenceKind::JensenShannon:
      return std::exp(t) / (2.0 - std::exp(t));
    case FDivergenceKind::SquaredHellinger: {
      const double d = 1.0 - t;
      return 1.0 / (d * d);
    }
  }
  return 0.0;
}

}  // namespace fpk
