#pragma once

#include <string>

namespace fpk {

// The f-divergence family used throughout: D_f(p||q) = \int q f(p/q) with f
// convex and f(1) = 0.
enum class FDivergenceKind { KL, ReverseKL, JensenShannon, SquaredHellinger };

std::string to_string(FDivergenceKind kind);
FDivergenceKind fdivergence_from_string(const std::string& name);

// f(u) for u > 0. Throws DomainError for u <= 0.
double f_value(FDivergenceKind kind, double u);

// Fenchel conjugate f*(t) = sup_u { u t - f(u) }, closed form per kind:
//   KL: exp(t-1), RKL: -1-log(-t), JS: -log(2-exp(t)), SH: t/(1-t).
// Throws DomainError when t is outside the kind's conjugate domain.
double f_conjugate(FDivergenceKind kind, double t);

// d f*(t) / dt, same domain as f_conjugate.
double f_conjugate_deriv(FDivergenceKind kind, double t);

// Upper bound of the conjugate domain (open); +inf for KL. RKL is t < 0,
// JS is t < log 2, SH is t < 1.
double conjugate_domain_upper(FDivergenceKind kind);

bool in_conjugate_domain(FDivergenceKind kind, double t);

}  // namespace fpk
