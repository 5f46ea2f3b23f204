#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fpk/losses.hpp"

namespace fpk {

struct CheckResult {
  std::string name;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

// Runs the full oracle battery: finite-difference checks for every update
// rule and loss gradient, the Fenchel-conjugate grid oracle, and the
// per-sample KL gradient cross-check. `fault_rule` (test hook) flips the
// sign of the named update rule's gradient before comparison.
std::vector<CheckResult> run_gradchecks(std::uint64_t seed,
                                        const std::string& fault_rule = "");

// Numeric conjugate sup_u { u t - f(u) } over a log-spaced u grid with
// golden-section refinement.
double numeric_conjugate(FDivergenceKind kind, double t);

// Literal per-sample assembly of the KL kernel-gradient formula:
// -mean_x grad_phi log mean_{x'} K(x,x') + mean_z grad_phi log mean_{x'}
// K(g(z),x'), one small tape per sample. Oracle route, independent of
// kl_kernel_grad's batched tape.
std::vector<double> kl_grad_per_sample(const Tensor& latents,
                                       const Tensor& data_x,
                                       const Tensor& data_xprime,
                                       const Net& gen,
                                       const DeepKernel& kernel);

}  // namespace fpk
