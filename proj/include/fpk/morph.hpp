#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "fpk/kernel.hpp"
#include "fpk/rng.hpp"

namespace fpk {

// Choice of particle update rule: the four f-divergence flows plus the
// Langevin baseline.
enum class Functional { Langevin, KL, RKL, JS, SH };

Functional functional_from_string(const std::string& name);
std::string to_string(Functional f);

struct MorphConfig {
  Functional functional = Functional::KL;
  double step_size = 0.05;
  int steps = 30;
  std::uint64_t rng_seed = 0;
  double js_alpha = 1.0;
  double clip_norm = 10.0;        // per-particle update vectors rescaled to this
  bool record_snapshots = false;

  void validate() const;
};

struct Trajectory {
  std::vector<Tensor> snapshots;          // steps+1 states when recording
  std::vector<double> divergence;         // steps+1 per-state KDE estimates
  std::vector<double> mean_update_norm;   // steps entries
};

// Supplies the data batch for a morph step.
using DataSampler = std::function<Tensor(int step, Rng& rng)>;

// Samples a fixed pool: the whole pool when it has <= 512 rows, otherwise a
// uniform 512-row minibatch.
DataSampler make_pool_sampler(Tensor pool);

// Scalar potential whose z-gradient is the Table-style update gradient for
// one particle against an explicit peer set. Log-sums are count-normalized
// (means); the dropped normalization constants rescale the RKL/SH rows only
// and are absorbed into the step size.
double morph_potential(Functional fn, const Tensor& z, const Tensor& peers,
                       const Tensor& data_batch, const Net& gen,
                       const DeepKernel& kernel, double js_alpha = 1.0);

// Update gradient for one particle with an explicit peer set (excluding z).
// Unclipped; equals d/dz of morph_potential.
Tensor update_gradient(Functional fn, const Tensor& z, const Tensor& peers,
                       const Tensor& data_batch, const Net& gen,
                       const DeepKernel& kernel, double js_alpha = 1.0);

// Batched update gradients for all particles at once, leave-one-out peer
// sums, all evaluated on the pre-step configuration. Unclipped.
Tensor update_gradients(Functional fn, const Tensor& particles,
                        const Tensor& data_batch, const Net& gen,
                        const DeepKernel& kernel, double js_alpha = 1.0);

// One synchronous update of every particle: z <- z - lambda * clip(grad),
// plus N(0, 2 lambda) noise per coordinate for the Langevin rule.
Tensor morph_step(const Tensor& particles, const MorphConfig& config,
                  const Net& gen, const DeepKernel& kernel,
                  const Tensor& data_batch, Rng& noise_rng,
                  double* mean_update_norm = nullptr);

// Runs `steps` morph steps with a fresh data batch per step.
std::pair<Tensor, Trajectory> morph(Tensor particles, const MorphConfig& config,
                                    const Net& gen, const DeepKernel& kernel,
                                    const DataSampler& sampler);

// Importance-weighted KDE estimate of D_f(r || q) over the particle set:
// mean_j (q_j / r_j) f(r_j / q_j) with leave-one-out r and data-kernel q.
// The Langevin rule reports the KL estimate.
double divergence_estimate(Functional fn, const Tensor& particles,
                           const Tensor& data_batch, const Net& gen,
                           const DeepKernel& kernel);

}  // namespace fpk
