#pragma once

#include "fpk/checkpoint.hpp"
#include "fpk/losses.hpp"
#include "fpk/targets.hpp"

namespace fpk {

struct TrainConfig {
  int batch_size = 128;      // n: particles, data batch, latent batch
  double kernel_lr = 1e-3;
  double gen_lr = 1e-3;
  double alpha = 1.0;        // L_kde adversarial weight
  double beta = 1.0;         // KL-gradient weight in the combined update
  int morph_steps = 5;       // latent morph steps per training iteration
  double morph_step_size = 0.05;
  double morph_clip_norm = 10.0;  // per-particle update cap for training morphs
  Functional functional = Functional::KL;
  int iterations = 5000;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  std::uint64_t seed = 0;
  int latent_dim = 2;
  int data_dim = 2;
  int hidden = 16;
  int feature_dim = 16;
  bool train_kernel = true;  // false: frozen random features (MMD-only baseline)

  void validate() const;
};

struct MetricsRow {
  int iter;
  double loss_kde;
  double kl_grad_norm;
  double mmd2;
  double gen_grad_norm;
  double wallclock_ms;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<MetricsRow> metrics;
  bool aborted = false;
  int abort_iter = -1;
};

// Alternating kernel/generator training against a mixture target. Aborts on
// a non-finite loss, returning the last finite checkpoint.
TrainResult train(const TrainConfig& config, const GaussianMixture2D& target);

// Draws n latent points from Uniform[-1,1]^dim.
Tensor sample_latents(std::size_t n, int dim, Rng& rng);

std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRow& row);

}  // namespace fpk
