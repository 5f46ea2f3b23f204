#pragma once

#include "fpk/checkpoint.hpp"
#include "fpk/morph.hpp"
#include "fpk/targets.hpp"

namespace fpk {

// Kernel from a pretrained discriminator / feature net:
// K(x, y) = exp(-||d(x) - d(y)||^2). Scalar-output nets are allowed.
DeepKernel kernel_from_discriminator(Net discriminator);

// Test-time-only refinement: draw n latents from Uniform[-1,1]^d, morph them
// with the discriminator-derived kernel, return g(morphed z). Never mutates
// checkpoint parameters.
Tensor refine(const Checkpoint& ckpt, const MorphConfig& config,
              const DataSampler& data_sampler, std::size_t n,
              std::uint64_t latent_seed);

// Generator-free kernel-EBM variant: morphing runs directly in data space
// (g = identity), so the energy is E(x) = -log mean_{x'} K(x, x').
std::pair<Tensor, Trajectory> ebm_morph(const Net& feature_net,
                                        const DataSampler& data_sampler,
                                        Tensor init_points,
                                        const MorphConfig& config);

struct EvalConfig {
  std::size_t n_samples = 2000;
  MorphConfig morph;                 // steps may be 0
  std::uint64_t seed = 0;
  std::size_t data_pool = 512;       // morph-target pool drawn from the mixture
  GridBounds bounds{-3.0, 3.0, -3.0, 3.0};
  std::size_t grid_resolution = 40;
};

struct EvalResult {
  CoverageReport coverage_no_morph;
  CoverageReport coverage_morphed;
  double mmd2_no_morph = 0.0;
  double mmd2_morphed = 0.0;
  Tensor samples_no_morph;
  Tensor samples_morphed;
  GridDensity target_grid;
  GridDensity generated_grid_no_morph;
  GridDensity generated_grid_morphed;
};

// Generates with 0 morph steps and with config.morph.steps, reporting both
// (the with/without-morphing contrast).
EvalResult eval_model(const Checkpoint& ckpt, const GaussianMixture2D& mix,
                      const EvalConfig& config);

}  // namespace fpk
