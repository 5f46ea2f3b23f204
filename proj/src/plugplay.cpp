#include "fpk/plugplay.hpp"

#include "fpk/train.hpp"

namespace fpk {

DeepKernel kernel_from_discriminator(Net discriminator) {
  return DeepKernel{std::move(discriminator)};
}

Tensor refine(const Checkpoint& ckpt, const MorphConfig& config,
              const DataSampler& data_sampler, std::size_t n,
              std::uint64_t latent_seed) {
  const Net& gen = ckpt.require_generator();
  const DeepKernel kernel = kernel_from_discriminator(ckpt.feature);
  Rng rng(latent_seed);
  Tensor latents = sample_latents(n, ckpt.latent_dim, rng);
  latents = morph(std::move(latents), config, gen, kernel, data_sampler).first;
  return gen.forward(latents);
}

std::pair<Tensor, Trajectory> ebm_morph(const Net& feature_net,
                                        const DataSampler& data_sampler,
                                        Tensor init_points,
                                        const MorphConfig& config) {
  const Net identity = Net::identity_map();
  const DeepKernel kernel = kernel_from_discriminator(feature_net);
  return morph(std::move(init_points), config, identity, kernel, data_sampler);
}

EvalResult eval_model(const Checkpoint& ckpt, const GaussianMixture2D& mix,
                      const EvalConfig& config) {
  const Net& gen = ckpt.require_generator();
  const DeepKernel kernel = kernel_from_discriminator(ckpt.feature);
  Rng rng(config.seed);

  EvalResult result;
  const Tensor latents = sample_latents(config.n_samples, ckpt.latent_dim, rng);
  result.samples_no_morph = gen.forward(latents);

  const Tensor pool = sample_mixture(mix, config.data_pool, rng);
  const DataSampler sampler = make_pool_sampler(pool);
  MorphConfig mc = config.morph;
  mc.rng_seed = rng.raw();
  result.samples_morphed =
      gen.forward(morph(latents, mc, gen, kernel, sampler).first);

  result.coverage_no_morph = mode_coverage(result.samples_no_morph, mix);
  result.coverage_morphed = mode_coverage(result.samples_morphed, mix);

  const Tensor reference = sample_mixture(mix, config.n_samples, rng);
  result.mmd2_no_morph = mmd2_vstat(result.samples_no_morph, reference, kernel);
  result.mmd2_morphed = mmd2_vstat(result.samples_morphed, reference, kernel);

  const Tensor target_samples = sample_mixture(mix, config.n_samples, rng);
  result.target_grid = grid_density(target_samples, config.bounds,
                                    config.grid_resolution,
                                    config.grid_resolution);
  result.generated_grid_no_morph =
      grid_density(result.samples_no_morph, config.bounds,
                   config.grid_resolution, config.grid_resolution);
  result.generated_grid_morphed =
      grid_density(result.samples_morphed, config.bounds,
                   config.grid_resolution, config.grid_resolution);
  return result;
}

}  // namespace fpk
