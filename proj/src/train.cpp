#include "fpk/train.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

namespace fpk {

void TrainConfig::validate() const {
  if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2");
  if (!(kernel_lr > 0.0) || !(gen_lr > 0.0)) {
    throw ConfigError("train: learning rates must be > 0");
  }
  if (alpha < 0.0 || beta < 0.0) {
    throw ConfigError("train: alpha and beta must be >= 0");
  }
  if (morph_steps < 0) throw ConfigError("train: morph_steps must be >= 0");
  if (iterations < 0) throw ConfigError("train: iterations must be >= 0");
  if (latent_dim < 1 || data_dim < 1 || hidden < 1 || feature_dim < 1) {
    throw ConfigError("train: dimensions must be >= 1");
  }
}

Tensor sample_latents(std::size_t n, int dim, Rng& rng) {
  Tensor z(n, static_cast<std::size_t>(dim));
  for (double& v : z.data()) v = rng.uniform(-1.0, 1.0);
  return z;
}

namespace {

double vec_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

}  // namespace

std::string metrics_csv_header() {
  return "iter,loss_kde,kl_grad_norm,mmd2,gen_grad_norm,wallclock_ms";
}

std::string metrics_csv_row(const MetricsRow& row) {
  std::ostringstream os;
  os << row.iter << ',' << format_double(row.loss_kde) << ','
     << format_double(row.kl_grad_norm) << ',' << format_double(row.mmd2)
     << ',' << format_double(row.gen_grad_norm) << ','
     << format_double(row.wallclock_ms);
  return os.str();
}

TrainResult train(const TrainConfig& config, const GaussianMixture2D& target) {
  config.validate();
  target.validate();
  const std::size_t n = static_cast<std::size_t>(config.batch_size);

  Rng rng(config.seed);
  MlpSpec gen_spec{{config.latent_dim, config.hidden, config.data_dim},
                   Activation::Tanh};
  MlpSpec feat_spec{{config.data_dim, config.hidden, config.feature_dim},
                    Activation::Relu};
  Net gen = Net::mlp(gen_spec, init_mlp(gen_spec, rng));
  DeepKernel kernel{Net::mlp(feat_spec, init_mlp(feat_spec, rng))};

  Adam kernel_opt(config.kernel_lr, config.adam_beta1, config.adam_beta2);
  Adam gen_opt(config.gen_lr, config.adam_beta1, config.adam_beta2);

  auto make_checkpoint = [&](int done_iters, bool aborted) {
    Checkpoint ckpt;
    ckpt.latent_dim = config.latent_dim;
    ckpt.generator = gen;
    ckpt.feature = kernel.features;
    ckpt.metadata["iterations"] = std::to_string(done_iters);
    ckpt.metadata["seed"] = std::to_string(config.seed);
    ckpt.metadata["morph_steps"] = std::to_string(config.morph_steps);
    ckpt.metadata["functional"] = to_string(config.functional);
    ckpt.metadata["alpha"] = format_double(config.alpha);
    ckpt.metadata["beta"] = format_double(config.beta);
    ckpt.metadata["train_kernel"] = config.train_kernel ? "1" : "0";
    ckpt.metadata["aborted"] = aborted ? "1" : "0";
    return ckpt;
  };

  TrainResult result;
  Net last_good_gen = gen;
  Net last_good_feat = kernel.features;

  for (int iter = 0; iter < config.iterations; ++iter) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const Tensor data1 = sample_mixture(target, n, rng);
      const Tensor data2 = sample_mixture(target, n, rng);
      Tensor latents = sample_latents(n, config.latent_dim, rng);

      if (config.morph_steps > 0) {
        MorphConfig mc;
        mc.functional = config.functional;
        mc.step_size = config.morph_step_size;
        mc.steps = config.morph_steps;
        mc.clip_norm = config.morph_clip_norm;
        mc.rng_seed = rng.raw();
        latents = morph(std::move(latents), mc, gen, kernel,
                        [&](int, Rng& morph_rng) {
                          return sample_mixture(target, n, morph_rng);
                        })
                      .first;
      }

      MetricsRow row;
      row.iter = iter;
      row.loss_kde = loss_kde(latents, data1, gen, kernel, config.alpha);

      row.kl_grad_norm = 0.0;
      if (config.train_kernel) {
        std::vector<double> kgrad =
            loss_kde_grad(latents, data1, gen, kernel, config.alpha);
        if (config.beta != 0.0) {
          const std::vector<double> kl =
              kl_kernel_grad(latents, data1, data2, gen, kernel);
          row.kl_grad_norm = vec_norm(kl);
          for (std::size_t i = 0; i < kgrad.size(); ++i)
            kgrad[i] += config.beta * kl[i];
        }
        std::vector<double> phi = flatten(kernel.features.params);
        kernel_opt.step(phi, kgrad);
        kernel.features.params = unflatten(feat_spec, phi);
      }

      row.mmd2 = mmd2_vstat(gen.forward(latents), data1, kernel);
      const std::vector<double> ggrad =
          generator_grad(latents, data1, gen, kernel);
      row.gen_grad_norm = vec_norm(ggrad);
      std::vector<double> theta = flatten(gen.params);
      gen_opt.step(theta, ggrad);
      gen.params = unflatten(gen_spec, theta);

      if (!std::isfinite(row.loss_kde) || !std::isfinite(row.mmd2) ||
          !gen.params.all_finite() || !kernel.features.params.all_finite()) {
        throw NumericError("train: non-finite loss or parameters");
      }

      const auto t1 = std::chrono::steady_clock::now();
      row.wallclock_ms =
          std::chrono::duration<double, std::milli>(t1 - t0).count();
      result.metrics.push_back(row);
      last_good_gen = gen;
      last_good_feat = kernel.features;
    } catch (const NumericError&) {
      gen = last_good_gen;
      kernel.features = last_good_feat;
      result.aborted = true;
      result.abort_iter = iter;
      result.checkpoint = make_checkpoint(iter, true);
      return result;
    }
  }
  result.checkpoint = make_checkpoint(config.iterations, false);
  return result;
}

}  // namespace fpk
