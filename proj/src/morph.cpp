#include "fpk/morph.hpp"

#include <algorithm>
#include <cmath>

namespace fpk {

namespace {

constexpr double kDiagMask = -1e30;

FDivergenceKind diag_kind(Functional fn) {
  switch (fn) {
    case Functional::Langevin:
    case Functional::KL:
      return FDivergenceKind::KL;
    case Functional::RKL:
      return FDivergenceKind::ReverseKL;
    case Functional::JS:
      return FDivergenceKind::JensenShannon;
    case Functional::SH:
      return FDivergenceKind::SquaredHellinger;
  }
  return FDivergenceKind::KL;
}

double logmeanexp(const std::vector<double>& vals) {
  double m = vals[0];
  for (double v : vals) m = std::max(m, v);
  double s = 0.0;
  for (double v : vals) s += std::exp(v - m);
  return m + std::log(s / static_cast<double>(vals.size()));
}

// Potential column for every row of F against constant peer / data features.
// All log-sums are count-normalized means; the constants this drops relative
// to the plain-sum rows only rescale RKL/SH and are absorbed into lambda.
Var potential_column(Tape& t, Functional fn, Var F, Var peer_feats,
                     const Tensor* diag_mask, std::size_t peer_count,
                     Var data_feats, std::size_t data_count, double js_alpha) {
  Var lq = t.rows_logsumexp(t.neg(t.pair_sqdist(F, data_feats)));
  lq = t.add_scalar(lq, -std::log(static_cast<double>(data_count)));
  if (fn == Functional::Langevin) return t.neg(lq);

  Var neg_rr = t.neg(t.pair_sqdist(F, peer_feats));
  if (diag_mask != nullptr) neg_rr = t.add(neg_rr, t.leaf(*diag_mask));
  Var lr = t.add_scalar(t.rows_logsumexp(neg_rr),
                        -std::log(static_cast<double>(peer_count)));
  switch (fn) {
    case Functional::KL:
      return t.sub(lr, lq);
    case Functional::RKL:
      return t.neg(t.exp(t.sub(lq, lr)));
    case Functional::SH:
      return t.neg(t.exp(t.scale(t.sub(lq, lr), 0.5)));
    case Functional::JS:
      return t.scale(t.sub(t.add_scalar(lr, std::log(2.0)),
                           t.logaddexp(lr, t.add_scalar(lq, std::log(js_alpha)))),
                     0.5);
    case Functional::Langevin:
      break;
  }
  throw ConfigError("unknown functional");
}

// Gradients of the summed potential w.r.t. the variable particle rows Z.
Tensor rule_gradients(Functional fn, const Tensor& Z,
                      const Tensor& peer_positions, bool leave_one_out,
                      const Tensor& data_batch, const Net& gen,
                      const DeepKernel& kernel, double js_alpha) {
  if (data_batch.rows() == 0) {
    throw PreconditionError("update_gradient: empty data batch");
  }
  if (fn != Functional::Langevin && peer_positions.rows() == 0) {
    throw PreconditionError("update_gradient: interacting rule needs peers");
  }
  if (!(js_alpha > 0.0)) {
    throw ConfigError("update_gradient: js_alpha must be > 0");
  }

  Tape t;
  Var Zv = t.leaf(Z);
  MlpVars gen_vars = gen.leaves(t);
  Var Xg = gen.forward(t, gen_vars, Zv);
  MlpVars feat_vars = kernel.features.leaves(t);
  Var F = kernel.features.forward(t, feat_vars, Xg);

  Var data_feats = t.leaf(kernel.features.forward(data_batch));

  Var peer_feats{};
  Tensor mask;
  const Tensor* mask_ptr = nullptr;
  std::size_t peer_count = peer_positions.rows();
  if (fn != Functional::Langevin) {
    peer_feats = t.leaf(kernel.features.forward(gen.forward(peer_positions)));
    if (leave_one_out) {
      mask = Tensor(Z.rows(), peer_positions.rows());
      for (std::size_t i = 0; i < Z.rows(); ++i) mask.at(i, i) = kDiagMask;
      mask_ptr = &mask;
      peer_count -= 1;
    }
  }

  Var pot = potential_column(t, fn, F, peer_feats, mask_ptr, peer_count,
                             data_feats, data_batch.rows(), js_alpha);
  t.backward(t.sum(pot));
  Tensor grads = t.grad(Zv);
  for (std::size_t i = 0; i < grads.rows(); ++i) {
    for (std::size_t j = 0; j < grads.cols(); ++j) {
      if (!std::isfinite(grads.at(i, j))) {
        throw NumericError("update_gradient: non-finite gradient for particle " +
                           std::to_string(i) + " (" + to_string(fn) +
                           " rule; vanishing kernel sums?)");
      }
    }
  }
  return grads;
}

}  // namespace

Functional functional_from_string(const std::string& name) {
  if (name == "langevin") return Functional::Langevin;
  if (name == "kl") return Functional::KL;
  if (name == "rkl") return Functional::RKL;
  if (name == "js") return Functional::JS;
  if (name == "sh") return Functional::SH;
  throw ConfigError("unknown functional: '" + name +
                    "' (expected langevin, kl, rkl, js or sh)");
}

std::string to_string(Functional f) {
  switch (f) {
    case Functional::Langevin: return "langevin";
    case Functional::KL: return "kl";
    case Functional::RKL: return "rkl";
    case Functional::JS: return "js";
    case Functional::SH: return "sh";
  }
  return "?";
}

void MorphConfig::validate() const {
  if (!(step_size > 0.0)) throw ConfigError("morph: step_size must be > 0");
  if (steps < 0) throw ConfigError("morph: steps must be >= 0");
  if (!(js_alpha > 0.0)) throw ConfigError("morph: js_alpha must be > 0");
  if (!(clip_norm > 0.0)) throw ConfigError("morph: clip_norm must be > 0");
}

DataSampler make_pool_sampler(Tensor pool) {
  return [pool = std::move(pool)](int /*step*/, Rng& rng) -> Tensor {
    constexpr std::size_t kMaxBatch = 512;
    if (pool.rows() <= kMaxBatch) return pool;
    Tensor batch(kMaxBatch, pool.cols());
    for (std::size_t i = 0; i < kMaxBatch; ++i) {
      const std::size_t r = rng.below(pool.rows());
      for (std::size_t j = 0; j < pool.cols(); ++j)
        batch.at(i, j) = pool.at(r, j);
    }
    return batch;
  };
}

double morph_potential(Functional fn, const Tensor& z, const Tensor& peers,
                       const Tensor& data_batch, const Net& gen,
                       const DeepKernel& kernel, double js_alpha) {
  // Independent plain-code route; the tape path is checked against its
  // finite differences.
  const Tensor fz = kernel.features.forward(gen.forward(z));
  auto log_mean_k = [&](const Tensor& pts, bool through_gen) {
    std::vector<double> vals(pts.rows());
    const Tensor fp =
        kernel.features.forward(through_gen ? gen.forward(pts) : pts);
    for (std::size_t i = 0; i < pts.rows(); ++i) {
      double d = 0.0;
      for (std::size_t l = 0; l < fz.cols(); ++l) {
        const double diff = fz[l] - fp.at(i, l);
        d += diff * diff;
      }
      vals[i] = -d;
    }
    return logmeanexp(vals);
  };
  const double lq = log_mean_k(data_batch, false);
  if (fn == Functional::Langevin) return -lq;
  const double lr = log_mean_k(peers, true);
  switch (fn) {
    case Functional::KL:
      return lr - lq;
    case Functional::RKL:
      return -std::exp(lq - lr);
    case Functional::SH:
      return -std::exp(0.5 * (lq - lr));
    case Functional::JS: {
      const double a = lr;
      const double b = lq + std::log(js_alpha);
      const double m = std::max(a, b);
      const double lab = m + std::log(std::exp(a - m) + std::exp(b - m));
      return 0.5 * (lr + std::log(2.0) - lab);
    }
    case Functional::Langevin:
      break;
  }
  throw ConfigError("unknown functional");
}

Tensor update_gradient(Functional fn, const Tensor& z, const Tensor& peers,
                       const Tensor& data_batch, const Net& gen,
                       const DeepKernel& kernel, double js_alpha) {
  return rule_gradients(fn, z, peers, /*leave_one_out=*/false, data_batch, gen,
                        kernel, js_alpha);
}

Tensor update_gradients(Functional fn, const Tensor& particles,
                        const Tensor& data_batch, const Net& gen,
                        const DeepKernel& kernel, double js_alpha) {
  if (fn != Functional::Langevin && particles.rows() < 2) {
    throw PreconditionError(
        "update_gradients: interacting rules need at least 2 particles");
  }
  return rule_gradients(fn, particles, particles, /*leave_one_out=*/true,
                        data_batch, gen, kernel, js_alpha);
}

Tensor morph_step(const Tensor& particles, const MorphConfig& config,
                  const Net& gen, const DeepKernel& kernel,
                  const Tensor& data_batch, Rng& noise_rng,
                  double* mean_update_norm) {
  config.validate();
  Tensor grads = update_gradients(config.functional, particles, data_batch,
                                  gen, kernel, config.js_alpha);
  Tensor next = particles;
  double norm_acc = 0.0;
  for (std::size_t i = 0; i < particles.rows(); ++i) {
    double norm = 0.0;
    for (std::size_t j = 0; j < particles.cols(); ++j)
      norm += grads.at(i, j) * grads.at(i, j);
    norm = std::sqrt(norm);
    const double rescale =
        norm > config.clip_norm ? config.clip_norm / norm : 1.0;
    for (std::size_t j = 0; j < particles.cols(); ++j)
      next.at(i, j) -= config.step_size * rescale * grads.at(i, j);
    norm_acc += config.step_size * rescale * norm;
  }
  if (config.functional == Functional::Langevin) {
    const double sd = std::sqrt(2.0 * config.step_size);
    for (std::size_t i = 0; i < next.rows(); ++i)
      for (std::size_t j = 0; j < next.cols(); ++j)
        next.at(i, j) += sd * noise_rng.normal();
  }
  if (!next.all_finite()) {
    throw NumericError("morph_step: non-finite particle after update");
  }
  if (mean_update_norm != nullptr) {
    *mean_update_norm = norm_acc / static_cast<double>(particles.rows());
  }
  return next;
}

std::pair<Tensor, Trajectory> morph(Tensor particles, const MorphConfig& config,
                                    const Net& gen, const DeepKernel& kernel,
                                    const DataSampler& sampler) {
  config.validate();
  Rng rng(config.rng_seed);
  Trajectory traj;
  if (config.record_snapshots) traj.snapshots.push_back(particles);
  for (int step = 0; step < config.steps; ++step) {
    const Tensor batch = sampler(step, rng);
    traj.divergence.push_back(divergence_estimate(config.functional, particles,
                                                  batch, gen, kernel));
    double mean_norm = 0.0;
    particles =
        morph_step(particles, config, gen, kernel, batch, rng, &mean_norm);
    traj.mean_update_norm.push_back(mean_norm);
    if (config.record_snapshots) traj.snapshots.push_back(particles);
  }
  const Tensor final_batch = sampler(config.steps, rng);
  traj.divergence.push_back(divergence_estimate(config.functional, particles,
                                                final_batch, gen, kernel));
  return {std::move(particles), std::move(traj)};
}

double divergence_estimate(Functional fn, const Tensor& particles,
                           const Tensor& data_batch, const Net& gen,
                           const DeepKernel& kernel) {
  const std::size_t n = particles.rows();
  if (n < 2) throw PreconditionError("divergence_estimate: need >= 2 particles");
  if (data_batch.rows() == 0) {
    throw PreconditionError("divergence_estimate: empty data batch");
  }
  const Tensor gx = gen.forward(particles);
  const Tensor g_rr = kernel.gram(gx, gx);
  const Tensor g_rq = kernel.gram(gx, data_batch);
  const FDivergenceKind kind = diag_kind(fn);
  double acc = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double r = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (i != j) r += g_rr.at(j, i);
    r /= static_cast<double>(n - 1);
    double q = 0.0;
    for (std::size_t i = 0; i < data_batch.rows(); ++i) q += g_rq.at(j, i);
    q /= static_cast<double>(data_batch.rows());
    // Kernel sums underflow to 0 for particles far from everything; clamp
    // the ratio so the diagnostic stays finite instead of throwing.
    constexpr double kFloor = 1e-300;
    const double rho =
        std::clamp(std::max(r, kFloor) / std::max(q, kFloor), 1e-15, 1e15);
    acc += f_value(kind, rho) / rho;
  }
  return acc / static_cast<double>(n);
}

}  // namespace fpk
