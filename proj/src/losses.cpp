#include "fpk/losses.hpp"

#include <cmath>
#include <iostream>

namespace fpk {

namespace {

void require_nonempty(const Tensor& batch, const char* what) {
  if (batch.rows() == 0) {
    throw PreconditionError(std::string(what) + ": empty batch");
  }
}

// Column of log mean_j K(row_i, rows_j) from a variable feature matrix and a
// second (variable or constant) feature matrix.
Var log_mean_kernel_rows(Tape& t, Var fa, Var fb, std::size_t count_b) {
  Var col = t.rows_logsumexp(t.neg(t.pair_sqdist(fa, fb)));
  return t.add_scalar(col, -std::log(static_cast<double>(count_b)));
}

void check_finite(const std::vector<double>& grad, const char* what) {
  for (double v : grad) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(what) + ": non-finite gradient");
    }
  }
}

}  // namespace

double kde(std::size_t j, const Tensor& particles, const Net& gen,
           const DeepKernel& kernel) {
  const std::size_t n = particles.rows();
  if (n < 2) throw PreconditionError("kde: need at least 2 particles");
  if (j >= n) throw PreconditionError("kde: particle index out of range");
  const Tensor gx = gen.forward(particles);
  const Tensor g = kernel.gram(gx.row_slice(j), gx);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (i != j) acc += g[i];
  return acc / static_cast<double>(n - 1);
}

double loss_kde(const Tensor& particles, const Tensor& data_batch,
                const Net& gen, const DeepKernel& kernel, double alpha) {
  const std::size_t n = particles.rows();
  if (n < 2) throw PreconditionError("loss_kde: need at least 2 particles");
  require_nonempty(data_batch, "loss_kde");
  const Tensor gx = gen.forward(particles);
  const Tensor g_rr = kernel.gram(gx, gx);
  const Tensor g_rq = kernel.gram(gx, data_batch);
  double shape_term = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double r = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (i != j) r += g_rr.at(j, i);
    r /= static_cast<double>(n - 1);
    const double dev = r - 1.0 / static_cast<double>(n);
    shape_term += dev * dev;
  }
  shape_term /= static_cast<double>(n);
  double adv_term = 0.0;
  for (double v : g_rq.data()) adv_term += v;
  adv_term /= static_cast<double>(g_rq.size());
  return shape_term + alpha * adv_term;
}

std::vector<double> loss_kde_grad(const Tensor& particles,
                                  const Tensor& data_batch, const Net& gen,
                                  const DeepKernel& kernel, double alpha) {
  const std::size_t n = particles.rows();
  if (n < 2) throw PreconditionError("loss_kde_grad: need at least 2 particles");
  require_nonempty(data_batch, "loss_kde_grad");

  Tape t;
  MlpVars feat_vars = kernel.features.leaves(t);
  Var gx = t.leaf(gen.forward(particles));
  Var fg = kernel.features.forward(t, feat_vars, gx);
  Var fd = kernel.features.forward(t, feat_vars, t.leaf(data_batch));

  Var k_rr = t.exp(t.neg(t.pair_sqdist(fg, fg)));
  Tensor off_diag(n, n, 1.0);
  for (std::size_t i = 0; i < n; ++i) off_diag.at(i, i) = 0.0;
  Var r_col = t.scale(t.row_sum(t.mul(k_rr, t.leaf(off_diag))),
                      1.0 / static_cast<double>(n - 1));
  Var shape = t.mean(t.square(t.add_scalar(r_col, -1.0 / static_cast<double>(n))));
  Var adv = t.mean(t.exp(t.neg(t.pair_sqdist(fg, fd))));
  Var loss = t.add(shape, t.scale(adv, alpha));
  t.backward(loss);
  std::vector<double> grad = collect_grads(t, feat_vars);
  check_finite(grad, "loss_kde_grad");
  return grad;
}

namespace {

// Shared builder for the KL estimator scalar.
double kl_build(const Tensor& latents, const Tensor& data_x,
                const Tensor& data_xprime, const Net& gen,
                const DeepKernel& kernel, std::vector<double>* grad_out) {
  require_nonempty(latents, "kl_kernel_grad: latent batch");
  require_nonempty(data_x, "kl_kernel_grad: data batch");
  require_nonempty(data_xprime, "kl_kernel_grad: second data batch");

  Tape t;
  MlpVars feat_vars = kernel.features.leaves(t);
  Var fx = kernel.features.forward(t, feat_vars, t.leaf(data_x));
  Var fxp = kernel.features.forward(t, feat_vars, t.leaf(data_xprime));
  Var fg =
      kernel.features.forward(t, feat_vars, t.leaf(gen.forward(latents)));

  Var term_p = t.mean(log_mean_kernel_rows(t, fx, fxp, data_xprime.rows()));
  Var term_q = t.mean(log_mean_kernel_rows(t, fg, fxp, data_xprime.rows()));
  Var obj = t.add(t.neg(term_p), term_q);
  if (grad_out != nullptr) {
    t.backward(obj);
    *grad_out = collect_grads(t, feat_vars);
    check_finite(*grad_out, "kl_kernel_grad");
  }
  return t.value(obj).scalar();
}

}  // namespace

std::vector<double> kl_kernel_grad(const Tensor& latents, const Tensor& data_x,
                                   const Tensor& data_xprime, const Net& gen,
                                   const DeepKernel& kernel) {
  std::vector<double> grad;
  kl_build(latents, data_x, data_xprime, gen, kernel, &grad);
  return grad;
}

double kl_estimator_value(const Tensor& latents, const Tensor& data_x,
                          const Tensor& data_xprime, const Net& gen,
                          const DeepKernel& kernel) {
  return kl_build(latents, data_x, data_xprime, gen, kernel, nullptr);
}

std::vector<double> general_f_kernel_grad(FDivergenceKind kind,
                                          const Tensor& latents,
                                          const Tensor& data_xprime,
                                          const Net& gen,
                                          const DeepKernel& kernel,
                                          const Net& v) {
  require_nonempty(latents, "general_f_kernel_grad: latent batch");
  require_nonempty(data_xprime, "general_f_kernel_grad: data batch");

  // Conjugate weights are constants w.r.t. phi.
  const Tensor v_out = v.forward(latents);
  const std::size_t n = latents.rows();
  Tensor weights(n, 1);
  double w_mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double vt = v_out.at(i, 0);
    if (!in_conjugate_domain(kind, vt)) {
      throw DomainError("general_f_kernel_grad: v output " +
                        std::to_string(vt) + " outside f* domain for " +
                        to_string(kind) + " (undertrained v?)");
    }
    weights.at(i, 0) = f_conjugate(kind, vt);
    w_mean += weights.at(i, 0);
  }
  w_mean /= static_cast<double>(n);

  Tape t;
  MlpVars feat_vars = kernel.features.leaves(t);
  Var fxp = kernel.features.forward(t, feat_vars, t.leaf(data_xprime));
  Var fg = kernel.features.forward(t, feat_vars, t.leaf(gen.forward(latents)));
  Var lq = log_mean_kernel_rows(t, fg, fxp, data_xprime.rows());
  Var obj = t.add(t.neg(t.mean(t.mul(t.leaf(weights), lq))),
                  t.scale(t.mean(lq), w_mean));
  t.backward(obj);
  std::vector<double> grad = collect_grads(t, feat_vars);
  check_finite(grad, "general_f_kernel_grad");
  return grad;
}

namespace {

double variational_build(FDivergenceKind kind, const Net& v,
                         const Tensor& p_latents, const Tensor& q_latents,
                         Tape& t, MlpVars& v_vars, Var& obj) {
  require_nonempty(p_latents, "variational objective: p batch");
  require_nonempty(q_latents, "variational objective: q batch");
  v_vars = v.leaves(t);
  Var vp = v.forward(t, v_vars, t.leaf(p_latents));
  Var vq = v.forward(t, v_vars, t.leaf(q_latents));
  const double upper = conjugate_domain_upper(kind);
  if (std::isfinite(upper)) {
    const double bound = upper - 1e-3;
    bool clamped = false;
    for (double val : t.value(vq).data()) {
      if (val > bound) clamped = true;
    }
    if (clamped) {
      std::cerr << "[fpk] warning: clamping v outputs into f* domain ("
                << to_string(kind) << ")\n";
    }
    vq = t.clamp_max(vq, bound);
  }
  obj = t.sub(t.mean(vp), t.mean(t.fconj(vq, kind)));
  return t.value(obj).scalar();
}

}  // namespace

double variational_objective(FDivergenceKind kind, const Net& v,
                             const Tensor& p_latents, const Tensor& q_latents) {
  Tape t;
  MlpVars vars;
  Var obj;
  return variational_build(kind, v, p_latents, q_latents, t, vars, obj);
}

double variational_step(FDivergenceKind kind, Net& v, const Tensor& p_latents,
                        const Tensor& q_latents, double lr) {
  if (v.identity) throw ConfigError("variational_step: v must be an MLP");
  Tape t;
  MlpVars vars;
  Var obj;
  const double value = variational_build(kind, v, p_latents, q_latents, t, vars, obj);
  if (lr == 0.0) return value;
  t.backward(obj);
  std::vector<double> grad = collect_grads(t, vars);
  check_finite(grad, "variational_step");
  std::vector<double> flat = flatten(v.params);
  for (std::size_t i = 0; i < flat.size(); ++i) flat[i] += lr * grad[i];
  v.params = unflatten(v.spec, flat);
  return value;
}

std::vector<double> combined_kernel_grad(const Tensor& latents,
                                         const Tensor& data_x,
                                         const Tensor& data_xprime,
                                         const Net& gen,
                                         const DeepKernel& kernel,
                                         double alpha, double beta) {
  std::vector<double> grad = loss_kde_grad(latents, data_x, gen, kernel, alpha);
  if (beta != 0.0) {
    const std::vector<double> kl =
        kl_kernel_grad(latents, data_x, data_xprime, gen, kernel);
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += beta * kl[i];
  }
  return grad;
}

double mmd2_vstat(const Tensor& X, const Tensor& Y, const DeepKernel& kernel) {
  require_nonempty(X, "mmd2_vstat: X");
  require_nonempty(Y, "mmd2_vstat: Y");
  auto block_mean = [&](const Tensor& A, const Tensor& B) {
    const Tensor g = kernel.gram(A, B);
    double s = 0.0;
    for (double v : g.data()) s += v;
    return s / static_cast<double>(g.size());
  };
  return block_mean(X, X) - 2.0 * block_mean(X, Y) + block_mean(Y, Y);
}

std::vector<double> generator_grad(const Tensor& latents,
                                   const Tensor& data_batch, const Net& gen,
                                   const DeepKernel& kernel) {
  require_nonempty(latents, "generator_grad: latent batch");
  require_nonempty(data_batch, "generator_grad: data batch");
  if (gen.identity) throw ConfigError("generator_grad: generator must be an MLP");

  Tape t;
  MlpVars gen_vars = gen.leaves(t);
  MlpVars feat_vars = kernel.features.leaves(t);
  Var g = gen.forward(t, gen_vars, t.leaf(latents));
  Var fg = kernel.features.forward(t, feat_vars, g);
  // Feature map of real data is constant w.r.t. theta.
  Var fd = t.leaf(kernel.features.forward(data_batch));
  Var term_rr = t.mean(t.exp(t.neg(t.pair_sqdist(fg, fg))));
  Var term_rp = t.mean(t.exp(t.neg(t.pair_sqdist(fg, fd))));
  Var obj = t.sub(term_rr, t.scale(term_rp, 2.0));
  t.backward(obj);
  std::vector<double> grad = collect_grads(t, gen_vars);
  check_finite(grad, "generator_grad");
  return grad;
}

std::vector<double> nll_generator_grad(const Tensor& latents,
                                       const Tensor& data_batch,
                                       const Net& gen,
                                       const DeepKernel& kernel) {
  require_nonempty(latents, "nll_generator_grad: latent batch");
  require_nonempty(data_batch, "nll_generator_grad: data batch");
  if (gen.identity) {
    throw ConfigError("nll_generator_grad: generator must be an MLP");
  }

  Tape t;
  MlpVars gen_vars = gen.leaves(t);
  MlpVars feat_vars = kernel.features.leaves(t);
  Var g = gen.forward(t, gen_vars, t.leaf(latents));
  Var fg = kernel.features.forward(t, feat_vars, g);
  Var fd = t.leaf(kernel.features.forward(data_batch));
  // -mean_x log mean_z K(g(z), x): rows over data, columns over latents.
  Var term_data = t.mean(log_mean_kernel_rows(t, fd, fg, latents.rows()));
  Var term_self = t.mean(log_mean_kernel_rows(t, fg, fg, latents.rows()));
  Var obj = t.add(t.neg(term_data), term_self);
  t.backward(obj);
  std::vector<double> grad = collect_grads(t, gen_vars);
  check_finite(grad, "nll_generator_grad");
  return grad;
}

void Adam::step(std::vector<double>& params, const std::vector<double>& grad) {
  if (params.size() != grad.size()) {
    throw DimensionError("adam: parameter/gradient size mismatch");
  }
  if (m_.empty()) {
    m_.assign(params.size(), 0.0);
    v_.assign(params.size(), 0.0);
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

}  // namespace fpk
