#pragma once

#include "fpk/morph.hpp"

namespace fpk {

// Leave-one-out kernel density estimate at particle j:
// mean_{i != j} K(g(z_j), g(z_i)). Requires at least 2 particles.
double kde(std::size_t j, const Tensor& particles, const Net& gen,
           const DeepKernel& kernel);

// L_kde = mean_j (r~(z_j) - 1/n)^2 + alpha * mean_{i,j} K(g(z_j), x'_i).
// Plain-code value; the gradient route below is tape-based and the two are
// cross-checked by finite differences in tests.
double loss_kde(const Tensor& particles, const Tensor& data_batch,
                const Net& gen, const DeepKernel& kernel, double alpha);

// d L_kde / d phi as a flat vector in feature-net layer order.
std::vector<double> loss_kde_grad(const Tensor& particles,
                                  const Tensor& data_batch, const Net& gen,
                                  const DeepKernel& kernel, double alpha);

// Monte-Carlo KL kernel gradient: d/d phi of
//   -mean_x log mean_{x'} K(x, x') + mean_z log mean_{x'} K(g(z), x')
// with x from `data_x`, x' from `data_xprime`, z the (possibly morphed)
// latent batch.
std::vector<double> kl_kernel_grad(const Tensor& latents, const Tensor& data_x,
                                   const Tensor& data_xprime, const Net& gen,
                                   const DeepKernel& kernel);

// Value of the scalar KL estimator above.
double kl_estimator_value(const Tensor& latents, const Tensor& data_x,
                          const Tensor& data_xprime, const Net& gen,
                          const DeepKernel& kernel);

// Variational-form kernel gradient for an arbitrary f-divergence:
//   -E_q[ f*(v(z)) s(z) ] + E_q[ f*(v(z)) ] E_q[ s(z) ],
// where s(z) = d/d phi log mean_{x'} K(g(z), x'). Throws DomainError when a
// v output falls outside the conjugate domain (undertrained v).
std::vector<double> general_f_kernel_grad(FDivergenceKind kind,
                                          const Tensor& latents,
                                          const Tensor& data_xprime,
                                          const Net& gen,
                                          const DeepKernel& kernel,
                                          const Net& v);

// Value of E_p[v] - E_q[f*(v)] with q-side outputs clamped into the
// conjugate domain interior.
double variational_objective(FDivergenceKind kind, const Net& v,
                             const Tensor& p_latents, const Tensor& q_latents);

// One gradient-ascent step on the objective above w.r.t. the v parameters.
// Out-of-domain v outputs are clamped (with a stderr warning). Returns the
// pre-step objective value.
double variational_step(FDivergenceKind kind, Net& v, const Tensor& p_latents,
                        const Tensor& q_latents, double lr);

// Combined kernel gradient: grad L_kde + beta * KL kernel gradient.
// Bit-identical to summing the two routes above.
std::vector<double> combined_kernel_grad(const Tensor& latents,
                                         const Tensor& data_x,
                                         const Tensor& data_xprime,
                                         const Net& gen,
                                         const DeepKernel& kernel,
                                         double alpha, double beta);

// MMD^2 V-statistic:
// mean_ij K(X_i,X_j) - 2 mean_ij K(X_i,Y_j) + mean_ij K(Y_i,Y_j).
double mmd2_vstat(const Tensor& X, const Tensor& Y, const DeepKernel& kernel);

// d/d theta of mmd2_vstat(g(Z), data) with the kernel parameters frozen.
std::vector<double> generator_grad(const Tensor& latents,
                                   const Tensor& data_batch, const Net& gen,
                                   const DeepKernel& kernel);

// Negative-log-likelihood-form generator gradient: d/d theta of
//   -mean_x log mean_z K(g(z), x) + mean_z log mean_{z'} K(g(z), g(z')).
std::vector<double> nll_generator_grad(const Tensor& latents,
                                       const Tensor& data_batch,
                                       const Net& gen,
                                       const DeepKernel& kernel);

// Adam with a flat parameter vector.
class Adam {
 public:
  Adam(double lr, double beta1 = 0.5, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::vector<double>& params, const std::vector<double>& grad);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

}  // namespace fpk
