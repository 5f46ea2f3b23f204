#include "fpk/gradcheck.hpp"

#include <cmath>

namespace fpk {

namespace {

Tensor randn(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Tensor t(r, c);
  for (double& v : t.data()) v = scale * rng.normal();
  return t;
}

Net random_mlp(std::vector<int> widths, Activation act, Rng& rng) {
  MlpSpec spec{std::move(widths), act};
  return Net::mlp(spec, init_mlp(spec, rng));
}

Tensor flat_tensor(const std::vector<double>& flat) {
  return Tensor({1, flat.size()}, flat);
}

double vec_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Plain value of the NLL generator objective.
double nll_objective(const Tensor& latents, const Tensor& data,
                     const Net& gen, const DeepKernel& kernel) {
  const Tensor gx = gen.forward(latents);
  const Tensor g_dz = kernel.gram(data, gx);
  const Tensor g_zz = kernel.gram(gx, gx);
  auto mean_log_row_mean = [](const Tensor& g) {
    double acc = 0.0;
    for (std::size_t i = 0; i < g.rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < g.cols(); ++j) s += g.at(i, j);
      acc += std::log(s / static_cast<double>(g.cols()));
    }
    return acc / static_cast<double>(g.rows());
  };
  return -mean_log_row_mean(g_dz) + mean_log_row_mean(g_zz);
}

struct Battery {
  std::vector<CheckResult> results;
  void add(std::string name, double err, double tol) {
    results.push_back({std::move(name), err, tol, err <= tol});
  }
};

}  // namespace

double numeric_conjugate(FDivergenceKind kind, double t) {
  auto h = [&](double u) { return u * t - f_value(kind, u); };
  const double lo = std::log(1e-6), hi = std::log(1e6);
  const int grid = 100000;
  double best_u = 1.0, best = h(1.0);
  for (int i = 0; i <= grid; ++i) {
    const double u = std::exp(lo + (hi - lo) * static_cast<double>(i) / grid);
    const double v = h(u);
    if (v > best) {
      best = v;
      best_u = u;
    }
  }
  // Golden-section refinement around the grid optimum (log-space bracket).
  const double step = (hi - lo) / grid;
  double a = std::log(best_u) - step, b = std::log(best_u) + step;
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - gr * (b - a), d = a + gr * (b - a);
  for (int it = 0; it < 200; ++it) {
    if (h(std::exp(c)) > h(std::exp(d))) {
      b = d;
    } else {
      a = c;
    }
    c = b - gr * (b - a);
    d = a + gr * (b - a);
  }
  return h(std::exp((a + b) / 2.0));
}

std::vector<double> kl_grad_per_sample(const Tensor& latents,
                                       const Tensor& data_x,
                                       const Tensor& data_xprime,
                                       const Net& gen,
                                       const DeepKernel& kernel) {
  const Tensor gx = gen.forward(latents);
  std::vector<double> total(flatten(kernel.features.params).size(), 0.0);
  auto accumulate = [&](const Tensor& point, double weight) {
    Tape t;
    MlpVars vars = kernel.features.leaves(t);
    Var fp = kernel.features.forward(t, vars, t.leaf(point));
    Var fxp = kernel.features.forward(t, vars, t.leaf(data_xprime));
    Var lq = t.add_scalar(
        t.rows_logsumexp(t.neg(t.pair_sqdist(fp, fxp))),
        -std::log(static_cast<double>(data_xprime.rows())));
    t.backward(lq);
    const std::vector<double> g = collect_grads(t, vars);
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += weight * g[i];
  };
  for (std::size_t i = 0; i < data_x.rows(); ++i) {
    accumulate(data_x.row_slice(i), -1.0 / static_cast<double>(data_x.rows()));
  }
  for (std::size_t i = 0; i < gx.rows(); ++i) {
    accumulate(gx.row_slice(i), 1.0 / static_cast<double>(gx.rows()));
  }
  return total;
}

std::vector<CheckResult> run_gradchecks(std::uint64_t seed,
                                        const std::string& fault_rule) {
  Rng rng(seed);
  Battery battery;

  // Reverse-mode gradients of a small MLP vs central differences.
  {
    double err = 0.0;
    for (int rep = 0; rep < 5; ++rep) {
      Net net = random_mlp({3, 8, 1}, Activation::Tanh, rng);
      const Tensor input = randn(4, 3, rng);
      Tape t;
      MlpVars vars = net.leaves(t);
      Var out = net.forward(t, vars, t.leaf(input));
      t.backward(t.sum(t.square(out)));
      const std::vector<double> grad = collect_grads(t, vars);
      const Tensor fd = finite_diff(
          [&](const Tensor& flat) {
            Net probe = net;
            probe.params = unflatten(net.spec, flat.data());
            const Tensor y = probe.forward(input);
            double s = 0.0;
            for (double v : y.data()) s += v * v;
            return s;
          },
          flat_tensor(flatten(net.params)));
      err = std::max(err, max_rel_error(flat_tensor(grad), fd));
    }
    battery.add("mlp-backward-vs-fd", err, 1e-4);
  }

  // Table update rules vs finite differences of their scalar potentials.
  for (Functional fn : {Functional::Langevin, Functional::KL, Functional::RKL,
                        Functional::SH, Functional::JS}) {
    double err = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
      Net gen = random_mlp({2, 8, 2}, Activation::Tanh, rng);
      DeepKernel kernel{random_mlp({2, 8, 8}, Activation::Relu, rng)};
      const Tensor z = randn(1, 2, rng);
      const Tensor peers = randn(4, 2, rng);
      const Tensor data = randn(4, 2, rng);
      Tensor grad = update_gradient(fn, z, peers, data, gen, kernel);
      if (fault_rule == to_string(fn)) {
        for (double& v : grad.data()) v = -v;
      }
      const Tensor fd = finite_diff(
          [&](const Tensor& point) {
            return morph_potential(fn, point, peers, data, gen, kernel);
          },
          z);
      err = std::max(err, max_rel_error(grad, fd));
    }
    battery.add("table1-" + to_string(fn), err, 1e-4);
  }

  // Kernel value gradients w.r.t. phi, x and y.
  {
    double err_phi = 0.0, err_x = 0.0, err_y = 0.0;
    for (int rep = 0; rep < 10; ++rep) {
      DeepKernel kernel{random_mlp({2, 8, 8}, Activation::Relu, rng)};
      const Tensor x = randn(1, 2, rng), y = randn(1, 2, rng);
      Tape t;
      MlpVars vars = kernel.features.leaves(t);
      Var xv = t.leaf(x), yv = t.leaf(y);
      Var k = t.exp(t.neg(t.pair_sqdist(
          kernel.features.forward(t, vars, xv),
          kernel.features.forward(t, vars, yv))));
      t.backward(k);
      const Tensor fd_phi = finite_diff(
          [&](const Tensor& flat) {
            DeepKernel probe = kernel;
            probe.features.params = unflatten(kernel.features.spec, flat.data());
            return probe.eval(x, y);
          },
          flat_tensor(flatten(kernel.features.params)));
      err_phi = std::max(err_phi, max_rel_error(
          flat_tensor(collect_grads(t, vars)), fd_phi));
      err_x = std::max(err_x, max_rel_error(
          t.grad(xv),
          finite_diff([&](const Tensor& p) { return kernel.eval(p, y); }, x)));
      err_y = std::max(err_y, max_rel_error(
          t.grad(yv),
          finite_diff([&](const Tensor& p) { return kernel.eval(x, p); }, y)));
    }
    battery.add("kernel-grad-phi", err_phi, 1e-4);
    battery.add("kernel-grad-x", err_x, 1e-4);
    battery.add("kernel-grad-y", err_y, 1e-4);
  }

  // L_kde gradient.
  {
    double err = 0.0;
    for (int rep = 0; rep < 5; ++rep) {
      Net gen = random_mlp({2, 8, 2}, Activation::Tanh, rng);
      DeepKernel kernel{random_mlp({2, 8, 8}, Activation::Relu, rng)};
      const Tensor z = randn(6, 2, rng), data = randn(5, 2, rng);
      const std::vector<double> grad = loss_kde_grad(z, data, gen, kernel, 0.7);
      const Tensor fd = finite_diff(
          [&](const Tensor& flat) {
            DeepKernel probe = kernel;
            probe.features.params = unflatten(kernel.features.spec, flat.data());
            return loss_kde(z, data, gen, probe, 0.7);
          },
          flat_tensor(flatten(kernel.features.params)));
      err = std::max(err, max_rel_error(flat_tensor(grad), fd));
    }
    battery.add("loss-kde-grad-fd", err, 1e-4);
  }

  // KL kernel gradient: per-sample assembly vs batched autodiff, the
  // cancellation case, and finite differences of the estimator.
  {
    double err_cross = 0.0, err_fd = 0.0;
    for (int rep = 0; rep < 5; ++rep) {
      Net gen = random_mlp({2, 8, 2}, Activation::Tanh, rng);
      DeepKernel kernel{random_mlp({2, 8, 8}, Activation::Relu, rng)};
      const Tensor z = randn(5, 2, rng);
      const Tensor x = randn(5, 2, rng), xp = randn(6, 2, rng);
      const std::vector<double> grad = kl_kernel_grad(z, x, xp, gen, kernel);
      const std::vector<double> oracle =
          kl_grad_per_sample(z, x, xp, gen, kernel);
      err_cross = std::max(
          err_cross, max_rel_error(flat_tensor(grad), flat_tensor(oracle)));
      const Tensor fd = finite_diff(
          [&](const Tensor& flat) {
            DeepKernel probe = kernel;
            probe.features.params = unflatten(kernel.features.spec, flat.data());
            return kl_estimator_value(z, x, xp, gen, probe);
          },
          flat_tensor(flatten(kernel.features.params)));
      err_fd = std::max(err_fd, max_rel_error(flat_tensor(grad), fd));
    }
    battery.add("kl-grad-per-sample-cross", err_cross, 1e-6);
    battery.add("kl-grad-fd", err_fd, 1e-4);

    // q-samples identical to p-samples: the two terms cancel.
    DeepKernel kernel{random_mlp({2, 8, 8}, Activation::Relu, rng)};
    const Tensor x = randn(6, 2, rng), xp = randn(6, 2, rng);
    const std::vector<double> grad =
        kl_kernel_grad(x, x, xp, Net::identity_map(), kernel);
    battery.add("kl-grad-cancellation", vec_norm(grad), 1e-10);
  }

  // Combined kernel gradient.
  {
    Net gen = random_mlp({2, 8, 2}, Activation::Tanh, rng);
    DeepKernel kernel{random_mlp({2, 8, 8}, Activation::Relu, rng)};
    const Tensor z = randn(5, 2, rng), x = randn(5, 2, rng), xp = randn(5, 2, rng);
    const double alpha = 0.5, beta = 0.8;
    const std::vector<double> grad =
        combined_kernel_grad(z, x, xp, gen, kernel, alpha, beta);
    const Tensor fd = finite_diff(
        [&](const Tensor& flat) {
          DeepKernel probe = kernel;
          probe.features.params = unflatten(kernel.features.spec, flat.data());
          return loss_kde(z, x, gen, probe, alpha) +
                 beta * kl_estimator_value(z, x, xp, gen, probe);
        },
        flat_tensor(flatten(kernel.features.params)));
    battery.add("combined-grad-fd", max_rel_error(flat_tensor(grad), fd), 1e-4);
  }

  // Generator gradients (MMD and NLL forms).
  {
    double err_mmd = 0.0, err_nll = 0.0;
    for (int rep = 0; rep < 5; ++rep) {
      Net gen = random_mlp({2, 8, 2}, Activation::Tanh, rng);
      DeepKernel kernel{random_mlp({2, 8, 8}, Activation::Relu, rng)};
      const Tensor z = randn(5, 2, rng), data = randn(5, 2, rng);
      const std::vector<double> gm = generator_grad(z, data, gen, kernel);
      const Tensor fd_m = finite_diff(
          [&](const Tensor& flat) {
            Net probe = gen;
            probe.params = unflatten(gen.spec, flat.data());
            return mmd2_vstat(probe.forward(z), data, kernel);
          },
          flat_tensor(flatten(gen.params)));
      err_mmd = std::max(err_mmd, max_rel_error(flat_tensor(gm), fd_m));
      const std::vector<double> gn = nll_generator_grad(z, data, gen, kernel);
      const Tensor fd_n = finite_diff(
          [&](const Tensor& flat) {
            Net probe = gen;
            probe.params = unflatten(gen.spec, flat.data());
            return nll_objective(z, data, probe, kernel);
          },
          flat_tensor(flatten(gen.params)));
      err_nll = std::max(err_nll, max_rel_error(flat_tensor(gn), fd_n));
    }
    battery.add("generator-grad-fd", err_mmd, 1e-4);
    battery.add("nll-generator-grad-fd", err_nll, 1e-4);
  }

  // Variational-form gradient: constant v cancels; finite differences.
  {
    Net gen = random_mlp({2, 8, 2}, Activation::Tanh, rng);
    DeepKernel kernel{random_mlp({2, 8, 8}, Activation::Relu, rng)};
    const Tensor z = randn(6, 2, rng), xp = randn(6, 2, rng);
    Net v_const = random_mlp({2, 4, 1}, Activation::Tanh, rng);
    for (Tensor& w : v_const.params.weights)
      for (double& x : w.data()) x = 0.0;
    v_const.params.biases.back() = Tensor({1, 1}, {-0.5});
    const std::vector<double> g0 = general_f_kernel_grad(
        FDivergenceKind::ReverseKL, z, xp, gen, kernel, v_const);
    battery.add("general-f-grad-const-v", vec_norm(g0), 1e-12);

    Net v = random_mlp({2, 4, 1}, Activation::Tanh, rng);
    // Keep v outputs inside the RKL conjugate domain (t < 0).
    v.params.biases.back() = Tensor({1, 1}, {-1.5});
    const std::vector<double> grad = general_f_kernel_grad(
        FDivergenceKind::ReverseKL, z, xp, gen, kernel, v);
    const Tensor fd = finite_diff(
        [&](const Tensor& flat) {
          DeepKernel probe = kernel;
          probe.features.params = unflatten(kernel.features.spec, flat.data());
          // Scalar whose phi-gradient is the variational formula.
          const Tensor vout = v.forward(z);
          const Tensor gzx = probe.gram(gen.forward(z), xp);
          double wbar = 0.0, term = 0.0, lbar = 0.0;
          std::vector<double> lq(z.rows()), w(z.rows());
          for (std::size_t i = 0; i < z.rows(); ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < xp.rows(); ++j) s += gzx.at(i, j);
            lq[i] = std::log(s / static_cast<double>(xp.rows()));
            w[i] = f_conjugate(FDivergenceKind::ReverseKL, vout.at(i, 0));
            wbar += w[i];
            lbar += lq[i];
            term += w[i] * lq[i];
          }
          const double n = static_cast<double>(z.rows());
          return -term / n + (wbar / n) * (lbar / n);
        },
        flat_tensor(flatten(kernel.features.params)));
    battery.add("general-f-grad-fd", max_rel_error(flat_tensor(grad), fd), 1e-3);
  }

  // Conjugate table vs the numeric sup oracle; f(1) = 0.
  {
    struct Range { FDivergenceKind kind; double lo, hi; };
    const Range ranges[] = {
        {FDivergenceKind::KL, -4.0, 3.0},
        {FDivergenceKind::ReverseKL, -5.0, -0.05},
        {FDivergenceKind::JensenShannon, -4.0, std::log(2.0) - 0.01},
        {FDivergenceKind::SquaredHellinger, -4.0, 0.95},
    };
    double f1 = 0.0;
    for (const Range& r : ranges) {
      double err = 0.0;
      for (int i = 0; i < 50; ++i) {
        const double t = rng.uniform(r.lo, r.hi);
        err = std::max(err,
                       std::abs(f_conjugate(r.kind, t) - numeric_conjugate(r.kind, t)));
      }
      battery.add("conjugate-" + to_string(r.kind), err, 1e-4);
      f1 = std::max(f1, std::abs(f_value(r.kind, 1.0)));
    }
    battery.add("f-at-one", f1, 0.0);
  }

  return battery.results;
}

}  // namespace fpk
