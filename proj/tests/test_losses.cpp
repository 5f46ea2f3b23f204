#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fpk/gradcheck.hpp"
#include "fpk/train.hpp"

using namespace fpk;

namespace {

Tensor randn(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t(r, c);
  for (double& v : t.data()) v = rng.normal();
  return t;
}

Net random_mlp(std::vector<int> widths, Activation act, Rng& rng) {
  MlpSpec spec{std::move(widths), act};
  return Net::mlp(spec, init_mlp(spec, rng));
}

double vec_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double vec_dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

Tensor flat_tensor(const std::vector<double>& v) {
  return Tensor({1, v.size()}, v);
}

// Scalar-weight linear feature net f(x) = w x + b in one dimension.
Net scalar_feature_net(double w, double b) {
  MlpSpec spec{{1, 1}, Activation::Relu};
  MlpParams params;
  params.weights.push_back(Tensor::matrix(1, 1, {w}));
  params.biases.push_back(Tensor::row({b}));
  return Net::mlp(spec, params);
}

}  // namespace

TEST_CASE("kde") {
  Rng rng(61);
  const Net id = Net::identity_map();
  const DeepKernel kernel{Net::identity_map()};
  SUBCASE("identical particles give 1") {
    const Tensor same(4, 2, 0.3);
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(kde(j, same, id, kernel) == 1.0);
    }
  }
  SUBCASE("two particles give the pair kernel value") {
    const Tensor pair = Tensor::matrix(2, 1, {0.0, 1.0});
    CHECK(kde(0, pair, id, kernel) ==
          doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  }
  SUBCASE("matches a naive double loop") {
    Net gen = random_mlp({2, 8, 2}, Activation::Tanh, rng);
    DeepKernel deep{random_mlp({2, 8, 8}, Activation::Relu, rng)};
    const Tensor particles = randn(6, 2, rng);
    const Tensor gx = gen.forward(particles);
    for (std::size_t j = 0; j < 6; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < 6; ++i) {
        if (i == j) continue;
        acc += deep.eval(gx.row_slice(j), gx.row_slice(i));
      }
      CHECK(kde(j, particles, gen, deep) ==
            doctest::Approx(acc / 5.0).epsilon(1e-12));
    }
  }
  SUBCASE("needs at least 2 particles") {
    CHECK_THROWS_AS(kde(0, Tensor(1, 2), id, kernel), PreconditionError);
  }
}

TEST_CASE("loss_kde") {
  const Net id = Net::identity_map();
  const DeepKernel kernel{Net::identity_map()};
  SUBCASE("zero when every leave-one-out density hits 1/n") {
    // Equilateral triangle with side sqrt(log 3): every pair kernel value is
    // exactly 1/3.
    const double s = std::sqrt(std::log(3.0));
    const double h = s * std::sqrt(3.0) / 2.0;
    const Tensor tri =
        Tensor::matrix(3, 2, {0.0, 0.0, s, 0.0, s / 2.0, h});
    CHECK(loss_kde(tri, Tensor(1, 2, 100.0), id, kernel, 0.0) ==
          doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("identical particles, n=4, alpha=0") {
    const Tensor same(4, 2, 0.1);
    CHECK(loss_kde(same, Tensor(1, 2, 100.0), id, kernel, 0.0) ==
          doctest::Approx(0.5625).epsilon(1e-12));
  }
  SUBCASE("gradient matches finite differences") {
    Rng rng(63);
    Net gen = random_mlp({2, 8, 2}, Activation::Tanh, rng);
    DeepKernel deep{random_mlp({2, 8, 8}, Activation::Relu, rng)};
    const Tensor particles = randn(6, 2, rng), data = randn(5, 2, rng);
    const std::vector<double> grad =
        loss_kde_grad(particles, data, gen, deep, 0.7);
    const Tensor fd = finite_diff(
        [&](const Tensor& flat) {
          DeepKernel probe = deep;
          probe.features.params = unflatten(deep.features.spec, flat.data());
          return loss_kde(particles, data, gen, probe, 0.7);
        },
        flat_tensor(flatten(deep.features.params)));
    CHECK(max_rel_error(flat_tensor(grad), fd) <= 1e-4);
  }
}

TEST_CASE("kl_kernel_grad") {
  Rng rng(65);
  SUBCASE("q-samples identical to p-samples cancel") {
    DeepKernel deep{random_mlp({2, 8, 8}, Activation::Relu, rng)};
    const Tensor x = randn(6, 2, rng), xp = randn(7, 2, rng);
    const std::vector<double> grad =
        kl_kernel_grad(x, x, xp, Net::identity_map(), deep);
    CHECK(vec_norm(grad) <= 1e-10);
  }
  SUBCASE("matches the per-sample formula assembly") {
    Net gen = random_mlp({2, 8, 2}, Activation::Tanh, rng);
    DeepKernel deep{random_mlp({2, 8, 8}, Activation::Relu, rng)};
    const Tensor z = randn(5, 2, rng), x = randn(5, 2, rng),
                 xp = randn(6, 2, rng);
    const std::vector<double> got = kl_kernel_grad(z, x, xp, gen, deep);
    const std::vector<double> want = kl_grad_per_sample(z, x, xp, gen, deep);
    CHECK(max_rel_error(flat_tensor(got), flat_tensor(want)) <= 1e-6);
  }
  SUBCASE("size-1 instance matches the hand expansion") {
    // f(x) = w x + b, g identity: the estimator is
    //   w^2 (x - x')^2 - w^2 (z - x')^2, so dL/dw = 2w[(x-x')^2 - (z-x')^2]
    // and dL/db = 0.
    const double w = 0.8, b = -0.3;
    const DeepKernel deep{scalar_feature_net(w, b)};
    const Tensor z = Tensor::row({0.4}), x = Tensor::row({-0.2}),
                 xp = Tensor::row({1.1});
    const std::vector<double> grad =
        kl_kernel_grad(z, x, xp, Net::identity_map(), deep);
    REQUIRE(grad.size() == 2);
    const double dx = x[0] - xp[0], dz = z[0] - xp[0];
    CHECK(grad[0] == doctest::Approx(2.0 * w * (dx * dx - dz * dz)).epsilon(1e-10));
    CHECK(grad[1] == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("translation consistency") {
    // Shifting real and generated data together, with the shift undone in
    // front of the feature net, leaves the gradient unchanged.
    Net gen = random_mlp({2, 8, 2}, Activation::Tanh, rng);
    DeepKernel deep{random_mlp({2, 8, 8}, Activation::Relu, rng)};
    const Tensor z = randn(4, 2, rng), x = randn(4, 2, rng),
                 xp = randn(4, 2, rng);
    const std::vector<double> base = kl_kernel_grad(z, x, xp, gen, deep);

    const Tensor shift = Tensor::row({1.5, -2.0});
    auto shifted = [&](const Tensor& t) {
      Tensor out = t;
      for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j)
          out.at(i, j) += shift[j];
      return out;
    };
    // Absorb the inverse shift into the first-layer bias of f and g's output
    // bias so the composite maps are unchanged.
    DeepKernel deep2 = deep;
    Tensor& b0 = deep2.features.params.biases[0];
    const Tensor& w0 = deep2.features.params.weights[0];
    for (std::size_t o = 0; o < b0.cols(); ++o)
      for (std::size_t i = 0; i < w0.rows(); ++i)
        b0.at(0, o) -= shift[i] * w0.at(i, o);
    Net gen2 = gen;
    for (std::size_t j = 0; j < 2; ++j)
      gen2.params.biases.back().at(0, j) += shift[j];

    const std::vector<double> moved =
        kl_kernel_grad(z, shifted(x), shifted(xp), gen2, deep2);
    // The composite maps are identical, so every gradient block matches
    // except the first-layer weights, which pick up the chain-rule term of
    // the bias reparameterization: dW_io shifts by +shift_i * db_o.
    const std::size_t in = 2, hid = 8;
    std::vector<double> expected = base;
    for (std::size_t i = 0; i < in; ++i)
      for (std::size_t o = 0; o < hid; ++o)
        expected[i * hid + o] += shift[i] * base[in * hid + o];
    CHECK(max_rel_error(flat_tensor(moved), flat_tensor(expected)) <= 1e-8);
  }
}

TEST_CASE("combined_kernel_grad") {
  Rng rng(67);
  Net gen = random_mlp({2, 8, 2}, Activation::Tanh, rng);
  DeepKernel deep{random_mlp({2, 8, 8}, Activation::Relu, rng)};
  const Tensor z = randn(5, 2, rng), x = randn(5, 2, rng), xp = randn(5, 2, rng);
  SUBCASE("beta=0 reduces to the kde gradient") {
    CHECK(combined_kernel_grad(z, x, xp, gen, deep, 0.7, 0.0) ==
          loss_kde_grad(z, x, gen, deep, 0.7));
  }
  SUBCASE("linearity is bit-exact") {
    const std::vector<double> kde_part = loss_kde_grad(z, x, gen, deep, 0.0);
    const std::vector<double> kl_part = kl_kernel_grad(z, x, xp, gen, deep);
    std::vector<double> sum(kde_part.size());
    for (std::size_t i = 0; i < sum.size(); ++i)
      sum[i] = kde_part[i] + 1.0 * kl_part[i];
    CHECK(combined_kernel_grad(z, x, xp, gen, deep, 0.0, 1.0) == sum);
  }
  SUBCASE("finite differences of the combined scalar") {
    const double alpha = 0.5, beta = 0.8;
    const std::vector<double> grad =
        combined_kernel_grad(z, x, xp, gen, deep, alpha, beta);
    const Tensor fd = finite_diff(
        [&](const Tensor& flat) {
          DeepKernel probe = deep;
          probe.features.params = unflatten(deep.features.spec, flat.data());
          return loss_kde(z, x, gen, probe, alpha) +
                 beta * kl_estimator_value(z, x, xp, gen, probe);
        },
        flat_tensor(flatten(deep.features.params)));
    CHECK(max_rel_error(flat_tensor(grad), fd) <= 1e-4);
  }
}

TEST_CASE("mmd2_vstat") {
  Rng rng(69);
  DeepKernel deep{random_mlp({2, 8, 8}, Activation::Relu, rng)};
  SUBCASE("identical batches give exactly zero") {
    for (int rep = 0; rep < 10; ++rep) {
      const Tensor X = randn(6, 2, rng);
      CHECK(mmd2_vstat(X, X, deep) == 0.0);
    }
  }
  SUBCASE("single points") {
    const DeepKernel id{Net::identity_map()};
    const Tensor x = Tensor::row({0.0}), y = Tensor::row({1.0});
    CHECK(mmd2_vstat(x, y, id) ==
          doctest::Approx(2.0 - 2.0 * std::exp(-1.0)).epsilon(1e-12));
  }
  SUBCASE("non-negative on random batches") {
    for (int rep = 0; rep < 200; ++rep) {
      const Tensor X = randn(1 + rng.below(8), 2, rng);
      const Tensor Y = randn(1 + rng.below(8), 2, rng);
      CHECK(mmd2_vstat(X, Y, deep) >= -1e-12);
    }
  }
  SUBCASE("empty batch") {
    CHECK_THROWS_AS(mmd2_vstat(Tensor(), randn(2, 2, rng), deep),
                    PreconditionError);
  }
}

TEST_CASE("generator_grad") {
  Rng rng(71);
  Net gen = random_mlp({2, 8, 2}, Activation::Tanh, rng);
  DeepKernel deep{random_mlp({2, 8, 8}, Activation::Relu, rng)};
  const Tensor z = randn(5, 2, rng), data = randn(5, 2, rng);
  SUBCASE("matches finite differences of mmd2 over theta") {
    const std::vector<double> grad = generator_grad(z, data, gen, deep);
    const Tensor fd = finite_diff(
        [&](const Tensor& flat) {
          Net probe = gen;
          probe.params = unflatten(gen.spec, flat.data());
          return mmd2_vstat(probe.forward(z), data, deep);
        },
        flat_tensor(flatten(gen.params)));
    CHECK(max_rel_error(flat_tensor(grad), fd) <= 1e-4);
  }
  SUBCASE("near-zero at an exact one-point match") {
    // g maps z to the data point exactly via its bias: x = g(z) = data, so
    // the MMD gradient through theta vanishes up to roundoff.
    MlpSpec spec{{1, 1}, Activation::Tanh};
    MlpParams params;
    params.weights.push_back(Tensor::matrix(1, 1, {0.0}));
    params.biases.push_back(Tensor::row({0.7}));
    const Net point_gen = Net::mlp(spec, params);
    const DeepKernel id{Net::identity_map()};
    const std::vector<double> grad = generator_grad(
        Tensor::row({0.2}), Tensor::row({0.7}), point_gen, id);
    CHECK(vec_norm(grad) <= 1e-6);
  }
}

TEST_CASE("nll_generator_grad") {
  Rng rng(73);
  SUBCASE("aligns with the mmd generator gradient") {
    int aligned = 0;
    for (int rep = 0; rep < 100; ++rep) {
      Net gen = random_mlp({2, 8, 2}, Activation::Tanh, rng);
      DeepKernel deep{random_mlp({2, 8, 8}, Activation::Relu, rng)};
      const Tensor z = randn(6, 2, rng);
      Tensor data = randn(6, 2, rng);
      for (std::size_t i = 0; i < data.rows(); ++i) data.at(i, 0) += 1.0;
      const std::vector<double> a = generator_grad(z, data, gen, deep);
      const std::vector<double> b = nll_generator_grad(z, data, gen, deep);
      if (vec_dot(a, b) > 0.0) ++aligned;
    }
    CHECK(aligned >= 90);
  }
  SUBCASE("size-1 instance matches the hand expansion") {
    // Identity features, g(z) = a z + c: the self term K(g(z),g(z)) = 1 is
    // constant, so the gradient is d/d(a,c) of (a z + c - x)^2.
    const double a = 0.6, c = -0.1, zv = 0.5, xv = 1.3;
    MlpSpec spec{{1, 1}, Activation::Tanh};
    MlpParams params;
    params.weights.push_back(Tensor::matrix(1, 1, {a}));
    params.biases.push_back(Tensor::row({c}));
    const Net gen = Net::mlp(spec, params);
    const DeepKernel id{Net::identity_map()};
    const std::vector<double> grad =
        nll_generator_grad(Tensor::row({zv}), Tensor::row({xv}), gen, id);
    REQUIRE(grad.size() == 2);
    const double resid = a * zv + c - xv;
    CHECK(grad[0] == doctest::Approx(2.0 * resid * zv).epsilon(1e-9));
    CHECK(grad[1] == doctest::Approx(2.0 * resid).epsilon(1e-9));
  }
}

TEST_CASE("general_f_kernel_grad") {
  Rng rng(75);
  Net gen = random_mlp({2, 8, 2}, Activation::Tanh, rng);
  DeepKernel deep{random_mlp({2, 8, 8}, Activation::Relu, rng)};
  const Tensor z = randn(6, 2, rng), xp = randn(6, 2, rng);

  SUBCASE("constant v cancels") {
    MlpSpec vspec{{2, 1}, Activation::Tanh};
    MlpParams vp;
    vp.weights.push_back(Tensor(2, 1, 0.0));
    vp.biases.push_back(Tensor::row({-0.5}));
    const Net v = Net::mlp(vspec, vp);
    const std::vector<double> grad = general_f_kernel_grad(
        FDivergenceKind::ReverseKL, z, xp, gen, deep, v);
    CHECK(vec_norm(grad) <= 1e-12);
  }
  SUBCASE("matches an independent per-sample assembly") {
    Net v = random_mlp({2, 4, 1}, Activation::Tanh, rng);
    v.params.biases.back() = Tensor::row({-1.5});
    const FDivergenceKind kind = FDivergenceKind::ReverseKL;
    const std::vector<double> got =
        general_f_kernel_grad(kind, z, xp, gen, deep, v);

    // Plain assembly: w_i = f*(v(z_i)), s_i = per-sample tape gradient of
    // log mean_x' K(g(z_i), x'); result = -mean(w s) + mean(w) mean(s).
    const Tensor vout = v.forward(z);
    const Tensor gz = gen.forward(z);
    const std::size_t P = flatten(deep.features.params).size();
    std::vector<double> mean_s(P, 0.0), mean_ws(P, 0.0);
    double mean_w = 0.0;
    const double n = static_cast<double>(z.rows());
    for (std::size_t i = 0; i < z.rows(); ++i) {
      Tape t;
      MlpVars vars = deep.features.leaves(t);
      Var fp = deep.features.forward(t, vars, t.leaf(gz.row_slice(i)));
      Var fx = deep.features.forward(t, vars, t.leaf(xp));
      Var lq = t.add_scalar(t.rows_logsumexp(t.neg(t.pair_sqdist(fp, fx))),
                            -std::log(static_cast<double>(xp.rows())));
      t.backward(lq);
      const std::vector<double> s = collect_grads(t, vars);
      const double w = f_conjugate(kind, vout.at(i, 0));
      mean_w += w / n;
      for (std::size_t p = 0; p < P; ++p) {
        mean_s[p] += s[p] / n;
        mean_ws[p] += w * s[p] / n;
      }
    }
    std::vector<double> want(P);
    for (std::size_t p = 0; p < P; ++p)
      want[p] = -mean_ws[p] + mean_w * mean_s[p];
    CHECK(max_rel_error(flat_tensor(got), flat_tensor(want)) <= 1e-8);
  }
  SUBCASE("out-of-domain v output raises a domain error") {
    MlpSpec vspec{{2, 1}, Activation::Tanh};
    MlpParams vp;
    vp.weights.push_back(Tensor(2, 1, 0.0));
    vp.biases.push_back(Tensor::row({0.5}));  // RKL needs t < 0
    const Net v = Net::mlp(vspec, vp);
    CHECK_THROWS_AS(general_f_kernel_grad(FDivergenceKind::ReverseKL, z, xp,
                                          gen, deep, v),
                    DomainError);
  }
}

TEST_CASE("variational objective and step") {
  Rng rng(77);
  const Tensor p_batch = randn(128, 1, rng);
  Tensor q_batch = randn(128, 1, rng);
  for (std::size_t i = 0; i < q_batch.rows(); ++i) q_batch.at(i, 0) += 0.8;

  SUBCASE("lr=0 leaves parameters unchanged") {
    Net v = random_mlp({1, 4, 1}, Activation::Tanh, rng);
    const MlpParams before = v.params;
    variational_step(FDivergenceKind::KL, v, p_batch, q_batch, 0.0);
    CHECK(v.params == before);
  }
  SUBCASE("ascent increases the objective in most steps") {
    Net v = random_mlp({1, 4, 1}, Activation::Tanh, rng);
    int improved = 0;
    double prev =
        variational_objective(FDivergenceKind::KL, v, p_batch, q_batch);
    for (int step = 0; step < 100; ++step) {
      variational_step(FDivergenceKind::KL, v, p_batch, q_batch, 0.05);
      const double now =
          variational_objective(FDivergenceKind::KL, v, p_batch, q_batch);
      if (now >= prev - 1e-12) ++improved;
      prev = now;
    }
    CHECK(improved >= 90);
  }
  SUBCASE("analytic optimum attains the quadrature divergence") {
    // 1-D grid quadrature: at v*(x) = f'(p(x)/q(x)) the variational value
    // E_p[v*] - E_q[f*(v*)] equals D_f(p||q). Uses the closed forms only.
    auto gauss = [](double x, double mu, double sig) {
      return std::exp(-(x - mu) * (x - mu) / (2.0 * sig * sig)) /
             (sig * std::sqrt(2.0 * M_PI));
    };
    for (FDivergenceKind kind :
         {FDivergenceKind::KL, FDivergenceKind::ReverseKL,
          FDivergenceKind::JensenShannon, FDivergenceKind::SquaredHellinger}) {
      const int grid = 4000;
      const double lo = -8.0, hi = 9.0, dx = (hi - lo) / grid;
      double direct = 0.0, variational = 0.0;
      for (int i = 0; i < grid; ++i) {
        const double x = lo + (i + 0.5) * dx;
        const double p = gauss(x, 0.0, 1.0), q = gauss(x, 0.6, 1.2);
        const double rho = p / q;
        direct += q * f_value(kind, rho) * dx;
        const double h = 1e-6 * rho;  // relative step keeps rho - h > 0
        const double fprime =
            (f_value(kind, rho + h) - f_value(kind, rho - h)) / (2.0 * h);
        variational += (p * fprime - q * f_conjugate(kind, fprime)) * dx;
      }
      INFO("kind ", to_string(kind));
      CHECK(std::abs(direct - variational) <= 1e-3);
    }
  }
}

TEST_CASE("training loop") {
  const GaussianMixture2D target = ring8_preset();
  SUBCASE("zero iterations returns the initialized checkpoint") {
    TrainConfig config;
    config.iterations = 0;
    config.seed = 5;
    const TrainResult result = train(config, target);
    CHECK_FALSE(result.aborted);
    CHECK(result.metrics.empty());

    Rng rng(5);
    MlpSpec gen_spec{{2, 16, 2}, Activation::Tanh};
    MlpSpec feat_spec{{2, 16, 16}, Activation::Relu};
    const MlpParams gen_params = init_mlp(gen_spec, rng);
    const MlpParams feat_params = init_mlp(feat_spec, rng);
    CHECK(result.checkpoint.require_generator().params == gen_params);
    CHECK(result.checkpoint.feature.params == feat_params);
  }
  SUBCASE("fixed seed reproduces the metrics log") {
    TrainConfig config;
    config.iterations = 3;
    config.batch_size = 16;
    config.morph_steps = 2;
    config.seed = 7;
    const TrainResult a = train(config, target);
    const TrainResult b = train(config, target);
    REQUIRE(a.metrics.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(a.metrics[i].loss_kde == b.metrics[i].loss_kde);
      CHECK(a.metrics[i].kl_grad_norm == b.metrics[i].kl_grad_norm);
      CHECK(a.metrics[i].mmd2 == b.metrics[i].mmd2);
      CHECK(a.metrics[i].gen_grad_norm == b.metrics[i].gen_grad_norm);
    }
    CHECK(a.checkpoint.require_generator().params ==
          b.checkpoint.require_generator().params);
  }
  SUBCASE("config validation") {
    TrainConfig config;
    config.batch_size = 1;
    CHECK_THROWS_AS(config.validate(), ConfigError);
    config.batch_size = 4;
    config.kernel_lr = 0.0;
    CHECK_THROWS_AS(config.validate(), ConfigError);
  }
}

TEST_CASE("adam converges on a quadratic") {
  Adam opt(0.1);
  std::vector<double> x{5.0, -3.0};
  for (int i = 0; i < 500; ++i) {
    opt.step(x, {2.0 * x[0], 2.0 * x[1]});
  }
  CHECK(std::abs(x[0]) <= 1e-3);
  CHECK(std::abs(x[1]) <= 1e-3);
}
