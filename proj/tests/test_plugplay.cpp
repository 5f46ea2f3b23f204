#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "fpk/plugplay.hpp"
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

Checkpoint tiny_checkpoint(std::uint64_t seed) {
  Rng rng(seed);
  Checkpoint ckpt;
  ckpt.latent_dim = 2;
  ckpt.generator = random_mlp({2, 16, 2}, Activation::Tanh, rng);
  ckpt.feature = random_mlp({2, 16, 16}, Activation::Relu, rng);
  ckpt.metadata["note"] = "test fixture";
  return ckpt;
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) {
    path = (std::filesystem::temp_directory_path() / name).string();
  }
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("checkpoint round-trip is bit-exact") {
  const Checkpoint ckpt = tiny_checkpoint(101);
  TempFile file("fpk_roundtrip.fpk");
  save_checkpoint(ckpt, file.path);
  const Checkpoint loaded = load_checkpoint(file.path);
  CHECK(loaded.version == ckpt.version);
  CHECK(loaded.latent_dim == ckpt.latent_dim);
  CHECK(loaded.require_generator().params == ckpt.require_generator().params);
  CHECK(loaded.feature.params == ckpt.feature.params);
  CHECK(loaded.metadata.at("note") == "test fixture");
}

TEST_CASE("generator-free checkpoints round-trip") {
  Rng rng(103);
  Checkpoint ckpt;
  ckpt.generator.reset();
  ckpt.feature = random_mlp({2, 8, 8}, Activation::Relu, rng);
  TempFile file("fpk_ebm.fpk");
  save_checkpoint(ckpt, file.path);
  const Checkpoint loaded = load_checkpoint(file.path);
  CHECK_FALSE(loaded.generator.has_value());
  CHECK(loaded.feature.params == ckpt.feature.params);
  CHECK_THROWS_AS(loaded.require_generator(), PreconditionError);
}

TEST_CASE("corrupt checkpoints are rejected") {
  const Checkpoint ckpt = tiny_checkpoint(105);
  TempFile file("fpk_corrupt.fpk");
  save_checkpoint(ckpt, file.path);

  SUBCASE("truncated blob reports the byte offset") {
    const auto full = std::filesystem::file_size(file.path);
    std::filesystem::resize_file(file.path, full - 48);
    try {
      load_checkpoint(file.path);
      FAIL("expected IoError");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find("byte") != std::string::npos);
    }
  }
  SUBCASE("future version names both versions") {
    std::ifstream in(file.path, std::ios::binary);
    std::string content((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
    in.close();
    const std::string needle = "\"version\":1";
    const auto pos = content.find(needle);
    REQUIRE(pos != std::string::npos);
    content.replace(pos, needle.size(), "\"version\":9");
    std::ofstream out(file.path, std::ios::binary | std::ios::trunc);
    out << content;
    out.close();
    try {
      load_checkpoint(file.path);
      FAIL("expected IoError");
    } catch (const IoError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("9") != std::string::npos);
      CHECK(msg.find("1") != std::string::npos);
    }
  }
  SUBCASE("missing file names the path") {
    try {
      load_checkpoint("/nonexistent/checkpoint.fpk");
      FAIL("expected IoError");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find("/nonexistent/checkpoint.fpk") !=
            std::string::npos);
    }
  }
}

TEST_CASE("kernel_from_discriminator") {
  Rng rng(107);
  SUBCASE("unit self-similarity and PSD") {
    const DeepKernel k =
        kernel_from_discriminator(random_mlp({2, 8, 1}, Activation::Relu, rng));
    for (int rep = 0; rep < 10; ++rep) {
      const Tensor x = randn(1, 2, rng);
      CHECK(k.eval(x, x) == 1.0);
    }
    const Tensor X = randn(8, 2, rng);
    const Tensor g = k.gram(X, X);
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 8; ++j) CHECK(g.at(i, j) == g.at(j, i));
  }
  SUBCASE("scalar discriminator hand value") {
    // d(x) = x in one dimension: d(1) - d(0) = 1, so K = exp(-1).
    const DeepKernel k = kernel_from_discriminator(Net::identity_map());
    CHECK(k.eval(Tensor::row({1.0}), Tensor::row({0.0})) ==
          doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  }
}

TEST_CASE("refine") {
  const Checkpoint ckpt = tiny_checkpoint(109);
  const GaussianMixture2D mix = ring8_preset();
  Rng rng(111);
  const Tensor pool = sample_mixture(mix, 256, rng);
  const DataSampler sampler = make_pool_sampler(pool);

  SUBCASE("zero steps equals plain generation") {
    MorphConfig config;
    config.steps = 0;
    const Tensor refined = refine(ckpt, config, sampler, 64, 7);
    Rng latent_rng(7);
    const Tensor plain = ckpt.require_generator().forward(
        sample_latents(64, ckpt.latent_dim, latent_rng));
    CHECK(refined == plain);
  }
  SUBCASE("never mutates the checkpoint") {
    const MlpParams gen_before = ckpt.require_generator().params;
    const MlpParams feat_before = ckpt.feature.params;
    MorphConfig config;
    config.functional = Functional::KL;
    config.steps = 10;
    refine(ckpt, config, sampler, 64, 7);
    CHECK(ckpt.require_generator().params == gen_before);
    CHECK(ckpt.feature.params == feat_before);
  }
  SUBCASE("deterministic given seeds") {
    MorphConfig config;
    config.functional = Functional::KL;
    config.steps = 5;
    config.rng_seed = 3;
    CHECK(refine(ckpt, config, sampler, 32, 7) ==
          refine(ckpt, config, sampler, 32, 7));
  }
}

TEST_CASE("ebm_morph") {
  const GaussianMixture2D mix = ring8_preset();
  Rng rng(113);
  const Tensor pool = sample_mixture(mix, 256, rng);
  const DataSampler sampler = make_pool_sampler(pool);

  SUBCASE("matches latent morphing with an identity generator bit-identically") {
    const Net features = random_mlp({2, 8, 8}, Activation::Relu, rng);
    const Tensor init = randn(16, 2, rng);
    MorphConfig config;
    config.functional = Functional::Langevin;
    config.steps = 6;
    config.rng_seed = 17;
    const auto [via_ebm, t1] = ebm_morph(features, sampler, init, config);
    const auto [via_morph, t2] =
        morph(init, config, Net::identity_map(), DeepKernel{features}, sampler);
    CHECK(via_ebm == via_morph);
    CHECK(t1.divergence == t2.divergence);
  }
  SUBCASE("langevin drift settles at a stationary point in 1-D") {
    // Data {-1, +1} with identity features: iterate the drift-only update
    // and compare against a bisection root of the drift itself.
    const Net id = Net::identity_map();
    const DeepKernel kernel{Net::identity_map()};
    const Tensor data = Tensor::matrix(2, 1, {-1.0, 1.0});
    auto drift = [&](double x) {
      return update_gradient(Functional::Langevin, Tensor::row({x}),
                             Tensor(), data, id, kernel)
          .scalar();
    };
    double x = 0.35;
    for (int i = 0; i < 4000; ++i) x -= 0.01 * drift(x);

    // Bracket away from the unstable symmetric point at 0.
    double lo = 0.1, hi = 2.0;
    REQUIRE(drift(lo) * drift(hi) <= 0.0);
    for (int i = 0; i < 200; ++i) {
      const double mid = (lo + hi) / 2.0;
      if (drift(lo) * drift(mid) <= 0.0) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    const double root = (lo + hi) / 2.0;
    CHECK(std::abs(x - root) <= 1e-3);
  }
  SUBCASE("data-space morphing improves coverage from a cold start") {
    Rng init_rng(115);
    Tensor init(256, 2);
    for (double& v : init.data()) v = init_rng.uniform(-3.0, 3.0);
    // Scale features by 3 so the kernel bandwidth suits the narrow modes.
    MlpSpec scale_spec{{2, 2}, Activation::Relu};
    MlpParams scale_params;
    scale_params.weights.push_back(Tensor::matrix(2, 2, {3, 0, 0, 3}));
    scale_params.biases.push_back(Tensor::row({0.0, 0.0}));
    const Net scaled = Net::mlp(scale_spec, scale_params);
    MorphConfig config;
    config.functional = Functional::KL;
    config.steps = 40;
    config.step_size = 0.05;
    config.rng_seed = 19;
    const auto [morphed, traj] = ebm_morph(scaled, sampler, init, config);
    const int before = mode_coverage(init, mix).modes_captured;
    const CoverageReport after = mode_coverage(morphed, mix);
    CHECK(after.modes_captured >= before);
    CHECK(after.high_quality_fraction >
          mode_coverage(init, mix).high_quality_fraction);
  }
}

TEST_CASE("eval_model produces a well-formed report") {
  const Checkpoint ckpt = tiny_checkpoint(117);
  const GaussianMixture2D mix = ring8_preset();
  EvalConfig config;
  config.n_samples = 256;
  config.seed = 21;
  config.morph.functional = Functional::KL;
  config.morph.steps = 5;
  config.grid_resolution = 10;
  const EvalResult result = eval_model(ckpt, mix, config);

  CHECK(result.coverage_no_morph.modes_captured >= 0);
  CHECK(result.coverage_no_morph.modes_captured <= 8);
  CHECK(result.coverage_morphed.modes_captured <= 8);
  CHECK(result.samples_no_morph.rows() == 256);
  CHECK(result.samples_morphed.rows() == 256);
  CHECK(result.mmd2_no_morph >= 0.0);
  CHECK(result.mmd2_morphed >= 0.0);
  for (const GridDensity* g :
       {&result.target_grid, &result.generated_grid_no_morph,
        &result.generated_grid_morphed}) {
    double total = 0.0;
    for (double v : g->histogram.data()) total += v;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(g->histogram.rows() == 10);
    CHECK(g->histogram.cols() == 10);
  }

  // Same config, same result.
  const EvalResult again = eval_model(ckpt, mix, config);
  CHECK(again.samples_morphed == result.samples_morphed);
  CHECK(again.mmd2_morphed == result.mmd2_morphed);
}

TEST_CASE("target-vs-target mmd2 beats target-vs-untrained") {
  const GaussianMixture2D mix = ring8_preset();
  const Checkpoint ckpt = tiny_checkpoint(119);
  const DeepKernel kernel{ckpt.feature};
  Rng rng(121);
  const Tensor a = sample_mixture(mix, 2000, rng);
  const Tensor b = sample_mixture(mix, 2000, rng);
  const Tensor c = ckpt.require_generator().forward(
      sample_latents(2000, 2, rng));
  CHECK(mmd2_vstat(a, b, kernel) <= mmd2_vstat(a, c, kernel));
}
