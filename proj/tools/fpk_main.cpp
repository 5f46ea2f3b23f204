#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "fpk/gradcheck.hpp"
#include "fpk/plugplay.hpp"
#include "fpk/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Flat key = value config text. `#` starts a comment, values may be quoted.
// Unknown keys are hard errors so hyperparameter typos cannot pass silently.
class ConfigMap {
 public:
  static ConfigMap from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw fpk::ConfigError("cannot open config file: " + path);
    ConfigMap cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      const auto eq = trimmed.find('=');
      if (eq == std::string::npos) {
        throw fpk::ConfigError(path + ":" + std::to_string(lineno) +
                               ": expected key = value");
      }
      std::string key = trim(trimmed.substr(0, eq));
      std::string value = trim(trimmed.substr(eq + 1));
      if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
        value = value.substr(1, value.size() - 2);
      }
      if (key.empty() || value.empty()) {
        throw fpk::ConfigError(path + ":" + std::to_string(lineno) +
                               ": empty key or value");
      }
      if (!cfg.entries_.emplace(key, value).second) {
        throw fpk::ConfigError("duplicate config key: " + key);
      }
    }
    return cfg;
  }

  void restrict_to(const std::set<std::string>& allowed) const {
    for (const auto& [key, value] : entries_) {
      if (!allowed.count(key)) {
        throw fpk::ConfigError("unknown config key: " + key);
      }
    }
  }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  std::string get_string(const std::string& key, std::string fallback) const {
    const auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    try {
      std::size_t used = 0;
      const double v = std::stod(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument(key);
      return v;
    } catch (const std::exception&) {
      throw fpk::ConfigError("config key " + key + ": not a number: " +
                             it->second);
    }
  }

  long get_int(const std::string& key, long fallback) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    try {
      std::size_t used = 0;
      const long v = std::stol(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument(key);
      return v;
    } catch (const std::exception&) {
      throw fpk::ConfigError("config key " + key + ": not an integer: " +
                             it->second);
    }
  }

  bool get_bool(const std::string& key, bool fallback) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw fpk::ConfigError("config key " + key + ": not a boolean: " +
                           it->second);
  }

 private:
  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }

  std::map<std::string, std::string> entries_;
};

// Command-line overrides applied on top of the config file.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> steps;
  std::optional<std::string> functional;
};

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw fpk::IoError("cannot write " + path.string());
  out << text;
}

std::string samples_csv(const fpk::Tensor& samples, const char* index_name) {
  std::ostringstream os;
  os << index_name;
  for (std::size_t d = 0; d < samples.cols(); ++d) os << ",dim" << d;
  os << '\n';
  for (std::size_t i = 0; i < samples.rows(); ++i) {
    os << i;
    for (std::size_t d = 0; d < samples.cols(); ++d) {
      os << ',' << format_double(samples.at(i, d));
    }
    os << '\n';
  }
  return os.str();
}

std::string trajectory_csv(const std::vector<fpk::Tensor>& snapshots) {
  std::ostringstream os;
  os << "step,particle";
  for (std::size_t d = 0; d < snapshots.front().cols(); ++d) os << ",dim" << d;
  os << '\n';
  for (std::size_t step = 0; step < snapshots.size(); ++step) {
    const fpk::Tensor& snap = snapshots[step];
    for (std::size_t i = 0; i < snap.rows(); ++i) {
      os << step << ',' << i;
      for (std::size_t d = 0; d < snap.cols(); ++d) {
        os << ',' << format_double(snap.at(i, d));
      }
      os << '\n';
    }
  }
  return os.str();
}

std::string grid_csv(const fpk::GridDensity& grid) {
  std::ostringstream os;
  for (std::size_t r = 0; r < grid.histogram.rows(); ++r) {
    for (std::size_t c = 0; c < grid.histogram.cols(); ++c) {
      if (c) os << ',';
      os << format_double(grid.histogram.at(r, c));
    }
    os << '\n';
  }
  return os.str();
}

json coverage_json(const fpk::CoverageReport& report) {
  return json{{"modes_captured", report.modes_captured},
              {"per_mode_fraction", report.per_mode_fraction},
              {"high_quality_fraction", report.high_quality_fraction}};
}

fpk::MorphConfig morph_config_from(const ConfigMap& cfg, const Overrides& over,
                                   std::uint64_t seed) {
  fpk::MorphConfig mc;
  mc.functional = fpk::functional_from_string(over.functional.value_or(
      cfg.get_string("functional", "kl")));
  mc.steps = over.steps.value_or(static_cast<int>(cfg.get_int("steps", 30)));
  mc.step_size = cfg.get_double("step_size", 0.05);
  mc.js_alpha = cfg.get_double("js_alpha", 1.0);
  mc.clip_norm = cfg.get_double("clip_norm", 10.0);
  mc.rng_seed = seed;
  mc.validate();
  return mc;
}

int cmd_train(const ConfigMap& cfg, const Overrides& over,
              const fs::path& out) {
  cfg.restrict_to({"target", "batch_size", "kernel_lr", "gen_lr", "alpha",
                   "beta", "morph_steps", "morph_step_size", "functional",
                   "iterations", "seed", "latent_dim", "data_dim", "hidden",
                   "feature_dim", "train_kernel"});
  fpk::TrainConfig tc;
  tc.batch_size = static_cast<int>(cfg.get_int("batch_size", tc.batch_size));
  tc.kernel_lr = cfg.get_double("kernel_lr", tc.kernel_lr);
  tc.gen_lr = cfg.get_double("gen_lr", tc.gen_lr);
  tc.alpha = cfg.get_double("alpha", tc.alpha);
  tc.beta = cfg.get_double("beta", tc.beta);
  tc.morph_steps = static_cast<int>(cfg.get_int("morph_steps", tc.morph_steps));
  tc.morph_step_size = cfg.get_double("morph_step_size", tc.morph_step_size);
  tc.functional = fpk::functional_from_string(
      over.functional.value_or(cfg.get_string("functional", "kl")));
  tc.iterations = static_cast<int>(cfg.get_int("iterations", tc.iterations));
  tc.seed = over.seed.value_or(
      static_cast<std::uint64_t>(cfg.get_int("seed", 0)));
  tc.latent_dim = static_cast<int>(cfg.get_int("latent_dim", tc.latent_dim));
  tc.data_dim = static_cast<int>(cfg.get_int("data_dim", tc.data_dim));
  tc.hidden = static_cast<int>(cfg.get_int("hidden", tc.hidden));
  tc.feature_dim = static_cast<int>(cfg.get_int("feature_dim", tc.feature_dim));
  tc.train_kernel = cfg.get_bool("train_kernel", tc.train_kernel);
  if (over.steps) tc.morph_steps = *over.steps;

  const fpk::GaussianMixture2D target =
      fpk::mixture_preset(cfg.get_string("target", "ring8"));
  const fpk::TrainResult result = fpk::train(tc, target);

  fpk::save_checkpoint(result.checkpoint, (out / "checkpoint.fpk").string());
  std::ostringstream metrics;
  metrics << fpk::metrics_csv_header() << '\n';
  for (const fpk::MetricsRow& row : result.metrics) {
    metrics << fpk::metrics_csv_row(row) << '\n';
  }
  write_text(out / "metrics.csv", metrics.str());

  if (result.aborted) {
    std::cerr << "training aborted at iteration " << result.abort_iter
              << " (non-finite loss); last finite checkpoint written\n";
    return 2;
  }
  std::cout << "wrote " << (out / "checkpoint.fpk").string() << " and "
            << (out / "metrics.csv").string() << '\n';
  return 0;
}

int cmd_morph(const ConfigMap& cfg, const Overrides& over,
              const fs::path& out) {
  cfg.restrict_to({"checkpoint", "target", "steps", "step_size", "functional",
                   "js_alpha", "clip_norm", "n_particles", "data_pool",
                   "seed"});
  const std::string ckpt_path = cfg.get_string("checkpoint", "");
  if (ckpt_path.empty()) throw fpk::ConfigError("morph: checkpoint is required");
  const fpk::Checkpoint ckpt = fpk::load_checkpoint(ckpt_path);
  const fpk::Net& gen = ckpt.require_generator();
  const fpk::DeepKernel kernel = fpk::kernel_from_discriminator(ckpt.feature);

  const std::uint64_t seed = over.seed.value_or(
      static_cast<std::uint64_t>(cfg.get_int("seed", 0)));
  fpk::Rng rng(seed);
  fpk::MorphConfig mc = morph_config_from(cfg, over, rng.raw());
  mc.record_snapshots = true;

  const fpk::GaussianMixture2D target =
      fpk::mixture_preset(cfg.get_string("target", "ring8"));
  const auto pool_size =
      static_cast<std::size_t>(cfg.get_int("data_pool", 512));
  const fpk::Tensor pool = fpk::sample_mixture(target, pool_size, rng);
  const auto n = static_cast<std::size_t>(cfg.get_int("n_particles", 512));
  fpk::Tensor latents = fpk::sample_latents(n, ckpt.latent_dim, rng);

  const auto [morphed, traj] = fpk::morph(std::move(latents), mc, gen, kernel,
                                          fpk::make_pool_sampler(pool));
  write_text(out / "trajectory.csv", trajectory_csv(traj.snapshots));
  write_text(out / "trajectory.json",
             json{{"divergence", traj.divergence},
                  {"mean_update_norm", traj.mean_update_norm}}
                     .dump(2) +
                 "\n");
  std::cout << "wrote " << (out / "trajectory.csv").string() << " and "
            << (out / "trajectory.json").string() << '\n';
  return 0;
}

int cmd_eval(const ConfigMap& cfg, const Overrides& over, const fs::path& out) {
  cfg.restrict_to({"checkpoint", "target", "steps", "step_size", "functional",
                   "js_alpha", "clip_norm", "n_samples", "data_pool", "seed",
                   "grid_resolution"});
  const std::string ckpt_path = cfg.get_string("checkpoint", "");
  if (ckpt_path.empty()) throw fpk::ConfigError("eval: checkpoint is required");
  const fpk::Checkpoint ckpt = fpk::load_checkpoint(ckpt_path);
  const fpk::GaussianMixture2D target =
      fpk::mixture_preset(cfg.get_string("target", "ring8"));

  fpk::EvalConfig ec;
  ec.seed = over.seed.value_or(
      static_cast<std::uint64_t>(cfg.get_int("seed", 0)));
  ec.morph = morph_config_from(cfg, over, 0);
  ec.n_samples = static_cast<std::size_t>(cfg.get_int("n_samples", 2000));
  ec.data_pool = static_cast<std::size_t>(cfg.get_int("data_pool", 512));
  ec.grid_resolution =
      static_cast<std::size_t>(cfg.get_int("grid_resolution", 40));

  const fpk::EvalResult result = fpk::eval_model(ckpt, target, ec);

  const std::string run_id =
      "seed" + std::to_string(ec.seed) + "_steps" + std::to_string(ec.morph.steps);
  json report{
      {"run_id", run_id},
      {"morph_steps", ec.morph.steps},
      {"functional", fpk::to_string(ec.morph.functional)},
      {"no_morph", coverage_json(result.coverage_no_morph)},
      {"morphed", coverage_json(result.coverage_morphed)},
      {"mmd2_no_morph", result.mmd2_no_morph},
      {"mmd2_morphed", result.mmd2_morphed},
      {"grid_clipped",
       json{{"target", result.target_grid.clipped},
            {"no_morph", result.generated_grid_no_morph.clipped},
            {"morphed", result.generated_grid_morphed.clipped}}},
  };
  write_text(out / ("coverage_" + run_id + ".json"), report.dump(2) + "\n");
  write_text(out / ("density_target_" + run_id + ".csv"),
             grid_csv(result.target_grid));
  write_text(out / ("density_generated_" + run_id + "_steps0.csv"),
             grid_csv(result.generated_grid_no_morph));
  write_text(out / ("density_generated_" + run_id + ".csv"),
             grid_csv(result.generated_grid_morphed));
  std::cout << "wrote " << (out / ("coverage_" + run_id + ".json")).string()
            << " and density grids\n";
  return 0;
}

int cmd_refine(const ConfigMap& cfg, const Overrides& over,
               const fs::path& out) {
  cfg.restrict_to({"checkpoint", "target", "steps", "step_size", "functional",
                   "js_alpha", "clip_norm", "n_samples", "data_pool", "seed"});
  const std::string ckpt_path = cfg.get_string("checkpoint", "");
  if (ckpt_path.empty())
    throw fpk::ConfigError("refine: checkpoint is required");
  const fpk::Checkpoint ckpt = fpk::load_checkpoint(ckpt_path);
  const fpk::GaussianMixture2D target =
      fpk::mixture_preset(cfg.get_string("target", "ring8"));

  const std::uint64_t seed = over.seed.value_or(
      static_cast<std::uint64_t>(cfg.get_int("seed", 0)));
  fpk::Rng rng(seed);
  const fpk::MorphConfig mc = morph_config_from(cfg, over, rng.raw());
  const auto pool_size =
      static_cast<std::size_t>(cfg.get_int("data_pool", 512));
  const fpk::Tensor pool = fpk::sample_mixture(target, pool_size, rng);
  const auto n = static_cast<std::size_t>(cfg.get_int("n_samples", 2000));
  const std::uint64_t latent_seed = rng.raw();

  fpk::Rng before_rng(latent_seed);
  const fpk::Tensor before = ckpt.require_generator().forward(
      fpk::sample_latents(n, ckpt.latent_dim, before_rng));
  const fpk::Tensor after =
      fpk::refine(ckpt, mc, fpk::make_pool_sampler(pool), n, latent_seed);

  json report{{"before", coverage_json(fpk::mode_coverage(before, target))},
              {"after", coverage_json(fpk::mode_coverage(after, target))},
              {"morph_steps", mc.steps},
              {"functional", fpk::to_string(mc.functional)}};
  write_text(out / "coverage.json", report.dump(2) + "\n");
  write_text(out / "refined.csv", samples_csv(after, "particle"));
  std::cout << "wrote " << (out / "refined.csv").string() << " and "
            << (out / "coverage.json").string() << '\n';
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, const std::string& fault_rule) {
  const std::vector<fpk::CheckResult> results =
      fpk::run_gradchecks(seed, fault_rule);
  bool all_pass = true;
  for (const fpk::CheckResult& r : results) {
    std::ostringstream line;
    line << r.name << " max_rel_err=" << format_double(r.max_rel_err)
         << " tol=" << format_double(r.tolerance) << ' '
         << (r.pass ? "PASS" : "FAIL");
    std::cout << line.str() << '\n';
    all_pass = all_pass && r.pass;
  }
  if (!all_pass) {
    std::cerr << "gradcheck: at least one oracle failed\n";
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent-distribution morphing with neural Fokker-Planck kernels"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".", functional_flag, fault_rule;
  std::uint64_t seed_flag = 0;
  int steps_flag = 0;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    CLI::Option* c = sub->add_option("--config", config_path, "config file");
    if (needs_config) c->required();
    sub->add_option("--seed", seed_flag, "seed override");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--steps", steps_flag, "morph-step override");
    sub->add_option("--functional", functional_flag,
                    "update rule: langevin|kl|rkl|js|sh");
  };

  CLI::App* train = app.add_subcommand("train", "train generator and kernel");
  CLI::App* morph = app.add_subcommand("morph", "morph latent particles");
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  CLI::App* refine = app.add_subcommand("refine", "plug-and-play refinement");
  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "run the gradient oracle battery");
  for (CLI::App* sub : {train, morph, eval, refine}) add_common(sub, true);
  add_common(gradcheck, false);
  gradcheck->add_option("--inject-fault", fault_rule,
                        "flip the sign of the named update rule (test hook)")
      ->group("");  // hidden

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    Overrides over;
    const CLI::App* sub = app.get_subcommands().front();
    if (sub->count("--seed")) over.seed = seed_flag;
    if (sub->count("--steps")) over.steps = steps_flag;
    if (sub->count("--functional")) over.functional = functional_flag;

    if (gradcheck->parsed()) {
      return cmd_gradcheck(over.seed.value_or(0), fault_rule);
    }

    const ConfigMap cfg = ConfigMap::from_file(config_path);
    const fs::path out(out_dir);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw fpk::ConfigError("cannot create output directory: " + out_dir);

    if (train->parsed()) return cmd_train(cfg, over, out);
    if (morph->parsed()) return cmd_morph(cfg, over, out);
    if (eval->parsed()) return cmd_eval(cfg, over, out);
    return cmd_refine(cfg, over, out);
  } catch (const fpk::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
