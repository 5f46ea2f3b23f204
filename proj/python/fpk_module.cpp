#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fpk/gradcheck.hpp"
#include "fpk/plugplay.hpp"
#include "fpk/train.hpp"

namespace py = pybind11;
using namespace fpk;

namespace {

Tensor tensor_from_array(const py::array_t<double>& arr) {
  const auto buf = arr.request();
  if (buf.ndim != 2) {
    throw DimensionError("expected a 2-D float64 array, got ndim=" +
                         std::to_string(buf.ndim));
  }
  const auto rows = static_cast<std::size_t>(buf.shape[0]);
  const auto cols = static_cast<std::size_t>(buf.shape[1]);
  Tensor t(rows, cols);
  const auto view = arr.unchecked<2>();
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) t.at(i, j) = view(i, j);
  return t;
}

py::array_t<double> array_from_tensor(const Tensor& t) {
  py::array_t<double> arr({t.rows(), t.cols()});
  auto view = arr.mutable_unchecked<2>();
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) view(i, j) = t.at(i, j);
  return arr;
}

py::dict coverage_dict(const CoverageReport& report) {
  py::dict d;
  d["modes_captured"] = report.modes_captured;
  d["high_quality_fraction"] = report.high_quality_fraction;
  d["per_mode_fraction"] = report.per_mode_fraction;
  return d;
}

MorphConfig make_morph_config(const std::string& functional, int steps,
                              double step_size, std::uint64_t seed) {
  MorphConfig config;
  config.functional = functional_from_string(functional);
  config.steps = steps;
  config.step_size = step_size;
  config.rng_seed = seed;
  config.validate();
  return config;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Latent-distribution morphing with deep-kernel density flows";

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<DomainError>(m, "DomainError");
  py::register_exception<NumericError>(m, "NumericError");
  py::register_exception<IoError>(m, "IoError");

  py::class_<Checkpoint>(m, "Checkpoint")
      .def_property_readonly("version",
                             [](const Checkpoint& c) { return c.version; })
      .def_property_readonly("latent_dim",
                             [](const Checkpoint& c) { return c.latent_dim; })
      .def_property_readonly(
          "has_generator",
          [](const Checkpoint& c) { return c.generator.has_value(); })
      .def_property_readonly("metadata",
                             [](const Checkpoint& c) { return c.metadata; })
      .def("save",
           [](const Checkpoint& c, const std::string& path) {
             save_checkpoint(c, path);
           })
      .def("generate",
           [](const Checkpoint& c, std::size_t n, std::uint64_t seed) {
             Rng rng(seed);
             return array_from_tensor(c.require_generator().forward(
                 sample_latents(n, c.latent_dim, rng)));
           },
           py::arg("n"), py::arg("seed") = 0);

  m.def("load_checkpoint",
        [](const std::string& path) { return load_checkpoint(path); });

  m.def(
      "train",
      [](const std::string& target, int iterations, int batch_size,
         int morph_steps, const std::string& functional, double kernel_lr,
         double gen_lr, double alpha, double beta, std::uint64_t seed,
         double morph_step_size, bool train_kernel, int latent_dim,
         double morph_clip_norm, int feature_dim) {
        TrainConfig config;
        config.latent_dim = latent_dim;
        config.morph_clip_norm = morph_clip_norm;
        config.feature_dim = feature_dim;
        config.iterations = iterations;
        config.batch_size = batch_size;
        config.morph_steps = morph_steps;
        config.morph_step_size = morph_step_size;
        config.train_kernel = train_kernel;
        config.functional = functional_from_string(functional);
        config.kernel_lr = kernel_lr;
        config.gen_lr = gen_lr;
        config.alpha = alpha;
        config.beta = beta;
        config.seed = seed;
        config.validate();
        const TrainResult result = train(config, mixture_preset(target));
        py::list metrics;
        for (const MetricsRow& row : result.metrics) {
          py::dict d;
          d["iter"] = row.iter;
          d["loss_kde"] = row.loss_kde;
          d["kl_grad_norm"] = row.kl_grad_norm;
          d["mmd2"] = row.mmd2;
          d["gen_grad_norm"] = row.gen_grad_norm;
          metrics.append(d);
        }
        py::dict out;
        out["checkpoint"] = result.checkpoint;
        out["metrics"] = metrics;
        out["aborted"] = result.aborted;
        return out;
      },
      py::arg("target") = "ring8", py::arg("iterations") = 500,
      py::arg("batch_size") = 128, py::arg("morph_steps") = 5,
      py::arg("functional") = "kl", py::arg("kernel_lr") = 1e-3,
      py::arg("gen_lr") = 1e-3, py::arg("alpha") = 1.0, py::arg("beta") = 1.0,
      py::arg("seed") = 0, py::arg("morph_step_size") = 0.05,
      py::arg("train_kernel") = true, py::arg("latent_dim") = 2,
      py::arg("morph_clip_norm") = 10.0, py::arg("feature_dim") = 16);

  m.def(
      "refine",
      [](const Checkpoint& ckpt, const py::array_t<double>& data_pool,
         std::size_t n, const std::string& functional, int steps,
         double step_size, std::uint64_t seed, double clip_norm) {
        MorphConfig config =
            make_morph_config(functional, steps, step_size, seed);
        config.clip_norm = clip_norm;
        const DataSampler sampler = make_pool_sampler(tensor_from_array(data_pool));
        return array_from_tensor(refine(ckpt, config, sampler, n, seed));
      },
      py::arg("checkpoint"), py::arg("data_pool"), py::arg("n") = 2000,
      py::arg("functional") = "kl", py::arg("steps") = 30,
      py::arg("step_size") = 0.05, py::arg("seed") = 0,
      py::arg("clip_norm") = 10.0);

  m.def(
      "ebm_morph",
      [](const Checkpoint& ckpt, const py::array_t<double>& data_pool,
         const py::array_t<double>& init_points, const std::string& functional,
         int steps, double step_size, std::uint64_t seed) {
        const MorphConfig config =
            make_morph_config(functional, steps, step_size, seed);
        const DataSampler sampler = make_pool_sampler(tensor_from_array(data_pool));
        auto [points, traj] = ebm_morph(ckpt.feature, sampler,
                                        tensor_from_array(init_points), config);
        py::dict out;
        out["points"] = array_from_tensor(points);
        out["divergence"] = traj.divergence;
        out["mean_update_norm"] = traj.mean_update_norm;
        return out;
      },
      py::arg("checkpoint"), py::arg("data_pool"), py::arg("init_points"),
      py::arg("functional") = "langevin", py::arg("steps") = 30,
      py::arg("step_size") = 0.05, py::arg("seed") = 0);

  m.def(
      "evaluate",
      [](const Checkpoint& ckpt, const std::string& target, int morph_steps,
         const std::string& functional, std::size_t n_samples,
         std::uint64_t seed) {
        EvalConfig config;
        config.morph = make_morph_config(functional, morph_steps, 0.05, seed);
        config.n_samples = n_samples;
        config.seed = seed;
        const EvalResult result =
            eval_model(ckpt, mixture_preset(target), config);
        py::dict out;
        out["no_morph"] = coverage_dict(result.coverage_no_morph);
        out["morphed"] = coverage_dict(result.coverage_morphed);
        out["mmd2_no_morph"] = result.mmd2_no_morph;
        out["mmd2_morphed"] = result.mmd2_morphed;
        out["samples_morphed"] = array_from_tensor(result.samples_morphed);
        return out;
      },
      py::arg("checkpoint"), py::arg("target") = "ring8",
      py::arg("morph_steps") = 30, py::arg("functional") = "kl",
      py::arg("n_samples") = 2000, py::arg("seed") = 0);

  m.def(
      "sample_target",
      [](const std::string& target, std::size_t n, std::uint64_t seed) {
        Rng rng(seed);
        return array_from_tensor(sample_mixture(mixture_preset(target), n, rng));
      },
      py::arg("target") = "ring8", py::arg("n") = 2000, py::arg("seed") = 0);

  m.def(
      "mode_coverage",
      [](const py::array_t<double>& samples, const std::string& target) {
        return coverage_dict(
            mode_coverage(tensor_from_array(samples), mixture_preset(target)));
      },
      py::arg("samples"), py::arg("target") = "ring8");

  m.def(
      "kernel_gram",
      [](const Checkpoint& ckpt, const py::array_t<double>& x,
         const py::array_t<double>& y) {
        const DeepKernel kernel{ckpt.feature};
        return array_from_tensor(
            kernel.gram(tensor_from_array(x), tensor_from_array(y)));
      },
      py::arg("checkpoint"), py::arg("x"), py::arg("y"));

  m.def(
      "mmd2",
      [](const Checkpoint& ckpt, const py::array_t<double>& x,
         const py::array_t<double>& y) {
        const DeepKernel kernel{ckpt.feature};
        return mmd2_vstat(tensor_from_array(x), tensor_from_array(y), kernel);
      },
      py::arg("checkpoint"), py::arg("x"), py::arg("y"));

  m.def(
      "f_divergence",
      [](const std::string& kind, double u) {
        return f_value(fdivergence_from_string(kind), u);
      },
      py::arg("kind"), py::arg("u"));

  m.def(
      "f_conjugate",
      [](const std::string& kind, double t) {
        return f_conjugate(fdivergence_from_string(kind), t);
      },
      py::arg("kind"), py::arg("t"));

  m.def(
      "run_gradchecks",
      [](std::uint64_t seed) {
        py::list out;
        for (const CheckResult& r : run_gradchecks(seed)) {
          py::dict d;
          d["name"] = r.name;
          d["max_rel_err"] = r.max_rel_err;
          d["tolerance"] = r.tolerance;
          d["pass"] = r.pass;
          out.append(d);
        }
        return out;
      },
      py::arg("seed") = 0);
}
