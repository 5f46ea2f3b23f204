#include "fpk/mlp.hpp"

#include <cmath>

namespace fpk {

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  throw ConfigError("unknown activation kind: '" + name +
                    "' (expected relu or tanh)");
}

std::string to_string(Activation a) {
  return a == Activation::Relu ? "relu" : "tanh";
}

void MlpSpec::validate() const {
  if (widths.size() < 2) {
    throw ConfigError("mlp spec: need at least 2 layer widths, got " +
                      std::to_string(widths.size()));
  }
  for (int w : widths) {
    if (w < 1) throw ConfigError("mlp spec: widths must be >= 1");
  }
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor& w : weights) n += w.size();
  for (const Tensor& b : biases) n += b.size();
  return n;
}

bool MlpParams::all_finite() const {
  for (const Tensor& w : weights)
    if (!w.all_finite()) return false;
  for (const Tensor& b : biases)
    if (!b.all_finite()) return false;
  return true;
}

MlpParams init_mlp(const MlpSpec& spec, Rng& rng) {
  spec.validate();
  MlpParams params;
  for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
    const std::size_t fan_in = static_cast<std::size_t>(spec.widths[l]);
    const std::size_t fan_out = static_cast<std::size_t>(spec.widths[l + 1]);
    const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    Tensor w(fan_in, fan_out);
    for (double& v : w.data()) v = rng.uniform(-bound, bound);
    Tensor b(1, fan_out);
    for (double& v : b.data()) v = rng.uniform(-bound, bound);
    params.weights.push_back(std::move(w));
    params.biases.push_back(std::move(b));
  }
  return params;
}

Tensor mlp_forward(const MlpSpec& spec, const MlpParams& params,
                   const Tensor& input) {
  if (input.cols() != static_cast<std::size_t>(spec.input_dim())) {
    throw DimensionError("mlp: input " + input.shape_str() +
                         " does not match input dim " +
                         std::to_string(spec.input_dim()));
  }
  // Duplicate of the traced path on purpose: this one allocates nothing but
  // the activations.
  Tensor x = input;
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    const Tensor& w = params.weights[l];
    const Tensor& b = params.biases[l];
    Tensor y(x.rows(), w.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t k = 0; k < x.cols(); ++k) {
        const double xik = x.at(i, k);
        for (std::size_t j = 0; j < w.cols(); ++j)
          y.at(i, j) += xik * w.at(k, j);
      }
      for (std::size_t j = 0; j < w.cols(); ++j) y.at(i, j) += b[j];
    }
    if (l + 1 < params.weights.size()) {
      if (spec.hidden == Activation::Relu) {
        for (double& v : y.data())
          if (v < 0.0) v = 0.0;
      } else {
        for (double& v : y.data()) v = std::tanh(v);
      }
    }
    x = std::move(y);
  }
  return x;
}

MlpVars mlp_leaves(Tape& tape, const MlpParams& params) {
  MlpVars vars;
  for (const Tensor& w : params.weights) vars.weights.push_back(tape.leaf(w));
  for (const Tensor& b : params.biases) vars.biases.push_back(tape.leaf(b));
  return vars;
}

Var mlp_forward(Tape& tape, const MlpSpec& spec, const MlpVars& vars,
                Var input) {
  if (tape.value(input).cols() != static_cast<std::size_t>(spec.input_dim())) {
    throw DimensionError("mlp: input " + tape.value(input).shape_str() +
                         " does not match input dim " +
                         std::to_string(spec.input_dim()));
  }
  Var x = input;
  for (std::size_t l = 0; l < vars.weights.size(); ++l) {
    x = tape.add_row(tape.matmul(x, vars.weights[l]), vars.biases[l]);
    if (l + 1 < vars.weights.size()) {
      x = spec.hidden == Activation::Relu ? tape.relu(x) : tape.tanh(x);
    }
  }
  return x;
}

std::vector<double> flatten(const MlpParams& params) {
  std::vector<double> flat;
  flat.reserve(params.parameter_count());
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    const auto& wd = params.weights[l].data();
    flat.insert(flat.end(), wd.begin(), wd.end());
    const auto& bd = params.biases[l].data();
    flat.insert(flat.end(), bd.begin(), bd.end());
  }
  return flat;
}

MlpParams unflatten(const MlpSpec& spec, const std::vector<double>& flat) {
  spec.validate();
  MlpParams params;
  std::size_t pos = 0;
  for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
    const std::size_t in = static_cast<std::size_t>(spec.widths[l]);
    const std::size_t out = static_cast<std::size_t>(spec.widths[l + 1]);
    if (pos + in * out + out > flat.size()) {
      throw DimensionError("unflatten: flat vector too short for spec");
    }
    Tensor w({in, out},
             std::vector<double>(flat.begin() + pos, flat.begin() + pos + in * out));
    pos += in * out;
    Tensor b({1, out},
             std::vector<double>(flat.begin() + pos, flat.begin() + pos + out));
    pos += out;
    params.weights.push_back(std::move(w));
    params.biases.push_back(std::move(b));
  }
  if (pos != flat.size()) {
    throw DimensionError("unflatten: flat vector longer than spec requires");
  }
  return params;
}

std::vector<double> collect_grads(const Tape& tape, const MlpVars& vars) {
  std::vector<double> flat;
  for (std::size_t l = 0; l < vars.weights.size(); ++l) {
    const auto& gw = tape.grad(vars.weights[l]).data();
    flat.insert(flat.end(), gw.begin(), gw.end());
    const auto& gb = tape.grad(vars.biases[l]).data();
    flat.insert(flat.end(), gb.begin(), gb.end());
  }
  return flat;
}

}  // namespace fpk
