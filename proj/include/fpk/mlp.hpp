#pragma once

#include <vector>

#include "fpk/rng.hpp"
#include "fpk/tape.hpp"
#include "fpk/tensor.hpp"

namespace fpk {

enum class Activation { Relu, Tanh };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);

// Architecture of a fully-connected net: layer widths and the hidden
// activation. The output layer is linear.
struct MlpSpec {
  std::vector<int> widths;  // at least input + output
  Activation hidden = Activation::Relu;

  int input_dim() const { return widths.front(); }
  int output_dim() const { return widths.back(); }
  std::size_t layer_count() const { return widths.size() - 1; }
  void validate() const;
};

// Weight matrices [in,out] and bias rows [1,out] per layer.
struct MlpParams {
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;

  std::size_t parameter_count() const;
  bool all_finite() const;
  bool operator==(const MlpParams&) const = default;
};

// Uniform init in [-sqrt(1/fan_in), +sqrt(1/fan_in)].
MlpParams init_mlp(const MlpSpec& spec, Rng& rng);

// Plain forward pass, input [batch, in] -> [batch, out].
Tensor mlp_forward(const MlpSpec& spec, const MlpParams& params,
                   const Tensor& input);

// Tape handles for a parameter set (leaves, in layer order).
struct MlpVars {
  std::vector<Var> weights;
  std::vector<Var> biases;
};

MlpVars mlp_leaves(Tape& tape, const MlpParams& params);

// Traced forward pass through previously created leaves.
Var mlp_forward(Tape& tape, const MlpSpec& spec, const MlpVars& vars,
                Var input);

// Flat parameter vector in layer order (W row-major, then b), and its
// inverse. Used by finite-difference oracles and the optimizer.
std::vector<double> flatten(const MlpParams& params);
MlpParams unflatten(const MlpSpec& spec, const std::vector<double>& flat);

// Collects d/dW, d/db from a tape after backward() into one flat vector.
std::vector<double> collect_grads(const Tape& tape, const MlpVars& vars);

}  // namespace fpk
