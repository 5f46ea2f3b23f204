#pragma once

#include "fpk/mlp.hpp"

namespace fpk {

// An MLP or the identity map. The identity variant backs the generator-free
// EBM mode and identity-feature kernels in tests.
struct Net {
  bool identity = false;
  MlpSpec spec;
  MlpParams params;

  static Net identity_map() { return Net{true, {}, {}}; }
  static Net mlp(MlpSpec s, MlpParams p) {
    return Net{false, std::move(s), std::move(p)};
  }

  Tensor forward(const Tensor& x) const {
    return identity ? x : mlp_forward(spec, params, x);
  }
  MlpVars leaves(Tape& tape) const {
    return identity ? MlpVars{} : mlp_leaves(tape, params);
  }
  Var forward(Tape& tape, const MlpVars& vars, Var x) const {
    return identity ? x : mlp_forward(tape, spec, vars, x);
  }
};

// Deep kernel K(x, y) = exp(-||f(x) - f(y)||^2) with a learned feature map f.
// No bandwidth parameter: the feature map absorbs all scaling.
struct DeepKernel {
  Net features;

  double eval(const Tensor& x, const Tensor& y) const;

  // G[i,j] = K(X[i], Y[j]).
  Tensor gram(const Tensor& X, const Tensor& Y) const;
};

// Gram matrix from precomputed feature matrices, exp(-pairwise sqdist).
Tensor gram_from_features(const Tensor& fx, const Tensor& fy);

}  // namespace fpk
