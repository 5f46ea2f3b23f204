#pragma once

#include <functional>
#include <vector>

#include "fpk/divergence.hpp"
#include "fpk/tensor.hpp"

namespace fpk {

// Handle to a node on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode autodiff over a linear tape of primitive operations. All
// values are rank-2 tensors; scalars are [1,1]. Construction order is the
// topological order, so backward() is a single reverse sweep.
//
// A tape is single-writer: one trace per thread.
class Tape {
 public:
  enum class Op {
    Leaf,
    MatMul,
    Add,
    AddRow,    // [r,c] + broadcast [1,c]
    AddScalar,
    Sub,
    Mul,
    Div,
    Scale,
    Relu,
    Tanh,
    Exp,
    Log,
    Sqrt,
    Square,
    FConj,     // elementwise Fenchel conjugate f*(t) for a fixed kind
    ClampMax,  // min(x, c); derivative 1 where x < c
    Sum,       // all elements -> [1,1]
    Mean,      // all elements -> [1,1]
    RowSum,    // [r,c] -> [r,1]
    PairSqDist,     // ([r,d],[s,d]) -> [r,s] of squared distances
    RowsLogSumExp,  // [r,c] -> [r,1], max-shifted
    LogAddExp,      // elementwise log(exp(a)+exp(b))
  };

  Var leaf(Tensor value);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var add_row(Var a, Var row);
  Var add_scalar(Var a, double c);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var scale(Var a, double c);
  Var neg(Var a) { return scale(a, -1.0); }
  Var relu(Var a);
  Var tanh(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var sqrt(Var a);
  Var square(Var a);
  Var fconj(Var a, FDivergenceKind kind);
  Var clamp_max(Var a, double c);
  Var sum(Var a);
  Var mean(Var a);
  Var row_sum(Var a);
  Var pair_sqdist(Var a, Var b);
  Var rows_logsumexp(Var a);
  Var logaddexp(Var a, Var b);

  const Tensor& value(Var v) const;

  // Reverse accumulation from `out`. The one-argument form requires a [1,1]
  // output and seeds with 1. Gradients of untouched leaves are zero.
  void backward(Var out);
  void backward(Var out, const Tensor& seed);

  const Tensor& grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }

  // Recomputes every node from the recorded leaves and verifies the stored
  // values are reproduced bit-identically.
  bool replay_matches() const;

 private:
  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    double c = 0.0;
    FDivergenceKind kind = FDivergenceKind::KL;
    Tensor value;
  };

  static Tensor compute(const Node& node, const std::vector<Node>& nodes);
  Var push(Node node);
  const Node& node(Var v) const;

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
};

// Central-difference gradient oracle: (f(x+h e_i) - f(x-h e_i)) / (2h) per
// coordinate. Throws NumericError naming the coordinate if f returns a
// non-finite value, and PreconditionError unless h > 0.
Tensor finite_diff(const std::function<double(const Tensor&)>& fn,
                   const Tensor& point, double h = 1e-5);

// max_i |a_i - b_i| / max(1e-12, max_i |b_i|); the relative-error metric used
// by every gradient oracle in the test suites.
double max_rel_error(const Tensor& a, const Tensor& b);

}  // namespace fpk
