#include "fpk/tape.hpp"

#include <algorithm>
#include <cmath>

namespace fpk {

namespace {

Tensor matmul_plain(const Tensor& a, const Tensor& b) {
  const std::size_t r = a.rows(), k = a.cols(), c = b.cols();
  Tensor out(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double aij = a.at(i, j);
      for (std::size_t l = 0; l < c; ++l) {
        out.at(i, l) += aij * b.at(j, l);
      }
    }
  }
  return out;
}

Tensor map_unary(const Tensor& a, const std::function<double(double)>& f) {
  Tensor out = a;
  for (double& v : out.data()) v = f(v);
  return out;
}

}  // namespace

const Tape::Node& Tape::node(Var v) const { return nodes_.at(v.id); }

const Tensor& Tape::value(Var v) const { return node(v).value; }

Var Tape::push(Node n) {
  n.value = compute(n, nodes_);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Tensor Tape::compute(const Node& n, const std::vector<Node>& nodes) {
  auto A = [&]() -> const Tensor& { return nodes[n.a].value; };
  auto B = [&]() -> const Tensor& { return nodes[n.b].value; };
  switch (n.op) {
    case Op::Leaf:
      return n.value;
    case Op::MatMul: {
      if (A().cols() != B().rows()) {
        throw DimensionError("matmul: inner dimensions disagree, " +
                             A().shape_str() + " vs " + B().shape_str());
      }
      return matmul_plain(A(), B());
    }
    case Op::Add: {
      check_same_shape(A(), B(), "add");
      Tensor out = A();
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += B()[i];
      return out;
    }
    case Op::AddRow: {
      if (B().rows() != 1 || B().cols() != A().cols()) {
        throw DimensionError("add_row: row " + B().shape_str() +
                             " does not broadcast over " + A().shape_str());
      }
      Tensor out = A();
      for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j)
          out.at(i, j) += B()[j];
      return out;
    }
    case Op::AddScalar:
      return map_unary(A(), [&](double v) { return v + n.c; });
    case Op::Sub: {
      check_same_shape(A(), B(), "sub");
      Tensor out = A();
      for (std::size_t i = 0; i < out.size(); ++i) out[i] -= B()[i];
      return out;
    }
    case Op::Mul: {
      check_same_shape(A(), B(), "mul");
      Tensor out = A();
      for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B()[i];
      return out;
    }
    case Op::Div: {
      check_same_shape(A(), B(), "div");
      Tensor out = A();
      for (std::size_t i = 0; i < out.size(); ++i) out[i] /= B()[i];
      return out;
    }
    case Op::Scale:
      return map_unary(A(), [&](double v) { return v * n.c; });
    case Op::Relu:
      return map_unary(A(), [](double v) { return v > 0.0 ? v : 0.0; });
    case Op::Tanh:
      return map_unary(A(), [](double v) { return std::tanh(v); });
    case Op::Exp:
      return map_unary(A(), [](double v) { return std::exp(v); });
    case Op::Log:
      return map_unary(A(), [](double v) { return std::log(v); });
    case Op::Sqrt:
      return map_unary(A(), [](double v) { return std::sqrt(v); });
    case Op::Square:
      return map_unary(A(), [](double v) { return v * v; });
    case Op::FConj:
      return map_unary(A(), [&](double v) { return f_conjugate(n.kind, v); });
    case Op::ClampMax:
      return map_unary(A(), [&](double v) { return std::min(v, n.c); });
    case Op::Sum: {
      double s = 0.0;
      for (double v : A().data()) s += v;
      return Tensor({1, 1}, {s});
    }
    case Op::Mean: {
      double s = 0.0;
      for (double v : A().data()) s += v;
      return Tensor({1, 1}, {s / static_cast<double>(A().size())});
    }
    case Op::RowSum: {
      Tensor out(A().rows(), 1);
      for (std::size_t i = 0; i < A().rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < A().cols(); ++j) s += A().at(i, j);
        out.at(i, 0) = s;
      }
      return out;
    }
    case Op::PairSqDist: {
      if (A().cols() != B().cols()) {
        throw DimensionError("pair_sqdist: feature dims disagree, " +
                             A().shape_str() + " vs " + B().shape_str());
      }
      const std::size_t r = A().rows(), s = B().rows(), d = A().cols();
      Tensor out(r, s);
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < s; ++j) {
          double acc = 0.0;
          for (std::size_t l = 0; l < d; ++l) {
            const double diff = A().at(i, l) - B().at(j, l);
            acc += diff * diff;
          }
          out.at(i, j) = acc;
        }
      }
      return out;
    }
    case Op::RowsLogSumExp: {
      Tensor out(A().rows(), 1);
      for (std::size_t i = 0; i < A().rows(); ++i) {
        double m = A().at(i, 0);
        for (std::size_t j = 1; j < A().cols(); ++j)
          m = std::max(m, A().at(i, j));
        double s = 0.0;
        for (std::size_t j = 0; j < A().cols(); ++j)
          s += std::exp(A().at(i, j) - m);
        out.at(i, 0) = m + std::log(s);
      }
      return out;
    }
    case Op::LogAddExp: {
      check_same_shape(A(), B(), "logaddexp");
      Tensor out = A();
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double a = A()[i], b = B()[i];
        const double m = std::max(a, b);
        out[i] = m + std::log(std::exp(a - m) + std::exp(b - m));
      }
      return out;
    }
  }
  throw NumericError("tape: unknown op");
}

Var Tape::leaf(Tensor value) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::matmul(Var a, Var b) { return push({Op::MatMul, a.id, b.id}); }
Var Tape::add(Var a, Var b) { return push({Op::Add, a.id, b.id}); }
Var Tape::add_row(Var a, Var r) { return push({Op::AddRow, a.id, r.id}); }
Var Tape::add_scalar(Var a, double c) { return push({Op::AddScalar, a.id, -1, c}); }
Var Tape::sub(Var a, Var b) { return push({Op::Sub, a.id, b.id}); }
Var Tape::mul(Var a, Var b) { return push({Op::Mul, a.id, b.id}); }
Var Tape::div(Var a, Var b) { return push({Op::Div, a.id, b.id}); }
Var Tape::scale(Var a, double c) { return push({Op::Scale, a.id, -1, c}); }
Var Tape::relu(Var a) { return push({Op::Relu, a.id}); }
Var Tape::tanh(Var a) { return push({Op::Tanh, a.id}); }
Var Tape::exp(Var a) { return push({Op::Exp, a.id}); }
Var Tape::log(Var a) { return push({Op::Log, a.id}); }
Var Tape::sqrt(Var a) { return push({Op::Sqrt, a.id}); }
Var Tape::square(Var a) { return push({Op::Square, a.id}); }
Var Tape::fconj(Var a, FDivergenceKind kind) {
  Node n{Op::FConj, a.id};
  n.kind = kind;
  return push(std::move(n));
}
Var Tape::clamp_max(Var a, double c) { return push({Op::ClampMax, a.id, -1, c}); }
Var Tape::sum(Var a) { return push({Op::Sum, a.id}); }
Var Tape::mean(Var a) { return push({Op::Mean, a.id}); }
Var Tape::row_sum(Var a) { return push({Op::RowSum, a.id}); }
Var Tape::pair_sqdist(Var a, Var b) { return push({Op::PairSqDist, a.id, b.id}); }
Var Tape::rows_logsumexp(Var a) { return push({Op::RowsLogSumExp, a.id}); }
Var Tape::logaddexp(Var a, Var b) { return push({Op::LogAddExp, a.id, b.id}); }

void Tape::backward(Var out) {
  if (value(out).size() != 1) {
    throw DimensionError("backward: scalar seed requires [1,1] output, got " +
                         value(out).shape_str());
  }
  backward(out, Tensor({1, 1}, {1.0}));
}

void Tape::backward(Var out, const Tensor& seed) {
  if (nodes_.empty()) throw PreconditionError("backward: empty tape");
  if (!seed.same_shape(value(out))) {
    throw DimensionError("backward: seed shape " + seed.shape_str() +
                         " does not match output " + value(out).shape_str());
  }
  grads_.assign(nodes_.size(), Tensor());
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    grads_[i] = Tensor::zeros_like(nodes_[i].value);
  grads_[out.id] = seed;

  for (int id = out.id; id >= 0; --id) {
    const Node& n = nodes_[id];
    if (n.op == Op::Leaf) continue;
    const Tensor& g = grads_[id];
    const Tensor& y = n.value;
    Tensor& ga = grads_[n.a];
    const Tensor& va = nodes_[n.a].value;
    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::MatMul: {
        const Tensor& vb = nodes_[n.b].value;
        Tensor& gb = grads_[n.b];
        // dA += g B^T ; dB += A^T g
        for (std::size_t i = 0; i < va.rows(); ++i)
          for (std::size_t k = 0; k < va.cols(); ++k) {
            double acc = 0.0;
            for (std::size_t j = 0; j < vb.cols(); ++j)
              acc += g.at(i, j) * vb.at(k, j);
            ga.at(i, k) += acc;
          }
        for (std::size_t k = 0; k < vb.rows(); ++k)
          for (std::size_t j = 0; j < vb.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < va.rows(); ++i)
              acc += va.at(i, k) * g.at(i, j);
            gb.at(k, j) += acc;
          }
        break;
      }
      case Op::Add: {
        Tensor& gb = grads_[n.b];
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i];
          gb[i] += g[i];
        }
        break;
      }
      case Op::AddRow: {
        Tensor& gb = grads_[n.b];
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) {
            ga.at(i, j) += g.at(i, j);
            gb[j] += g.at(i, j);
          }
        break;
      }
      case Op::AddScalar:
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        break;
      case Op::Sub: {
        Tensor& gb = grads_[n.b];
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i];
          gb[i] -= g[i];
        }
        break;
      }
      case Op::Mul: {
        const Tensor& vb = nodes_[n.b].value;
        Tensor& gb = grads_[n.b];
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i] * vb[i];
          gb[i] += g[i] * va[i];
        }
        break;
      }
      case Op::Div: {
        const Tensor& vb = nodes_[n.b].value;
        Tensor& gb = grads_[n.b];
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i] / vb[i];
          gb[i] -= g[i] * va[i] / (vb[i] * vb[i]);
        }
        break;
      }
      case Op::Scale:
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.c;
        break;
      case Op::Relu:
        for (std::size_t i = 0; i < g.size(); ++i)
          if (va[i] > 0.0) ga[i] += g[i];
        break;
      case Op::Tanh:
        for (std::size_t i = 0; i < g.size(); ++i)
          ga[i] += g[i] * (1.0 - y[i] * y[i]);
        break;
      case Op::Exp:
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
        break;
      case Op::Log:
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / va[i];
        break;
      case Op::Sqrt:
        for (std::size_t i = 0; i < g.size(); ++i)
          ga[i] += g[i] / (2.0 * y[i]);
        break;
      case Op::Square:
        for (std::size_t i = 0; i < g.size(); ++i)
          ga[i] += g[i] * 2.0 * va[i];
        break;
      case Op::FConj:
        for (std::size_t i = 0; i < g.size(); ++i)
          ga[i] += g[i] * f_conjugate_deriv(n.kind, va[i]);
        break;
      case Op::ClampMax:
        for (std::size_t i = 0; i < g.size(); ++i)
          if (va[i] < n.c) ga[i] += g[i];
        break;
      case Op::Sum:
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
        break;
      case Op::Mean: {
        const double w = g[0] / static_cast<double>(ga.size());
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += w;
        break;
      }
      case Op::RowSum:
        for (std::size_t i = 0; i < va.rows(); ++i)
          for (std::size_t j = 0; j < va.cols(); ++j)
            ga.at(i, j) += g.at(i, 0);
        break;
      case Op::PairSqDist: {
        const Tensor& vb = nodes_[n.b].value;
        Tensor& gb = grads_[n.b];
        for (std::size_t i = 0; i < va.rows(); ++i)
          for (std::size_t j = 0; j < vb.rows(); ++j) {
            const double w = 2.0 * g.at(i, j);
            if (w == 0.0) continue;
            for (std::size_t l = 0; l < va.cols(); ++l) {
              const double diff = va.at(i, l) - vb.at(j, l);
              ga.at(i, l) += w * diff;
              gb.at(j, l) -= w * diff;
            }
          }
        break;
      }
      case Op::RowsLogSumExp:
        for (std::size_t i = 0; i < va.rows(); ++i) {
          const double gi = g.at(i, 0);
          if (gi == 0.0) continue;
          for (std::size_t j = 0; j < va.cols(); ++j)
            ga.at(i, j) += gi * std::exp(va.at(i, j) - y.at(i, 0));
        }
        break;
      case Op::LogAddExp: {
        const Tensor& vb = nodes_[n.b].value;
        Tensor& gb = grads_[n.b];
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i] * std::exp(va[i] - y[i]);
          gb[i] += g[i] * std::exp(vb[i] - y[i]);
        }
        break;
      }
    }
  }
}

const Tensor& Tape::grad(Var v) const {
  if (grads_.empty()) throw PreconditionError("grad: backward() not yet run");
  return grads_.at(v.id);
}

bool Tape::replay_matches() const {
  for (const Node& n : nodes_) {
    if (n.op == Op::Leaf) continue;
    if (!(compute(n, nodes_) == n.value)) return false;
  }
  return true;
}

Tensor finite_diff(const std::function<double(const Tensor&)>& fn,
                   const Tensor& point, double h) {
  if (!(h > 0.0)) throw PreconditionError("finite_diff: h must be > 0");
  Tensor grad = Tensor::zeros_like(point);
  Tensor x = point;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = fn(x);
    x[i] = orig - h;
    const double fm = fn(x);
    x[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_diff: non-finite value at coordinate " +
                         std::to_string(i));
    }
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

double max_rel_error(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "max_rel_error");
  double scale = 1e-12;
  for (double v : b.data()) scale = std::max(scale, std::abs(v));
  double err = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    err = std::max(err, std::abs(a[i] - b[i]) / scale);
  return err;
}

}  // namespace fpk
