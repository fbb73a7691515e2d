// Copyright (c) 2026 The sanetts Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Reverse-mode automatic differentiation over dense double tensors.
//
// A Tape records every primitive application in execution order. Each node
// keeps its forward value and a backward rule that reads the node's output
// gradient and accumulates into its inputs. Parameters enter the tape through
// Tape::param(), which remembers the Tensor address; backward() writes the
// final gradient into Tensor::grad.
//
// Matrices are rank-2 tensors [rows x cols]. Vectors are rank-1. Scalars are
// rank-0 (shape {}) with a single value.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sanetts/tensor.hpp"

namespace sanetts {

using NodeId = std::size_t;

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  NodeId id() const { return id_; }
  Tape& tape() const { return *tape_; }

  const Shape& shape() const;
  std::span<const double> values() const;
  std::size_t size() const { return values().size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  double item() const;

 private:
  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

enum class OpKind {
  kConstant,
  kParameter,
  kAdd,
  kSub,
  kMul,
  kScale,
  kAddRow,
  kMulRow,
  kMatmul,
  kTranspose,
  kExp,
  kLog,
  kTanh,
  kRelu,
  kSoftmax,
  kLogSoftmax,
  kLayerNorm,
  kSum,
  kMean,
  kMeanRows,
  kL2Norm,
  kMse,
  kPick,
  kReshape,
  kSegment,
  kSliceCols,
  kConcatCols,
  kStackRows,
  kGatherRows,
  kRepeatRows,
  kUnfold,
  kRelativeBias,
  kGradientReversal,
};

class Tape;
using BackwardFn = std::function<void(Tape&, NodeId)>;

struct TapeNode {
  OpKind op = OpKind::kConstant;
  std::vector<NodeId> inputs;
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  Tensor* param = nullptr;
  BackwardFn backward;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Shape shape, std::vector<double> values) {
    require(numel(shape) == values.size(),
            "constant shape " + to_string(shape) + " does not match " +
                std::to_string(values.size()) + " values");
    TapeNode node;
    node.op = OpKind::kConstant;
    node.shape = std::move(shape);
    node.value = std::move(values);
    return push(std::move(node));
  }

  Var constant(const Tensor& t) { return constant(t.shape, t.values); }
  Var scalar(double v) { return constant(Shape{}, {v}); }

  // Registers a trainable tensor. The same tensor always maps to one leaf.
  Var param(Tensor& t) {
    if (auto it = param_nodes_.find(&t); it != param_nodes_.end()) {
      return Var(this, it->second);
    }
    TapeNode node;
    node.op = OpKind::kParameter;
    node.shape = t.shape;
    node.value = t.values;
    node.requires_grad = t.requires_grad;
    node.param = &t;
    Var v = push(std::move(node));
    param_nodes_.emplace(&t, v.id());
    t.tape_id = v.id();
    return v;
  }

  // Records an op. requires_grad is inherited from the inputs.
  Var record(OpKind op, std::vector<NodeId> inputs, Shape shape,
             std::vector<double> value, BackwardFn backward) {
    TapeNode node;
    node.op = op;
    node.shape = std::move(shape);
    node.value = std::move(value);
    for (NodeId in : inputs) {
      if (in >= nodes_.size()) {
        throw CorruptTape("op input " + std::to_string(in) +
                          " is not defined on this tape");
      }
      node.requires_grad = node.requires_grad || nodes_[in].requires_grad;
    }
    node.inputs = std::move(inputs);
    if (node.requires_grad) node.backward = std::move(backward);
    return push(std::move(node));
  }

  TapeNode& node(NodeId id) { return nodes_.at(id); }
  const TapeNode& node(NodeId id) const { return nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }

  // Adds g into the gradient slot of `id` when that node tracks gradients.
  void accumulate(NodeId id, std::span<const double> g) {
    TapeNode& n = nodes_[id];
    if (!n.requires_grad) return;
    for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
  }

  // Mutable access used by backward rules that scatter sparsely.
  std::vector<double>* grad_slot(NodeId id) {
    TapeNode& n = nodes_[id];
    return n.requires_grad ? &n.grad : nullptr;
  }

 private:
  friend void backward(Tape& tape, Var loss);

  Var push(TapeNode node) {
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
  }

  std::vector<TapeNode> nodes_;
  std::unordered_map<const Tensor*, NodeId> param_nodes_;
};

inline const Shape& Var::shape() const { return tape_->node(id_).shape; }
inline std::span<const double> Var::values() const { return tape_->node(id_).value; }
inline std::size_t Var::rows() const {
  const Shape& s = shape();
  return s.size() == 2 ? s[0] : 1;
}
inline std::size_t Var::cols() const {
  const Shape& s = shape();
  return s.empty() ? 1 : s.back();
}
inline double Var::item() const {
  require(size() == 1, "item() on non-scalar of shape " + to_string(shape()));
  return values()[0];
}

// Zeroes every gradient slot on the tape and in every registered parameter,
// then propagates d(loss)/d(node) in reverse recording order. Calling twice
// yields the same gradients; nothing accumulates across calls.
inline void backward(Tape& tape, Var loss) {
  if (&loss.tape() != &tape || loss.id() >= tape.nodes_.size()) {
    throw ContractViolation("loss node does not belong to this tape");
  }
  if (loss.size() != 1) {
    throw ContractViolation("backward requires a scalar loss, got shape " +
                            to_string(loss.shape()));
  }
  for (NodeId id = 0; id < tape.nodes_.size(); ++id) {
    TapeNode& n = tape.nodes_[id];
    for (NodeId in : n.inputs) {
      if (in >= id) {
        throw CorruptTape("node " + std::to_string(id) + " references input " +
                          std::to_string(in) + " before its definition");
      }
    }
    if (n.requires_grad) n.grad.assign(n.value.size(), 0.0);
    if (n.param && n.param->requires_grad) {
      n.param->grad = std::vector<double>(n.param->values.size(), 0.0);
    }
  }
  TapeNode& root = tape.nodes_[loss.id()];
  if (!root.requires_grad) return;
  root.grad[0] = 1.0;
  for (NodeId id = loss.id() + 1; id-- > 0;) {
    TapeNode& n = tape.nodes_[id];
    if (!n.requires_grad) continue;
    if (n.backward) n.backward(tape, id);
    if (n.param) n.param->grad = n.grad;
  }
}

namespace detail {

inline std::size_t rows_of(const Shape& s) { return s.size() == 2 ? s[0] : 1; }
inline std::size_t cols_of(const Shape& s) { return s.empty() ? 1 : s.back(); }

inline void require_same_tape(const Var& a, const Var& b) {
  require(&a.tape() == &b.tape(), "operands recorded on different tapes");
}

inline void require_same_shape(const char* op, const Var& a, const Var& b) {
  require_same_tape(a, b);
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                      to_string(a.shape()) + " vs " +
                                      to_string(b.shape()));
}

inline void require_matrix(const char* op, const Var& a) {
  require(a.shape().size() == 2, std::string(op) + ": expected a matrix, got " +
                                     to_string(a.shape()));
}

template <typename F>
Var unary(OpKind op, Var a, F&& f, std::function<double(double x, double y)> dydx) {
  Tape& t = a.tape();
  auto in = a.values();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  const NodeId ai = a.id();
  return t.record(op, {ai}, a.shape(), std::move(out),
                  [ai, dydx](Tape& tape, NodeId self) {
                    auto* ga = tape.grad_slot(ai);
                    if (!ga) return;
                    const TapeNode& n = tape.node(self);
                    const auto& x = tape.node(ai).value;
                    for (std::size_t i = 0; i < x.size(); ++i) {
                      (*ga)[i] += n.grad[i] * dydx(x[i], n.value[i]);
                    }
                  });
}

}  // namespace detail

// ---- elementwise -----------------------------------------------------------

inline Var add(Var a, Var b) {
  detail::require_same_shape("add", a, b);
  std::vector<double> out(a.values().begin(), a.values().end());
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const NodeId ai = a.id(), bi = b.id();
  return a.tape().record(OpKind::kAdd, {ai, bi}, a.shape(), std::move(out),
                         [ai, bi](Tape& t, NodeId self) {
                           const auto& g = t.node(self).grad;
                           t.accumulate(ai, g);
                           t.accumulate(bi, g);
                         });
}

inline Var sub(Var a, Var b) {
  detail::require_same_shape("sub", a, b);
  std::vector<double> out(a.values().begin(), a.values().end());
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const NodeId ai = a.id(), bi = b.id();
  return a.tape().record(OpKind::kSub, {ai, bi}, a.shape(), std::move(out),
                         [ai, bi](Tape& t, NodeId self) {
                           const auto& g = t.node(self).grad;
                           t.accumulate(ai, g);
                           if (auto* gb = t.grad_slot(bi)) {
                             for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
                           }
                         });
}

inline Var mul(Var a, Var b) {
  detail::require_same_shape("mul", a, b);
  auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const NodeId ai = a.id(), bi = b.id();
  return a.tape().record(OpKind::kMul, {ai, bi}, a.shape(), std::move(out),
                         [ai, bi](Tape& t, NodeId self) {
                           const auto& g = t.node(self).grad;
                           const auto& x = t.node(ai).value;
                           const auto& y = t.node(bi).value;
                           if (auto* ga = t.grad_slot(ai)) {
                             for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * y[i];
                           }
                           if (auto* gb = t.grad_slot(bi)) {
                             for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * x[i];
                           }
                         });
}

inline Var scale(Var a, double c) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& v : out) v *= c;
  const NodeId ai = a.id();
  return a.tape().record(OpKind::kScale, {ai}, a.shape(), std::move(out),
                         [ai, c](Tape& t, NodeId self) {
                           auto* ga = t.grad_slot(ai);
                           if (!ga) return;
                           const auto& g = t.node(self).grad;
                           for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += c * g[i];
                         });
}

inline Var exp(Var a) {
  return detail::unary(OpKind::kExp, a, [](double x) { return std::exp(x); },
                       [](double, double y) { return y; });
}

// Natural log; inputs must be positive.
inline Var log(Var a) {
  for (double v : a.values()) {
    require(v > 0.0, "log of non-positive value " + std::to_string(v));
  }
  return detail::unary(OpKind::kLog, a, [](double x) { return std::log(x); },
                       [](double x, double) { return 1.0 / x; });
}

inline Var tanh(Var a) {
  return detail::unary(OpKind::kTanh, a, [](double x) { return std::tanh(x); },
                       [](double, double y) { return 1.0 - y * y; });
}

inline Var relu(Var a) {
  return detail::unary(OpKind::kRelu, a, [](double x) { return x > 0.0 ? x : 0.0; },
                       [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

// ---- broadcasting against the last dimension --------------------------------

// a [m x n] + row [n], row broadcast over all m rows.
inline Var add_row(Var a, Var row) {
  detail::require_same_tape(a, row);
  const std::size_t n = detail::cols_of(a.shape());
  require(row.shape().size() == 1 && row.shape()[0] == n,
          "add_row: row " + to_string(row.shape()) + " does not match columns of " +
              to_string(a.shape()));
  std::vector<double> out(a.values().begin(), a.values().end());
  auto rv = row.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += rv[i % n];
  const NodeId ai = a.id(), ri = row.id();
  return a.tape().record(OpKind::kAddRow, {ai, ri}, a.shape(), std::move(out),
                         [ai, ri, n](Tape& t, NodeId self) {
                           const auto& g = t.node(self).grad;
                           t.accumulate(ai, g);
                           if (auto* gr = t.grad_slot(ri)) {
                             for (std::size_t i = 0; i < g.size(); ++i) (*gr)[i % n] += g[i];
                           }
                         });
}

// a [m x n] * row [n], elementwise per row.
inline Var mul_row(Var a, Var row) {
  detail::require_same_tape(a, row);
  const std::size_t n = detail::cols_of(a.shape());
  require(row.shape().size() == 1 && row.shape()[0] == n,
          "mul_row: row " + to_string(row.shape()) + " does not match columns of " +
              to_string(a.shape()));
  auto av = a.values(), rv = row.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * rv[i % n];
  const NodeId ai = a.id(), ri = row.id();
  return a.tape().record(OpKind::kMulRow, {ai, ri}, a.shape(), std::move(out),
                         [ai, ri, n](Tape& t, NodeId self) {
                           const auto& g = t.node(self).grad;
                           const auto& x = t.node(ai).value;
                           const auto& r = t.node(ri).value;
                           if (auto* ga = t.grad_slot(ai)) {
                             for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * r[i % n];
                           }
                           if (auto* gr = t.grad_slot(ri)) {
                             for (std::size_t i = 0; i < g.size(); ++i) (*gr)[i % n] += g[i] * x[i];
                           }
                         });
}

// ---- linear algebra -------------------------------------------------------

namespace detail {

// c[m x n] += a[m x k] * b[k x n]
inline void gemm_nn(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

}  // namespace detail

// a [m x k] * b [k x n] -> [m x n]
inline Var matmul(Var a, Var b) {
  detail::require_same_tape(a, b);
  detail::require_matrix("matmul", a);
  detail::require_matrix("matmul", b);
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  require(b.shape()[0] == k, "matmul: inner dimensions differ " + to_string(a.shape()) +
                                 " vs " + to_string(b.shape()));
  std::vector<double> out(m * n, 0.0);
  detail::gemm_nn(a.values().data(), b.values().data(), out.data(), m, k, n);
  const NodeId ai = a.id(), bi = b.id();
  return a.tape().record(
      OpKind::kMatmul, {ai, bi}, Shape{m, n}, std::move(out),
      [ai, bi, m, k, n](Tape& t, NodeId self) {
        const auto& g = t.node(self).grad;
        const auto& x = t.node(ai).value;
        const auto& y = t.node(bi).value;
        if (auto* ga = t.grad_slot(ai)) {
          // dA[i][p] += sum_j g[i][j] * B[p][j]
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              double s = 0.0;
              for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * y[p * n + j];
              (*ga)[i * k + p] += s;
            }
          }
        }
        if (auto* gb = t.grad_slot(bi)) {
          // dB[p][j] += sum_i A[i][p] * g[i][j]
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              const double aip = x[i * k + p];
              if (aip == 0.0) continue;
              for (std::size_t j = 0; j < n; ++j) (*gb)[p * n + j] += aip * g[i * n + j];
            }
          }
        }
      });
}

inline Var transpose(Var a) {
  detail::require_matrix("transpose", a);
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  auto av = a.values();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  const NodeId ai = a.id();
  return a.tape().record(OpKind::kTranspose, {ai}, Shape{n, m}, std::move(out),
                         [ai, m, n](Tape& t, NodeId self) {
                           auto* ga = t.grad_slot(ai);
                           if (!ga) return;
                           const auto& g = t.node(self).grad;
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < n; ++j) (*ga)[i * n + j] += g[j * m + i];
                         });
}

// ---- row-wise normalizers ---------------------------------------------------

// Softmax over the last dimension, each row shifted by its max.
inline Var softmax(Var a) {
  const std::size_t n = detail::cols_of(a.shape());
  const std::size_t m = a.size() / n;
  auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t r = 0; r < m; ++r) {
    const double* x = av.data() + r * n;
    double* y = out.data() + r * n;
    const double mx = *std::max_element(x, x + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < n; ++j) y[j] /= z;
  }
  const NodeId ai = a.id();
  return a.tape().record(OpKind::kSoftmax, {ai}, a.shape(), std::move(out),
                         [ai, m, n](Tape& t, NodeId self) {
                           auto* ga = t.grad_slot(ai);
                           if (!ga) return;
                           const TapeNode& s = t.node(self);
                           for (std::size_t r = 0; r < m; ++r) {
                             const double* y = s.value.data() + r * n;
                             const double* g = s.grad.data() + r * n;
                             double dot = 0.0;
                             for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
                             for (std::size_t j = 0; j < n; ++j)
                               (*ga)[r * n + j] += y[j] * (g[j] - dot);
                           }
                         });
}

inline Var log_softmax(Var a) {
  const std::size_t n = detail::cols_of(a.shape());
  const std::size_t m = a.size() / n;
  auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t r = 0; r < m; ++r) {
    const double* x = av.data() + r * n;
    const double mx = *std::max_element(x, x + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(x[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = x[j] - lse;
  }
  const NodeId ai = a.id();
  return a.tape().record(OpKind::kLogSoftmax, {ai}, a.shape(), std::move(out),
                         [ai, m, n](Tape& t, NodeId self) {
                           auto* ga = t.grad_slot(ai);
                           if (!ga) return;
                           const TapeNode& s = t.node(self);
                           for (std::size_t r = 0; r < m; ++r) {
                             const double* y = s.value.data() + r * n;
                             const double* g = s.grad.data() + r * n;
                             double gs = 0.0;
                             for (std::size_t j = 0; j < n; ++j) gs += g[j];
                             for (std::size_t j = 0; j < n; ++j)
                               (*ga)[r * n + j] += g[j] - std::exp(y[j]) * gs;
                           }
                         });
}

// Normalizes each row to zero mean and unit variance (no affine part).
inline Var layer_norm(Var a, double eps = 1e-5) {
  const std::size_t n = detail::cols_of(a.shape());
  const std::size_t m = a.size() / n;
  auto av = a.values();
  std::vector<double> out(av.size());
  std::vector<double> inv_std(m);
  for (std::size_t r = 0; r < m; ++r) {
    const double* x = av.data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += x[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = (x[j] - mu) * inv_std[r];
  }
  const NodeId ai = a.id();
  return a.tape().record(
      OpKind::kLayerNorm, {ai}, a.shape(), std::move(out),
      [ai, m, n, inv_std = std::move(inv_std)](Tape& t, NodeId self) {
        auto* ga = t.grad_slot(ai);
        if (!ga) return;
        const TapeNode& s = t.node(self);
        const double dn = static_cast<double>(n);
        for (std::size_t r = 0; r < m; ++r) {
          const double* xh = s.value.data() + r * n;
          const double* g = s.grad.data() + r * n;
          double gm = 0.0, gx = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            gm += g[j];
            gx += g[j] * xh[j];
          }
          gm /= dn;
          gx /= dn;
          for (std::size_t j = 0; j < n; ++j)
            (*ga)[r * n + j] += inv_std[r] * (g[j] - gm - xh[j] * gx);
        }
      });
}

// ---- reductions -------------------------------------------------------------

inline Var sum(Var a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  const NodeId ai = a.id();
  return a.tape().record(OpKind::kSum, {ai}, Shape{}, {s}, [ai](Tape& t, NodeId self) {
    auto* ga = t.grad_slot(ai);
    if (!ga) return;
    const double g = t.node(self).grad[0];
    for (double& v : *ga) v += g;
  });
}

inline Var mean(Var a) {
  const double count = static_cast<double>(a.size());
  double s = 0.0;
  for (double v : a.values()) s += v;
  const NodeId ai = a.id();
  return a.tape().record(OpKind::kMean, {ai}, Shape{}, {s / count},
                         [ai, count](Tape& t, NodeId self) {
                           auto* ga = t.grad_slot(ai);
                           if (!ga) return;
                           const double g = t.node(self).grad[0] / count;
                           for (double& v : *ga) v += g;
                         });
}

// Column means of a [m x n] -> [n].
inline Var mean_rows(Var a) {
  const std::size_t n = detail::cols_of(a.shape());
  const std::size_t m = a.size() / n;
  require(m > 0, "mean_rows of an empty matrix");
  auto av = a.values();
  std::vector<double> out(n, 0.0);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t j = 0; j < n; ++j) out[j] += av[r * n + j];
  for (double& v : out) v /= static_cast<double>(m);
  const NodeId ai = a.id();
  return a.tape().record(OpKind::kMeanRows, {ai}, Shape{n}, std::move(out),
                         [ai, m, n](Tape& t, NodeId self) {
                           auto* ga = t.grad_slot(ai);
                           if (!ga) return;
                           const auto& g = t.node(self).grad;
                           const double inv = 1.0 / static_cast<double>(m);
                           for (std::size_t r = 0; r < m; ++r)
                             for (std::size_t j = 0; j < n; ++j) (*ga)[r * n + j] += g[j] * inv;
                         });
}

// Euclidean norm of all elements. The subgradient at the origin is zero.
inline Var l2_norm(Var a) {
  double ss = 0.0;
  for (double v : a.values()) ss += v * v;
  const double norm = std::sqrt(ss);
  const NodeId ai = a.id();
  return a.tape().record(OpKind::kL2Norm, {ai}, Shape{}, {norm},
                         [ai](Tape& t, NodeId self) {
                           auto* ga = t.grad_slot(ai);
                           if (!ga) return;
                           const double nv = t.node(self).value[0];
                           if (nv == 0.0) return;
                           const double g = t.node(self).grad[0] / nv;
                           const auto& x = t.node(ai).value;
                           for (std::size_t i = 0; i < x.size(); ++i) (*ga)[i] += g * x[i];
                         });
}

// Mean squared error over all elements.
inline Var mse(Var a, Var b) {
  detail::require_same_shape("mse", a, b);
  auto av = a.values(), bv = b.values();
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += (av[i] - bv[i]) * (av[i] - bv[i]);
  const double count = static_cast<double>(av.size());
  const NodeId ai = a.id(), bi = b.id();
  return a.tape().record(OpKind::kMse, {ai, bi}, Shape{}, {s / count},
                         [ai, bi, count](Tape& t, NodeId self) {
                           const double g = 2.0 * t.node(self).grad[0] / count;
                           const auto& x = t.node(ai).value;
                           const auto& y = t.node(bi).value;
                           auto* ga = t.grad_slot(ai);
                           auto* gb = t.grad_slot(bi);
                           for (std::size_t i = 0; i < x.size(); ++i) {
                             const double d = g * (x[i] - y[i]);
                             if (ga) (*ga)[i] += d;
                             if (gb) (*gb)[i] -= d;
                           }
                         });
}

// Scalar element `index` of a (flat indexing).
inline Var pick(Var a, std::size_t index) {
  require(index < a.size(), "pick: index " + std::to_string(index) +
                                " out of range for shape " + to_string(a.shape()));
  const NodeId ai = a.id();
  return a.tape().record(OpKind::kPick, {ai}, Shape{}, {a.values()[index]},
                         [ai, index](Tape& t, NodeId self) {
                           if (auto* ga = t.grad_slot(ai)) (*ga)[index] += t.node(self).grad[0];
                         });
}

// -log softmax(logits)[label] for a single logit vector.
inline Var cross_entropy(Var logits, std::size_t label) {
  require(label < logits.size(), "cross_entropy: label " + std::to_string(label) +
                                     " out of range for " + std::to_string(logits.size()) +
                                     " classes");
  return scale(pick(log_softmax(logits), label), -1.0);
}

// ---- shape manipulation -----------------------------------------------------

inline Var reshape(Var a, Shape shape) {
  require(numel(shape) == a.size(), "reshape: cannot view " + to_string(a.shape()) +
                                        " as " + to_string(shape));
  const NodeId ai = a.id();
  return a.tape().record(OpKind::kReshape, {ai}, std::move(shape),
                         std::vector<double>(a.values().begin(), a.values().end()),
                         [ai](Tape& t, NodeId self) { t.accumulate(ai, t.node(self).grad); });
}

// Contiguous block of a flat tensor viewed with `shape`.
inline Var segment(Var flat, std::size_t offset, Shape shape) {
  const std::size_t count = numel(shape);
  require(offset + count <= flat.size(),
          "segment: [" + std::to_string(offset) + ", " + std::to_string(offset + count) +
              ") exceeds " + std::to_string(flat.size()) + " values");
  auto fv = flat.values();
  std::vector<double> out(fv.begin() + static_cast<std::ptrdiff_t>(offset),
                          fv.begin() + static_cast<std::ptrdiff_t>(offset + count));
  const NodeId fi = flat.id();
  return flat.tape().record(OpKind::kSegment, {fi}, std::move(shape), std::move(out),
                            [fi, offset](Tape& t, NodeId self) {
                              auto* gf = t.grad_slot(fi);
                              if (!gf) return;
                              const auto& g = t.node(self).grad;
                              for (std::size_t i = 0; i < g.size(); ++i) (*gf)[offset + i] += g[i];
                            });
}

inline Var slice_cols(Var a, std::size_t start, std::size_t count) {
  detail::require_matrix("slice_cols", a);
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  require(count > 0 && start + count <= n, "slice_cols: columns [" + std::to_string(start) +
                                               ", " + std::to_string(start + count) +
                                               ") outside " + to_string(a.shape()));
  auto av = a.values();
  std::vector<double> out(m * count);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t j = 0; j < count; ++j) out[r * count + j] = av[r * n + start + j];
  const NodeId ai = a.id();
  return a.tape().record(OpKind::kSliceCols, {ai}, Shape{m, count}, std::move(out),
                         [ai, m, n, start, count](Tape& t, NodeId self) {
                           auto* ga = t.grad_slot(ai);
                           if (!ga) return;
                           const auto& g = t.node(self).grad;
                           for (std::size_t r = 0; r < m; ++r)
                             for (std::size_t j = 0; j < count; ++j)
                               (*ga)[r * n + start + j] += g[r * count + j];
                         });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols of nothing");
  const std::size_t m = parts.front().rows();
  std::vector<std::size_t> widths;
  std::vector<NodeId> ids;
  std::size_t n = 0;
  for (const Var& p : parts) {
    detail::require_matrix("concat_cols", p);
    detail::require_same_tape(parts.front(), p);
    require(p.rows() == m, "concat_cols: row count mismatch " + to_string(parts.front().shape()) +
                               " vs " + to_string(p.shape()));
    widths.push_back(p.cols());
    ids.push_back(p.id());
    n += p.cols();
  }
  std::vector<double> out(m * n);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto pv = parts[k].values();
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t j = 0; j < widths[k]; ++j) out[r * n + off + j] = pv[r * widths[k] + j];
    off += widths[k];
  }
  return parts.front().tape().record(
      OpKind::kConcatCols, ids, Shape{m, n}, std::move(out),
      [ids, widths, m, n](Tape& t, NodeId self) {
        const auto& g = t.node(self).grad;
        std::size_t off = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (auto* gp = t.grad_slot(ids[k])) {
            for (std::size_t r = 0; r < m; ++r)
              for (std::size_t j = 0; j < widths[k]; ++j)
                (*gp)[r * widths[k] + j] += g[r * n + off + j];
          }
          off += widths[k];
        }
      });
}

// Stacks equal-length vectors into a [count x n] matrix.
inline Var stack_rows(const std::vector<Var>& rows) {
  require(!rows.empty(), "stack_rows of nothing");
  const std::size_t n = rows.front().size();
  std::vector<NodeId> ids;
  std::vector<double> out;
  out.reserve(rows.size() * n);
  for (const Var& r : rows) {
    detail::require_same_tape(rows.front(), r);
    require(r.size() == n, "stack_rows: length mismatch " + to_string(rows.front().shape()) +
                               " vs " + to_string(r.shape()));
    ids.push_back(r.id());
    out.insert(out.end(), r.values().begin(), r.values().end());
  }
  return rows.front().tape().record(OpKind::kStackRows, ids, Shape{rows.size(), n},
                                    std::move(out), [ids, n](Tape& t, NodeId self) {
                                      const auto& g = t.node(self).grad;
                                      for (std::size_t k = 0; k < ids.size(); ++k) {
                                        t.accumulate(ids[k], std::span<const double>(
                                                                 g.data() + k * n, n));
                                      }
                                    });
}

// Rows of table [N x d] selected by ids -> [len x d]. Gradients scatter-add.
inline Var gather_rows(Var table, std::span<const std::size_t> ids) {
  detail::require_matrix("gather_rows", table);
  const std::size_t rows = table.shape()[0], d = table.shape()[1];
  require(!ids.empty(), "gather_rows: empty id list");
  auto tv = table.values();
  std::vector<double> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] < rows, "embedding id " + std::to_string(ids[i]) +
                               " out of range for table of " + std::to_string(rows) +
                               " entries");
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(ids[i] * d), d, out.begin() +
                static_cast<std::ptrdiff_t>(i * d));
  }
  const NodeId ti = table.id();
  std::vector<std::size_t> idv(ids.begin(), ids.end());
  return table.tape().record(OpKind::kGatherRows, {ti}, Shape{ids.size(), d}, std::move(out),
                             [ti, d, idv = std::move(idv)](Tape& t, NodeId self) {
                               auto* gt = t.grad_slot(ti);
                               if (!gt) return;
                               const auto& g = t.node(self).grad;
                               for (std::size_t i = 0; i < idv.size(); ++i)
                                 for (std::size_t j = 0; j < d; ++j)
                                   (*gt)[idv[i] * d + j] += g[i * d + j];
                             });
}

// Repeats row i of a [P x d] counts[i] times, in order.
inline Var repeat_rows(Var a, std::span<const std::size_t> counts) {
  detail::require_matrix("repeat_rows", a);
  const std::size_t p = a.shape()[0], d = a.shape()[1];
  require(counts.size() == p, "repeat_rows: " + std::to_string(counts.size()) +
                                  " counts for " + std::to_string(p) + " rows");
  std::size_t total = 0;
  for (std::size_t c : counts) {
    require(c >= 1, "repeat_rows: zero repeat count");
    total += c;
  }
  auto av = a.values();
  std::vector<double> out;
  out.reserve(total * d);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t r = 0; r < counts[i]; ++r)
      out.insert(out.end(), av.begin() + static_cast<std::ptrdiff_t>(i * d),
                 av.begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
  const NodeId ai = a.id();
  std::vector<std::size_t> cv(counts.begin(), counts.end());
  return a.tape().record(OpKind::kRepeatRows, {ai}, Shape{total, d}, std::move(out),
                         [ai, d, cv = std::move(cv)](Tape& t, NodeId self) {
                           auto* ga = t.grad_slot(ai);
                           if (!ga) return;
                           const auto& g = t.node(self).grad;
                           std::size_t row = 0;
                           for (std::size_t i = 0; i < cv.size(); ++i)
                             for (std::size_t r = 0; r < cv[i]; ++r, ++row)
                               for (std::size_t j = 0; j < d; ++j)
                                 (*ga)[i * d + j] += g[row * d + j];
                         });
}

// Sliding window of odd width k over rows of a [L x c] with zero padding:
// row t of the output is [x[t-k/2], ..., x[t+k/2]] -> [L x c*k].
inline Var unfold(Var a, std::size_t kernel) {
  detail::require_matrix("unfold", a);
  require(kernel % 2 == 1, "unfold: kernel size must be odd, got " + std::to_string(kernel));
  const std::size_t len = a.shape()[0], c = a.shape()[1];
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(kernel / 2);
  auto av = a.values();
  std::vector<double> out(len * c * kernel, 0.0);
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t w = 0; w < kernel; ++w) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(w) - half;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
      std::copy_n(av.begin() + src * static_cast<std::ptrdiff_t>(c), c,
                  out.begin() + static_cast<std::ptrdiff_t>((t * kernel + w) * c));
    }
  }
  const NodeId ai = a.id();
  return a.tape().record(OpKind::kUnfold, {ai}, Shape{len, c * kernel}, std::move(out),
                         [ai, len, c, kernel, half](Tape& t, NodeId self) {
                           auto* ga = t.grad_slot(ai);
                           if (!ga) return;
                           const auto& g = t.node(self).grad;
                           for (std::size_t r = 0; r < len; ++r) {
                             for (std::size_t w = 0; w < kernel; ++w) {
                               const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(r) +
                                                          static_cast<std::ptrdiff_t>(w) - half;
                               if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
                               for (std::size_t j = 0; j < c; ++j)
                                 (*ga)[static_cast<std::size_t>(src) * c + j] +=
                                     g[(r * kernel + w) * c + j];
                             }
                           }
                         });
}

// Attention bias matrix [len x len] for one head: entry (i, j) is
// table[head][clamp(j - i, -window, window) + window].
inline Var relative_bias(Var table, std::size_t head, std::size_t len, std::size_t window) {
  detail::require_matrix("relative_bias", table);
  const std::size_t width = 2 * window + 1;
  require(table.shape()[1] == width && head < table.shape()[0],
          "relative_bias: table " + to_string(table.shape()) + " incompatible with head " +
              std::to_string(head) + " and window " + std::to_string(window));
  auto slot = [window](std::size_t i, std::size_t j) {
    const std::ptrdiff_t rel = static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(i);
    const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(window);
    return static_cast<std::size_t>(std::clamp(rel, -w, w) + w);
  };
  auto tv = table.values();
  std::vector<double> out(len * len);
  for (std::size_t i = 0; i < len; ++i)
    for (std::size_t j = 0; j < len; ++j) out[i * len + j] = tv[head * width + slot(i, j)];
  const NodeId ti = table.id();
  return table.tape().record(OpKind::kRelativeBias, {ti}, Shape{len, len}, std::move(out),
                             [ti, head, len, width, slot](Tape& t, NodeId self) {
                               auto* gt = t.grad_slot(ti);
                               if (!gt) return;
                               const auto& g = t.node(self).grad;
                               for (std::size_t i = 0; i < len; ++i)
                                 for (std::size_t j = 0; j < len; ++j)
                                   (*gt)[head * width + slot(i, j)] += g[i * len + j];
                             });
}

// Identity forward; backward multiplies the incoming gradient by -lambda.
inline Var gradient_reversal(Var a, double lambda) {
  const NodeId ai = a.id();
  return a.tape().record(OpKind::kGradientReversal, {ai}, a.shape(),
                         std::vector<double>(a.values().begin(), a.values().end()),
                         [ai, lambda](Tape& t, NodeId self) {
                           auto* ga = t.grad_slot(ai);
                           if (!ga) return;
                           const auto& g = t.node(self).grad;
                           for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += -lambda * g[i];
                         });
}

// Identity forward; blocks all gradient flow.
inline Var stop_gradient(Var a) {
  return a.tape().constant(a.shape(), std::vector<double>(a.values().begin(), a.values().end()));
}

}  // namespace sanetts
