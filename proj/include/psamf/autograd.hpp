// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode automatic differentiation over dense row-major
// double matrices. A Var is a handle to a graph node; every op records a
// closure that pushes the node's gradient back to its parents. Graphs are
// rebuilt on every forward pass and freed when the last handle drops.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "psamf/errors.hpp"

namespace psamf {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Rng = std::mt19937_64;

namespace ag {

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Matrix value;
  Matrix grad;  // empty until something flows in
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward;

  void accumulate(const Matrix& g) {
    if (!requires_grad) return;
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(Matrix value, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  static Var scalar(double v) {
    Matrix m(1, 1);
    m(0, 0) = v;
    return Var(std::move(m));
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Matrix& value() const { return node_->value; }
  // Direct access for optimizers and weight loading. Never call on a node
  // that is part of a live graph.
  Matrix& mutable_value() { return node_->value; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double item() const {
    if (node_->value.size() != 1) throw ShapeError("item() on a non-scalar Var");
    return node_->value(0, 0);
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  bool has_grad() const { return node_->grad.size() != 0; }
  // Gradient, or a zero matrix of the value's shape if nothing flowed in.
  Matrix grad() const {
    if (has_grad()) return node_->grad;
    return Matrix::Zero(rows(), cols());
  }
  void zero_grad() { node_->grad.resize(0, 0); }

  const NodePtr& node() const { return node_; }

  // Reverse sweep from a scalar root.
  void backward() const;

 private:
  NodePtr node_;
};

namespace detail {
inline thread_local bool grad_mode = true;
}  // namespace detail

// While alive, ops record no graph (evaluation passes).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode) { detail::grad_mode = false; }
  ~NoGradGuard() { detail::grad_mode = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

inline Var make(Matrix value, std::initializer_list<Var> parents,
                std::function<void(Node&)> fn) {
  Var out(std::move(value));
  if (!grad_mode) return out;
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (!any) return out;
  out.set_requires_grad(true);
  auto& node = *out.node();
  for (const auto& p : parents) node.parents.push_back(p.node());
  node.backward = std::move(fn);
  return out;
}

inline Var make(Matrix value, const std::vector<Var>& parents,
                std::function<void(Node&)> fn) {
  Var out(std::move(value));
  if (!grad_mode) return out;
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (!any) return out;
  out.set_requires_grad(true);
  auto& node = *out.node();
  for (const auto& p : parents) node.parents.push_back(p.node());
  node.backward = std::move(fn);
  return out;
}

inline void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch [" + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + "] vs [" + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()) + "]");
  }
}

}  // namespace detail

inline void Var::backward() const {
  if (node_->value.size() != 1) throw ShapeError("backward() requires a scalar root");
  if (!node_->requires_grad) return;
  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      Node* p = n->parents[idx++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size() != 0) n->backward(*n);
  }
}

// ---------------------------------------------------------------------------
// Linear algebra

inline Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.rows()));
  }
  return detail::make(a.value() * b.value(), {a, b}, [](Node& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    if (pa.requires_grad) pa.accumulate(n.grad * pb.value.transpose());
    if (pb.requires_grad) pb.accumulate(pa.value.transpose() * n.grad);
  });
}

inline Var transpose(const Var& a) {
  return detail::make(a.value().transpose(), {a},
                      [](Node& n) { n.parents[0]->accumulate(n.grad.transpose()); });
}

// ---------------------------------------------------------------------------
// Elementwise binary

inline Var add(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "add");
  return detail::make(a.value() + b.value(), {a, b}, [](Node& n) {
    n.parents[0]->accumulate(n.grad);
    n.parents[1]->accumulate(n.grad);
  });
}

inline Var sub(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "sub");
  return detail::make(a.value() - b.value(), {a, b}, [](Node& n) {
    n.parents[0]->accumulate(n.grad);
    n.parents[1]->accumulate(-n.grad);
  });
}

inline Var mul(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "mul");
  return detail::make(a.value().cwiseProduct(b.value()), {a, b}, [](Node& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    if (pa.requires_grad) pa.accumulate(n.grad.cwiseProduct(pb.value));
    if (pb.requires_grad) pb.accumulate(n.grad.cwiseProduct(pa.value));
  });
}

// a [r x c] + row [1 x c], broadcast over rows.
inline Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("add_row: bias width mismatch");
  Matrix v = a.value();
  v.rowwise() += row.value().row(0);
  return detail::make(std::move(v), {a, row}, [](Node& n) {
    n.parents[0]->accumulate(n.grad);
    n.parents[1]->accumulate(n.grad.colwise().sum());
  });
}

// a [r x c] * col [r x 1], broadcast over columns.
inline Var mul_col(const Var& a, const Var& col) {
  if (col.cols() != 1 || col.rows() != a.rows()) throw ShapeError("mul_col: column height mismatch");
  Matrix v = a.value().array().colwise() * col.value().col(0).array();
  return detail::make(std::move(v), {a, col}, [](Node& n) {
    auto& pa = *n.parents[0];
    auto& pc = *n.parents[1];
    if (pa.requires_grad) {
      Matrix g = n.grad.array().colwise() * pc.value.col(0).array();
      pa.accumulate(g);
    }
    if (pc.requires_grad) pc.accumulate(n.grad.cwiseProduct(pa.value).rowwise().sum());
  });
}

inline Var scale(const Var& a, double s) {
  return detail::make(a.value() * s, {a}, [s](Node& n) { n.parents[0]->accumulate(n.grad * s); });
}

inline Var add_scalar(const Var& a, double s) {
  Matrix v = a.value().array() + s;
  return detail::make(std::move(v), {a}, [](Node& n) { n.parents[0]->accumulate(n.grad); });
}

inline Var neg(const Var& a) { return scale(a, -1.0); }

// Multiplication by a constant matrix (masks, dropout).
inline Var mul_const(const Var& a, const Matrix& c) {
  if (c.rows() != a.rows() || c.cols() != a.cols()) throw ShapeError("mul_const: shape mismatch");
  return detail::make(a.value().cwiseProduct(c), {a},
                      [c](Node& n) { n.parents[0]->accumulate(n.grad.cwiseProduct(c)); });
}

// ---------------------------------------------------------------------------
// Elementwise unary

inline Var tanh(const Var& a) {
  Matrix y = a.value().array().tanh();
  return detail::make(y, {a}, [y](Node& n) {
    n.parents[0]->accumulate(n.grad.cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

inline Var sigmoid(const Var& a) {
  Matrix y = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return detail::make(y, {a}, [y](Node& n) {
    n.parents[0]->accumulate(n.grad.cwiseProduct((y.array() * (1.0 - y.array())).matrix()));
  });
}

inline Var relu(const Var& a) {
  Matrix y = a.value().cwiseMax(0.0);
  return detail::make(y, {a}, [](Node& n) {
    const Matrix& x = n.parents[0]->value;
    Matrix g = (x.array() > 0.0).select(n.grad, 0.0);
    n.parents[0]->accumulate(g);
  });
}

// tanh approximation of GELU.
inline Var gelu(const Var& a) {
  static constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  static constexpr double c = 0.044715;
  const auto& x = a.value().array();
  Eigen::ArrayXXd inner = k * (x + c * x.cube());
  Eigen::ArrayXXd t = inner.tanh();
  Matrix y = (0.5 * x * (1.0 + t)).matrix();
  return detail::make(std::move(y), {a}, [](Node& n) {
    const auto& x = n.parents[0]->value.array();
    Eigen::ArrayXXd t = (k * (x + c * x.cube())).tanh();
    Eigen::ArrayXXd d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t.square()) * k * (1.0 + 3.0 * c * x.square());
    Matrix g = (n.grad.array() * d).matrix();
    n.parents[0]->accumulate(g);
  });
}

inline Var exp(const Var& a) {
  Matrix y = a.value().array().exp();
  return detail::make(y, {a}, [y](Node& n) { n.parents[0]->accumulate(n.grad.cwiseProduct(y)); });
}

inline Var log(const Var& a) {
  return detail::make(a.value().array().log().matrix(), {a}, [](Node& n) {
    n.parents[0]->accumulate(n.grad.cwiseQuotient(n.parents[0]->value));
  });
}

// Subgradient 0 at the kink.
inline Var abs(const Var& a) {
  return detail::make(a.value().cwiseAbs(), {a}, [](Node& n) {
    Matrix s = n.parents[0]->value.unaryExpr([](double x) { return double((x > 0) - (x < 0)); });
    n.parents[0]->accumulate(n.grad.cwiseProduct(s));
  });
}

inline Var clamp(const Var& a, double lo, double hi) {
  Matrix y = a.value().cwiseMax(lo).cwiseMin(hi);
  return detail::make(std::move(y), {a}, [lo, hi](Node& n) {
    const Matrix& x = n.parents[0]->value;
    Matrix g = (x.array() > lo && x.array() < hi).select(n.grad, 0.0);
    n.parents[0]->accumulate(g);
  });
}

// ---------------------------------------------------------------------------
// Reductions

inline Var sum(const Var& a) {
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  return detail::make(std::move(v), {a}, [](Node& n) {
    const auto& p = *n.parents[0];
    n.parents[0]->accumulate(Matrix::Constant(p.value.rows(), p.value.cols(), n.grad(0, 0)));
  });
}

inline Var mean(const Var& a) {
  const double count = static_cast<double>(a.value().size());
  Matrix v(1, 1);
  v(0, 0) = a.value().sum() / count;
  return detail::make(std::move(v), {a}, [count](Node& n) {
    const auto& p = *n.parents[0];
    n.parents[0]->accumulate(Matrix::Constant(p.value.rows(), p.value.cols(), n.grad(0, 0) / count));
  });
}

// Per-row sum: [r x c] -> [r x 1].
inline Var row_sum(const Var& a) {
  Matrix v = a.value().rowwise().sum();
  return detail::make(std::move(v), {a}, [](Node& n) {
    const auto& p = *n.parents[0];
    Matrix g = n.grad.col(0).replicate(1, p.value.cols());
    n.parents[0]->accumulate(g);
  });
}

// Column means over rows: [r x c] -> [1 x c].
inline Var mean_rows(const Var& a) {
  const double count = static_cast<double>(a.rows());
  Matrix v = a.value().colwise().sum() / count;
  return detail::make(std::move(v), {a}, [count](Node& n) {
    const auto& p = *n.parents[0];
    Matrix g = (n.grad.row(0) / count).replicate(p.value.rows(), 1);
    n.parents[0]->accumulate(g);
  });
}

// Main diagonal of a square matrix as a column [n x 1].
inline Var diag(const Var& a) {
  if (a.rows() != a.cols()) throw ShapeError("diag: matrix is not square");
  Matrix v = a.value().diagonal();
  return detail::make(std::move(v), {a}, [](Node& n) {
    const auto& p = *n.parents[0];
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    g.diagonal() = n.grad.col(0);
    n.parents[0]->accumulate(g);
  });
}

// ---------------------------------------------------------------------------
// Structural

inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Eigen::Index total = 0;
  const Eigen::Index cols = parts.front().cols();
  for (const auto& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: column count mismatch");
    total += p.rows();
  }
  Matrix v(total, cols);
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    v.middleRows(off, p.rows()) = p.value();
    off += p.rows();
  }
  return detail::make(std::move(v), parts, [](Node& n) {
    Eigen::Index off = 0;
    for (auto& p : n.parents) {
      const Eigen::Index r = p->value.rows();
      if (p->requires_grad) p->accumulate(n.grad.middleRows(off, r));
      off += r;
    }
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Eigen::Index total = 0;
  const Eigen::Index rows = parts.front().rows();
  for (const auto& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row count mismatch");
    total += p.cols();
  }
  Matrix v(rows, total);
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    v.middleCols(off, p.cols()) = p.value();
    off += p.cols();
  }
  return detail::make(std::move(v), parts, [](Node& n) {
    Eigen::Index off = 0;
    for (auto& p : n.parents) {
      const Eigen::Index c = p->value.cols();
      if (p->requires_grad) p->accumulate(n.grad.middleCols(off, c));
      off += c;
    }
  });
}

inline Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw ShapeError("slice_rows: out of range");
  return detail::make(a.value().middleRows(start, count), {a}, [start, count](Node& n) {
    const auto& p = *n.parents[0];
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    g.middleRows(start, count) = n.grad;
    n.parents[0]->accumulate(g);
  });
}

inline Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw ShapeError("slice_cols: out of range");
  return detail::make(a.value().middleCols(start, count), {a}, [start, count](Node& n) {
    const auto& p = *n.parents[0];
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    g.middleCols(start, count) = n.grad;
    n.parents[0]->accumulate(g);
  });
}

// Row gather (embedding lookup); gradient scatter-adds into the table.
inline Var gather_rows(const Var& table, std::span<const int> index) {
  Matrix v(static_cast<Eigen::Index>(index.size()), table.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= table.rows()) throw ShapeError("gather_rows: index out of range");
    v.row(static_cast<Eigen::Index>(i)) = table.value().row(index[i]);
  }
  std::vector<int> idx(index.begin(), index.end());
  return detail::make(std::move(v), {table}, [idx = std::move(idx)](Node& n) {
    const auto& p = *n.parents[0];
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += n.grad.row(static_cast<Eigen::Index>(i));
    n.parents[0]->accumulate(g);
  });
}

// ---------------------------------------------------------------------------
// Fused neural-network primitives

inline Matrix softmax_rows_value(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - m).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  return y;
}

inline Var softmax_rows(const Var& a) {
  Matrix y = softmax_rows_value(a.value());
  return detail::make(y, {a}, [y](Node& n) {
    Matrix gy = n.grad.cwiseProduct(y);
    Matrix g = gy - (y.array().colwise() * gy.rowwise().sum().col(0).array()).matrix();
    n.parents[0]->accumulate(g);
  });
}

inline Var log_softmax_rows(const Var& a) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    const double lse = m + std::log((x.row(r).array() - m).exp().sum());
    y.row(r) = x.row(r).array() - lse;
  }
  return detail::make(y, {a}, [y](Node& n) {
    Matrix p = y.array().exp();
    Matrix g = n.grad - (p.array().colwise() * n.grad.rowwise().sum().col(0).array()).matrix();
    n.parents[0]->accumulate(g);
  });
}

// Row-wise layer normalization with affine gain/shift ([1 x c] each).
inline Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5) {
  const Eigen::Index rows = x.rows();
  const Eigen::Index cols = x.cols();
  if (gamma.cols() != cols || beta.cols() != cols) throw ShapeError("layer_norm_rows: width mismatch");
  Matrix xhat(rows, cols);
  Eigen::VectorXd inv_std(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mu = x.value().row(r).mean();
    const double var = (x.value().row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.value().row(r).array() - mu) * inv_std(r);
  }
  Matrix y = xhat;
  y.array().rowwise() *= gamma.value().row(0).array();
  y.rowwise() += beta.value().row(0);
  return detail::make(std::move(y), {x, gamma, beta}, [xhat, inv_std](Node& n) {
    auto& px = *n.parents[0];
    auto& pg = *n.parents[1];
    auto& pb = *n.parents[2];
    if (pg.requires_grad) pg.accumulate(n.grad.cwiseProduct(xhat).colwise().sum());
    if (pb.requires_grad) pb.accumulate(n.grad.colwise().sum());
    if (px.requires_grad) {
      const double c = static_cast<double>(xhat.cols());
      Matrix dxhat = n.grad;
      dxhat.array().rowwise() *= pg.value.row(0).array();
      Matrix g(xhat.rows(), xhat.cols());
      for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
        const double s1 = dxhat.row(r).sum();
        const double s2 = dxhat.row(r).dot(xhat.row(r));
        g.row(r) = (inv_std(r) / c) * (c * dxhat.row(r).array() - s1 - xhat.row(r).array() * s2);
      }
      px.accumulate(g);
    }
  });
}

// Divides each row by its exact L2 norm. A zero row is a hard error.
inline Var l2_normalize_rows(const Var& a) {
  const Matrix& x = a.value();
  Eigen::VectorXd norms = x.rowwise().norm();
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    if (!(norms(r) > 0.0)) {
      throw DegenerateInputError("zero-norm embedding row " + std::to_string(r) +
                                 "; cosine similarity is undefined");
    }
  }
  Matrix y = x.array().colwise() / norms.array();
  return detail::make(y, {a}, [y, norms](Node& n) {
    Matrix g(y.rows(), y.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double proj = y.row(r).dot(n.grad.row(r));
      g.row(r) = (n.grad.row(r) - proj * y.row(r)) / norms(r);
    }
    n.parents[0]->accumulate(g);
  });
}

// Zero-padded ("same") 1-D convolution along the feature axis.
// channels: C inputs of shape [n x d]; kernel: [C x k], k odd; bias: [1 x 1].
// out[i, j] = bias + sum_c sum_t kernel(c, t) * channels[c](i, j + t - k/2).
inline Var conv1d_same(const std::vector<Var>& channels, const Var& kernel, const Var& bias) {
  if (channels.empty() || kernel.rows() != static_cast<Eigen::Index>(channels.size())) {
    throw ShapeError("conv1d_same: kernel rows must equal channel count");
  }
  const Eigen::Index width = kernel.cols();
  if (width % 2 != 1) throw ShapeError("conv1d_same: kernel width must be odd");
  const Eigen::Index n = channels.front().rows();
  const Eigen::Index d = channels.front().cols();
  for (const auto& c : channels) {
    if (c.rows() != n || c.cols() != d) throw ShapeError("conv1d_same: channel shape mismatch");
  }
  const Eigen::Index pad = width / 2;
  const Matrix& w = kernel.value();
  Matrix out = Matrix::Constant(n, d, bias.item());
  for (std::size_t c = 0; c < channels.size(); ++c) {
    const Matrix& x = channels[c].value();
    for (Eigen::Index t = 0; t < width; ++t) {
      const Eigen::Index shift = t - pad;
      for (Eigen::Index j = 0; j < d; ++j) {
        const Eigen::Index src = j + shift;
        if (src < 0 || src >= d) continue;
        out.col(j) += w(static_cast<Eigen::Index>(c), t) * x.col(src);
      }
    }
  }
  std::vector<Var> parents = channels;
  parents.push_back(kernel);
  parents.push_back(bias);
  const std::size_t nc = channels.size();
  return detail::make(std::move(out), parents, [nc, width, pad, d](Node& node) {
    auto& pk = *node.parents[nc];
    auto& pb = *node.parents[nc + 1];
    const Matrix& g = node.grad;
    Matrix gk = Matrix::Zero(pk.value.rows(), width);
    for (std::size_t c = 0; c < nc; ++c) {
      auto& px = *node.parents[c];
      Matrix gx = Matrix::Zero(px.value.rows(), d);
      for (Eigen::Index t = 0; t < width; ++t) {
        const Eigen::Index shift = t - pad;
        for (Eigen::Index j = 0; j < d; ++j) {
          const Eigen::Index src = j + shift;
          if (src < 0 || src >= d) continue;
          if (px.requires_grad) gx.col(src) += pk.value(static_cast<Eigen::Index>(c), t) * g.col(j);
          gk(static_cast<Eigen::Index>(c), t) += g.col(j).dot(px.value.col(src));
        }
      }
      if (px.requires_grad) px.accumulate(gx);
    }
    pk.accumulate(gk);
    Matrix gb(1, 1);
    gb(0, 0) = g.sum();
    pb.accumulate(gb);
  });
}

// Operator sugar for the common cases.
inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, double s) { return scale(a, s); }

}  // namespace ag
}  // namespace psamf
