#pragma once

// Minimal reverse-mode automatic differentiation over dense Eigen matrices.
// A Graph records one forward pass; backward() walks it in reverse and
// accumulates into Parameter::grad. Graphs built with recording disabled
// keep only forward values (inference).

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "direct/common.hpp"

namespace direct::ag {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  Eigen::Index size() const { return value.size(); }
};

class Graph;

struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

class Graph {
 public:
  explicit Graph(bool record = true) : record_(record) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return record_; }

  Var constant(Matrix m) { return push(std::move(m), false, nullptr); }

  // Parameter leaves reference the parameter's storage; gradients flow
  // straight into Parameter::grad.
  Var param(Parameter& p) {
    nodes_.push_back(Node{Matrix(), &p.value, Matrix(), Backward{}, &p, record_});
    return Var{this, nodes_.size() - 1};
  }

  const Matrix& value(Var v) const { return nodes_[v.id].get(); }

  const Matrix& grad(Var v) const { return nodes_[v.id].param ? nodes_[v.id].param->grad : nodes_[v.id].grad; }

  // ---- operations -------------------------------------------------------

  Var matmul(Var a, Var b) {
    Matrix out = value(a) * value(b);
    return unary_or_binary(std::move(out), {a, b}, [a, b](Graph& g, const Matrix& d) {
      if (g.wants(a)) g.accumulate(a, d * g.value(b).transpose());
      if (g.wants(b)) g.accumulate(b, g.value(a).transpose() * d);
    });
  }

  // a * b^T
  Var matmul_nt(Var a, Var b) {
    Matrix out = value(a) * value(b).transpose();
    return unary_or_binary(std::move(out), {a, b}, [a, b](Graph& g, const Matrix& d) {
      if (g.wants(a)) g.accumulate(a, d * g.value(b));
      if (g.wants(b)) g.accumulate(b, d.transpose() * g.value(a));
    });
  }

  Var add(Var a, Var b) {
    Matrix out = value(a) + value(b);
    return unary_or_binary(std::move(out), {a, b}, [a, b](Graph& g, const Matrix& d) {
      if (g.wants(a)) g.accumulate(a, d);
      if (g.wants(b)) g.accumulate(b, d);
    });
  }

  // a (n x m) + row (1 x m) broadcast over rows.
  Var add_row(Var a, Var row) {
    Matrix out = value(a).rowwise() + value(row).row(0);
    return unary_or_binary(std::move(out), {a, row}, [a, row](Graph& g, const Matrix& d) {
      if (g.wants(a)) g.accumulate(a, d);
      if (g.wants(row)) g.accumulate(row, d.colwise().sum());
    });
  }

  Var scale(Var a, double s) {
    Matrix out = value(a) * s;
    return unary_or_binary(std::move(out), {a}, [a, s](Graph& g, const Matrix& d) { g.accumulate(a, d * s); });
  }

  // Rows of `table` selected by `ids` (embedding lookup).
  Var gather_rows(Var table, std::vector<int> ids) {
    const Matrix& t = value(table);
    Matrix out(static_cast<Eigen::Index>(ids.size()), t.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || ids[i] >= t.rows()) throw Error("embedding index out of range");
      out.row(static_cast<Eigen::Index>(i)) = t.row(ids[i]);
    }
    return unary_or_binary(std::move(out), {table}, [table, ids = std::move(ids)](Graph& g, const Matrix& d) {
      Matrix& gt = g.grad_buffer(table);
      for (std::size_t i = 0; i < ids.size(); ++i) gt.row(ids[i]) += d.row(static_cast<Eigen::Index>(i));
    });
  }

  Var block(Var a, Eigen::Index r0, Eigen::Index c0, Eigen::Index nr, Eigen::Index nc) {
    Matrix out = value(a).block(r0, c0, nr, nc);
    return unary_or_binary(std::move(out), {a}, [a, r0, c0, nr, nc](Graph& g, const Matrix& d) {
      g.grad_buffer(a).block(r0, c0, nr, nc) += d;
    });
  }

  Var concat_cols(const std::vector<Var>& parts) {
    Eigen::Index rows = value(parts.front()).rows(), cols = 0;
    for (auto p : parts) cols += value(p).cols();
    Matrix out(rows, cols);
    Eigen::Index c = 0;
    for (auto p : parts) {
      out.middleCols(c, value(p).cols()) = value(p);
      c += value(p).cols();
    }
    return unary_or_binary(std::move(out), parts, [parts](Graph& g, const Matrix& d) {
      Eigen::Index c = 0;
      for (auto p : parts) {
        auto w = g.value(p).cols();
        if (g.wants(p)) g.accumulate(p, d.middleCols(c, w));
        c += w;
      }
    });
  }

  Var softmax_rows(Var a) {
    const Matrix& x = value(a);
    Matrix y(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      double mx = x.row(i).maxCoeff();
      y.row(i) = (x.row(i).array() - mx).exp();
      y.row(i) /= y.row(i).sum();
    }
    Var out = unary_or_binary(y, {a}, nullptr);
    if (record_ && wants(a)) {
      nodes_[out.id].backward = [a, out](Graph& g, const Matrix& d) {
        const Matrix& y = g.value(out);
        Eigen::VectorXd dot = (d.array() * y.array()).rowwise().sum();
        Matrix gx = y.array() * (d.colwise() - dot).array();
        g.accumulate(a, gx);
      };
    }
    return out;
  }

  // Row-wise layer normalization with gain and bias rows.
  Var layer_norm(Var a, Var gain, Var bias, double eps) {
    const Matrix& x = value(a);
    const auto n = static_cast<double>(x.cols());
    Matrix xhat(x.rows(), x.cols());
    Eigen::VectorXd inv_std(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      double mean = x.row(i).mean();
      double var = (x.row(i).array() - mean).square().sum() / n;
      inv_std(i) = 1.0 / std::sqrt(var + eps);
      xhat.row(i) = (x.row(i).array() - mean) * inv_std(i);
    }
    Matrix y = (xhat.array().rowwise() * value(gain).row(0).array()).rowwise() + value(bias).row(0).array();
    return unary_or_binary(std::move(y), {a, gain, bias},
                           [a, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std), n](
                               Graph& g, const Matrix& d) {
                             if (g.wants(gain)) g.accumulate(gain, (d.array() * xhat.array()).colwise().sum());
                             if (g.wants(bias)) g.accumulate(bias, d.colwise().sum());
                             if (!g.wants(a)) return;
                             Matrix dxhat = d.array().rowwise() * g.value(gain).row(0).array();
                             Eigen::VectorXd m1 = dxhat.rowwise().sum() / n;
                             Eigen::VectorXd m2 = (dxhat.array() * xhat.array()).rowwise().sum() / n;
                             Matrix dx = (dxhat.colwise() - m1).array() - xhat.array().colwise() * m2.array();
                             dx = dx.array().colwise() * inv_std.array();
                             g.accumulate(a, dx);
                           });
  }

  // Exact (erf) GELU.
  Var gelu(Var a) {
    const Matrix& x = value(a);
    Matrix y = x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))); });
    return unary_or_binary(std::move(y), {a}, [a](Graph& g, const Matrix& d) {
      const double inv_sqrt2pi = 0.3989422804014327;
      Matrix dy = g.value(a).unaryExpr([&](double v) {
        return 0.5 * (1.0 + std::erf(v / std::sqrt(2.0))) + v * inv_sqrt2pi * std::exp(-0.5 * v * v);
      });
      g.accumulate(a, d.cwiseProduct(dy));
    });
  }

  // Mean binary cross entropy of sigmoid(z) against targets, computed in
  // logit space: mean(softplus(z) - y * z). Returns a 1x1 node.
  Var bce_with_logits_mean(Var z, Matrix targets) {
    const Matrix& x = value(z);
    if (x.rows() != targets.rows() || x.cols() != targets.cols())
      throw Error("bce: logits and targets differ in shape");
    const auto n = static_cast<double>(x.size());
    double total = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      double v = x(i);
      double softplus = v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
      total += softplus - targets(i) * v;
    }
    Matrix out(1, 1);
    out(0, 0) = total / n;
    return unary_or_binary(std::move(out), {z}, [z, targets = std::move(targets), n](Graph& g, const Matrix& d) {
      Matrix p = g.value(z).unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
      g.accumulate(z, (p - targets) * (d(0, 0) / n));
    });
  }

  void backward(Var loss, double seed = 1.0) {
    if (!record_) throw Error("backward() on a graph built without recording");
    if (value(loss).size() != 1) throw Error("backward() requires a scalar loss");
    if (!wants(loss)) return;
    grad_buffer(loss)(0, 0) += seed;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.size() == 0 || n.param) continue;
      if (n.backward) n.backward(*this, n.grad);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  using Backward = std::function<void(Graph&, const Matrix&)>;

  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    Matrix grad;  // allocated lazily
    Backward backward;
    Parameter* param = nullptr;
    bool needs_grad = false;

    const Matrix& get() const { return external ? *external : value; }
  };

  Var push(Matrix value, bool needs_grad, Backward bw) {
    nodes_.push_back(Node{std::move(value), nullptr, Matrix(), std::move(bw), nullptr, needs_grad});
    return Var{this, nodes_.size() - 1};
  }

  Var unary_or_binary(Matrix value, const std::vector<Var>& inputs, Backward bw) {
    bool needs = false;
    if (record_)
      for (auto v : inputs) needs = needs || nodes_[v.id].needs_grad;
    return push(std::move(value), needs, needs ? std::move(bw) : Backward{});
  }

  bool wants(Var v) const { return nodes_[v.id].needs_grad; }

  Matrix& grad_buffer(Var v) {
    Node& n = nodes_[v.id];
    if (n.param) return n.param->grad;
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  template <typename Derived>
  void accumulate(Var v, const Eigen::MatrixBase<Derived>& d) {
    if (!wants(v)) return;
    grad_buffer(v) += d;
  }

  template <typename Derived>
  void accumulate(Var v, const Eigen::ArrayBase<Derived>& d) {
    if (!wants(v)) return;
    grad_buffer(v) += d.matrix();
  }

  bool record_;
  std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return graph->value(*this); }

}  // namespace direct::ag
