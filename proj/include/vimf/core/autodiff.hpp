#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vimf/core/special.hpp"
#include "vimf/core/tensor.hpp"

namespace vimf {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
  std::size_t id = npos;
  const Tape* owner = nullptr;
};

namespace detail {
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
inline Eigen::Map<RowMat> as_mat(Tensor& t) {
  return Eigen::Map<RowMat>(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                            static_cast<Eigen::Index>(t.cols()));
}
inline Eigen::Map<const RowMat> as_mat(const Tensor& t) {
  return Eigen::Map<const RowMat>(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                                  static_cast<Eigen::Index>(t.cols()));
}
}  // namespace detail

/// Tape-based reverse-mode differentiation over 2-D tensors.
///
/// Values are recorded in creation order, which is a valid topological order,
/// so backward() is a single reverse sweep. A Tape is single-use: record one
/// loss, call backward() once, read gradients.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable input.
  Var leaf(Tensor value) { return push(std::move(value), true, nullptr); }
  /// Non-differentiable input.
  Var constant(Tensor value) { return push(std::move(value), false, nullptr); }

  const Tensor& value(Var v) const { return node(v).value; }
  double scalar(Var v) const {
    const Tensor& t = node(v).value;
    if (t.size() != 1) throw std::invalid_argument("Tape::scalar: value is not 1x1");
    return t[0];
  }
  std::size_t size() const noexcept { return nodes_.size(); }

  void backward(Var loss) {
    Node& out = node_mut(loss);
    if (out.value.size() != 1) {
      throw std::invalid_argument("Tape::backward: loss must be a scalar, got shape " +
                                  Tensor::shape_string(out.value.shape()));
    }
    for (Node& n : nodes_) {
      n.grad = Tensor();
      n.reached = false;
    }
    out.grad = Tensor(out.value.shape(), 1.0);
    out.reached = true;
    for (std::size_t id = loss.id + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.reached || !n.requires_grad) continue;
      if (n.backprop) n.backprop(*this, id);
    }
    backward_done_ = true;
  }

  /// Gradient of the last backward() loss with respect to v.
  const Tensor& grad(Var v) const {
    const Node& n = node(v);
    if (!backward_done_) throw std::logic_error("Tape::grad: backward() has not run");
    if (!n.requires_grad) throw std::logic_error("Tape::grad: value is a constant");
    if (!n.reached) throw std::logic_error("Tape::grad: value does not participate in the loss");
    return n.grad;
  }

  // ---- operations -------------------------------------------------------

  Var matmul(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (A.cols() != B.rows()) {
      throw std::invalid_argument("matmul: inner dimensions differ (" +
                                  std::to_string(A.cols()) + " vs " + std::to_string(B.rows()) + ")");
    }
    Tensor out = Tensor::matrix(A.rows(), B.cols());
    detail::as_mat(out).noalias() = detail::as_mat(A) * detail::as_mat(B);
    return push(std::move(out), any_grad(a, b), [a, b](Tape& t, std::size_t self) {
      const Tensor& g = t.nodes_[self].grad;
      if (t.nodes_[a.id].requires_grad) {
        Tensor ga = Tensor::matrix(t.nodes_[a.id].value.rows(), t.nodes_[a.id].value.cols());
        detail::as_mat(ga).noalias() = detail::as_mat(g) * detail::as_mat(t.nodes_[b.id].value).transpose();
        t.accumulate(a.id, std::move(ga));
      }
      if (t.nodes_[b.id].requires_grad) {
        Tensor gb = Tensor::matrix(t.nodes_[b.id].value.rows(), t.nodes_[b.id].value.cols());
        detail::as_mat(gb).noalias() = detail::as_mat(t.nodes_[a.id].value).transpose() * detail::as_mat(g);
        t.accumulate(b.id, std::move(gb));
      }
    });
  }

  Var add(Var a, Var b) { return binary(a, b, "add", [](double x, double y) { return x + y; }, 1.0, 1.0); }
  Var sub(Var a, Var b) { return binary(a, b, "sub", [](double x, double y) { return x - y; }, 1.0, -1.0); }

  Var mul(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    require_same_shape(A, B, "mul");
    Tensor out(A.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * B[i];
    return push(std::move(out), any_grad(a, b), [a, b](Tape& t, std::size_t self) {
      const Tensor& g = t.nodes_[self].grad;
      if (t.nodes_[a.id].requires_grad) t.accumulate_product(a.id, g, t.nodes_[b.id].value);
      if (t.nodes_[b.id].requires_grad) t.accumulate_product(b.id, g, t.nodes_[a.id].value);
    });
  }

  /// a (r x c) plus row (1 x c) broadcast over every row.
  Var add_row(Var a, Var row) {
    const Tensor& A = value(a);
    const Tensor& R = value(row);
    if (R.size() != A.cols()) {
      throw std::invalid_argument("add_row: row width " + std::to_string(R.size()) +
                                  " does not match " + std::to_string(A.cols()));
    }
    Tensor out = A;
    const std::size_t c = A.cols();
    for (std::size_t r = 0; r < A.rows(); ++r)
      for (std::size_t j = 0; j < c; ++j) out[r * c + j] += R[j];
    return push(std::move(out), any_grad(a, row), [a, row](Tape& t, std::size_t self) {
      const Tensor& g = t.nodes_[self].grad;
      if (t.nodes_[a.id].requires_grad) t.accumulate(a.id, g);
      if (t.nodes_[row.id].requires_grad) {
        Tensor gr(t.nodes_[row.id].value.shape());
        const std::size_t c = gr.size();
        for (std::size_t i = 0; i < g.size(); ++i) gr[i % c] += g[i];
        t.accumulate(row.id, std::move(gr));
      }
    });
  }

  Var scale(Var a, double s) {
    return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
  }
  Var add_scalar(Var a, double s) {
    return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
  }
  Var square(Var a) {
    return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
  }
  Var exp(Var a) {
    return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
  }
  Var log(Var a) {
    return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
  }
  Var sigmoid(Var a) {
    return unary(a, [](double x) { return vimf::sigmoid(x); },
                 [](double, double y) { return y * (1.0 - y); });
  }
  /// log(sigmoid(a)), stable for large |a|.
  Var log_sigmoid(Var a) {
    return unary(a, [](double x) { return vimf::log_sigmoid(x); },
                 [](double x, double) { return vimf::sigmoid(-x); });
  }

  Var sum(Var a) {
    const Tensor& A = value(a);
    return push(Tensor::scalar(A.sum()), any_grad(a), [a](Tape& t, std::size_t self) {
      const double g = t.nodes_[self].grad[0];
      t.accumulate(a.id, Tensor(t.nodes_[a.id].value.shape(), g));
    });
  }

  /// Rows table[indices[i]] stacked into a (len(indices) x cols) matrix.
  Var gather_rows(Var table, std::vector<std::size_t> indices) {
    const Tensor& T = value(table);
    const std::size_t c = T.cols();
    Tensor out = Tensor::matrix(indices.size(), c);
    for (std::size_t r = 0; r < indices.size(); ++r) {
      if (indices[r] >= T.rows()) {
        throw std::invalid_argument("gather_rows: index " + std::to_string(indices[r]) +
                                    " out of range " + std::to_string(T.rows()));
      }
      const double* src = T.data().data() + indices[r] * c;
      std::copy(src, src + c, out.data().data() + r * c);
    }
    return push(std::move(out), any_grad(table),
                [table, idx = std::move(indices)](Tape& t, std::size_t self) {
                  const Tensor& g = t.nodes_[self].grad;
                  Tensor gt(t.nodes_[table.id].value.shape());
                  const std::size_t c = gt.cols();
                  for (std::size_t r = 0; r < idx.size(); ++r) {
                    double* dst = gt.data().data() + idx[r] * c;
                    const double* src = g.data().data() + r * c;
                    for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
                  }
                  t.accumulate(table.id, std::move(gt));
                });
  }

  /// Horizontal concatenation of matrices with equal row counts.
  Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
    const std::size_t r = value(parts[0]).rows();
    std::size_t total = 0;
    std::vector<std::size_t> ids;
    bool needs = false;
    for (Var p : parts) {
      const Tensor& P = value(p);
      if (P.rows() != r) throw std::invalid_argument("concat_cols: row counts differ");
      total += P.cols();
      ids.push_back(p.id);
      needs = needs || nodes_[p.id].requires_grad;
    }
    Tensor out = Tensor::matrix(r, total);
    std::size_t offset = 0;
    for (Var p : parts) {
      const Tensor& P = value(p);
      const std::size_t c = P.cols();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * total + offset + j] = P[i * c + j];
      offset += c;
    }
    return push(std::move(out), needs, [ids](Tape& t, std::size_t self) {
      const Tensor& g = t.nodes_[self].grad;
      const std::size_t total = g.cols();
      std::size_t offset = 0;
      for (std::size_t id : ids) {
        const Tensor& P = t.nodes_[id].value;
        const std::size_t c = P.cols();
        if (t.nodes_[id].requires_grad) {
          Tensor gp(P.shape());
          for (std::size_t i = 0; i < P.rows(); ++i)
            for (std::size_t j = 0; j < c; ++j) gp[i * c + j] = g[i * total + offset + j];
          t.accumulate(id, std::move(gp));
        }
        offset += c;
      }
    });
  }

 private:
  using Backprop = std::function<void(Tape&, std::size_t)>;

  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool reached = false;
    Backprop backprop;
  };

  const Node& node(Var v) const {
    if (v.owner != this || v.id >= nodes_.size()) {
      throw std::logic_error("Tape: variable was not recorded on this tape");
    }
    return nodes_[v.id];
  }
  Node& node_mut(Var v) { return const_cast<Node&>(node(v)); }

  bool any_grad(Var a) const { return node(a).requires_grad; }
  bool any_grad(Var a, Var b) const { return node(a).requires_grad || node(b).requires_grad; }

  Var push(Tensor value, bool requires_grad, Backprop bp) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.backprop = std::move(bp);
    nodes_.push_back(std::move(n));
    backward_done_ = false;
    return Var{nodes_.size() - 1, this};
  }

  void accumulate(std::size_t id, Tensor g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (!n.reached || n.grad.size() != n.value.size()) {
      n.grad = std::move(g);
      n.reached = true;
      return;
    }
    for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
  }

  void accumulate_product(std::size_t id, const Tensor& g, const Tensor& other) {
    Tensor p(g.shape());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = g[i] * other[i];
    accumulate(id, std::move(p));
  }

  template <typename F>
  Var binary(Var a, Var b, const char* name, F f, double da, double db) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    require_same_shape(A, B, name);
    Tensor out(A.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(A[i], B[i]);
    return push(std::move(out), any_grad(a, b), [a, b, da, db](Tape& t, std::size_t self) {
      const Tensor& g = t.nodes_[self].grad;
      if (t.nodes_[a.id].requires_grad) {
        if (da == 1.0) {
          t.accumulate(a.id, g);
        } else {
          Tensor s = g;
          for (double& v : s.data()) v *= da;
          t.accumulate(a.id, std::move(s));
        }
      }
      if (t.nodes_[b.id].requires_grad) {
        if (db == 1.0) {
          t.accumulate(b.id, g);
        } else {
          Tensor s = g;
          for (double& v : s.data()) v *= db;
          t.accumulate(b.id, std::move(s));
        }
      }
    });
  }

  /// Elementwise op with derivative d(x, y) given input x and output y.
  template <typename F, typename D>
  Var unary(Var a, F f, D d) {
    const Tensor& A = value(a);
    Tensor out(A.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(A[i]);
    return push(std::move(out), any_grad(a), [a, d](Tape& t, std::size_t self) {
      const Tensor& g = t.nodes_[self].grad;
      const Tensor& x = t.nodes_[a.id].value;
      const Tensor& y = t.nodes_[self].value;
      Tensor ga(x.shape());
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] = g[i] * d(x[i], y[i]);
      t.accumulate(a.id, std::move(ga));
    });
  }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace vimf
