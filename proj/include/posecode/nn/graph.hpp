#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "posecode/error.hpp"

namespace posecode::nn {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
struct Parameter {
  std::string name;
  Mat<Scalar> value;
  Mat<Scalar> grad;
  Mat<Scalar> adam_m;
  Mat<Scalar> adam_v;

  void zero_grad() { grad.setZero(); }
};

// Dynamically built reverse-mode tape over dense matrices, templated on the
// scalar so training runs in float and gradient checks in double. Ops
// compute values eagerly and record a closure that scatters the output
// gradient onto the inputs; backward() replays the closures in reverse
// creation order, which is a valid topological order by construction.
template <typename Scalar>
class Graph {
 public:
  using M = Mat<Scalar>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  int constant(M v) { return push(std::move(v), {}); }

  int scalar(Scalar v) {
    M m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
  }

  // Leaf bound to an external parameter; backward() accumulates into p.grad.
  int leaf(Parameter<Scalar>& p) {
    const int id = push(p.value, {});
    bindings_.emplace_back(id, &p);
    return id;
  }

  int push(M val, std::function<void()> back) {
    nodes_.push_back(Node{std::move(val), M(), std::move(back)});
    return static_cast<int>(nodes_.size()) - 1;
  }

  int next_id() const { return static_cast<int>(nodes_.size()); }

  const M& val(int id) const { return nodes_[id].val; }

  // Lazily allocated zero-initialized gradient buffer.
  M& grad(int id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = M::Zero(n.val.rows(), n.val.cols());
    return n.grad;
  }

  // Read-only view for backward closures; only valid for nodes whose grad
  // buffer exists (a node's closure only runs in that case).
  const M& grad_ro(int id) const { return nodes_[id].grad; }

  void backward(int loss) {
    if (val(loss).rows() != 1 || val(loss).cols() != 1)
      throw NumericError("backward: loss node must be 1x1");
    grad(loss)(0, 0) = Scalar(1);
    for (int id = loss; id >= 0; --id) {
      const Node& n = nodes_[id];
      if (n.grad.size() != 0 && n.back) n.back();
    }
    for (auto& [id, p] : bindings_) {
      if (nodes_[id].grad.size() == 0) continue;
      if (p->grad.size() == 0) p->grad = M::Zero(p->value.rows(), p->value.cols());
      p->grad += nodes_[id].grad;
    }
  }

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    M val;
    M grad;
    std::function<void()> back;
  };

  std::vector<Node> nodes_;
  std::vector<std::pair<int, Parameter<Scalar>*>> bindings_;
};

// ---- ops ----------------------------------------------------------------
// Each returns the id of a freshly pushed node.

template <typename Scalar>
int add(Graph<Scalar>& g, int a, int b) {
  const int id = g.next_id();
  return g.push(g.val(a) + g.val(b), [G = &g, a, b, id] {
    G->grad(a) += G->grad_ro(id);
    G->grad(b) += G->grad_ro(id);
  });
}

template <typename Scalar>
int sub(Graph<Scalar>& g, int a, int b) {
  const int id = g.next_id();
  return g.push(g.val(a) - g.val(b), [G = &g, a, b, id] {
    G->grad(a) += G->grad_ro(id);
    G->grad(b) -= G->grad_ro(id);
  });
}

template <typename Scalar>
int add_const(Graph<Scalar>& g, int a, const Mat<Scalar>& c) {
  const int id = g.next_id();
  return g.push(g.val(a) + c, [G = &g, a, id] { G->grad(a) += G->grad_ro(id); });
}

template <typename Scalar>
int cmul(Graph<Scalar>& g, int a, int b) {
  const int id = g.next_id();
  return g.push(g.val(a).cwiseProduct(g.val(b)), [G = &g, a, b, id] {
    G->grad(a) += G->grad_ro(id).cwiseProduct(G->val(b));
    G->grad(b) += G->grad_ro(id).cwiseProduct(G->val(a));
  });
}

template <typename Scalar>
int cmul_const(Graph<Scalar>& g, int a, Mat<Scalar> c) {
  const int id = g.next_id();
  Mat<Scalar> val = g.val(a).cwiseProduct(c);
  return g.push(std::move(val), [G = &g, a, id, c = std::move(c)] {
    G->grad(a) += G->grad_ro(id).cwiseProduct(c);
  });
}

template <typename Scalar>
int scale(Graph<Scalar>& g, int a, Scalar s) {
  const int id = g.next_id();
  return g.push(g.val(a) * s, [G = &g, a, id, s] { G->grad(a) += s * G->grad_ro(id); });
}

template <typename Scalar>
int matmul(Graph<Scalar>& g, int a, int b) {
  const int id = g.next_id();
  return g.push(g.val(a) * g.val(b), [G = &g, a, b, id] {
    G->grad(a).noalias() += G->grad_ro(id) * G->val(b).transpose();
    G->grad(b).noalias() += G->val(a).transpose() * G->grad_ro(id);
  });
}

// C = A * B^T
template <typename Scalar>
int matmul_nt(Graph<Scalar>& g, int a, int b) {
  const int id = g.next_id();
  return g.push(g.val(a) * g.val(b).transpose(), [G = &g, a, b, id] {
    G->grad(a).noalias() += G->grad_ro(id) * G->val(b);
    G->grad(b).noalias() += G->grad_ro(id).transpose() * G->val(a);
  });
}

// A (T x C) + bias (1 x C) broadcast over rows.
template <typename Scalar>
int add_rowvec(Graph<Scalar>& g, int a, int bias) {
  const int id = g.next_id();
  Mat<Scalar> val = g.val(a);
  val.rowwise() += g.val(bias).row(0);
  return g.push(std::move(val), [G = &g, a, bias, id] {
    G->grad(a) += G->grad_ro(id);
    G->grad(bias).row(0) += G->grad_ro(id).colwise().sum();
  });
}

template <typename Scalar>
int relu(Graph<Scalar>& g, int a) {
  const int id = g.next_id();
  return g.push(g.val(a).cwiseMax(Scalar(0)), [G = &g, a, id] {
    const Mat<Scalar> gate = (G->val(a).array() > Scalar(0)).template cast<Scalar>().matrix();
    G->grad(a) += G->grad_ro(id).cwiseProduct(gate);
  });
}

// Row-wise softmax of (A + add_mask). A fully masked row yields zeros and
// passes no gradient.
template <typename Scalar>
int softmax_rows(Graph<Scalar>& g, int a, const Mat<Scalar>* add_mask = nullptr) {
  Mat<Scalar> x = g.val(a);
  if (add_mask) x += *add_mask;
  Mat<Scalar> y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Scalar m = x.row(r).maxCoeff();
    if (!(m > -std::numeric_limits<Scalar>::infinity())) {
      y.row(r).setZero();
      continue;
    }
    y.row(r) = (x.row(r).array() - m).exp();
    y.row(r) /= y.row(r).sum();
  }
  const int id = g.next_id();
  return g.push(std::move(y), [G = &g, a, id] {
    const auto& y = G->val(id);
    const auto& d = G->grad_ro(id);
    auto& da = G->grad(a);
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const Scalar dot = d.row(r).dot(y.row(r));
      da.row(r) += (y.row(r).array() * (d.row(r).array() - dot)).matrix();
    }
  });
}

// Per-row layer normalization with affine gain/shift (1 x C parameters).
template <typename Scalar>
int layernorm_rows(Graph<Scalar>& g, int a, int gamma, int beta,
                   Scalar eps = Scalar(1e-5)) {
  const auto& x = g.val(a);
  const Eigen::Index rows = x.rows(), cols = x.cols();
  Mat<Scalar> xhat(rows, cols);
  Mat<Scalar> inv_sigma(rows, 1);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Scalar mu = x.row(r).mean();
    const Scalar var = (x.row(r).array() - mu).square().mean();
    const Scalar is = Scalar(1) / std::sqrt(var + eps);
    inv_sigma(r, 0) = is;
    xhat.row(r) = (x.row(r).array() - mu) * is;
  }
  Mat<Scalar> y = xhat;
  y.array().rowwise() *= g.val(gamma).row(0).array();
  y.rowwise() += g.val(beta).row(0);
  const int id = g.next_id();
  return g.push(std::move(y),
                [G = &g, a, gamma, beta, id, xhat = std::move(xhat),
                 inv_sigma = std::move(inv_sigma)] {
    const auto& d = G->grad_ro(id);
    const auto& gam = G->val(gamma).row(0);
    G->grad(beta).row(0) += d.colwise().sum();
    for (Eigen::Index r = 0; r < d.rows(); ++r)
      G->grad(gamma).row(0) += d.row(r).cwiseProduct(xhat.row(r));
    auto& da = G->grad(a);
    for (Eigen::Index r = 0; r < d.rows(); ++r) {
      const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> dxhat = d.row(r).cwiseProduct(gam);
      const Scalar mean_dxhat = dxhat.mean();
      const Scalar mean_dxhat_xhat = dxhat.cwiseProduct(xhat.row(r)).mean();
      da.row(r) += inv_sigma(r, 0) *
                   (dxhat.array() - mean_dxhat - xhat.row(r).array() * mean_dxhat_xhat).matrix();
    }
  });
}

template <typename Scalar>
int slice_cols(Graph<Scalar>& g, int a, int c0, int n) {
  const int id = g.next_id();
  return g.push(g.val(a).middleCols(c0, n), [G = &g, a, c0, n, id] {
    G->grad(a).middleCols(c0, n) += G->grad_ro(id);
  });
}

template <typename Scalar>
int slice_rows(Graph<Scalar>& g, int a, int r0, int n) {
  const int id = g.next_id();
  return g.push(g.val(a).middleRows(r0, n), [G = &g, a, r0, n, id] {
    G->grad(a).middleRows(r0, n) += G->grad_ro(id);
  });
}

template <typename Scalar>
int concat_cols(Graph<Scalar>& g, const std::vector<int>& parts) {
  Eigen::Index rows = g.val(parts.front()).rows(), cols = 0;
  for (int p : parts) cols += g.val(p).cols();
  Mat<Scalar> val(rows, cols);
  Eigen::Index c = 0;
  for (int p : parts) {
    val.middleCols(c, g.val(p).cols()) = g.val(p);
    c += g.val(p).cols();
  }
  const int id = g.next_id();
  return g.push(std::move(val), [G = &g, parts, id] {
    Eigen::Index c = 0;
    for (int p : parts) {
      const Eigen::Index w = G->val(p).cols();
      G->grad(p) += G->grad_ro(id).middleCols(c, w);
      c += w;
    }
  });
}

template <typename Scalar>
int concat_rows(Graph<Scalar>& g, const std::vector<int>& parts) {
  Eigen::Index cols = g.val(parts.front()).cols(), rows = 0;
  for (int p : parts) rows += g.val(p).rows();
  Mat<Scalar> val(rows, cols);
  Eigen::Index r = 0;
  for (int p : parts) {
    val.middleRows(r, g.val(p).rows()) = g.val(p);
    r += g.val(p).rows();
  }
  const int id = g.next_id();
  return g.push(std::move(val), [G = &g, parts, id] {
    Eigen::Index r = 0;
    for (int p : parts) {
      const Eigen::Index h = G->val(p).rows();
      G->grad(p) += G->grad_ro(id).middleRows(r, h);
      r += h;
    }
  });
}

// Row-major reshape (frame-major flatten and its inverse).
template <typename Scalar>
int reshape_rm(Graph<Scalar>& g, int a, Eigen::Index rows, Eigen::Index cols) {
  const auto& x = g.val(a);
  if (x.size() != rows * cols) throw NumericError("reshape: element count mismatch");
  Mat<Scalar> val(rows, cols);
  const Eigen::Index in_cols = x.cols();
  for (Eigen::Index i = 0; i < x.size(); ++i)
    val(i / cols, i % cols) = x(i / in_cols, i % in_cols);
  const int id = g.next_id();
  return g.push(std::move(val), [G = &g, a, id, cols] {
    const auto& d = G->grad_ro(id);
    auto& da = G->grad(a);
    const Eigen::Index in_cols = da.cols();
    for (Eigen::Index i = 0; i < d.size(); ++i)
      da(i / in_cols, i % in_cols) += d(i / cols, i % cols);
  });
}

template <typename Scalar>
int mean_rows(Graph<Scalar>& g, int a) {
  const int id = g.next_id();
  const Scalar inv = Scalar(1) / g.val(a).rows();
  Mat<Scalar> val = g.val(a).colwise().mean();
  return g.push(std::move(val), [G = &g, a, id, inv] {
    G->grad(a).rowwise() += (inv * G->grad_ro(id)).row(0);
  });
}

template <typename Scalar>
int l2_normalize_rows(Graph<Scalar>& g, int a, Scalar tiny = Scalar(1e-12)) {
  const auto& x = g.val(a);
  Mat<Scalar> y(x.rows(), x.cols());
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> norms(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    norms(r) = std::max(x.row(r).norm(), tiny);
    y.row(r) = x.row(r) / norms(r);
  }
  const int id = g.next_id();
  return g.push(std::move(y), [G = &g, a, id, norms = std::move(norms)] {
    const auto& y = G->val(id);
    const auto& d = G->grad_ro(id);
    auto& da = G->grad(a);
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const Scalar dot = d.row(r).dot(y.row(r));
      da.row(r) += (d.row(r) - dot * y.row(r)) / norms(r);
    }
  });
}

// Frobenius norm as a 1x1 node; subgradient 0 at the origin.
template <typename Scalar>
int fro_norm(Graph<Scalar>& g, int a) {
  const Scalar n = g.val(a).norm();
  const int id = g.next_id();
  Mat<Scalar> val(1, 1);
  val(0, 0) = n;
  return g.push(std::move(val), [G = &g, a, id, n] {
    if (n > Scalar(0)) G->grad(a) += (G->grad_ro(id)(0, 0) / n) * G->val(a);
  });
}

// s (1x1 node) times a constant matrix.
template <typename Scalar>
int scalar_mul_const(Graph<Scalar>& g, int s, Mat<Scalar> c) {
  const int id = g.next_id();
  Mat<Scalar> val = g.val(s)(0, 0) * c;
  return g.push(std::move(val), [G = &g, s, id, c = std::move(c)] {
    G->grad(s)(0, 0) += G->grad_ro(id).cwiseProduct(c).sum();
  });
}

// Tiles a column vector (R x 1) to R x n.
template <typename Scalar>
int broadcast_col(Graph<Scalar>& g, int col, Eigen::Index n) {
  const int id = g.next_id();
  Mat<Scalar> val = g.val(col) * Mat<Scalar>::Ones(1, n);
  return g.push(std::move(val), [G = &g, col, id] {
    G->grad(col) += G->grad_ro(id).rowwise().sum();
  });
}

template <typename Scalar>
int sum_all(Graph<Scalar>& g, int a) {
  const int id = g.next_id();
  Mat<Scalar> val(1, 1);
  val(0, 0) = g.val(a).sum();
  return g.push(std::move(val), [G = &g, a, id] {
    G->grad(a).array() += G->grad_ro(id)(0, 0);
  });
}

// Mean squared error against a constant target, as a 1x1 node.
template <typename Scalar>
int mse_const(Graph<Scalar>& g, int a, Mat<Scalar> target) {
  const auto& x = g.val(a);
  if (x.rows() != target.rows() || x.cols() != target.cols())
    throw NumericError("mse: shape mismatch");
  Mat<Scalar> val(1, 1);
  val(0, 0) = (x - target).squaredNorm() / x.size();
  const int id = g.next_id();
  return g.push(std::move(val), [G = &g, a, id, target = std::move(target)] {
    const Scalar c = G->grad_ro(id)(0, 0) * Scalar(2) / G->val(a).size();
    G->grad(a) += c * (G->val(a) - target);
  });
}

// Per-row log(sum over keep-masked columns of exp), max-subtracted. Returns
// an R x 1 node.
template <typename Scalar>
int row_logsumexp_masked(Graph<Scalar>& g, int a,
                         const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& keep) {
  const auto& x = g.val(a);
  Mat<Scalar> val(x.rows(), 1);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    Scalar m = -std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      if (keep(r, c)) m = std::max(m, x(r, c));
    Scalar acc = 0;
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      if (keep(r, c)) acc += std::exp(x(r, c) - m);
    val(r, 0) = m + std::log(acc);
  }
  const int id = g.next_id();
  return g.push(std::move(val), [G = &g, a, id, keep] {
    const auto& x = G->val(a);
    const auto& lse = G->val(id);
    const auto& d = G->grad_ro(id);
    auto& da = G->grad(a);
    for (Eigen::Index r = 0; r < x.rows(); ++r)
      for (Eigen::Index c = 0; c < x.cols(); ++c)
        if (keep(r, c)) da(r, c) += d(r, 0) * std::exp(x(r, c) - lse(r, 0));
  });
}

// Rows of an embedding table gathered by index.
template <typename Scalar>
int embed_rows(Graph<Scalar>& g, int table, const std::vector<int>& ids) {
  const auto& t = g.val(table);
  Mat<Scalar> val(static_cast<Eigen::Index>(ids.size()), t.cols());
  for (size_t i = 0; i < ids.size(); ++i) val.row(static_cast<Eigen::Index>(i)) = t.row(ids[i]);
  const int id = g.next_id();
  return g.push(std::move(val), [G = &g, table, ids, id] {
    const auto& d = G->grad_ro(id);
    auto& dt = G->grad(table);
    for (size_t i = 0; i < ids.size(); ++i)
      dt.row(ids[i]) += d.row(static_cast<Eigen::Index>(i));
  });
}

// Summed token cross entropy of row-wise logits against target ids,
// computed stably through log-sum-exp, with optional uniform label
// smoothing. 1x1 node.
template <typename Scalar>
int cross_entropy_sum(Graph<Scalar>& g, int logits, const std::vector<int>& targets,
                      Scalar smoothing = Scalar(0)) {
  const auto& x = g.val(logits);
  if (x.rows() != static_cast<Eigen::Index>(targets.size()))
    throw NumericError("cross entropy: row/target count mismatch");
  const Scalar vocab = static_cast<Scalar>(x.cols());
  Mat<Scalar> val(1, 1);
  Scalar acc = 0;
  Mat<Scalar> lse(x.rows(), 1);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Scalar m = x.row(r).maxCoeff();
    const Scalar s = (x.row(r).array() - m).exp().sum();
    lse(r, 0) = m + std::log(s);
    acc += lse(r, 0) - (Scalar(1) - smoothing) * x(r, targets[r]) -
           smoothing / vocab * x.row(r).sum();
  }
  val(0, 0) = acc;
  const int id = g.next_id();
  return g.push(std::move(val),
                [G = &g, logits, targets, id, smoothing, vocab, lse = std::move(lse)] {
    const auto& x = G->val(logits);
    const Scalar d = G->grad_ro(id)(0, 0);
    auto& dx = G->grad(logits);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      dx.row(r) += d * ((x.row(r).array() - lse(r, 0)).exp() - smoothing / vocab).matrix();
      dx(r, targets[r]) -= d * (Scalar(1) - smoothing);
    }
  });
}

}  // namespace posecode::nn
