#pragma once

#include <cmath>
#include <deque>
#include <memory>
#include <string>
#include <vector>

#include "posecode/nn/graph.hpp"
#include "posecode/rng.hpp"

namespace posecode::nn {

// Owns named parameters with stable addresses; the unit of serialization
// and of optimizer state.
template <typename Scalar>
class ParamStore {
 public:
  Parameter<Scalar>& add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    items_.push_back(Parameter<Scalar>{name, Mat<Scalar>::Zero(rows, cols),
                                       Mat<Scalar>::Zero(rows, cols),
                                       Mat<Scalar>::Zero(rows, cols),
                                       Mat<Scalar>::Zero(rows, cols)});
    return items_.back();
  }

  Parameter<Scalar>* find(const std::string& name) {
    for (auto& p : items_)
      if (p.name == name) return &p;
    return nullptr;
  }

  void zero_grad() {
    for (auto& p : items_) p.zero_grad();
  }

  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }
  size_t size() const { return items_.size(); }

 private:
  std::deque<Parameter<Scalar>> items_;
};

template <typename Scalar>
void xavier_uniform(Parameter<Scalar>& p, Rng& rng) {
  const double limit = std::sqrt(6.0 / (p.value.rows() + p.value.cols()));
  for (Eigen::Index r = 0; r < p.value.rows(); ++r)
    for (Eigen::Index c = 0; c < p.value.cols(); ++c)
      p.value(r, c) = static_cast<Scalar>(rng.uniform(-limit, limit));
}

template <typename Scalar>
Mat<Scalar> sinusoidal_positional_encoding(Eigen::Index len, Eigen::Index dim) {
  Mat<Scalar> pe(len, dim);
  for (Eigen::Index pos = 0; pos < len; ++pos) {
    for (Eigen::Index i = 0; i < dim; ++i) {
      const double angle = pos / std::pow(10000.0, 2.0 * (i / 2) / static_cast<double>(dim));
      pe(pos, i) = static_cast<Scalar>((i % 2 == 0) ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

// Inverted dropout driven by an explicit stream; null rng means eval mode.
template <typename Scalar>
struct DropoutCtx {
  double p = 0.0;
  Rng* rng = nullptr;

  int apply(Graph<Scalar>& g, int x) const {
    if (!rng || p <= 0.0) return x;
    const auto& v = g.val(x);
    Mat<Scalar> mask(v.rows(), v.cols());
    const Scalar keep_scale = static_cast<Scalar>(1.0 / (1.0 - p));
    for (Eigen::Index r = 0; r < v.rows(); ++r)
      for (Eigen::Index c = 0; c < v.cols(); ++c)
        mask(r, c) = rng->uniform() < p ? Scalar(0) : keep_scale;
    return cmul_const(g, x, std::move(mask));
  }
};

template <typename Scalar>
struct Linear {
  Parameter<Scalar>* weight = nullptr;  // in x out
  Parameter<Scalar>* bias = nullptr;    // 1 x out

  static Linear create(ParamStore<Scalar>& store, const std::string& name, Eigen::Index in,
                       Eigen::Index out, Rng& rng) {
    Linear l;
    l.weight = &store.add(name + ".weight", in, out);
    l.bias = &store.add(name + ".bias", 1, out);
    xavier_uniform(*l.weight, rng);
    return l;
  }

  int apply(Graph<Scalar>& g, int x) const {
    return add_rowvec(g, matmul(g, x, g.leaf(*weight)), g.leaf(*bias));
  }
};

template <typename Scalar>
struct LayerNorm {
  Parameter<Scalar>* gamma = nullptr;
  Parameter<Scalar>* beta = nullptr;

  static LayerNorm create(ParamStore<Scalar>& store, const std::string& name, Eigen::Index dim) {
    LayerNorm ln;
    ln.gamma = &store.add(name + ".gamma", 1, dim);
    ln.beta = &store.add(name + ".beta", 1, dim);
    ln.gamma->value.setOnes();
    return ln;
  }

  int apply(Graph<Scalar>& g, int x) const {
    return layernorm_rows(g, x, g.leaf(*gamma), g.leaf(*beta));
  }
};

template <typename Scalar>
struct MultiHeadAttention {
  int heads = 1;
  int model_dim = 0;
  Linear<Scalar> wq, wk, wv, wo;

  static MultiHeadAttention create(ParamStore<Scalar>& store, const std::string& name,
                                   int model_dim, int heads, Rng& rng) {
    MultiHeadAttention a;
    a.heads = heads;
    a.model_dim = model_dim;
    a.wq = Linear<Scalar>::create(store, name + ".q", model_dim, model_dim, rng);
    a.wk = Linear<Scalar>::create(store, name + ".k", model_dim, model_dim, rng);
    a.wv = Linear<Scalar>::create(store, name + ".v", model_dim, model_dim, rng);
    a.wo = Linear<Scalar>::create(store, name + ".o", model_dim, model_dim, rng);
    return a;
  }

  // query: Tq x H, memory: Tk x H; add_mask (Tq x Tk) is added to the
  // attention scores of every head.
  int apply(Graph<Scalar>& g, int query, int memory, const Mat<Scalar>* add_mask) const {
    const int q = wq.apply(g, query);
    const int k = wk.apply(g, memory);
    const int v = wv.apply(g, memory);
    const int head_dim = model_dim / heads;
    const Scalar inv_sqrt = static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(head_dim)));
    std::vector<int> outs;
    outs.reserve(heads);
    for (int h = 0; h < heads; ++h) {
      const int qh = slice_cols(g, q, h * head_dim, head_dim);
      const int kh = slice_cols(g, k, h * head_dim, head_dim);
      const int vh = slice_cols(g, v, h * head_dim, head_dim);
      const int scores = scale(g, matmul_nt(g, qh, kh), inv_sqrt);
      const int attn = softmax_rows(g, scores, add_mask);
      outs.push_back(matmul(g, attn, vh));
    }
    return wo.apply(g, concat_cols(g, outs));
  }
};

template <typename Scalar>
struct FeedForward {
  Linear<Scalar> w1, w2;

  static FeedForward create(ParamStore<Scalar>& store, const std::string& name, int model_dim,
                            int ff_dim, Rng& rng) {
    FeedForward f;
    f.w1 = Linear<Scalar>::create(store, name + ".ff1", model_dim, ff_dim, rng);
    f.w2 = Linear<Scalar>::create(store, name + ".ff2", ff_dim, model_dim, rng);
    return f;
  }

  int apply(Graph<Scalar>& g, int x) const { return w2.apply(g, relu(g, w1.apply(g, x))); }
};

// Pre-layer-norm transformer encoder block.
template <typename Scalar>
struct EncoderLayer {
  LayerNorm<Scalar> ln1, ln2;
  MultiHeadAttention<Scalar> attn;
  FeedForward<Scalar> ff;

  static EncoderLayer create(ParamStore<Scalar>& store, const std::string& name, int model_dim,
                             int heads, int ff_dim, Rng& rng) {
    EncoderLayer l;
    l.ln1 = LayerNorm<Scalar>::create(store, name + ".ln1", model_dim);
    l.ln2 = LayerNorm<Scalar>::create(store, name + ".ln2", model_dim);
    l.attn = MultiHeadAttention<Scalar>::create(store, name + ".attn", model_dim, heads, rng);
    l.ff = FeedForward<Scalar>::create(store, name + ".ff", model_dim, ff_dim, rng);
    return l;
  }

  int apply(Graph<Scalar>& g, int x, const Mat<Scalar>* self_mask,
            const DropoutCtx<Scalar>& drop) const {
    const int n1 = ln1.apply(g, x);
    x = add(g, x, drop.apply(g, attn.apply(g, n1, n1, self_mask)));
    x = add(g, x, drop.apply(g, ff.apply(g, ln2.apply(g, x))));
    return x;
  }
};

// Pre-layer-norm transformer decoder block with self and cross attention.
template <typename Scalar>
struct DecoderLayer {
  LayerNorm<Scalar> ln1, ln2, ln3;
  MultiHeadAttention<Scalar> self_attn, cross_attn;
  FeedForward<Scalar> ff;

  static DecoderLayer create(ParamStore<Scalar>& store, const std::string& name, int model_dim,
                             int heads, int ff_dim, Rng& rng) {
    DecoderLayer l;
    l.ln1 = LayerNorm<Scalar>::create(store, name + ".ln1", model_dim);
    l.ln2 = LayerNorm<Scalar>::create(store, name + ".ln2", model_dim);
    l.ln3 = LayerNorm<Scalar>::create(store, name + ".ln3", model_dim);
    l.self_attn =
        MultiHeadAttention<Scalar>::create(store, name + ".self", model_dim, heads, rng);
    l.cross_attn =
        MultiHeadAttention<Scalar>::create(store, name + ".cross", model_dim, heads, rng);
    l.ff = FeedForward<Scalar>::create(store, name + ".ff", model_dim, ff_dim, rng);
    return l;
  }

  int apply(Graph<Scalar>& g, int x, int memory, const Mat<Scalar>* self_mask,
            const DropoutCtx<Scalar>& drop) const {
    const int n1 = ln1.apply(g, x);
    x = add(g, x, drop.apply(g, self_attn.apply(g, n1, n1, self_mask)));
    x = add(g, x, drop.apply(g, cross_attn.apply(g, ln2.apply(g, x), memory, nullptr)));
    x = add(g, x, drop.apply(g, ff.apply(g, ln3.apply(g, x))));
    return x;
  }
};

// Upper-triangular -1e30 mask blocking attention to future positions.
template <typename Scalar>
Mat<Scalar> causal_mask(Eigen::Index len) {
  Mat<Scalar> m = Mat<Scalar>::Zero(len, len);
  for (Eigen::Index r = 0; r < len; ++r)
    for (Eigen::Index c = r + 1; c < len; ++c) m(r, c) = Scalar(-1e30);
  return m;
}

}  // namespace posecode::nn
