#include "doctest.h"
#include "posecode/nn/graph.hpp"
#include "posecode/nn/layers.hpp"
#include "posecode/nn/optim.hpp"
#include "posecode/rng.hpp"

using posecode::Rng;
namespace nn = posecode::nn;
using Mat = nn::Mat<double>;

namespace {

Mat random_mat(Rng& rng, int r, int c, double lo = -1.0, double hi = 1.0) {
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

// Central-difference check of d(loss)/d(param) for a loss rebuilt from
// scratch on every evaluation. Pass criterion |a - n| <= atol + rtol *
// max(|a|, |n|): the absolute floor absorbs finite-difference roundoff on
// structurally-zero gradients (e.g. attention key biases, which cancel in
// the row softmax).
template <typename BuildFn>
void check_param_gradients(std::vector<nn::Parameter<double>*> params, BuildFn build,
                           double tol = 1e-6, double atol = 2e-9) {
  for (auto* p : params) p->grad.setZero();
  {
    nn::Graph<double> g;
    g.backward(build(g));
  }
  const double h = 1e-6;
  for (auto* p : params) {
    for (Eigen::Index r = 0; r < p->value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p->value.cols(); ++c) {
        const double saved = p->value(r, c);
        p->value(r, c) = saved + h;
        double fp;
        {
          nn::Graph<double> g;
          fp = g.val(build(g))(0, 0);
        }
        p->value(r, c) = saved - h;
        double fm;
        {
          nn::Graph<double> g;
          fm = g.val(build(g))(0, 0);
        }
        p->value(r, c) = saved;
        const double numeric = (fp - fm) / (2.0 * h);
        const double analytic = p->grad(r, c);
        const double err = std::abs(analytic - numeric);
        const double bound = atol + tol * std::max(std::abs(analytic), std::abs(numeric));
        INFO("param ", p->name, " (", r, ",", c, ") analytic=", analytic,
             " numeric=", numeric);
        CHECK(err <= bound);
      }
    }
  }
}

}  // namespace

TEST_CASE("elementwise and matmul ops match finite differences") {
  Rng rng(11);
  nn::ParamStore<double> store;
  auto& a = store.add("a", 3, 4);
  auto& b = store.add("b", 3, 4);
  auto& w = store.add("w", 4, 5);
  a.value = random_mat(rng, 3, 4);
  b.value = random_mat(rng, 3, 4, 0.3, 1.5);  // keep relu inputs off the kink
  w.value = random_mat(rng, 4, 5);
  const Mat target = random_mat(rng, 3, 5);
  const Mat target_b = random_mat(rng, 3, 4);

  check_param_gradients({&a, &w}, [&](nn::Graph<double>& g) {
    return nn::mse_const(g, nn::matmul(g, g.leaf(a), g.leaf(w)), target);
  });
  check_param_gradients({&a, &b}, [&](nn::Graph<double>& g) {
    const int s = nn::sub(g, nn::add(g, g.leaf(a), g.leaf(b)), g.leaf(b));
    return nn::mse_const(g, nn::cmul(g, s, g.leaf(b)), target_b);
  });
  check_param_gradients({&a, &b}, [&](nn::Graph<double>& g) {
    return nn::mse_const(g, nn::relu(g, nn::cmul(g, g.leaf(a), g.leaf(b))), target_b);
  });
  const Mat target_nt = random_mat(rng, 3, 3);
  check_param_gradients({&a, &b}, [&](nn::Graph<double>& g) {
    return nn::mse_const(g, nn::matmul_nt(g, g.leaf(a), g.leaf(b)), target_nt);
  });
}

TEST_CASE("softmax, layernorm, logsumexp backwards match finite differences") {
  Rng rng(12);
  nn::ParamStore<double> store;
  auto& a = store.add("a", 4, 6);
  auto& gamma = store.add("gamma", 1, 6);
  auto& beta = store.add("beta", 1, 6);
  a.value = random_mat(rng, 4, 6);
  gamma.value = random_mat(rng, 1, 6, 0.5, 1.5);
  beta.value = random_mat(rng, 1, 6);
  const Mat target = random_mat(rng, 4, 6);

  check_param_gradients({&a}, [&](nn::Graph<double>& g) {
    return nn::mse_const(g, nn::softmax_rows(g, g.leaf(a)), target);
  });

  Mat mask = Mat::Zero(4, 6);
  mask(0, 5) = -1e30;
  mask(2, 0) = -1e30;
  mask(2, 1) = -1e30;
  check_param_gradients({&a}, [&](nn::Graph<double>& g) {
    return nn::mse_const(g, nn::softmax_rows(g, g.leaf(a), &mask), target);
  });

  check_param_gradients({&a, &gamma, &beta}, [&](nn::Graph<double>& g) {
    return nn::mse_const(g, nn::layernorm_rows(g, g.leaf(a), g.leaf(gamma), g.leaf(beta)),
                         target);
  });

  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> keep(4, 4);
  keep.setConstant(true);
  for (int i = 0; i < 4; ++i) keep(i, i) = false;
  const Mat wts = random_mat(rng, 4, 1);
  check_param_gradients({&a}, [&](nn::Graph<double>& g) {
    const int sims = nn::matmul_nt(g, g.leaf(a), g.leaf(a));
    const int lse = nn::row_logsumexp_masked(g, sims, keep);
    return nn::mse_const(g, lse, wts);
  });
}

TEST_CASE("shape ops, norms and embeddings match finite differences") {
  Rng rng(13);
  nn::ParamStore<double> store;
  auto& a = store.add("a", 4, 6);
  auto& table = store.add("table", 5, 3);
  a.value = random_mat(rng, 4, 6);
  table.value = random_mat(rng, 5, 3);
  const Mat t46 = random_mat(rng, 4, 6);
  const Mat t16 = random_mat(rng, 1, 6);
  const Mat t43 = random_mat(rng, 4, 3);
  const std::vector<int> ids = {1, 4, 0, 4};

  check_param_gradients({&a}, [&](nn::Graph<double>& g) {
    const int s1 = nn::slice_cols(g, g.leaf(a), 0, 2);
    const int s2 = nn::slice_cols(g, g.leaf(a), 2, 4);
    return nn::mse_const(g, nn::concat_cols(g, {s1, s2}), t46);
  });
  check_param_gradients({&a}, [&](nn::Graph<double>& g) {
    const int r1 = nn::slice_rows(g, g.leaf(a), 0, 1);
    const int r2 = nn::slice_rows(g, g.leaf(a), 1, 3);
    return nn::mse_const(g, nn::concat_rows(g, {r1, r2}), t46);
  });
  check_param_gradients({&a}, [&](nn::Graph<double>& g) {
    return nn::mse_const(g, nn::reshape_rm(g, nn::reshape_rm(g, g.leaf(a), 1, 24), 4, 6), t46);
  });
  check_param_gradients({&a}, [&](nn::Graph<double>& g) {
    return nn::mse_const(g, nn::mean_rows(g, g.leaf(a)), t16);
  });
  check_param_gradients({&a}, [&](nn::Graph<double>& g) {
    return nn::mse_const(g, nn::l2_normalize_rows(g, g.leaf(a)), t46);
  });
  check_param_gradients({&a}, [&](nn::Graph<double>& g) {
    const int n = nn::fro_norm(g, g.leaf(a));
    const int scaled = nn::scalar_mul_const(g, n, t16);
    return nn::mse_const(g, scaled, t16);
  });
  check_param_gradients({&a}, [&](nn::Graph<double>& g) {
    return nn::mse_const(g, nn::broadcast_col(g, nn::slice_cols(g, g.leaf(a), 1, 1), 3), t43);
  });
  Mat t11(1, 1);
  t11(0, 0) = 0.37;
  check_param_gradients({&a}, [&](nn::Graph<double>& g) {
    return nn::mse_const(g, nn::sum_all(g, g.leaf(a)), t11);
  });
  check_param_gradients({&table}, [&](nn::Graph<double>& g) {
    return nn::mse_const(g, nn::embed_rows(g, g.leaf(table), ids), t43);
  });
}

TEST_CASE("cross entropy with and without label smoothing matches finite differences") {
  Rng rng(14);
  nn::ParamStore<double> store;
  auto& logits = store.add("logits", 5, 7);
  logits.value = random_mat(rng, 5, 7);
  const std::vector<int> targets = {3, 0, 6, 2, 2};

  check_param_gradients({&logits}, [&](nn::Graph<double>& g) {
    return nn::cross_entropy_sum(g, g.leaf(logits), targets);
  });
  check_param_gradients({&logits}, [&](nn::Graph<double>& g) {
    return nn::cross_entropy_sum(g, g.leaf(logits), targets, 0.1);
  });
}

TEST_CASE("transformer blocks match finite differences end to end") {
  Rng rng(15);
  nn::ParamStore<double> store;
  auto enc = nn::EncoderLayer<double>::create(store, "enc", 8, 2, 12, rng);
  auto dec = nn::DecoderLayer<double>::create(store, "dec", 8, 2, 12, rng);
  auto& x = store.add("x", 3, 8);
  auto& mem = store.add("mem", 4, 8);
  x.value = random_mat(rng, 3, 8);
  mem.value = random_mat(rng, 4, 8);
  const Mat target = random_mat(rng, 3, 8);
  const Mat mask = nn::causal_mask<double>(3);

  std::vector<nn::Parameter<double>*> params;
  for (auto& p : store) params.push_back(&p);

  check_param_gradients(
      params,
      [&](nn::Graph<double>& g) {
        const int e = enc.apply(g, g.leaf(x), nullptr, {});
        const int d = dec.apply(g, e, g.leaf(mem), &mask, {});
        return nn::mse_const(g, d, target);
      },
      2e-5);
}

TEST_CASE("softmax rows sum to one and fully masked rows are zero") {
  Rng rng(16);
  nn::Graph<double> g;
  const int a = g.constant(random_mat(rng, 3, 5));
  Mat mask = Mat::Zero(3, 5);
  for (int c = 0; c < 5; ++c) mask(1, c) = -std::numeric_limits<double>::infinity();
  const int y = nn::softmax_rows(g, a, &mask);
  CHECK(g.val(y).row(0).sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(g.val(y).row(1).sum() == 0.0);
  CHECK(g.val(y).row(2).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("adam reduces a quadratic and plateau scheduler decays") {
  nn::ParamStore<double> store;
  auto& p = store.add("p", 1, 3);
  p.value << 1.0, -2.0, 0.5;
  nn::Adam<double> adam;
  const Mat target = Mat::Zero(1, 3);
  double first = 0.0, last = 0.0;
  for (int it = 0; it < 200; ++it) {
    nn::Graph<double> g;
    const int loss = nn::mse_const(g, g.leaf(p), target);
    if (it == 0) first = g.val(loss)(0, 0);
    last = g.val(loss)(0, 0);
    store.zero_grad();
    g.backward(loss);
    adam.step(store, 0.05);
  }
  CHECK(last < 0.01 * first);

  nn::PlateauScheduler sched(1.0, 2, 0.5);
  CHECK(!sched.observe(1.0));
  CHECK(!sched.observe(1.0));
  CHECK(!sched.observe(1.0));  // bad = 2 == patience, not yet reduced
  CHECK(sched.observe(1.0));   // bad = 3 > patience -> reduce
  CHECK(sched.lr() == doctest::Approx(0.5));
}
