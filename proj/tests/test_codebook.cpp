#include "doctest.h"
#include "posecode/codebook.hpp"
#include "posecode/codebook_train.hpp"

using namespace posecode;
using Mat = nn::Mat<double>;
using MatF = nn::Mat<float>;

namespace {

Mat random_mat(Rng& rng, int r, int c, double lo = -1.0, double hi = 1.0) {
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

// Exhaustive scan written independently of nearest_entry.
int brute_force_nearest(const Mat& flat_z, const Mat& entries) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (int i = 0; i < entries.rows(); ++i) {
    double d = 0.0;
    for (int c = 0; c < entries.cols(); ++c) {
      const double diff = entries(i, c) - flat_z(0, c);
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

// Direct double-loop evaluation of the supervised contrastive loss, kept
// deliberately independent of the graph implementation.
double supcon_oracle(const Mat& z, const std::vector<int>& labels, double tau) {
  const int b = static_cast<int>(z.rows());
  int anchors = 0;
  double total = 0.0;
  for (int i = 0; i < b; ++i) {
    std::vector<int> positives;
    for (int p = 0; p < b; ++p)
      if (p != i && labels[p] == labels[i]) positives.push_back(p);
    if (positives.empty()) continue;
    ++anchors;
    double anchor_term = 0.0;
    for (const int p : positives) {
      double denom = 0.0;
      for (int k = 0; k < b; ++k)
        if (k != i) denom += std::exp(z.row(i).dot(z.row(k)) / tau);
      anchor_term += -std::log(std::exp(z.row(i).dot(z.row(p)) / tau) / denom);
    }
    total += anchor_term / positives.size();
  }
  return anchors == 0 ? 0.0 : total / anchors;
}

std::vector<TrainWindow<float>> toy_windows(Rng& rng, int count, int window, int coords,
                                            int labels = 4) {
  std::vector<TrainWindow<float>> out;
  for (int i = 0; i < count; ++i) {
    TrainWindow<float> w;
    w.frames.resize(window, coords);
    const int label = static_cast<int>(rng.uniform_int(labels));
    for (int r = 0; r < window; ++r)
      for (int c = 0; c < coords; ++c)
        w.frames(r, c) = static_cast<float>(
            std::clamp(0.2 + 0.15 * label + 0.05 * rng.normal(), 0.0, 1.0));
    w.gloss_id = label;
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace

TEST_CASE("counter track is (u+1)/U, strictly increasing, ends at 1") {
  const Mat c = counter_track<double>(4);
  CHECK(c(0, 0) == 0.25);
  CHECK(c(1, 0) == 0.5);
  CHECK(c(2, 0) == 0.75);
  CHECK(c(3, 0) == 1.0);
  for (int u = 1; u < 4; ++u) CHECK(c(u, 0) > c(u - 1, 0));
}

TEST_CASE("quantize_infer picks the nearest entry, ties to the lowest index") {
  Mat entries(2, 2);
  entries << 0, 0, 1, 1;
  Mat z(1, 2);
  z << 0.2, 0.1;
  CHECK(nearest_entry(z, entries).first == 0);

  Mat entries4(5, 3);
  entries4.setZero();
  entries4.row(3) << 0.4, -0.2, 0.9;
  Mat z3 = entries4.row(3);
  const auto [idx, dist] = nearest_entry(z3, entries4);
  CHECK(idx == 3);
  CHECK(dist == 0.0);

  // Exact tie between identical entries 1 and 2 resolves to 1.
  Mat tied(4, 2);
  tied << 5, 5, 1, 1, 1, 1, 0, 0;
  Mat q(1, 2);
  q << 1, 1;
  CHECK(nearest_entry(q, tied).first == 1);
}

TEST_CASE("quantize_infer matches an exhaustive scan on 1000 random trials") {
  Rng rng(51);
  const Mat entries = random_mat(rng, 64, 8);
  for (int trial = 0; trial < 1000; ++trial) {
    const Mat z = random_mat(rng, 1, 8);
    CHECK(nearest_entry(z, entries).first == brute_force_nearest(z, entries));
  }
}

TEST_CASE("nsvq magnitude identity: ||zhat - z|| equals ||z - t_i||") {
  Rng rng(52);
  const Mat entries = random_mat(rng, 16, 6);
  for (int trial = 0; trial < 200; ++trial) {
    const Mat z = unflatten_rm(random_mat(rng, 1, 6), 2, 3);
    const auto [zhat, idx] = quantize_train(z, entries, rng);
    const double err = (flatten_rm(z).row(0) - entries.row(idx)).norm();
    const double moved = (zhat - z).norm();
    CHECK(moved == doctest::Approx(err).epsilon(1e-6));
  }
}

TEST_CASE("nsvq with z exactly on an entry leaves z unchanged") {
  Rng rng(53);
  Mat entries = random_mat(rng, 8, 4);
  const Mat z = unflatten_rm(Mat(entries.row(5)), 2, 2);
  const auto [zhat, idx] = quantize_train(z, entries, rng);
  CHECK(idx == 5);
  CHECK((zhat - z).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("nsvq noise direction is isotropic over 10k samples") {
  Rng rng(54);
  const Mat entries = random_mat(rng, 4, 8);
  Eigen::RowVectorXd axis = Eigen::RowVectorXd::Zero(8);
  axis(0) = 1.0;
  double mean_cos = 0.0;
  const int samples = 10000;
  for (int s = 0; s < samples; ++s) {
    const Mat zflat = random_mat(rng, 1, 8);
    const Mat z = unflatten_rm(zflat, 2, 4);
    const auto [zhat, idx] = quantize_train(z, entries, rng);
    Eigen::RowVectorXd delta = flatten_rm(Mat(zhat - z)).row(0);
    const double n = delta.norm();
    if (n > 0) mean_cos += delta.dot(axis) / n;
  }
  mean_cos /= samples;
  CHECK(mean_cos > -0.05);
  CHECK(mean_cos < 0.05);
}

TEST_CASE("codebook loss matches the hand-computed toy value") {
  // U_cb = 2, scalar pose: P = (0,1), Phat = (1,1), c = (0.5,1), chat = (0,1),
  // alpha = 2 -> (1/2) * [(1 + 2*0.25) + (0 + 0)] = 0.75.
  Mat p(2, 1), phat(2, 1), c(2, 1), chat(2, 1);
  p << 0, 1;
  phat << 1, 1;
  c << 0.5, 1;
  chat << 0, 1;
  CHECK(codebook_loss<double>(phat, p, chat, c, 2.0) == doctest::Approx(0.75).epsilon(1e-12));

  SUBCASE("perfect predictions give zero") {
    CHECK(codebook_loss<double>(p, p, c, c, 2.0) == 0.0);
  }
  SUBCASE("alpha 0 is the pose term alone") {
    CHECK(codebook_loss<double>(phat, p, chat, c, 0.0) == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("graph node agrees with the direct formula") {
    nn::Graph<double> g;
    const int loss = codebook_loss_node(g, g.constant(phat), p, g.constant(chat), c, 2.0);
    CHECK(g.val(loss)(0, 0) == doctest::Approx(0.75).epsilon(1e-12));
  }
}

TEST_CASE("supcon loss exact cases") {
  SUBCASE("two identical unit embeddings with one label give zero") {
    Mat z(2, 3);
    z << 1, 0, 0, 1, 0, 0;
    CHECK(supcon_loss(z, {5, 5}, 1.0) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("no shared labels gives zero") {
    Rng rng(55);
    Mat z = random_mat(rng, 4, 3);
    for (int r = 0; r < 4; ++r) z.row(r) /= z.row(r).norm();
    CHECK(supcon_loss(z, {0, 1, 2, 3}, 0.07) == 0.0);
  }
  SUBCASE("batch of 4 matches the independent double-loop oracle") {
    Rng rng(56);
    for (int trial = 0; trial < 20; ++trial) {
      Mat z = random_mat(rng, 4, 5);
      for (int r = 0; r < 4; ++r) z.row(r) /= z.row(r).norm();
      const std::vector<int> labels = {0, 0, 1, 1};
      CHECK(supcon_loss(z, labels, 0.07) ==
            doctest::Approx(supcon_oracle(z, labels, 0.07)).epsilon(1e-6));
    }
  }
  SUBCASE("identical embeddings with mixed labels stay finite") {
    Mat z(4, 3);
    for (int r = 0; r < 4; ++r) z.row(r) << 1, 0, 0;
    const double loss = supcon_loss(z, {0, 0, 1, 1}, 0.07);
    CHECK(std::isfinite(loss));
    CHECK(loss > 0.0);  // -log(1/3) per anchor
  }
}

TEST_CASE("total loss composes codebook and contrastive terms") {
  nn::Graph<double> g;
  const int cb = g.scalar(0.5);
  const int sc = g.scalar(0.5);
  CHECK(g.val(total_loss_node(g, cb, sc, 1.0))(0, 0) == doctest::Approx(1.0));
  CHECK(g.val(total_loss_node(g, cb, sc, 0.0))(0, 0) == doctest::Approx(0.5));
  CHECK(g.val(total_loss_node(g, cb, sc, 0.1))(0, 0) == doctest::Approx(0.55));
}

TEST_CASE("encoder output shape, determinism and local Lipschitz bound") {
  CodebookConfig cfg;
  cfg.vocab_size = 8;
  cfg.window = 4;
  cfg.embed = 16;
  cfg.layers = 2;
  cfg.heads = 4;
  cfg.ff_size = 16;
  CodebookModel<double> model(cfg, 3, 2, /*init_seed=*/77);

  Rng rng(57);
  const Mat window = random_mat(rng, 4, 6, 0.0, 1.0);
  const Mat z1 = model.encode(window);
  const Mat z2 = model.encode(window);
  CHECK(z1.rows() == 4);
  CHECK(z1.cols() == 16);
  CHECK((z1 - z2).cwiseAbs().maxCoeff() == 0.0);  // eval mode is deterministic
  CHECK(z1.allFinite());

  // Estimate the local Lipschitz constant by probing random directions with
  // small steps, then check a 1e-3 perturbation respects it with slack for
  // curvature.
  double lipschitz = 0.0;
  const double probe = 1e-5;
  for (int trial = 0; trial < 50; ++trial) {
    Mat dir = random_mat(rng, 4, 6);
    dir /= dir.norm();
    const Mat dz = model.encode(window + probe * dir) - z1;
    lipschitz = std::max(lipschitz, dz.norm() / probe);
  }
  Mat dir = random_mat(rng, 4, 6);
  dir /= dir.norm();
  const double step = 1e-3;
  const Mat dz = model.encode(window + step * dir) - z1;
  CHECK(dz.norm() <= 1.5 * lipschitz * step);

  SUBCASE("wrong window shape is rejected") {
    CHECK_THROWS_AS(model.encode(random_mat(rng, 3, 6)), DataError);
    CHECK_THROWS_AS(model.encode(random_mat(rng, 4, 5)), DataError);
  }
}

TEST_CASE("decoder emits one pose row per frame and a counter per frame") {
  CodebookConfig cfg;
  cfg.vocab_size = 8;
  cfg.window = 4;
  cfg.embed = 8;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.ff_size = 8;
  CodebookModel<double> model(cfg, 5, 2, 78);
  Rng rng(58);
  const auto [poses, counters] = model.decode(random_mat(rng, 4, 8));
  CHECK(poses.rows() == 4);
  CHECK(poses.cols() == 10);
  CHECK(counters.rows() == 4);
  CHECK(counters.cols() == 1);
}

TEST_CASE("replacement rewrites only dead entries and respects the mode") {
  CodebookConfig cfg;
  cfg.vocab_size = 6;
  cfg.window = 2;
  cfg.embed = 4;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.ff_size = 4;
  CodebookModel<float> model(cfg, 2, 2, 79);
  ReplacementPolicy policy;
  policy.dead_threshold = 0.05;

  SUBCASE("all entries active: empty report, codebook unchanged") {
    model.usage = {10, 10, 10, 10, 10, 10};
    model.usage_total = 60;
    const MatF before = model.entry_matrix();
    Rng rng(60);
    const auto report = replace_dead_entries(model, policy, {}, rng);
    CHECK(report.replaced.empty());
    CHECK(!report.skipped);
    CHECK((model.entry_matrix() - before).cwiseAbs().maxCoeff() == 0.0f);
    CHECK(model.usage_total == 0);  // tracking window reset
  }

  SUBCASE("dead entries are overwritten, live ones untouched") {
    model.usage = {30, 0, 30, 0, 30, 30};
    model.usage_total = 120;
    const MatF before = model.entry_matrix();
    Rng rng(61);
    const auto report = replace_dead_entries(model, policy, {}, rng);
    REQUIRE(report.replaced.size() == 2);
    CHECK(report.replaced[0].dead_index == 1);
    CHECK(report.replaced[1].dead_index == 3);
    for (const int live : {0, 2, 4, 5})
      CHECK((model.entry_matrix().row(live) - before.row(live)).cwiseAbs().maxCoeff() == 0.0f);
    for (const int dead : {1, 3})
      CHECK((model.entry_matrix().row(dead) - before.row(dead)).cwiseAbs().maxCoeff() > 0.0f);
    CHECK(model.entry_matrix().rows() == 6);  // N never changes
  }

  SUBCASE("encoder-sample mode copies a buffered embedding exactly") {
    model.usage = {30, 0, 30, 30, 30, 30};
    model.usage_total = 150;
    policy.mode = ReplacementMode::encoder_sample;
    Rng rng(62);
    std::vector<MatF> recent;
    MatF z(2, 4);
    z << 0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f, 0.7f, 0.8f;
    recent.push_back(z);
    const auto report = replace_dead_entries(model, policy, recent, rng);
    REQUIRE(report.replaced.size() == 1);
    CHECK((model.entry_matrix().row(1) - flatten_rm(z).row(0)).cwiseAbs().maxCoeff() == 0.0f);
  }

  SUBCASE("no active entries: skip with warning") {
    model.usage = {1, 1, 1, 1, 1, 1};
    model.usage_total = 6;
    policy.dead_threshold = 0.5;
    policy.active_threshold = 0.9;
    Rng rng(63);
    const auto report = replace_dead_entries(model, policy, {}, rng);
    CHECK(report.skipped);
    CHECK(!report.message.empty());
  }

  SUBCASE("empty tracking window: skip with warning") {
    Rng rng(64);
    const auto report = replace_dead_entries(model, policy, {}, rng);
    CHECK(report.skipped);
  }
}

TEST_CASE("replacement schedule grows its interval every 50 epochs") {
  ReplacementPolicy policy;  // interval 1, growth 10
  CHECK(replacement_due(policy, 0));
  CHECK(replacement_due(policy, 49));
  CHECK(replacement_due(policy, 50));
  CHECK(!replacement_due(policy, 51));
  CHECK(replacement_due(policy, 60));
  CHECK(replacement_due(policy, 100));
  CHECK(!replacement_due(policy, 110));
  CHECK(!replacement_due(policy, 150));  // interval is 1000 by now
  CHECK(!replacement_due(policy, 200));
}

TEST_CASE("toy training is bit-deterministic across runs with one seed") {
  CodebookConfig cfg;
  cfg.vocab_size = 8;
  cfg.window = 2;
  cfg.embed = 8;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.ff_size = 8;
  cfg.dropout = 0.1;
  Rng rng(65);
  const auto windows = toy_windows(rng, 24, 2, 4);
  CodebookTrainOptions opts;
  opts.epochs = 4;
  opts.batch_size = 8;
  opts.seed = 99;
  ReplacementPolicy policy;

  CodebookModel<float> m1(cfg, 2, 2, 80);
  CodebookModel<float> m2(cfg, 2, 2, 80);
  const auto r1 = train_codebook_model(m1, windows, policy, opts);
  const auto r2 = train_codebook_model(m2, windows, policy, opts);
  REQUIRE(r1.epoch_loss.size() == r2.epoch_loss.size());
  for (size_t i = 0; i < r1.epoch_loss.size(); ++i) CHECK(r1.epoch_loss[i] == r2.epoch_loss[i]);
  CHECK((m1.entry_matrix() - m2.entry_matrix()).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("training aborts with a diagnostic on non-finite loss") {
  CodebookConfig cfg;
  cfg.vocab_size = 4;
  cfg.window = 2;
  cfg.embed = 4;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.ff_size = 4;
  cfg.dropout = 0.0;
  CodebookModel<float> model(cfg, 2, 1, 81);
  model.params().find("enc.embed.weight")->value(0, 0) =
      std::numeric_limits<float>::quiet_NaN();
  Rng rng(66);
  auto windows = toy_windows(rng, 4, 2, 2);
  CodebookTrainOptions opts;
  opts.epochs = 1;
  opts.batch_size = 4;
  try {
    train_codebook_model(model, windows, std::nullopt, opts);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("epoch 0") != std::string::npos);
  }
}
