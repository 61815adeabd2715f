#pragma once

#include <optional>
#include <string>
#include <vector>

#include "posecode/blob.hpp"
#include "posecode/nn/layers.hpp"
#include "posecode/nn/optim.hpp"

namespace posecode {

// Hyperparameters of the windowed pose codebook model. Defaults follow the
// small-corpus regime (vocab 4000 at window 4); large corpora favor 2500
// entries at window 8.
struct CodebookConfig {
  int vocab_size = 4000;  // N codebook entries
  int window = 4;         // frames represented by one token
  int embed = 128;        // H
  int layers = 2;
  int heads = 4;
  int ff_size = 128;
  double dropout = 0.1;
  double counter_weight = 1.0;      // alpha
  double contrastive_weight = 0.0;  // delta; > 0 only with gloss labels
  double temperature = 0.07;        // tau
  double lr = 1e-4;
  int plateau_patience = 5;
  double plateau_factor = 0.9;

  void validate() const;
};

enum class ReplacementMode { active_plus_noise, encoder_sample };

// Dead-entry replacement policy. Thresholds are usage fractions over the
// tracking window (one epoch): entries below dead_threshold are dead,
// entries above active_threshold are donors.
struct ReplacementPolicy {
  ReplacementMode mode = ReplacementMode::active_plus_noise;
  double dead_threshold = 0.001;  // gamma
  double active_threshold = 0.0;  // beta; <= 0 resolves to 1/N
  double noise_scale = 0.0;       // <= 0 resolves to 0.01 * mean entry norm
  int interval_epochs = 1;
  int interval_growth = 10;  // interval multiplier applied every 50 epochs
  double stop_lr = 1e-6;

  void validate(int vocab_size) const;
  double resolved_active_threshold(int vocab_size) const {
    return active_threshold > 0.0 ? active_threshold : 1.0 / vocab_size;
  }
};

struct ReplacementEvent {
  int dead_index = -1;
  std::string source;  // "entry <i> + noise" or "encoder sample <i>"
};

struct ReplacementReport {
  std::vector<ReplacementEvent> replaced;
  bool skipped = false;
  std::string message;
};

// Ground-truth counter track c_u = (u+1) / U; strictly increasing, ends at 1.
template <typename Scalar = double>
nn::Mat<Scalar> counter_track(int window) {
  nn::Mat<Scalar> c(window, 1);
  for (int u = 0; u < window; ++u) c(u, 0) = Scalar(u + 1) / Scalar(window);
  return c;
}

// Row-major flatten, frame-major: matches the codebook entry layout.
template <typename Scalar>
nn::Mat<Scalar> flatten_rm(const nn::Mat<Scalar>& m) {
  nn::Mat<Scalar> out(1, m.size());
  Eigen::Index k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out(0, k++) = m(r, c);
  return out;
}

template <typename Scalar>
nn::Mat<Scalar> unflatten_rm(const nn::Mat<Scalar>& row, Eigen::Index rows, Eigen::Index cols) {
  nn::Mat<Scalar> out(rows, cols);
  Eigen::Index k = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) out(r, c) = row(0, k++);
  return out;
}

// Index of the nearest entry by squared Euclidean distance; ties break to
// the lowest index.
template <typename Scalar>
std::pair<int, double> nearest_entry(const nn::Mat<Scalar>& flat_z,
                                     const nn::Mat<Scalar>& entries) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < entries.rows(); ++i) {
    const double d = static_cast<double>((entries.row(i) - flat_z.row(0)).squaredNorm());
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return {best, best_d};
}

// Encoder-NSVQ-decoder over windows of `window` normalized pose frames.
template <typename Scalar>
class CodebookModel {
 public:
  CodebookModel(const CodebookConfig& config, int joints, int dims, uint64_t init_seed)
      : config_(config), joints_(joints), dims_(dims) {
    config.validate();
    Rng rng(init_seed);
    const int h = config.embed;
    const int in_dim = joints * dims;
    enc_embed_ = nn::Linear<Scalar>::create(params_, "enc.embed", in_dim, h, rng);
    for (int l = 0; l < config.layers; ++l)
      enc_layers_.push_back(nn::EncoderLayer<Scalar>::create(
          params_, "enc.layer" + std::to_string(l), h, config.heads, config.ff_size, rng));
    enc_final_ln_ = nn::LayerNorm<Scalar>::create(params_, "enc.final_ln", h);

    entries_ = &params_.add("codebook.entries", config.vocab_size,
                            static_cast<Eigen::Index>(config.window) * h);
    nn::xavier_uniform(*entries_, rng);

    counter_embed_ = nn::Linear<Scalar>::create(params_, "dec.counter_embed", 1, h, rng);
    for (int l = 0; l < config.layers; ++l)
      dec_layers_.push_back(nn::DecoderLayer<Scalar>::create(
          params_, "dec.layer" + std::to_string(l), h, config.heads, config.ff_size, rng));
    dec_final_ln_ = nn::LayerNorm<Scalar>::create(params_, "dec.final_ln", h);
    pose_head_ = nn::Linear<Scalar>::create(params_, "dec.pose_head", h, in_dim, rng);
    counter_head_ = nn::Linear<Scalar>::create(params_, "dec.counter_head", h, 1, rng);

    usage.assign(config.vocab_size, 0);
  }

  const CodebookConfig& config() const { return config_; }
  int joints() const { return joints_; }
  int dims() const { return dims_; }
  nn::ParamStore<Scalar>& params() { return params_; }
  const nn::ParamStore<Scalar>& params() const { return params_; }
  nn::Parameter<Scalar>& entries() { return *entries_; }
  const nn::Mat<Scalar>& entry_matrix() const { return entries_->value; }

  // Positional encoding is added to the raw pose coordinates before the
  // per-frame spatial embedding; attention then runs over the time axis.
  int encode_node(nn::Graph<Scalar>& g, const nn::Mat<Scalar>& window,
                  const nn::DropoutCtx<Scalar>& drop) const {
    if (window.rows() != config_.window || window.cols() != joints_ * dims_)
      throw DataError("encode: window shape " + std::to_string(window.rows()) + "x" +
                      std::to_string(window.cols()) + " does not match " +
                      std::to_string(config_.window) + "x" + std::to_string(joints_ * dims_));
    const nn::Mat<Scalar> pe =
        nn::sinusoidal_positional_encoding<Scalar>(window.rows(), window.cols());
    int h = g.constant(window + pe);
    h = enc_embed_.apply(g, h);
    for (const auto& layer : enc_layers_) h = layer.apply(g, h, nullptr, drop);
    return enc_final_ln_.apply(g, h);
  }

  struct DecodeNodes {
    int poses = -1;     // U x (J*D)
    int counters = -1;  // U x 1
  };

  // Non-autoregressive: counter queries attend over the full window in one
  // pass; two affine heads emit poses and counter predictions.
  DecodeNodes decode_node(nn::Graph<Scalar>& g, int zhat,
                          const nn::DropoutCtx<Scalar>& drop) const {
    const int u = config_.window;
    int q = counter_embed_.apply(g, g.constant(counter_track<Scalar>(u)));
    q = add_const(g, q, nn::sinusoidal_positional_encoding<Scalar>(u, config_.embed));
    for (const auto& layer : dec_layers_) q = layer.apply(g, q, zhat, nullptr, drop);
    q = dec_final_ln_.apply(g, q);
    return {pose_head_.apply(g, q), counter_head_.apply(g, q)};
  }

  // Deterministic eval-mode forward passes.
  nn::Mat<Scalar> encode(const nn::Mat<Scalar>& window) const {
    nn::Graph<Scalar> g;
    return g.val(encode_node(g, window, {}));
  }

  std::pair<nn::Mat<Scalar>, nn::Mat<Scalar>> decode(const nn::Mat<Scalar>& zhat) const {
    nn::Graph<Scalar> g;
    const auto nodes = decode_node(g, g.constant(zhat), {});
    return {g.val(nodes.poses), g.val(nodes.counters)};
  }

  // Eq. 1: nearest codebook entry for an encoder output.
  std::pair<int, double> quantize_infer(const nn::Mat<Scalar>& z) const {
    return nearest_entry(flatten_rm(z), entries_->value);
  }

  std::vector<NamedArray> export_arrays() const {
    std::vector<NamedArray> out;
    for (const auto& p : params_) {
      NamedArray a;
      a.name = p.name;
      a.shape = {p.value.rows(), p.value.cols()};
      a.data.reserve(static_cast<size_t>(p.value.size()));
      for (Eigen::Index r = 0; r < p.value.rows(); ++r)
        for (Eigen::Index c = 0; c < p.value.cols(); ++c)
          a.data.push_back(static_cast<double>(p.value(r, c)));
      out.push_back(std::move(a));
    }
    return out;
  }

  void import_arrays(const std::vector<NamedArray>& arrays) {
    for (const auto& a : arrays) {
      auto* p = params_.find(a.name);
      if (!p) throw ArtifactMismatchError("unknown parameter '" + a.name + "' in artifact");
      if (a.rows() != p->value.rows() || a.cols() != p->value.cols())
        throw ArtifactMismatchError("parameter '" + a.name + "' has shape " +
                                    std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                    ", model expects " + std::to_string(p->value.rows()) + "x" +
                                    std::to_string(p->value.cols()));
      size_t k = 0;
      for (Eigen::Index r = 0; r < p->value.rows(); ++r)
        for (Eigen::Index c = 0; c < p->value.cols(); ++c)
          p->value(r, c) = static_cast<Scalar>(a.data[k++]);
    }
  }

  // Selection counts over the current tracking window.
  std::vector<int64_t> usage;
  int64_t usage_total = 0;

  void reset_usage() {
    usage.assign(usage.size(), 0);
    usage_total = 0;
  }

 private:
  CodebookConfig config_;
  int joints_;
  int dims_;
  nn::ParamStore<Scalar> params_;
  nn::Linear<Scalar> enc_embed_;
  std::vector<nn::EncoderLayer<Scalar>> enc_layers_;
  nn::LayerNorm<Scalar> enc_final_ln_;
  nn::Parameter<Scalar>* entries_ = nullptr;
  nn::Linear<Scalar> counter_embed_;
  std::vector<nn::DecoderLayer<Scalar>> dec_layers_;
  nn::LayerNorm<Scalar> dec_final_ln_;
  nn::Linear<Scalar> pose_head_;
  nn::Linear<Scalar> counter_head_;
};

// Eq. 2 on the tape: zhat = z + ||z - t_i|| * V / ||V||, with the entry
// chosen by Eq. 1 on current values. The gradient reaches the encoder
// through z and the selected entry through the error-magnitude factor.
template <typename Scalar>
struct QuantizeTrainNodes {
  int zhat = -1;  // U x H
  int index = -1;
};

template <typename Scalar>
QuantizeTrainNodes<Scalar> quantize_train_node(nn::Graph<Scalar>& g, int z, int entries_leaf,
                                               const CodebookConfig& config, Rng& rng) {
  const int u = config.window;
  const int h = config.embed;
  const int z_flat = nn::reshape_rm(g, z, 1, static_cast<Eigen::Index>(u) * h);
  const auto [index, dist2] = nearest_entry(g.val(z_flat), g.val(entries_leaf));
  const int entry = nn::slice_rows(g, entries_leaf, index, 1);
  const int err_norm = nn::fro_norm(g, nn::sub(g, z_flat, entry));

  nn::Mat<Scalar> dir(1, static_cast<Eigen::Index>(u) * h);
  Scalar norm = 0;
  do {
    for (Eigen::Index i = 0; i < dir.size(); ++i) dir(0, i) = static_cast<Scalar>(rng.normal());
    norm = dir.norm();
  } while (!(norm > Scalar(0)));
  dir /= norm;

  const int zhat_flat = nn::add(g, z_flat, nn::scalar_mul_const(g, err_norm, std::move(dir)));
  return {nn::reshape_rm(g, zhat_flat, u, h), index};
}

// Value-level NSVQ step, for inference-free checks.
template <typename Scalar>
std::pair<nn::Mat<Scalar>, int> quantize_train(const nn::Mat<Scalar>& z,
                                               const nn::Mat<Scalar>& entries, Rng& rng) {
  const nn::Mat<Scalar> flat = flatten_rm(z);
  const auto [index, dist2] = nearest_entry(flat, entries);
  const Scalar err = (flat.row(0) - entries.row(index)).norm();
  nn::Mat<Scalar> dir(1, flat.cols());
  Scalar norm = 0;
  do {
    for (Eigen::Index i = 0; i < dir.size(); ++i) dir(0, i) = static_cast<Scalar>(rng.normal());
    norm = dir.norm();
  } while (!(norm > Scalar(0)));
  const nn::Mat<Scalar> zhat_flat = flat + (err / norm) * dir;
  return {unflatten_rm(zhat_flat, z.rows(), z.cols()), index};
}

// Eq. 4: mean over frames of the per-frame mean squared pose error plus
// alpha times the squared counter error.
template <typename Scalar>
int codebook_loss_node(nn::Graph<Scalar>& g, int pred_poses, nn::Mat<Scalar> true_poses,
                       int pred_counters, nn::Mat<Scalar> true_counters, Scalar alpha) {
  const int pose_term = nn::mse_const(g, pred_poses, std::move(true_poses));
  const int counter_term = nn::mse_const(g, pred_counters, std::move(true_counters));
  return nn::add(g, pose_term, nn::scale(g, counter_term, alpha));
}

template <typename Scalar>
double codebook_loss(const nn::Mat<Scalar>& pred_poses, const nn::Mat<Scalar>& true_poses,
                     const nn::Mat<Scalar>& pred_counters, const nn::Mat<Scalar>& true_counters,
                     double alpha) {
  if (pred_poses.rows() != true_poses.rows() || pred_poses.cols() != true_poses.cols() ||
      pred_counters.rows() != true_counters.rows())
    throw DataError("codebook loss: shape mismatch");
  const double pose_term =
      static_cast<double>((pred_poses - true_poses).squaredNorm()) / pred_poses.size();
  const double counter_term =
      static_cast<double>((pred_counters - true_counters).squaredNorm()) / pred_counters.size();
  return pose_term + alpha * counter_term;
}

// Eq. 5 with the log of the softmax ratio restored (the cited supervised
// contrastive loss): anchors are mean-pooled, L2-normalized window
// embeddings; the denominator runs over all other samples; anchors without
// positives contribute 0; the result is averaged over anchors that have
// positives.
template <typename Scalar>
int supcon_loss_node(nn::Graph<Scalar>& g, const std::vector<int>& pooled_rows,
                     const std::vector<int>& labels, Scalar tau) {
  const int b = static_cast<int>(pooled_rows.size());
  if (b != static_cast<int>(labels.size())) throw DataError("supcon: label count mismatch");
  std::vector<double> pos_count(b, 0.0);
  int anchors = 0;
  for (int i = 0; i < b; ++i) {
    for (int j = 0; j < b; ++j)
      if (i != j && labels[i] == labels[j]) pos_count[i] += 1.0;
    if (pos_count[i] > 0) ++anchors;
  }
  if (anchors == 0 || b < 2) return g.scalar(Scalar(0));

  const int z = nn::concat_rows(g, pooled_rows);
  const int sims = nn::scale(g, nn::matmul_nt(g, z, z), Scalar(1) / tau);

  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> keep(b, b);
  nn::Mat<Scalar> weights = nn::Mat<Scalar>::Zero(b, b);
  for (int i = 0; i < b; ++i) {
    for (int j = 0; j < b; ++j) {
      keep(i, j) = i != j;
      if (i != j && labels[i] == labels[j])
        weights(i, j) = Scalar(1.0 / (pos_count[i] * anchors));
    }
  }
  const int lse = nn::row_logsumexp_masked(g, sims, keep);
  const int terms = nn::sub(g, nn::broadcast_col(g, lse, b), sims);
  return nn::sum_all(g, nn::cmul_const(g, terms, std::move(weights)));
}

// Value-level supervised contrastive loss over already pooled+normalized
// embeddings (rows of z).
template <typename Scalar>
double supcon_loss(const nn::Mat<Scalar>& z, const std::vector<int>& labels, double tau) {
  nn::Graph<Scalar> g;
  std::vector<int> rows;
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    rows.push_back(g.constant(z.row(i)));
  return static_cast<double>(
      g.val(supcon_loss_node(g, rows, labels, static_cast<Scalar>(tau)))(0, 0));
}

// Eq. 6.
template <typename Scalar>
int total_loss_node(nn::Graph<Scalar>& g, int codebook_term, int supcon_term, Scalar delta) {
  return nn::add(g, codebook_term, nn::scale(g, supcon_term, delta));
}

// Overwrites every dead entry (usage fraction < gamma) from a donor chosen
// by the policy mode. Usage counters are reset afterwards.
template <typename Scalar>
ReplacementReport replace_dead_entries(CodebookModel<Scalar>& model,
                                       const ReplacementPolicy& policy,
                                       const std::vector<nn::Mat<Scalar>>& recent_z, Rng& rng) {
  policy.validate(model.config().vocab_size);
  ReplacementReport report;
  const int n = model.config().vocab_size;
  if (model.usage_total == 0) {
    report.skipped = true;
    report.message = "no usage recorded in tracking window";
    return report;
  }
  const double gamma = policy.dead_threshold;
  const double beta = policy.resolved_active_threshold(n);

  std::vector<int> dead, active;
  for (int i = 0; i < n; ++i) {
    const double frac = static_cast<double>(model.usage[i]) / model.usage_total;
    if (frac < gamma) dead.push_back(i);
    else if (frac > beta) active.push_back(i);
  }
  if (dead.empty()) {
    model.reset_usage();
    return report;
  }

  auto& entries = model.entries().value;
  if (policy.mode == ReplacementMode::active_plus_noise) {
    if (active.empty()) {
      report.skipped = true;
      report.message = "no active entries above threshold; replacement skipped";
      return report;
    }
    double sigma = policy.noise_scale;
    if (sigma <= 0.0) {
      double mean_norm = 0.0;
      for (Eigen::Index i = 0; i < entries.rows(); ++i) mean_norm += entries.row(i).norm();
      sigma = 0.01 * mean_norm / entries.rows();
    }
    for (const int d : dead) {
      const int src = active[rng.uniform_int(static_cast<int64_t>(active.size()))];
      for (Eigen::Index c = 0; c < entries.cols(); ++c)
        entries(d, c) = entries(src, c) + static_cast<Scalar>(sigma * rng.normal());
      report.replaced.push_back({d, "entry " + std::to_string(src) + " + noise"});
    }
  } else {
    if (recent_z.empty()) {
      report.skipped = true;
      report.message = "no recent encoder outputs buffered; replacement skipped";
      return report;
    }
    for (const int d : dead) {
      const int src = static_cast<int>(rng.uniform_int(static_cast<int64_t>(recent_z.size())));
      entries.row(d) = flatten_rm(recent_z[src]).row(0);
      report.replaced.push_back({d, "encoder sample " + std::to_string(src)});
    }
  }
  model.reset_usage();
  return report;
}

inline void CodebookConfig::validate() const {
  if (vocab_size < 1) throw UsageError("codebook: vocab_size must be positive");
  if (window < 1) throw UsageError("codebook: window must be positive");
  if (embed < 1 || layers < 1 || heads < 1 || ff_size < 1)
    throw UsageError("codebook: embed/layers/heads/ff_size must be positive");
  if (embed % heads != 0) throw UsageError("codebook: embed must be divisible by heads");
  if (dropout < 0.0 || dropout >= 1.0) throw UsageError("codebook: dropout must be in [0,1)");
  if (counter_weight < 0.0 || contrastive_weight < 0.0)
    throw UsageError("codebook: loss weights must be nonnegative");
  if (temperature <= 0.0) throw UsageError("codebook: temperature must be positive");
  if (lr <= 0.0) throw UsageError("codebook: lr must be positive");
  if (plateau_factor <= 0.0 || plateau_factor >= 1.0)
    throw UsageError("codebook: plateau factor must be in (0,1)");
}

inline void ReplacementPolicy::validate(int vocab_size) const {
  if (dead_threshold < 0.0) throw UsageError("replacement: dead threshold must be >= 0");
  const double beta = resolved_active_threshold(vocab_size);
  if (dead_threshold > beta)
    throw UsageError("replacement: dead threshold must not exceed active threshold");
  if (interval_epochs < 1 || interval_growth < 1)
    throw UsageError("replacement: schedule intervals must be positive");
  if (stop_lr < 0.0) throw UsageError("replacement: stop lr must be >= 0");
}

}  // namespace posecode
