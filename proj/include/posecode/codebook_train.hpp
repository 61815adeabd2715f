#pragma once

#include <cmath>
#include <optional>
#include <sstream>

#include "posecode/codebook.hpp"

namespace posecode {

template <typename Scalar>
struct TrainWindow {
  nn::Mat<Scalar> frames;  // U_cb x (J*D), normalized
  int gloss_id = -1;       // < 0 means unlabeled
};

struct CodebookTrainOptions {
  int epochs = 120;
  int batch_size = 32;
  uint64_t seed = 1;
  int recent_z_capacity = 512;
};

struct CodebookTrainResult {
  std::vector<double> epoch_loss;
  std::vector<std::pair<int, ReplacementReport>> replacements;  // (epoch, report)
  double final_lr = 0.0;
};

// Replacement cadence: every `interval_epochs` epochs, with the interval
// multiplied by `interval_growth` every 50 epochs.
inline bool replacement_due(const ReplacementPolicy& policy, int epoch) {
  int64_t interval = policy.interval_epochs;
  for (int k = 0; k < epoch / 50; ++k) {
    interval *= policy.interval_growth;
    if (interval > 1000000) return false;
  }
  return epoch % interval == 0;
}

// Minibatch training of the encoder-NSVQ-decoder with reduce-on-plateau
// scheduling and scheduled dead-entry replacement. Single logical thread;
// bit-deterministic in opts.seed.
template <typename Scalar>
CodebookTrainResult train_codebook_model(CodebookModel<Scalar>& model,
                                         const std::vector<TrainWindow<Scalar>>& windows,
                                         const std::optional<ReplacementPolicy>& policy,
                                         const CodebookTrainOptions& opts) {
  if (windows.empty()) throw DataError("codebook training: no windows");
  const CodebookConfig& cfg = model.config();
  if (policy) policy->validate(cfg.vocab_size);

  Rng root(opts.seed);
  nn::Adam<Scalar> adam;
  nn::PlateauScheduler sched(cfg.lr, cfg.plateau_patience, cfg.plateau_factor);

  std::vector<nn::Mat<Scalar>> recent_z;
  size_t recent_pos = 0;
  auto remember_z = [&](const nn::Mat<Scalar>& z) {
    if (static_cast<int>(recent_z.size()) < opts.recent_z_capacity) {
      recent_z.push_back(z);
    } else {
      recent_z[recent_pos] = z;
      recent_pos = (recent_pos + 1) % recent_z.size();
    }
  };

  const nn::Mat<Scalar> counters = counter_track<Scalar>(cfg.window);
  const Scalar alpha = static_cast<Scalar>(cfg.counter_weight);
  const Scalar delta = static_cast<Scalar>(cfg.contrastive_weight);

  CodebookTrainResult result;
  std::vector<int> order(windows.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    Rng erng = root.fork(static_cast<uint64_t>(epoch));
    erng.shuffle(order);
    nn::DropoutCtx<Scalar> drop{cfg.dropout, &erng};

    double loss_sum = 0.0;
    int batch_count = 0;
    for (size_t begin = 0; begin < order.size(); begin += opts.batch_size) {
      const size_t end = std::min(order.size(), begin + opts.batch_size);
      nn::Graph<Scalar> g;
      const int entries_leaf = g.leaf(model.entries());
      std::vector<int> losses, pooled, labels;
      for (size_t k = begin; k < end; ++k) {
        const TrainWindow<Scalar>& w = windows[order[k]];
        const int z = model.encode_node(g, w.frames, drop);
        remember_z(g.val(z));
        const auto qt = quantize_train_node(g, z, entries_leaf, cfg, erng);
        model.usage[qt.index]++;
        model.usage_total++;
        const auto dec = model.decode_node(g, qt.zhat, drop);
        losses.push_back(
            codebook_loss_node(g, dec.poses, w.frames, dec.counters, counters, alpha));
        if (delta > Scalar(0) && w.gloss_id >= 0) {
          pooled.push_back(nn::l2_normalize_rows(g, nn::mean_rows(g, z)));
          labels.push_back(w.gloss_id);
        }
      }
      int loss = losses.front();
      for (size_t i = 1; i < losses.size(); ++i) loss = nn::add(g, loss, losses[i]);
      loss = nn::scale(g, loss, Scalar(1) / static_cast<Scalar>(losses.size()));
      if (delta > Scalar(0) && pooled.size() >= 2) {
        loss = total_loss_node(
            g, loss, supcon_loss_node(g, pooled, labels, static_cast<Scalar>(cfg.temperature)),
            delta);
      }
      const double loss_value = static_cast<double>(g.val(loss)(0, 0));
      if (!std::isfinite(loss_value)) {
        std::ostringstream snap;
        snap << "codebook training diverged: non-finite loss at epoch " << epoch << ", batch "
             << batch_count << ", lr " << sched.lr() << ", last epoch losses:";
        for (size_t i = result.epoch_loss.size() > 3 ? result.epoch_loss.size() - 3 : 0;
             i < result.epoch_loss.size(); ++i)
          snap << " " << result.epoch_loss[i];
        throw NumericError(snap.str());
      }
      model.params().zero_grad();
      g.backward(loss);
      adam.step(model.params(), sched.lr());
      loss_sum += loss_value;
      ++batch_count;
    }
    result.epoch_loss.push_back(loss_sum / batch_count);

    // Replacement halts for good once the learning rate decays past stop_lr.
    if (policy && sched.lr() >= policy->stop_lr && replacement_due(*policy, epoch)) {
      Rng rep_rng = erng.fork(0x7e91ace);
      result.replacements.emplace_back(epoch,
                                       replace_dead_entries(model, *policy, recent_z, rep_rng));
    } else {
      model.reset_usage();
    }
    sched.observe(result.epoch_loss.back());
  }
  result.final_lr = sched.lr();
  return result;
}

// Inference-path tokens of each window: encode, then Eq. 1.
template <typename Scalar>
std::vector<int> tokenize_windows(const CodebookModel<Scalar>& model,
                                  const std::vector<TrainWindow<Scalar>>& windows) {
  std::vector<int> tokens;
  tokens.reserve(windows.size());
  for (const auto& w : windows)
    tokens.push_back(model.quantize_infer(model.encode(w.frames)).first);
  return tokens;
}

template <typename Scalar>
double measure_utilization(const CodebookModel<Scalar>& model,
                           const std::vector<TrainWindow<Scalar>>& windows) {
  std::vector<bool> used(model.config().vocab_size, false);
  for (const int t : tokenize_windows(model, windows)) used[t] = true;
  return static_cast<double>(std::count(used.begin(), used.end(), true)) /
         model.config().vocab_size;
}

// Reconstruction error of the inference path (decode the selected entry).
template <typename Scalar>
double reconstruction_mse(const CodebookModel<Scalar>& model,
                          const std::vector<TrainWindow<Scalar>>& windows) {
  double acc = 0.0;
  int64_t count = 0;
  const CodebookConfig& cfg = model.config();
  for (const auto& w : windows) {
    const auto [idx, d2] = model.quantize_infer(model.encode(w.frames));
    const nn::Mat<Scalar> entry =
        unflatten_rm(nn::Mat<Scalar>(model.entry_matrix().row(idx)), cfg.window, cfg.embed);
    const auto [poses, counters] = model.decode(entry);
    acc += static_cast<double>((poses - w.frames).squaredNorm());
    count += poses.size();
  }
  return acc / count;
}

// Mean pairwise distance between pooled, normalized embeddings that share a
// gloss label.
template <typename Scalar>
double mean_intra_label_distance(const CodebookModel<Scalar>& model,
                                 const std::vector<TrainWindow<Scalar>>& windows) {
  std::vector<Eigen::RowVectorXd> embs;
  std::vector<int> labels;
  for (const auto& w : windows) {
    if (w.gloss_id < 0) continue;
    const nn::Mat<Scalar> z = model.encode(w.frames);
    Eigen::RowVectorXd pooled(z.cols());
    for (Eigen::Index c = 0; c < z.cols(); ++c)
      pooled(c) = static_cast<double>(z.col(c).mean());
    const double n = pooled.norm();
    if (n > 0) pooled /= n;
    embs.push_back(pooled);
    labels.push_back(w.gloss_id);
  }
  double acc = 0.0;
  int64_t pairs = 0;
  for (size_t i = 0; i < embs.size(); ++i) {
    for (size_t j = i + 1; j < embs.size(); ++j) {
      if (labels[i] != labels[j]) continue;
      acc += (embs[i] - embs[j]).norm();
      ++pairs;
    }
  }
  if (pairs == 0) throw DataError("intra-label distance: no labeled pairs");
  return acc / pairs;
}

}  // namespace posecode
