#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <unordered_map>

#include "posecode/nn/layers.hpp"
#include "posecode/nn/optim.hpp"
#include "posecode/pose_data.hpp"
#include "posecode/blob.hpp"

namespace posecode {

// Source-side symbol table with fixed reserved indices.
struct Vocab {
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kReserved = 4;

  std::vector<std::string> symbols;  // includes the reserved entries
  std::unordered_map<std::string, int> index;

  static Vocab build(const std::vector<std::vector<std::string>>& sentences);

  int size() const { return static_cast<int>(symbols.size()); }
  int encode_word(const std::string& w) const {
    auto it = index.find(w);
    return it == index.end() ? kUnk : it->second;
  }
  std::vector<int> encode(const std::vector<std::string>& words) const {
    std::vector<int> ids;
    ids.reserve(words.size());
    for (const auto& w : words) ids.push_back(encode_word(w));
    return ids;
  }
};

struct TranslatorConfig {
  int layers = 1;
  int heads = 4;
  int embed = 512;
  int ff_size = 1024;
  double dropout = 0.1;
  double lr = 1e-4;
  int beam_size = 5;
  double length_penalty = 2.0;
  int max_output_len = 0;  // 0 resolves to 1.5 x longest training target
  int plateau_patience = 5;
  double plateau_factor = 0.9;
  double label_smoothing = 0.0;

  void validate() const {
    if (layers < 1 || heads < 1 || embed < 1 || ff_size < 1)
      throw UsageError("translator: layers/heads/embed/ff_size must be positive");
    if (embed % heads != 0) throw UsageError("translator: embed must be divisible by heads");
    if (dropout < 0.0 || dropout >= 1.0) throw UsageError("translator: dropout must be in [0,1)");
    if (lr <= 0.0) throw UsageError("translator: lr must be positive");
    if (beam_size < 1) throw UsageError("translator: beam size must be >= 1");
    if (label_smoothing < 0.0 || label_smoothing >= 1.0)
      throw UsageError("translator: label smoothing must be in [0,1)");
  }
};

// Encoder-decoder transformer over word ids; targets are codebook tokens
// shifted past the reserved indices.
template <typename Scalar>
class TranslatorModel {
 public:
  TranslatorModel(const TranslatorConfig& config, Vocab src_vocab, int codebook_size,
                  int max_output_len, uint64_t init_seed)
      : config_(config),
        src_vocab_(std::move(src_vocab)),
        codebook_size_(codebook_size),
        max_output_len_(max_output_len) {
    config.validate();
    if (codebook_size < 1) throw UsageError("translator: codebook size must be positive");
    Rng rng(init_seed);
    const int h = config.embed;
    src_embed_ = &params_.add("src.embed", src_vocab_.size(), h);
    tgt_embed_ = &params_.add("tgt.embed", target_vocab_size(), h);
    nn::xavier_uniform(*src_embed_, rng);
    nn::xavier_uniform(*tgt_embed_, rng);
    for (int l = 0; l < config.layers; ++l) {
      enc_layers_.push_back(nn::EncoderLayer<Scalar>::create(
          params_, "enc.layer" + std::to_string(l), h, config.heads, config.ff_size, rng));
      dec_layers_.push_back(nn::DecoderLayer<Scalar>::create(
          params_, "dec.layer" + std::to_string(l), h, config.heads, config.ff_size, rng));
    }
    enc_final_ln_ = nn::LayerNorm<Scalar>::create(params_, "enc.final_ln", h);
    dec_final_ln_ = nn::LayerNorm<Scalar>::create(params_, "dec.final_ln", h);
    out_proj_ = nn::Linear<Scalar>::create(params_, "out.proj", h, target_vocab_size(), rng);
  }

  const TranslatorConfig& config() const { return config_; }
  const Vocab& src_vocab() const { return src_vocab_; }
  int codebook_size() const { return codebook_size_; }
  int target_vocab_size() const { return codebook_size_ + Vocab::kReserved; }
  int max_output_len() const { return max_output_len_; }
  nn::ParamStore<Scalar>& params() { return params_; }
  const nn::ParamStore<Scalar>& params() const { return params_; }

  static int token_to_id(int token) { return token + Vocab::kReserved; }
  static int id_to_token(int id) { return id - Vocab::kReserved; }

  int encode_src_node(nn::Graph<Scalar>& g, const std::vector<int>& src_ids,
                      const nn::DropoutCtx<Scalar>& drop) const {
    if (src_ids.empty()) throw DataError("translator: empty source sentence");
    const int h = config_.embed;
    int e = nn::embed_rows(g, g.leaf(*src_embed_), src_ids);
    e = nn::scale(g, e, static_cast<Scalar>(std::sqrt(static_cast<double>(h))));
    e = nn::add_const(g, e,
                      nn::sinusoidal_positional_encoding<Scalar>(
                          static_cast<Eigen::Index>(src_ids.size()), h));
    e = drop.apply(g, e);
    for (const auto& layer : enc_layers_) e = layer.apply(g, e, nullptr, drop);
    return enc_final_ln_.apply(g, e);
  }

  // Teacher-forced logits over BOS-prefixed target ids, causal self-attention.
  int decode_logits_node(nn::Graph<Scalar>& g, int memory, const std::vector<int>& tgt_in_ids,
                         const nn::DropoutCtx<Scalar>& drop) const {
    const int h = config_.embed;
    const auto t = static_cast<Eigen::Index>(tgt_in_ids.size());
    int e = nn::embed_rows(g, g.leaf(*tgt_embed_), tgt_in_ids);
    e = nn::scale(g, e, static_cast<Scalar>(std::sqrt(static_cast<double>(h))));
    e = nn::add_const(g, e, nn::sinusoidal_positional_encoding<Scalar>(t, h));
    e = drop.apply(g, e);
    const nn::Mat<Scalar> mask = nn::causal_mask<Scalar>(t);
    for (const auto& layer : dec_layers_) e = layer.apply(g, e, memory, &mask, drop);
    return out_proj_.apply(g, dec_final_ln_.apply(g, e));
  }

  nn::Mat<Scalar> encode_src(const std::vector<int>& src_ids) const {
    nn::Graph<Scalar> g;
    return g.val(encode_src_node(g, src_ids, {}));
  }

  // Log-probabilities of the next target id given the prefix (BOS first).
  // PAD/BOS/UNK are masked out before normalization, so the returned
  // distribution sums to 1 and decoding never emits them.
  Eigen::RowVectorXd next_log_probs(const nn::Mat<Scalar>& memory,
                                    const std::vector<int>& prefix_ids) const {
    nn::Graph<Scalar> g;
    const int mem = g.constant(memory);
    const int logits = decode_logits_node(g, mem, prefix_ids, {});
    Eigen::RowVectorXd row =
        g.val(logits).row(g.val(logits).rows() - 1).template cast<double>();
    row(Vocab::kPad) = -1e30;
    row(Vocab::kBos) = -1e30;
    row(Vocab::kUnk) = -1e30;
    const double m = row.maxCoeff();
    const double lse = m + std::log((row.array() - m).exp().sum());
    return row.array() - lse;
  }

  std::vector<NamedArray> export_arrays() const {
    std::vector<NamedArray> out;
    for (const auto& p : params_) {
      NamedArray a;
      a.name = p.name;
      a.shape = {p.value.rows(), p.value.cols()};
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
      if (!p) throw ArtifactMismatchError("unknown parameter '" + a.name + "' in model");
      if (a.rows() != p->value.rows() || a.cols() != p->value.cols())
        throw ArtifactMismatchError("parameter '" + a.name + "' shape mismatch");
      size_t k = 0;
      for (Eigen::Index r = 0; r < p->value.rows(); ++r)
        for (Eigen::Index c = 0; c < p->value.cols(); ++c)
          p->value(r, c) = static_cast<Scalar>(a.data[k++]);
    }
  }

 private:
  TranslatorConfig config_;
  Vocab src_vocab_;
  int codebook_size_;
  int max_output_len_;
  nn::ParamStore<Scalar> params_;
  nn::Parameter<Scalar>* src_embed_ = nullptr;
  nn::Parameter<Scalar>* tgt_embed_ = nullptr;
  std::vector<nn::EncoderLayer<Scalar>> enc_layers_;
  std::vector<nn::DecoderLayer<Scalar>> dec_layers_;
  nn::LayerNorm<Scalar> enc_final_ln_;
  nn::LayerNorm<Scalar> dec_final_ln_;
  nn::Linear<Scalar> out_proj_;
};

// ---- decoding -------------------------------------------------------------

// Anything that scores the next target id given a BOS-prefixed prefix.
// Lets beam search run against hand-set distributions in tests.
class StepScorer {
 public:
  virtual ~StepScorer() = default;
  virtual int vocab_size() const = 0;
  // prefix_ids starts with BOS; returns normalized log-probabilities.
  virtual Eigen::RowVectorXd log_probs(const std::vector<int>& prefix_ids) = 0;
};

struct DecodeResult {
  std::vector<int> ids;  // emitted target ids, EOS included when finished
  double log_prob = 0.0;
  double normalized_score = 0.0;
  bool finished = false;
  bool truncated = false;

  // Emitted ids as codebook tokens with EOS stripped.
  std::vector<int> tokens() const {
    std::vector<int> out;
    for (const int id : ids) {
      if (id == Vocab::kEos) break;
      out.push_back(TranslatorModel<float>::id_to_token(id));
    }
    return out;
  }
};

// GNMT-style length normalization, lp(n) = ((5 + n) / 6)^alpha over the
// number of emitted tokens (EOS counts as a step).
inline double length_penalty_factor(int steps, double alpha) {
  return std::pow((5.0 + std::max(steps, 1)) / 6.0, alpha);
}

DecodeResult greedy_decode_ids(StepScorer& scorer, int max_len, double length_penalty);
DecodeResult beam_search_ids(StepScorer& scorer, int beam_size, double length_penalty,
                             int max_len);

template <typename Scalar>
class TranslatorScorer : public StepScorer {
 public:
  TranslatorScorer(const TranslatorModel<Scalar>& model, const std::vector<std::string>& words)
      : model_(model), memory_(model.encode_src(model.src_vocab().encode(words))) {}

  int vocab_size() const override { return model_.target_vocab_size(); }
  Eigen::RowVectorXd log_probs(const std::vector<int>& prefix_ids) override {
    return model_.next_log_probs(memory_, prefix_ids);
  }

 private:
  const TranslatorModel<Scalar>& model_;
  nn::Mat<Scalar> memory_;
};

template <typename Scalar>
DecodeResult greedy_decode(const TranslatorModel<Scalar>& model,
                           const std::vector<std::string>& words) {
  TranslatorScorer<Scalar> scorer(model, words);
  return greedy_decode_ids(scorer, model.max_output_len(), model.config().length_penalty);
}

template <typename Scalar>
DecodeResult beam_search(const TranslatorModel<Scalar>& model,
                         const std::vector<std::string>& words, int beam_size,
                         double length_penalty) {
  TranslatorScorer<Scalar> scorer(model, words);
  return beam_search_ids(scorer, beam_size, length_penalty, model.max_output_len());
}

// ---- training -------------------------------------------------------------

struct TranslationPair {
  std::vector<std::string> words;
  std::vector<int> tokens;  // codebook token ids, < N
};

struct TranslatorTrainOptions {
  int epochs = 80;
  int batch_size = 16;
  uint64_t seed = 1;
};

struct TranslatorTrainResult {
  std::vector<double> epoch_loss;
  std::vector<double> dev_loss;  // empty when no dev pairs given
  double final_lr = 0.0;
};

template <typename Scalar>
double teacher_forced_loss(const TranslatorModel<Scalar>& model,
                           const std::vector<TranslationPair>& pairs);

template <typename Scalar>
double teacher_forced_accuracy(const TranslatorModel<Scalar>& model,
                               const std::vector<TranslationPair>& pairs);

// Builds the source vocabulary from the training pairs and trains with
// teacher forcing; targets are BOS-prefixed and EOS-suffixed.
template <typename Scalar>
std::pair<TranslatorModel<Scalar>, TranslatorTrainResult> train_translator(
    const std::vector<TranslationPair>& pairs, const TranslatorConfig& config, int codebook_size,
    const TranslatorTrainOptions& opts, const std::vector<TranslationPair>& dev_pairs = {});

// ---- artifact ---------------------------------------------------------------

struct TranslatorArtifact {
  std::string format_version;
  TranslatorConfig config;
  Vocab src_vocab;
  int codebook_size = 0;
  int max_output_len = 0;
  uint64_t seed = 0;
  std::vector<NamedArray> weights;

  template <typename Scalar>
  TranslatorModel<Scalar> instantiate() const {
    TranslatorModel<Scalar> model(config, src_vocab, codebook_size, max_output_len, seed);
    model.import_arrays(weights);
    return model;
  }
};

template <typename Scalar>
TranslatorArtifact make_translator_artifact(const TranslatorModel<Scalar>& model, uint64_t seed);

void save_translator_artifact(const TranslatorArtifact& artifact,
                              const std::filesystem::path& dir);
TranslatorArtifact load_translator_artifact(const std::filesystem::path& dir);

}  // namespace posecode
