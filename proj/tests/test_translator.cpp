#include <filesystem>
#include <map>

#include "doctest.h"
#include "posecode/translator.hpp"

using namespace posecode;
namespace fs = std::filesystem;

namespace {

TranslatorConfig tiny_config() {
  TranslatorConfig cfg;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.embed = 16;
  cfg.ff_size = 32;
  cfg.dropout = 0.0;
  cfg.max_output_len = 8;
  return cfg;
}

TranslatorModel<float> tiny_model(uint64_t seed = 5, int codebook = 6) {
  std::vector<std::vector<std::string>> sentences = {{"wa", "ko"}, {"mi", "ta", "ru"}};
  return TranslatorModel<float>(tiny_config(), Vocab::build(sentences), codebook, 8, seed);
}

// Hand-set conditional distributions keyed by the BOS-stripped prefix;
// anything not in the table is uniform.
class TableScorer : public StepScorer {
 public:
  explicit TableScorer(int vocab) : vocab_(vocab) {}

  void set(const std::vector<int>& prefix, const std::vector<double>& probs) {
    table_[prefix] = probs;
  }

  int vocab_size() const override { return vocab_; }

  Eigen::RowVectorXd log_probs(const std::vector<int>& prefix_ids) override {
    const std::vector<int> key(prefix_ids.begin() + 1, prefix_ids.end());
    Eigen::RowVectorXd row(vocab_);
    auto it = table_.find(key);
    if (it == table_.end()) {
      row.setConstant(std::log(1.0 / vocab_));
    } else {
      for (int v = 0; v < vocab_; ++v) row(v) = std::log(it->second[v]);
    }
    return row;
  }

 private:
  int vocab_;
  std::map<std::vector<int>, std::vector<double>> table_;
};

// Exhaustive search over every decode outcome up to max_len steps with the
// same scoring semantics as the beam.
struct OracleBest {
  std::vector<int> ids;
  double score = -std::numeric_limits<double>::infinity();
};

void oracle_recurse(StepScorer& scorer, std::vector<int>& prefix, double log_prob, int max_len,
                    double alpha, OracleBest& best) {
  const int emitted = static_cast<int>(prefix.size()) - 1;
  if (emitted > 0 && prefix.back() == Vocab::kEos) {
    const double score = log_prob / length_penalty_factor(emitted, alpha);
    if (score > best.score) {
      best.score = score;
      best.ids.assign(prefix.begin() + 1, prefix.end());
    }
    return;
  }
  if (emitted == max_len) {
    const double score = log_prob / length_penalty_factor(emitted, alpha);
    if (score > best.score) {
      best.score = score;
      best.ids.assign(prefix.begin() + 1, prefix.end());
    }
    return;
  }
  const Eigen::RowVectorXd row = scorer.log_probs(prefix);
  for (int v = 0; v < scorer.vocab_size(); ++v) {
    prefix.push_back(v);
    oracle_recurse(scorer, prefix, log_prob + row(v), max_len, alpha, best);
    prefix.pop_back();
  }
}

OracleBest exhaustive_decode(StepScorer& scorer, int max_len, double alpha) {
  OracleBest best;
  std::vector<int> prefix = {Vocab::kBos};
  oracle_recurse(scorer, prefix, 0.0, max_len, alpha, best);
  return best;
}

std::vector<TranslationPair> toy_pairs() {
  return {{{"wa", "ko"}, {0, 1}},
          {{"mi", "ta"}, {2, 3}},
          {{"wa", "ta"}, {0, 3}},
          {{"mi", "ko"}, {2, 1}}};
}

}  // namespace

TEST_CASE("vocab reserves the first four ids and maps OOV to UNK") {
  const Vocab v = Vocab::build({{"b", "a"}, {"c", "a"}});
  CHECK(v.size() == 7);
  CHECK(v.symbols[Vocab::kPad] == "<pad>");
  CHECK(v.symbols[Vocab::kBos] == "<bos>");
  CHECK(v.symbols[Vocab::kEos] == "<eos>");
  CHECK(v.symbols[Vocab::kUnk] == "<unk>");
  CHECK(v.encode_word("a") == 4);  // sorted unique after reserved
  CHECK(v.encode_word("zzz") == Vocab::kUnk);
  const auto ids = v.encode({"a", "zzz", "c"});
  CHECK(ids == std::vector<int>{4, Vocab::kUnk, 6});
}

TEST_CASE("per-step output distribution sums to one and masks reserved ids") {
  const auto model = tiny_model();
  const auto memory = model.encode_src(model.src_vocab().encode({"wa", "ko"}));
  const Eigen::RowVectorXd logp = model.next_log_probs(memory, {Vocab::kBos});
  CHECK(logp.array().exp().sum() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(std::exp(logp(Vocab::kPad)) == doctest::Approx(0.0));
  CHECK(std::exp(logp(Vocab::kBos)) == doctest::Approx(0.0));
  CHECK(std::exp(logp(Vocab::kUnk)) == doctest::Approx(0.0));
}

TEST_CASE("decoding is deterministic and never emits reserved ids") {
  const auto model = tiny_model();
  for (const auto& words :
       std::vector<std::vector<std::string>>{{"wa"}, {"ko", "mi"}, {"ta", "ru", "wa"}}) {
    const DecodeResult a = greedy_decode(model, words);
    const DecodeResult b = greedy_decode(model, words);
    CHECK(a.ids == b.ids);
    CHECK(a.log_prob == b.log_prob);
    CHECK(static_cast<int>(a.ids.size()) <= model.max_output_len());
    for (size_t i = 0; i < a.ids.size(); ++i) {
      CHECK(a.ids[i] != Vocab::kPad);
      CHECK(a.ids[i] != Vocab::kBos);
      CHECK(a.ids[i] != Vocab::kUnk);
      if (i + 1 < a.ids.size()) CHECK(a.ids[i] != Vocab::kEos);
    }
    CHECK((a.finished || a.truncated));
  }
}

TEST_CASE("beam size 1 equals greedy on 100 random-model inputs") {
  Rng rng(71);
  const std::vector<std::string> lexicon = {"wa", "ko", "mi", "ta", "ru"};
  for (int trial = 0; trial < 100; ++trial) {
    const auto model = tiny_model(1000 + trial);
    std::vector<std::string> words;
    const int len = 1 + static_cast<int>(rng.uniform_int(4));
    for (int i = 0; i < len; ++i) words.push_back(lexicon[rng.uniform_int(5)]);
    const DecodeResult g = greedy_decode(model, words);
    const DecodeResult b = beam_search(model, words, 1, 2.0);
    CHECK(g.ids == b.ids);
  }
}

TEST_CASE("wider beams never lower the best normalized score") {
  Rng rng(72);
  const std::vector<std::string> lexicon = {"wa", "ko", "mi", "ta", "ru"};
  for (int trial = 0; trial < 20; ++trial) {
    const auto model = tiny_model(2000 + trial);
    std::vector<std::string> words = {lexicon[rng.uniform_int(5)], lexicon[rng.uniform_int(5)]};
    double prev = -std::numeric_limits<double>::infinity();
    for (const int beam : {1, 2, 5}) {
      const DecodeResult r = beam_search(model, words, beam, 2.0);
      CHECK(r.normalized_score >= prev - 1e-12);
      prev = r.normalized_score;
    }
  }
}

TEST_CASE("a wide beam matches exhaustive search on a hand-set 3-step model") {
  // Vocab: 0..3 reserved, 4 and 5 are content tokens.
  TableScorer scorer(6);
  // Make EOS unattractive at first, then rewarding; exercises the length
  // penalty trade-off.
  scorer.set({}, {0.01, 0.01, 0.02, 0.01, 0.65, 0.30});
  scorer.set({4}, {0.01, 0.01, 0.10, 0.01, 0.17, 0.70});
  scorer.set({4, 5}, {0.01, 0.01, 0.90, 0.01, 0.03, 0.04});
  scorer.set({4, 4}, {0.01, 0.01, 0.46, 0.01, 0.50, 0.01});
  scorer.set({5}, {0.01, 0.01, 0.55, 0.01, 0.21, 0.21});

  for (const double alpha : {0.0, 1.0, 2.0}) {
    const OracleBest oracle = exhaustive_decode(scorer, 3, alpha);
    const DecodeResult beam = beam_search_ids(scorer, 64, alpha, 3);
    CHECK(beam.ids == oracle.ids);
    CHECK(beam.normalized_score == doctest::Approx(oracle.score).epsilon(1e-12));
  }
}

TEST_CASE("max_output_len 0 yields an empty truncated result") {
  const auto model = tiny_model();
  TranslatorScorer<float> scorer(model, {"wa"});
  const DecodeResult r = beam_search_ids(scorer, 4, 2.0, 0);
  CHECK(r.ids.empty());
  CHECK(r.truncated);
  const DecodeResult g = greedy_decode_ids(scorer, 0, 2.0);
  CHECK(g.ids.empty());
  CHECK(g.truncated);
}

TEST_CASE("training data validation happens before any training") {
  const TranslatorConfig cfg = tiny_config();
  TranslatorTrainOptions opts;
  opts.epochs = 1;

  SUBCASE("empty training set") {
    CHECK_THROWS_AS(train_translator<float>({}, cfg, 6, opts), DataError);
  }
  SUBCASE("target token out of range") {
    std::vector<TranslationPair> pairs = {{{"wa"}, {7}}};
    CHECK_THROWS_AS(train_translator<float>(pairs, cfg, 6, opts), DataError);
  }
  SUBCASE("negative token") {
    std::vector<TranslationPair> pairs = {{{"wa"}, {-1}}};
    CHECK_THROWS_AS(train_translator<float>(pairs, cfg, 6, opts), DataError);
  }
}

TEST_CASE("training is deterministic and learns the toy mapping") {
  TranslatorConfig cfg = tiny_config();
  cfg.lr = 3e-3;
  cfg.dropout = 0.1;
  TranslatorTrainOptions opts;
  opts.epochs = 60;
  opts.batch_size = 4;
  opts.seed = 11;

  const auto pairs = toy_pairs();
  auto [model1, result1] = train_translator<float>(pairs, cfg, 6, opts, pairs);
  auto [model2, result2] = train_translator<float>(pairs, cfg, 6, opts, pairs);

  REQUIRE(result1.epoch_loss.size() == result2.epoch_loss.size());
  for (size_t i = 0; i < result1.epoch_loss.size(); ++i) {
    CHECK(result1.epoch_loss[i] == result2.epoch_loss[i]);
    CHECK(result1.dev_loss[i] == result2.dev_loss[i]);
  }
  CHECK(result1.epoch_loss.back() < result1.epoch_loss.front());
  CHECK(teacher_forced_accuracy(model1, pairs) >= 0.9);

  SUBCASE("greedy decode recovers the trained mapping") {
    const DecodeResult r = greedy_decode(model1, {"wa", "ko"});
    CHECK(r.tokens() == std::vector<int>{0, 1});
    const DecodeResult r2 = greedy_decode(model1, {"mi", "ta"});
    CHECK(r2.tokens() == std::vector<int>{2, 3});
  }

  SUBCASE("artifact round trip preserves behaviour") {
    const fs::path dir = fs::temp_directory_path() / "posecode_test_translator" / "artifact";
    fs::remove_all(dir);
    save_translator_artifact(make_translator_artifact(model1, opts.seed), dir);
    const TranslatorArtifact loaded = load_translator_artifact(dir);
    const auto model3 = loaded.instantiate<float>();
    CHECK(model3.src_vocab().symbols == model1.src_vocab().symbols);
    CHECK(model3.max_output_len() == model1.max_output_len());
    for (const auto& p : toy_pairs()) {
      const DecodeResult a = greedy_decode(model1, p.words);
      const DecodeResult b = greedy_decode(model3, p.words);
      CHECK(a.ids == b.ids);
    }
  }
}

TEST_CASE("translator loss gradients match finite differences on a tiny model") {
  // Covers embed_rows and the causal mask backward through the full stack.
  TranslatorConfig cfg;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.embed = 8;
  cfg.ff_size = 8;
  cfg.dropout = 0.0;
  cfg.max_output_len = 4;
  const Vocab vocab = Vocab::build({{"aa", "bb"}});
  TranslatorModel<double> model(cfg, vocab, 4, 4, 31);

  const std::vector<int> src = vocab.encode({"aa", "bb"});
  const std::vector<int> tgt_in = {Vocab::kBos, 4, 6};
  const std::vector<int> tgt_out = {4, 6, Vocab::kEos};

  auto build = [&](nn::Graph<double>& g) {
    const int mem = model.encode_src_node(g, src, {});
    const int logits = model.decode_logits_node(g, mem, tgt_in, {});
    return nn::cross_entropy_sum(g, logits, tgt_out);
  };

  for (auto& p : model.params()) p.zero_grad();
  {
    nn::Graph<double> g;
    g.backward(build(g));
  }
  const double h = 1e-6;
  int checked = 0;
  for (auto& p : model.params()) {
    for (Eigen::Index r = 0; r < p.value.rows() && checked < 4000; r += 1) {
      for (Eigen::Index c = 0; c < p.value.cols() && checked < 4000; c += 1) {
        const double saved = p.value(r, c);
        p.value(r, c) = saved + h;
        double fp;
        {
          nn::Graph<double> g;
          fp = g.val(build(g))(0, 0);
        }
        p.value(r, c) = saved - h;
        double fm;
        {
          nn::Graph<double> g;
          fm = g.val(build(g))(0, 0);
        }
        p.value(r, c) = saved;
        const double numeric = (fp - fm) / (2 * h);
        const double analytic = p.grad(r, c);
        const double err = std::abs(analytic - numeric);
        INFO("param ", p.name, " (", r, ",", c, ")");
        CHECK(err <= 5e-9 + 1e-5 * std::max(std::abs(analytic), std::abs(numeric)));
        ++checked;
      }
    }
  }
  CHECK(checked > 500);
}
