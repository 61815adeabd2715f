#include "posecode/translator.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "posecode/artifact.hpp"
#include "posecode/version.hpp"

namespace posecode {

Vocab Vocab::build(const std::vector<std::vector<std::string>>& sentences) {
  std::set<std::string> unique;
  for (const auto& s : sentences)
    for (const auto& w : s) unique.insert(w);
  Vocab v;
  v.symbols = {"<pad>", "<bos>", "<eos>", "<unk>"};
  v.symbols.insert(v.symbols.end(), unique.begin(), unique.end());
  for (size_t i = 0; i < v.symbols.size(); ++i) v.index[v.symbols[i]] = static_cast<int>(i);
  return v;
}

namespace {

int argmax_strict(const Eigen::RowVectorXd& row) {
  int best = 0;
  for (int i = 1; i < row.size(); ++i)
    if (row(i) > row(best)) best = i;
  return best;
}

struct BeamHyp {
  std::vector<int> ids;
  double log_prob = 0.0;
  bool finished = false;
};

std::vector<int> with_bos(const std::vector<int>& ids) {
  std::vector<int> prefix;
  prefix.reserve(ids.size() + 1);
  prefix.push_back(Vocab::kBos);
  prefix.insert(prefix.end(), ids.begin(), ids.end());
  return prefix;
}

DecodeResult to_result(const BeamHyp& h, double alpha) {
  DecodeResult r;
  r.ids = h.ids;
  r.log_prob = h.log_prob;
  r.finished = h.finished;
  r.truncated = !h.finished;
  r.normalized_score = h.log_prob / length_penalty_factor(static_cast<int>(h.ids.size()), alpha);
  return r;
}

}  // namespace

DecodeResult greedy_decode_ids(StepScorer& scorer, int max_len, double length_penalty) {
  BeamHyp h;
  for (int step = 0; step < max_len; ++step) {
    const Eigen::RowVectorXd row = scorer.log_probs(with_bos(h.ids));
    const int best = argmax_strict(row);
    h.ids.push_back(best);
    h.log_prob += row(best);
    if (best == Vocab::kEos) {
      h.finished = true;
      break;
    }
  }
  return to_result(h, length_penalty);
}

DecodeResult beam_search_ids(StepScorer& scorer, int beam_size, double length_penalty,
                             int max_len) {
  if (beam_size < 1) throw UsageError("beam search: beam size must be >= 1");
  std::vector<BeamHyp> live = {BeamHyp{}};
  std::vector<BeamHyp> finished;
  for (int step = 0; step < max_len && !live.empty(); ++step) {
    std::vector<BeamHyp> candidates;
    candidates.reserve(live.size() * static_cast<size_t>(scorer.vocab_size()));
    for (const auto& h : live) {
      const Eigen::RowVectorXd row = scorer.log_probs(with_bos(h.ids));
      for (int v = 0; v < scorer.vocab_size(); ++v) {
        BeamHyp ext = h;
        ext.ids.push_back(v);
        ext.log_prob += row(v);
        candidates.push_back(std::move(ext));
      }
    }
    // Stable sort keeps the enumeration order (hypothesis order, then token
    // id ascending) on exact score ties, which makes beam=1 coincide with
    // greedy argmax.
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const BeamHyp& a, const BeamHyp& b) { return a.log_prob > b.log_prob; });
    if (static_cast<int>(candidates.size()) > beam_size) candidates.resize(beam_size);
    live.clear();
    for (auto& c : candidates) {
      if (c.ids.back() == Vocab::kEos) {
        c.finished = true;
        finished.push_back(std::move(c));
      } else {
        live.push_back(std::move(c));
      }
    }
  }
  for (auto& h : live) finished.push_back(std::move(h));  // truncated at max_len
  if (finished.empty()) return to_result(BeamHyp{}, length_penalty);  // max_len == 0
  DecodeResult best = to_result(finished.front(), length_penalty);
  for (size_t i = 1; i < finished.size(); ++i) {
    const DecodeResult r = to_result(finished[i], length_penalty);
    if (r.normalized_score > best.normalized_score ||
        (r.normalized_score == best.normalized_score && r.finished && !best.finished))
      best = r;
  }
  return best;
}

namespace {

template <typename Scalar>
void validate_pairs(const std::vector<TranslationPair>& pairs, int codebook_size) {
  for (size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].words.empty())
      throw DataError("translator data: pair " + std::to_string(i) + " has an empty sentence");
    if (pairs[i].tokens.empty())
      throw DataError("translator data: pair " + std::to_string(i) + " has no target tokens");
    for (const int t : pairs[i].tokens) {
      if (t < 0 || t >= codebook_size)
        throw DataError("translator data: target token " + std::to_string(t) + " in pair " +
                        std::to_string(i) + " outside [0, " + std::to_string(codebook_size) + ")");
    }
  }
}

template <typename Scalar>
std::pair<std::vector<int>, std::vector<int>> teacher_pair(const TranslationPair& p) {
  std::vector<int> tgt_in = {Vocab::kBos};
  std::vector<int> tgt_out;
  for (const int t : p.tokens) {
    tgt_in.push_back(TranslatorModel<Scalar>::token_to_id(t));
    tgt_out.push_back(TranslatorModel<Scalar>::token_to_id(t));
  }
  tgt_out.push_back(Vocab::kEos);
  return {tgt_in, tgt_out};
}

}  // namespace

template <typename Scalar>
double teacher_forced_loss(const TranslatorModel<Scalar>& model,
                           const std::vector<TranslationPair>& pairs) {
  double acc = 0.0;
  int64_t tokens = 0;
  for (const auto& p : pairs) {
    nn::Graph<Scalar> g;
    const int mem = model.encode_src_node(g, model.src_vocab().encode(p.words), {});
    const auto [tgt_in, tgt_out] = teacher_pair<Scalar>(p);
    const int logits = model.decode_logits_node(g, mem, tgt_in, {});
    acc += static_cast<double>(g.val(nn::cross_entropy_sum(g, logits, tgt_out))(0, 0));
    tokens += static_cast<int64_t>(tgt_out.size());
  }
  return acc / tokens;
}

template <typename Scalar>
double teacher_forced_accuracy(const TranslatorModel<Scalar>& model,
                               const std::vector<TranslationPair>& pairs) {
  int64_t correct = 0, total = 0;
  for (const auto& p : pairs) {
    nn::Graph<Scalar> g;
    const int mem = model.encode_src_node(g, model.src_vocab().encode(p.words), {});
    const auto [tgt_in, tgt_out] = teacher_pair<Scalar>(p);
    const int logits = model.decode_logits_node(g, mem, tgt_in, {});
    const auto& x = g.val(logits);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const Eigen::RowVectorXd row = x.row(r).template cast<double>();
      if (argmax_strict(row) == tgt_out[r]) ++correct;
      ++total;
    }
  }
  return static_cast<double>(correct) / total;
}

template <typename Scalar>
std::pair<TranslatorModel<Scalar>, TranslatorTrainResult> train_translator(
    const std::vector<TranslationPair>& pairs, const TranslatorConfig& config, int codebook_size,
    const TranslatorTrainOptions& opts, const std::vector<TranslationPair>& dev_pairs) {
  config.validate();
  if (pairs.empty()) throw DataError("translator training: empty training set");
  validate_pairs<Scalar>(pairs, codebook_size);
  validate_pairs<Scalar>(dev_pairs, codebook_size);

  std::vector<std::vector<std::string>> sentences;
  sentences.reserve(pairs.size());
  int longest = 1;
  for (const auto& p : pairs) {
    sentences.push_back(p.words);
    longest = std::max(longest, static_cast<int>(p.tokens.size()));
  }
  const int max_out = config.max_output_len > 0
                          ? config.max_output_len
                          : static_cast<int>(std::ceil(1.5 * longest)) + 1;

  TranslatorModel<Scalar> model(config, Vocab::build(sentences), codebook_size, max_out,
                                /*init_seed=*/opts.seed);
  nn::Adam<Scalar> adam;
  nn::PlateauScheduler sched(config.lr, config.plateau_patience, config.plateau_factor);
  Rng root(opts.seed ^ 0x7ab35c1d9e24f680ULL);

  TranslatorTrainResult result;
  std::vector<int> order(pairs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  const Scalar smoothing = static_cast<Scalar>(config.label_smoothing);

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    Rng erng = root.fork(static_cast<uint64_t>(epoch));
    erng.shuffle(order);
    nn::DropoutCtx<Scalar> drop{config.dropout, &erng};
    double loss_sum = 0.0;
    int64_t token_sum = 0;
    for (size_t begin = 0; begin < order.size(); begin += opts.batch_size) {
      const size_t end = std::min(order.size(), begin + opts.batch_size);
      nn::Graph<Scalar> g;
      std::vector<int> ces;
      int64_t batch_tokens = 0;
      for (size_t k = begin; k < end; ++k) {
        const auto& p = pairs[order[k]];
        const int mem = model.encode_src_node(g, model.src_vocab().encode(p.words), drop);
        const auto [tgt_in, tgt_out] = teacher_pair<Scalar>(p);
        const int logits = model.decode_logits_node(g, mem, tgt_in, drop);
        ces.push_back(nn::cross_entropy_sum(g, logits, tgt_out, smoothing));
        batch_tokens += static_cast<int64_t>(tgt_out.size());
      }
      int loss = ces.front();
      for (size_t i = 1; i < ces.size(); ++i) loss = nn::add(g, loss, ces[i]);
      loss = nn::scale(g, loss, Scalar(1) / static_cast<Scalar>(batch_tokens));
      const double loss_value = static_cast<double>(g.val(loss)(0, 0));
      if (!std::isfinite(loss_value))
        throw NumericError("translator training diverged: non-finite loss at epoch " +
                           std::to_string(epoch) + ", lr " + std::to_string(sched.lr()));
      model.params().zero_grad();
      g.backward(loss);
      adam.step(model.params(), sched.lr());
      loss_sum += loss_value * batch_tokens;
      token_sum += batch_tokens;
    }
    result.epoch_loss.push_back(loss_sum / token_sum);
    double plateau_metric = result.epoch_loss.back();
    if (!dev_pairs.empty()) {
      result.dev_loss.push_back(teacher_forced_loss(model, dev_pairs));
      plateau_metric = result.dev_loss.back();
    }
    sched.observe(plateau_metric);
  }
  result.final_lr = sched.lr();
  return {std::move(model), std::move(result)};
}

template double teacher_forced_loss<float>(const TranslatorModel<float>&,
                                           const std::vector<TranslationPair>&);
template double teacher_forced_loss<double>(const TranslatorModel<double>&,
                                            const std::vector<TranslationPair>&);
template double teacher_forced_accuracy<float>(const TranslatorModel<float>&,
                                               const std::vector<TranslationPair>&);
template double teacher_forced_accuracy<double>(const TranslatorModel<double>&,
                                                const std::vector<TranslationPair>&);
template std::pair<TranslatorModel<float>, TranslatorTrainResult> train_translator<float>(
    const std::vector<TranslationPair>&, const TranslatorConfig&, int,
    const TranslatorTrainOptions&, const std::vector<TranslationPair>&);
template std::pair<TranslatorModel<double>, TranslatorTrainResult> train_translator<double>(
    const std::vector<TranslationPair>&, const TranslatorConfig&, int,
    const TranslatorTrainOptions&, const std::vector<TranslationPair>&);

// ---- artifact ---------------------------------------------------------------

namespace {
std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace

template <typename Scalar>
TranslatorArtifact make_translator_artifact(const TranslatorModel<Scalar>& model, uint64_t seed) {
  TranslatorArtifact a;
  a.format_version = kArtifactFormatVersion;
  a.config = model.config();
  a.src_vocab = model.src_vocab();
  a.codebook_size = model.codebook_size();
  a.max_output_len = model.max_output_len();
  a.seed = seed;
  a.weights = model.export_arrays();
  return a;
}

template TranslatorArtifact make_translator_artifact<float>(const TranslatorModel<float>&,
                                                            uint64_t);
template TranslatorArtifact make_translator_artifact<double>(const TranslatorModel<double>&,
                                                             uint64_t);

void save_translator_artifact(const TranslatorArtifact& artifact,
                              const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  detail::Manifest kv;
  kv["format_version"] = artifact.format_version;
  kv["kind"] = "translator";
  kv["layers"] = std::to_string(artifact.config.layers);
  kv["heads"] = std::to_string(artifact.config.heads);
  kv["embed"] = std::to_string(artifact.config.embed);
  kv["ff_size"] = std::to_string(artifact.config.ff_size);
  kv["dropout"] = fmt_double(artifact.config.dropout);
  kv["lr"] = fmt_double(artifact.config.lr);
  kv["beam_size"] = std::to_string(artifact.config.beam_size);
  kv["length_penalty"] = fmt_double(artifact.config.length_penalty);
  kv["max_output_len"] = std::to_string(artifact.max_output_len);
  kv["plateau_patience"] = std::to_string(artifact.config.plateau_patience);
  kv["plateau_factor"] = fmt_double(artifact.config.plateau_factor);
  kv["label_smoothing"] = fmt_double(artifact.config.label_smoothing);
  kv["codebook_size"] = std::to_string(artifact.codebook_size);
  kv["seed"] = std::to_string(artifact.seed);
  detail::write_manifest_file(dir / "manifest.txt", kv,
                              {"format_version", "kind", "codebook_size"});
  std::ofstream vf(dir / "src_vocab.txt");
  if (!vf) throw DataError("cannot write vocab: " + (dir / "src_vocab.txt").string());
  for (const auto& s : artifact.src_vocab.symbols) vf << s << "\n";
  save_blobs(dir / "params.bin", artifact.weights);
}

TranslatorArtifact load_translator_artifact(const std::filesystem::path& dir) {
  const auto kv = detail::read_manifest_file(dir / "manifest.txt");
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end())
      throw DataError("translator manifest missing key '" + key + "' in " + dir.string());
    return it->second;
  };
  TranslatorArtifact a;
  a.format_version = need("format_version");
  detail::check_format_version(a.format_version, "translator artifact " + dir.string());
  if (need("kind") != "translator")
    throw ArtifactMismatchError("artifact at " + dir.string() + " has kind '" + need("kind") +
                                "', expected 'translator'");
  a.config.layers = std::stoi(need("layers"));
  a.config.heads = std::stoi(need("heads"));
  a.config.embed = std::stoi(need("embed"));
  a.config.ff_size = std::stoi(need("ff_size"));
  a.config.dropout = std::stod(need("dropout"));
  a.config.lr = std::stod(need("lr"));
  a.config.beam_size = std::stoi(need("beam_size"));
  a.config.length_penalty = std::stod(need("length_penalty"));
  a.config.max_output_len = std::stoi(need("max_output_len"));
  a.config.plateau_patience = std::stoi(need("plateau_patience"));
  a.config.plateau_factor = std::stod(need("plateau_factor"));
  a.config.label_smoothing = std::stod(need("label_smoothing"));
  a.codebook_size = std::stoi(need("codebook_size"));
  a.max_output_len = a.config.max_output_len;
  a.seed = std::stoull(need("seed"));

  std::ifstream vf(dir / "src_vocab.txt");
  if (!vf) throw DataError("cannot open vocab: " + (dir / "src_vocab.txt").string());
  std::string line;
  while (std::getline(vf, line)) a.src_vocab.symbols.push_back(line);
  const std::vector<std::string> reserved = {"<pad>", "<bos>", "<eos>", "<unk>"};
  if (a.src_vocab.symbols.size() < reserved.size())
    throw DataError("translator vocab too small in " + dir.string());
  for (size_t i = 0; i < reserved.size(); ++i)
    if (a.src_vocab.symbols[i] != reserved[i])
      throw DataError("translator vocab reserved symbols corrupted in " + dir.string());
  for (size_t i = 0; i < a.src_vocab.symbols.size(); ++i)
    a.src_vocab.index[a.src_vocab.symbols[i]] = static_cast<int>(i);

  a.weights = load_blobs(dir / "params.bin");
  return a;
}

}  // namespace posecode
