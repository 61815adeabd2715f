#include "posecode/synthetic.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "posecode/rng.hpp"
#include "posecode/spline.hpp"
#include "posecode/stitcher.hpp"

namespace posecode {

namespace {

const char* kSyllables[20] = {"ba", "ko", "mi", "ta", "ru", "se", "no", "li", "fa", "du",
                              "pe", "ga", "vo", "zu", "ki", "ma", "ne", "so", "ti", "wa"};

const char* kDistractors[4] = {"um", "la", "de", "ek"};

}  // namespace

std::string primitive_word(int id) {
  std::string w = std::string(kSyllables[id % 20]) + kSyllables[(id / 20) % 20];
  if (id >= 400) w += std::to_string(id / 400);
  return w;
}

void SyntheticConfig::validate() const {
  if (primitive_count < 2) throw UsageError("corpus: primitive count must be >= 2");
  if (primitive_len < 2) throw UsageError("corpus: primitive length must be >= 2 frames");
  if (sentences < 1) throw UsageError("corpus: sentence count must be >= 1");
  if (noise_scale < 0.0) throw UsageError("corpus: noise scale must be >= 0");
  if (joints < 1 || dims < 1) throw UsageError("corpus: joints and dims must be positive");
  if (min_sentence_len < 1 || max_sentence_len < min_sentence_len)
    throw UsageError("corpus: bad sentence length range");
  if (distractor_rate < 0.0 || distractor_rate >= 1.0)
    throw UsageError("corpus: distractor rate must be in [0,1)");
  if (spline_control_points < 2) throw UsageError("corpus: need >= 2 spline control points");
  if (train_frac <= 0.0 || dev_frac < 0.0 || train_frac + dev_frac >= 1.0)
    throw UsageError("corpus: bad split fractions");
}

SyntheticCorpus generate_synthetic_corpus(const SyntheticConfig& config) {
  config.validate();
  Rng rng(config.seed);
  SyntheticCorpus corpus;
  corpus.config = config;

  const int coords = config.joints * config.dims;
  const int len = config.primitive_len;

  // Each primitive: an interpolating cubic spline through a handful of
  // random control values per channel, sampled at L uniform points.
  const int n_ctrl = std::min(config.spline_control_points, len);
  for (int g = 0; g < config.primitive_count; ++g) {
    Eigen::MatrixXd traj(len, coords);
    for (int c = 0; c < coords; ++c) {
      Eigen::VectorXd ctrl(n_ctrl);
      for (int i = 0; i < n_ctrl; ++i) ctrl(i) = rng.uniform(0.15, 0.85);
      if (n_ctrl <= 3) {
        // Too few points for a cubic; linear blend between control values.
        for (int t = 0; t < len; ++t) {
          const double x = n_ctrl == 1 ? 0.0 : (n_ctrl - 1.0) * t / (len - 1.0);
          const int i0 = std::min(static_cast<int>(x), n_ctrl - 2);
          const double f = x - i0;
          traj(t, c) = (1.0 - f) * ctrl(i0) + f * ctrl(i0 + 1);
        }
      } else {
        const BSpline s = BSpline::fit(ctrl, 3, 0.0);
        for (int t = 0; t < len; ++t)
          traj(t, c) = s((n_ctrl - 1.0) * t / (len - 1.0));
      }
    }
    corpus.primitive_bank.push_back(std::move(traj));
  }

  const SkeletonSpec spec = config.joints == 61 && config.dims >= 2
                                ? SkeletonSpec::default_sign_layout(config.dims)
                                : SkeletonSpec::plain(config.joints, config.dims);

  for (int i = 0; i < config.sentences; ++i) {
    SyntheticRecord rec;
    const int n_prims = config.min_sentence_len +
                        static_cast<int>(rng.uniform_int(config.max_sentence_len -
                                                         config.min_sentence_len + 1));
    for (int k = 0; k < n_prims; ++k)
      rec.primitive_ids.push_back(static_cast<int>(rng.uniform_int(config.primitive_count)));

    for (const int id : rec.primitive_ids) {
      rec.sentence.push_back(primitive_word(id));
      if (rng.uniform() < config.distractor_rate)
        rec.sentence.push_back(kDistractors[rng.uniform_int(4)]);
    }

    rec.pose.spec = spec;
    rec.pose.fps = config.fps;
    rec.pose.source_id = "rec_" + std::to_string(i);
    rec.pose.frames.resize(static_cast<Eigen::Index>(n_prims) * len, coords);
    for (int k = 0; k < n_prims; ++k)
      rec.pose.frames.middleRows(static_cast<Eigen::Index>(k) * len, len) =
          corpus.primitive_bank[rec.primitive_ids[k]];

    if (n_prims > 1 && len >= 2) {
      std::vector<int> boundaries;
      for (int k = 1; k < n_prims; ++k) boundaries.push_back(k * len);
      StitchConfig blend;
      blend.blend_width = 1;
      rec.pose = linear_stitch(rec.pose, boundaries, blend);
    }

    if (config.noise_scale > 0.0) {
      for (Eigen::Index r = 0; r < rec.pose.frames.rows(); ++r)
        for (Eigen::Index c = 0; c < rec.pose.frames.cols(); ++c)
          rec.pose.frames(r, c) += rng.uniform(-config.noise_scale, config.noise_scale);
    }
    corpus.records.push_back(std::move(rec));
  }

  // Deterministic split assignment.
  std::vector<int> order(corpus.records.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  rng.shuffle(order);
  const int n_train = static_cast<int>(config.train_frac * config.sentences);
  const int n_dev = static_cast<int>(config.dev_frac * config.sentences);
  for (size_t pos = 0; pos < order.size(); ++pos) {
    Split s = Split::test;
    if (static_cast<int>(pos) < n_train) s = Split::train;
    else if (static_cast<int>(pos) < n_train + n_dev) s = Split::dev;
    corpus.records[order[pos]].split = s;
  }
  return corpus;
}

namespace {

std::string manifest_line(const SyntheticRecord& rec, const std::string& pose_rel) {
  std::ostringstream os;
  for (size_t i = 0; i < rec.sentence.size(); ++i) {
    if (i) os << " ";
    os << rec.sentence[i];
  }
  os << "\t";
  for (size_t i = 0; i < rec.primitive_ids.size(); ++i) {
    if (i) os << " ";
    os << rec.primitive_ids[i];
  }
  os << "\t" << pose_rel;
  return os.str();
}

nlohmann::json config_to_json(const SyntheticConfig& c) {
  return nlohmann::json{{"primitive_count", c.primitive_count},
                        {"primitive_len", c.primitive_len},
                        {"sentences", c.sentences},
                        {"noise_scale", c.noise_scale},
                        {"seed", c.seed},
                        {"joints", c.joints},
                        {"dims", c.dims},
                        {"fps", c.fps},
                        {"min_sentence_len", c.min_sentence_len},
                        {"max_sentence_len", c.max_sentence_len},
                        {"distractor_rate", c.distractor_rate},
                        {"spline_control_points", c.spline_control_points},
                        {"train_frac", c.train_frac},
                        {"dev_frac", c.dev_frac}};
}

}  // namespace

void write_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "poses");

  std::ofstream all(dir / "manifest.tsv");
  std::ofstream per_split[3] = {std::ofstream(dir / "manifest_train.tsv"),
                                std::ofstream(dir / "manifest_dev.tsv"),
                                std::ofstream(dir / "manifest_test.tsv")};
  if (!all) throw DataError("cannot write corpus manifest in " + dir.string());

  char name[64];
  for (size_t i = 0; i < corpus.records.size(); ++i) {
    const auto& rec = corpus.records[i];
    std::snprintf(name, sizeof(name), "poses/rec_%05zu.pose", i);
    save_pose_file(rec.pose, dir / name);
    const std::string line = manifest_line(rec, name);
    all << line << "\n";
    per_split[static_cast<int>(rec.split)] << line << "\n";
  }

  std::ofstream cfg(dir / "corpus.json");
  cfg << config_to_json(corpus.config).dump(2) << "\n";
  if (!cfg) throw DataError("cannot write corpus.json in " + dir.string());
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest_file) {
  std::ifstream in(manifest_file);
  if (!in) throw DataError("cannot open manifest: " + manifest_file.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ManifestEntry e;
    std::istringstream ls(line);
    std::string words, ids, path;
    if (!std::getline(ls, words, '\t') || !std::getline(ls, ids, '\t') ||
        !std::getline(ls, path, '\t'))
      throw DataError("manifest " + manifest_file.string() + ": malformed line " +
                      std::to_string(line_no));
    std::istringstream ws(words);
    std::string w;
    while (ws >> w) e.sentence.push_back(w);
    std::istringstream is(ids);
    int id;
    while (is >> id) e.primitive_ids.push_back(id);
    e.pose_path = path;
    entries.push_back(std::move(e));
  }
  return entries;
}

SyntheticConfig read_corpus_config(const std::filesystem::path& dir) {
  std::ifstream in(dir / "corpus.json");
  if (!in) throw DataError("cannot open corpus.json in " + dir.string());
  nlohmann::json j;
  in >> j;
  SyntheticConfig c;
  c.primitive_count = j.at("primitive_count").get<int>();
  c.primitive_len = j.at("primitive_len").get<int>();
  c.sentences = j.at("sentences").get<int>();
  c.noise_scale = j.at("noise_scale").get<double>();
  c.seed = j.at("seed").get<uint64_t>();
  c.joints = j.at("joints").get<int>();
  c.dims = j.at("dims").get<int>();
  c.fps = j.at("fps").get<double>();
  c.min_sentence_len = j.at("min_sentence_len").get<int>();
  c.max_sentence_len = j.at("max_sentence_len").get<int>();
  c.distractor_rate = j.at("distractor_rate").get<double>();
  c.spline_control_points = j.at("spline_control_points").get<int>();
  c.train_frac = j.at("train_frac").get<double>();
  c.dev_frac = j.at("dev_frac").get<double>();
  return c;
}

int window_gloss_label(const std::vector<int>& primitive_ids, int primitive_len, int subsample,
                       int start, int len) {
  if (primitive_ids.empty()) throw DataError("gloss label: empty primitive sequence");
  std::map<int, int> counts;
  std::map<int, int> first_seen;
  for (int i = 0; i < len; ++i) {
    const int orig = (start + i) * subsample;
    const int idx = std::min(orig / primitive_len, static_cast<int>(primitive_ids.size()) - 1);
    const int id = primitive_ids[idx];
    counts[id]++;
    if (!first_seen.count(id)) first_seen[id] = i;
  }
  int best = -1, best_count = -1, best_onset = len;
  for (const auto& [id, c] : counts) {
    const int onset = first_seen[id];
    if (c > best_count || (c == best_count && onset < best_onset)) {
      best = id;
      best_count = c;
      best_onset = onset;
    }
  }
  return best;
}

}  // namespace posecode
