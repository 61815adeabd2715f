#include "posecode/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

namespace posecode {

namespace {

// Mean per-joint Euclidean distance between frame u of a and frame v of b.
double frame_distance(const PoseSequence& a, int u, const PoseSequence& b, int v) {
  const int joints = a.spec.joints;
  const int dims = a.spec.dims;
  double acc = 0.0;
  for (int j = 0; j < joints; ++j) {
    double sq = 0.0;
    for (int d = 0; d < dims; ++d) {
      const double diff = a.frames(u, j * dims + d) - b.frames(v, j * dims + d);
      sq += diff * diff;
    }
    acc += std::sqrt(sq);
  }
  return acc / joints;
}

void check_pair(const PoseSequence& a, const PoseSequence& b) {
  a.validate();
  b.validate();
  if (!a.spec.same_shape(b.spec)) throw DataError("dtw: skeleton shape mismatch");
}

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

DtwResult dtw_align(const PoseSequence& a, const PoseSequence& b) {
  check_pair(a, b);
  const int n = a.frame_count();
  const int m = b.frame_count();

  constexpr double inf = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd cost(n, m);
  // Backpointers: 0 diagonal, 1 up (i-1,j), 2 left (i,j-1).
  Eigen::Matrix<int8_t, Eigen::Dynamic, Eigen::Dynamic> from(n, m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      const double d = frame_distance(a, i, b, j);
      double best = 0.0;
      int8_t step = -1;
      if (i == 0 && j == 0) {
        best = 0.0;
      } else {
        best = inf;
        const double diag = (i > 0 && j > 0) ? cost(i - 1, j - 1) : inf;
        const double up = i > 0 ? cost(i - 1, j) : inf;
        const double left = j > 0 ? cost(i, j - 1) : inf;
        if (diag <= up && diag <= left) {
          best = diag;
          step = 0;
        } else if (up <= left) {
          best = up;
          step = 1;
        } else {
          best = left;
          step = 2;
        }
      }
      cost(i, j) = best + d;
      from(i, j) = step;
    }
  }

  DtwResult result;
  result.cost = cost(n - 1, m - 1);
  int i = n - 1, j = m - 1;
  while (true) {
    result.path.emplace_back(i, j);
    if (i == 0 && j == 0) break;
    switch (from(i, j)) {
      case 0: --i; --j; break;
      case 1: --i; break;
      default: --j; break;
    }
  }
  std::reverse(result.path.begin(), result.path.end());
  return result;
}

double dtw_mje(const PoseSequence& a, const PoseSequence& b) {
  const DtwResult aligned = dtw_align(a, b);
  const int coords = a.spec.coords();
  double acc = 0.0;
  for (const auto& [i, j] : aligned.path) {
    acc += (a.frames.row(i) - b.frames.row(j)).cwiseAbs().sum() / coords;
  }
  return acc / static_cast<double>(aligned.path.size());
}

namespace {

using NgramCounts = std::map<std::vector<std::string>, int>;

NgramCounts count_ngrams(const SymbolSeq& seq, int n) {
  NgramCounts counts;
  if (static_cast<int>(seq.size()) < n) return counts;
  for (size_t i = 0; i + n <= seq.size(); ++i) {
    counts[std::vector<std::string>(seq.begin() + i, seq.begin() + i + n)]++;
  }
  return counts;
}

struct BleuAccumulator {
  std::array<int64_t, 4> matched{};
  std::array<int64_t, 4> total{};
  int64_t hyp_len = 0;
  int64_t ref_len = 0;

  void add(const SymbolSeq& hyp, const std::vector<SymbolSeq>& refs, int max_n) {
    hyp_len += static_cast<int64_t>(hyp.size());
    // Closest reference length, shorter preferred on ties.
    int64_t best_ref = 0;
    int64_t best_gap = std::numeric_limits<int64_t>::max();
    for (const auto& r : refs) {
      const int64_t len = static_cast<int64_t>(r.size());
      const int64_t gap = std::llabs(len - static_cast<int64_t>(hyp.size()));
      if (gap < best_gap || (gap == best_gap && len < best_ref)) {
        best_gap = gap;
        best_ref = len;
      }
    }
    ref_len += best_ref;
    for (int n = 1; n <= max_n; ++n) {
      const NgramCounts hyp_counts = count_ngrams(hyp, n);
      NgramCounts ref_max;
      for (const auto& r : refs) {
        for (const auto& [gram, c] : count_ngrams(r, n)) {
          ref_max[gram] = std::max(ref_max[gram], c);
        }
      }
      for (const auto& [gram, c] : hyp_counts) {
        total[n - 1] += c;
        auto it = ref_max.find(gram);
        if (it != ref_max.end()) matched[n - 1] += std::min(c, it->second);
      }
    }
  }

  BleuScores finish(int max_n) const {
    BleuScores s;
    if (hyp_len > 0 && hyp_len < ref_len)
      s.brevity_penalty = std::exp(1.0 - static_cast<double>(ref_len) / hyp_len);
    for (int n = 1; n <= max_n; ++n) {
      double log_prec = 0.0;
      bool zero = false;
      for (int i = 0; i < n; ++i) {
        if (matched[i] == 0 || total[i] == 0) {
          zero = true;
          break;
        }
        log_prec += std::log(static_cast<double>(matched[i]) / total[i]);
      }
      s.bleu[n - 1] = (zero || hyp_len == 0)
                          ? 0.0
                          : 100.0 * s.brevity_penalty * std::exp(log_prec / n);
    }
    return s;
  }
};

}  // namespace

BleuScores corpus_bleu(const std::vector<SymbolSeq>& hyps,
                       const std::vector<std::vector<SymbolSeq>>& refs, int max_n) {
  if (max_n < 1 || max_n > 4) throw UsageError("bleu: max_n must be in [1,4]");
  if (hyps.size() != refs.size()) throw DataError("bleu: hypothesis/reference count mismatch");
  if (hyps.empty()) throw DataError("bleu: empty corpus");
  BleuAccumulator acc;
  for (size_t i = 0; i < hyps.size(); ++i) {
    if (refs[i].empty() || refs[i][0].empty()) throw DataError("bleu: empty reference");
    acc.add(hyps[i], refs[i], max_n);
  }
  return acc.finish(max_n);
}

BleuScores sentence_bleu(const SymbolSeq& hyp, const std::vector<SymbolSeq>& refs, int max_n) {
  return corpus_bleu({hyp}, {refs}, max_n);
}

double rouge_l(const SymbolSeq& hyp, const SymbolSeq& ref, double beta) {
  if (ref.empty()) throw DataError("rouge: empty reference");
  if (hyp.empty()) return 0.0;
  const size_t n = hyp.size(), m = ref.size();
  std::vector<std::vector<int>> lcs(n + 1, std::vector<int>(m + 1, 0));
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j) {
      lcs[i][j] = hyp[i - 1] == ref[j - 1] ? lcs[i - 1][j - 1] + 1
                                           : std::max(lcs[i - 1][j], lcs[i][j - 1]);
    }
  }
  const double l = lcs[n][m];
  if (l == 0.0) return 0.0;
  const double prec = l / n;
  const double rec = l / m;
  const double b2 = beta * beta;
  return 100.0 * (1.0 + b2) * prec * rec / (rec + b2 * prec);
}

double velocity_std(const PoseSequence& seq) {
  seq.validate();
  const int u = seq.frame_count();
  if (u < 2) throw DataError("velocity: need at least 2 frames");
  const int joints = seq.spec.joints;
  const int dims = seq.spec.dims;
  Eigen::VectorXd disp(u - 1);
  for (int t = 0; t + 1 < u; ++t) {
    double acc = 0.0;
    for (int j = 0; j < joints; ++j) {
      double sq = 0.0;
      for (int d = 0; d < dims; ++d) {
        const double diff = seq.frames(t + 1, j * dims + d) - seq.frames(t, j * dims + d);
        sq += diff * diff;
      }
      acc += std::sqrt(sq);
    }
    disp(t) = acc / joints;
  }
  const double mean = disp.mean();
  return std::sqrt((disp.array() - mean).square().mean());
}

double codebook_utilization(const std::vector<std::vector<int>>& token_seqs, int vocab_size) {
  if (vocab_size <= 0) throw UsageError("utilization: vocab size must be positive");
  std::vector<bool> used(vocab_size, false);
  for (const auto& seq : token_seqs) {
    for (const int t : seq) {
      if (t < 0 || t >= vocab_size)
        throw DataError("utilization: token " + std::to_string(t) + " out of range");
      used[t] = true;
    }
  }
  const auto n = std::count(used.begin(), used.end(), true);
  return static_cast<double>(n) / vocab_size;
}

SymbolSeq tokens_to_symbols(const std::vector<int>& tokens) {
  SymbolSeq out;
  out.reserve(tokens.size());
  for (const int t : tokens) out.push_back(std::to_string(t));
  return out;
}

std::string EvaluationReport::to_csv() const {
  std::ostringstream os;
  os << "id,dtw_mje,bleu1,bleu2,bleu3,bleu4,rouge_l,velocity_std_hyp,velocity_std_ref\n";
  auto emit = [&os](const SequenceReportRow& r) {
    os << r.id << ",";
    if (r.has_pose) os << fmt(r.dtw_mje);
    os << ",";
    if (r.has_text)
      os << fmt(r.bleu.bleu[0]) << "," << fmt(r.bleu.bleu[1]) << "," << fmt(r.bleu.bleu[2]) << ","
         << fmt(r.bleu.bleu[3]);
    else
      os << ",,,";
    os << ",";
    if (r.has_text) os << fmt(r.rouge);
    os << ",";
    if (r.has_pose) os << fmt(r.velocity_std_hyp);
    os << ",";
    if (r.has_pose) os << fmt(r.velocity_std_ref);
    os << "\n";
  };
  for (const auto& r : rows) emit(r);
  emit(aggregate);
  return os.str();
}

std::string EvaluationReport::to_summary() const {
  std::ostringstream os;
  os << "sequences: " << rows.size() << "\n";
  if (aggregate.has_pose) {
    os << "DTW-MJE (mean): " << fmt(aggregate.dtw_mje) << "\n";
    os << "velocity std hyp/ref: " << fmt(aggregate.velocity_std_hyp) << " / "
       << fmt(aggregate.velocity_std_ref) << "\n";
  }
  if (aggregate.has_text) {
    os << "BLEU-1/2/3/4 (corpus): " << fmt(aggregate.bleu.bleu[0]) << " / "
       << fmt(aggregate.bleu.bleu[1]) << " / " << fmt(aggregate.bleu.bleu[2]) << " / "
       << fmt(aggregate.bleu.bleu[3]) << "\n";
    os << "ROUGE-L (mean): " << fmt(aggregate.rouge) << "\n";
  }
  return os.str();
}

}  // namespace posecode
