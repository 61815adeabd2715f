#pragma once

#include <array>
#include <string>
#include <vector>

#include "posecode/pose_data.hpp"

namespace posecode {

struct DtwResult {
  // Monotone alignment from (0,0) to (U1-1, U2-1) with steps
  // {(1,0),(0,1),(1,1)}.
  std::vector<std::pair<int, int>> path;
  double cost = 0.0;
};

// Optimal alignment minimizing the summed per-frame distance, where the
// frame distance is the mean per-joint Euclidean distance.
DtwResult dtw_align(const PoseSequence& a, const PoseSequence& b);

// Mean absolute per-coordinate error along the optimal DTW alignment,
// averaged over path length, joints and dims. Inputs are expected in [0,1].
double dtw_mje(const PoseSequence& a, const PoseSequence& b);

using SymbolSeq = std::vector<std::string>;

struct BleuScores {
  std::array<double, 4> bleu{};  // cumulative BLEU-1..4, range [0,100]
  double brevity_penalty = 1.0;
};

// Corpus BLEU with brevity penalty over hypothesis/reference pairs.
BleuScores corpus_bleu(const std::vector<SymbolSeq>& hyps,
                       const std::vector<std::vector<SymbolSeq>>& refs, int max_n = 4);

BleuScores sentence_bleu(const SymbolSeq& hyp, const std::vector<SymbolSeq>& refs, int max_n = 4);

// ROUGE-L F-measure in [0,100]; beta weighs recall against precision.
double rouge_l(const SymbolSeq& hyp, const SymbolSeq& ref, double beta = 1.0);

// Standard deviation of the frame-to-frame mean joint displacement series.
double velocity_std(const PoseSequence& seq);

// Distinct tokens used / N.
double codebook_utilization(const std::vector<std::vector<int>>& token_seqs, int vocab_size);

// Token sequences rendered as symbol sequences for BLEU/ROUGE.
SymbolSeq tokens_to_symbols(const std::vector<int>& tokens);

struct SequenceReportRow {
  std::string id;
  bool has_pose = false;
  double dtw_mje = 0.0;
  double velocity_std_hyp = 0.0;
  double velocity_std_ref = 0.0;
  bool has_text = false;
  BleuScores bleu;
  double rouge = 0.0;
};

struct EvaluationReport {
  std::vector<SequenceReportRow> rows;
  SequenceReportRow aggregate;  // per-sequence means; BLEU is corpus-level

  std::string to_csv() const;
  std::string to_summary() const;
};

}  // namespace posecode
