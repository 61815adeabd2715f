#pragma once

#include <memory>

#include "posecode/artifact.hpp"

namespace posecode {

struct TokenSequence {
  std::vector<int> tokens;
  int source_len = 0;      // U, frames of the originating sequence
  int dropped_frames = 0;  // U - M * U_cb tail frames lost to windowing
  std::string source_id;
};

// Frozen artifact bound to a runtime model plus the precomputed
// token -> pose-block table used by detokenization. The table is rebuilt
// whenever a codec is constructed, so it always matches the artifact version
// it came from.
class TokenCodec {
 public:
  explicit TokenCodec(const CodebookArtifact& artifact);

  // Splits the sequence into floor(U / U_cb) consecutive non-overlapping
  // windows, encodes each, and maps it to its nearest codebook entry.
  // The input must already be normalized with the artifact's params.
  TokenSequence tokenize(const PoseSequence& seq) const;

  // Concatenation of the decoder output blocks of each token; normalized
  // pose space.
  PoseSequence detokenize(const TokenSequence& tokens) const;

  // N x (U_cb * J * D), row k = decoder output for entry k, frames
  // flattened row-major.
  const Eigen::MatrixXd& token_pose_table() const { return table_; }

  const CodebookArtifact& artifact() const { return artifact_; }
  int vocab_size() const { return artifact_.config.vocab_size; }
  int window() const { return artifact_.config.window; }

  // Allows a previously serialized table (cache) to stand in for the
  // freshly decoded one; shape-checked.
  void set_token_pose_table(Eigen::MatrixXd table);

 private:
  CodebookArtifact artifact_;
  std::shared_ptr<CodebookModel<float>> model_;
  Eigen::MatrixXd table_;
};

// Operation-style wrappers over a one-shot codec.
TokenSequence tokenize(const PoseSequence& seq, const CodebookArtifact& artifact);
PoseSequence detokenize(const TokenSequence& tokens, const CodebookArtifact& artifact);
Eigen::MatrixXd build_token_pose_table(const CodebookArtifact& artifact);

// Token files: one sequence per line (source id, U, token integers),
// prefixed by a header carrying vocab size and window for mismatch checks.
void save_token_file(const std::filesystem::path& path, const std::vector<TokenSequence>& seqs,
                     int vocab_size, int window);

struct TokenFile {
  int vocab_size = 0;
  int window = 0;
  std::vector<TokenSequence> sequences;
};

TokenFile load_token_file(const std::filesystem::path& path);

}  // namespace posecode
