#pragma once

#include <optional>

#include "posecode/artifact.hpp"
#include "posecode/codebook_train.hpp"
#include "posecode/stitcher.hpp"
#include "posecode/synthetic.hpp"
#include "posecode/tokenizer.hpp"
#include "posecode/translator.hpp"

namespace posecode {

struct LoadedSplit {
  std::vector<ManifestEntry> entries;
  std::vector<PoseSequence> poses;  // subsampled, raw coordinate space
};

LoadedSplit load_split(const std::filesystem::path& corpus_dir, const std::string& manifest_name,
                       int subsample);

struct WindowOptions {
  int stride = 0;  // 0 resolves to the window length (non-overlapping)
  bool with_labels = false;
  int primitive_len = 0;  // original-rate frames per primitive, for labels
  int subsample = 1;
};

// Normalizes every sequence with the given params and slices U_cb-frame
// windows; gloss labels come from the manifest's primitive alignment.
template <typename Scalar>
std::vector<TrainWindow<Scalar>> extract_windows(const LoadedSplit& split,
                                                 const NormalizationParams& norm, int window,
                                                 const WindowOptions& opts) {
  if (window < 1) throw UsageError("extract windows: window must be >= 1");
  const int stride = opts.stride > 0 ? opts.stride : window;
  std::vector<TrainWindow<Scalar>> out;
  for (size_t s = 0; s < split.poses.size(); ++s) {
    const auto [seq, params] = normalize(split.poses[s], norm);
    const int u = seq.frame_count();
    for (int start = 0; start + window <= u; start += stride) {
      TrainWindow<Scalar> w;
      w.frames = seq.frames.middleRows(start, window).template cast<Scalar>();
      if (opts.with_labels) {
        if (opts.primitive_len < 1)
          throw UsageError("extract windows: labels requested without primitive length");
        w.gloss_id = window_gloss_label(split.entries[s].primitive_ids, opts.primitive_len,
                                        opts.subsample, start, window);
      }
      out.push_back(std::move(w));
    }
  }
  if (out.empty()) throw DataError("extract windows: no window fits any sequence");
  return out;
}

struct CodebookTrainingRun {
  CodebookArtifact artifact;
  CodebookTrainResult result;
};

// Full train-codebook stage: load train split, fit normalization, slice
// windows, train, freeze the artifact.
CodebookTrainingRun train_codebook_pipeline(const std::filesystem::path& corpus_dir,
                                            const CodebookConfig& config,
                                            const std::optional<ReplacementPolicy>& policy,
                                            const CodebookTrainOptions& train_opts, int subsample,
                                            int stride);

// Tokenizes every sequence of a split with a frozen codec; sequences are
// normalized with the artifact's params first.
std::vector<TokenSequence> tokenize_split(const TokenCodec& codec, const LoadedSplit& split);

// Paired (sentence, token) data for translator training.
std::vector<TranslationPair> make_translation_pairs(const LoadedSplit& split,
                                                    const std::vector<TokenSequence>& tokens);

// beam search -> de-tokenize -> optional stitching -> denormalize.
PoseSequence translate_to_pose(const TranslatorModel<float>& model, const TokenCodec& codec,
                               const std::vector<std::string>& words, bool stitch,
                               const StitchConfig& stitch_config, int beam_size,
                               double length_penalty);

// Internal token boundaries of a detokenized sequence (multiples of U_cb).
std::vector<int> token_boundaries(int token_count, int window);

}  // namespace posecode
