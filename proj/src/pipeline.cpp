#include "posecode/pipeline.hpp"

namespace posecode {

LoadedSplit load_split(const std::filesystem::path& corpus_dir, const std::string& manifest_name,
                       int subsample) {
  LoadedSplit split;
  split.entries = read_manifest(corpus_dir / manifest_name);
  if (split.entries.empty())
    throw DataError("split manifest " + manifest_name + " in " + corpus_dir.string() +
                    " is empty");
  split.poses.reserve(split.entries.size());
  for (const auto& e : split.entries)
    split.poses.push_back(subsample > 1 ? posecode::subsample(load_pose_file(corpus_dir / e.pose_path), subsample)
                                        : load_pose_file(corpus_dir / e.pose_path));
  return split;
}

CodebookTrainingRun train_codebook_pipeline(const std::filesystem::path& corpus_dir,
                                            const CodebookConfig& config,
                                            const std::optional<ReplacementPolicy>& policy,
                                            const CodebookTrainOptions& train_opts, int subsample,
                                            int stride) {
  const LoadedSplit split = load_split(corpus_dir, "manifest_train.tsv", subsample);
  const NormalizationParams norm = compute_normalization(split.poses);

  WindowOptions wopts;
  wopts.stride = stride;
  wopts.subsample = subsample;
  if (config.contrastive_weight > 0.0) {
    wopts.with_labels = true;
    wopts.primitive_len = read_corpus_config(corpus_dir).primitive_len;
  }
  const auto windows = extract_windows<float>(split, norm, config.window, wopts);

  CodebookModel<float> model(config, split.poses.front().spec.joints,
                             split.poses.front().spec.dims, train_opts.seed);
  CodebookTrainingRun run;
  run.result = train_codebook_model(model, windows, policy, train_opts);
  run.artifact = make_codebook_artifact(model, split.poses.front().spec, norm,
                                        split.poses.front().fps, train_opts.seed);
  return run;
}

std::vector<TokenSequence> tokenize_split(const TokenCodec& codec, const LoadedSplit& split) {
  std::vector<TokenSequence> out;
  out.reserve(split.poses.size());
  for (const auto& pose : split.poses) {
    const auto [normalized, params] = normalize(pose, codec.artifact().norm);
    out.push_back(codec.tokenize(normalized));
  }
  return out;
}

std::vector<TranslationPair> make_translation_pairs(const LoadedSplit& split,
                                                    const std::vector<TokenSequence>& tokens) {
  if (split.entries.size() != tokens.size())
    throw DataError("translation pairs: entry/token count mismatch");
  std::vector<TranslationPair> pairs;
  pairs.reserve(tokens.size());
  for (size_t i = 0; i < tokens.size(); ++i)
    pairs.push_back({split.entries[i].sentence, tokens[i].tokens});
  return pairs;
}

std::vector<int> token_boundaries(int token_count, int window) {
  std::vector<int> b;
  for (int k = 1; k < token_count; ++k) b.push_back(k * window);
  return b;
}

PoseSequence translate_to_pose(const TranslatorModel<float>& model, const TokenCodec& codec,
                               const std::vector<std::string>& words, bool stitch,
                               const StitchConfig& stitch_config, int beam_size,
                               double length_penalty) {
  if (model.codebook_size() != codec.vocab_size())
    throw ArtifactMismatchError("translator expects codebook of size " +
                                std::to_string(model.codebook_size()) + ", artifact has " +
                                std::to_string(codec.vocab_size()));
  const DecodeResult decoded = beam_search(model, words, beam_size, length_penalty);
  const std::vector<int> tokens = decoded.tokens();
  if (tokens.empty()) throw DataError("translation produced an empty token sequence");

  TokenSequence ts;
  ts.tokens = tokens;
  ts.source_len = static_cast<int>(tokens.size()) * codec.window();
  ts.dropped_frames = 0;
  PoseSequence pose = codec.detokenize(ts);
  if (stitch) {
    const auto boundaries = token_boundaries(static_cast<int>(tokens.size()), codec.window());
    if (!boundaries.empty() || pose.frame_count() > stitch_config.spline_order)
      pose = stitch_apply(pose, boundaries, stitch_config);
  }
  return denormalize(pose, codec.artifact().norm);
}

}  // namespace posecode
