#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "posecode/pose_data.hpp"

namespace posecode {

// Desk-scale corpus: sentences of motion-primitive IDs paired with one
// pseudo-word per primitive (plus distractor function words) and the pose
// sequence built by concatenating the primitives with linear cross-fades.
struct SyntheticConfig {
  int primitive_count = 20;  // G
  int primitive_len = 8;     // frames per primitive
  int sentences = 500;
  double noise_scale = 0.01;  // bounded uniform noise added per coordinate
  uint64_t seed = 7;
  int joints = 61;
  int dims = 3;
  double fps = 25.0;
  int min_sentence_len = 3;
  int max_sentence_len = 8;
  double distractor_rate = 0.2;
  int spline_control_points = 4;
  double train_frac = 0.8;
  double dev_frac = 0.1;

  void validate() const;
};

enum class Split : int { train = 0, dev = 1, test = 2 };

struct SyntheticRecord {
  std::vector<std::string> sentence;
  std::vector<int> primitive_ids;
  PoseSequence pose;
  Split split = Split::train;
};

struct SyntheticCorpus {
  SyntheticConfig config;
  std::vector<Eigen::MatrixXd> primitive_bank;  // G trajectories, L x (J*D)
  std::vector<SyntheticRecord> records;
};

// Deterministic in config.seed, bit-exact.
SyntheticCorpus generate_synthetic_corpus(const SyntheticConfig& config);

// Pseudo-word assigned to a primitive ID; distinct per ID.
std::string primitive_word(int id);

// On-disk layout: poses/rec_NNNNN.pose, manifest.tsv plus per-split
// manifests, corpus.json with the generator config.
void write_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir);

struct ManifestEntry {
  std::vector<std::string> sentence;
  std::vector<int> primitive_ids;
  std::filesystem::path pose_path;  // relative to the manifest's directory
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest_file);
SyntheticConfig read_corpus_config(const std::filesystem::path& dir);

// Most frequent primitive ID among original-rate frames
// [start*subsample, (start+len)*subsample); ties break to the id appearing
// earliest in the window.
int window_gloss_label(const std::vector<int>& primitive_ids, int primitive_len, int subsample,
                       int start, int len);

}  // namespace posecode
