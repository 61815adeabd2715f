#pragma once

#include <filesystem>
#include <map>
#include <memory>

#include "posecode/blob.hpp"
#include "posecode/codebook.hpp"
#include "posecode/pose_data.hpp"

namespace posecode {

// Frozen unit of cross-corpus reuse: encoder + codebook + decoder weights,
// the normalization params of the training split, and the config needed to
// rebuild the model. Serialized as a directory with a plain-text manifest
// and binary parameter blobs.
struct CodebookArtifact {
  std::string format_version;  // e.g. "1.0"
  CodebookConfig config;
  SkeletonSpec skeleton;
  NormalizationParams norm;
  double fps = 25.0;
  uint64_t seed = 0;
  std::vector<NamedArray> weights;

  template <typename Scalar>
  CodebookModel<Scalar> instantiate() const {
    CodebookModel<Scalar> model(config, skeleton.joints, skeleton.dims, /*init_seed=*/seed);
    model.import_arrays(weights);
    return model;
  }
};

template <typename Scalar>
CodebookArtifact make_codebook_artifact(const CodebookModel<Scalar>& model,
                                        const SkeletonSpec& skeleton,
                                        const NormalizationParams& norm, double fps,
                                        uint64_t seed);

void save_codebook_artifact(const CodebookArtifact& artifact, const std::filesystem::path& dir);
CodebookArtifact load_codebook_artifact(const std::filesystem::path& dir);

// Reads just the version line of any artifact directory.
std::string read_artifact_version(const std::filesystem::path& dir);

// Shared manifest helpers (plain "key: value" lines).
namespace detail {
using Manifest = std::map<std::string, std::string>;
Manifest read_manifest_file(const std::filesystem::path& path);
void write_manifest_file(const std::filesystem::path& path, const Manifest& kv,
                         const std::vector<std::string>& order);
// Throws ArtifactMismatchError for unknown major versions.
void check_format_version(const std::string& version, const std::string& what);
}  // namespace detail

}  // namespace posecode
