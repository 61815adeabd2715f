#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "posecode/error.hpp"

namespace posecode {

struct JointGroup {
  std::string name;
  int begin = 0;  // joint index range [begin, end)
  int end = 0;
};

// Skeleton layout: J joints in D-dimensional space, partitioned into named
// groups covering [0, J) contiguously.
struct SkeletonSpec {
  int joints = 0;
  int dims = 0;
  std::vector<JointGroup> groups;

  // 21 + 21 hand joints, 9 body joints, 10 face joints.
  static SkeletonSpec default_sign_layout(int dims = 3);
  // Single anonymous group covering all joints.
  static SkeletonSpec plain(int joints, int dims);

  int coords() const { return joints * dims; }
  void validate() const;
  bool same_shape(const SkeletonSpec& other) const {
    return joints == other.joints && dims == other.dims;
  }
};

// Per spatial axis min/max of an affine [0,1] rescale.
struct NormalizationParams {
  Eigen::VectorXd min;  // D entries
  Eigen::VectorXd max;

  void validate() const;
  bool approx_equal(const NormalizationParams& other, double tol = 1e-12) const;
};

// Time-ordered frames; row u holds frame u with coordinate (j, d) at column
// j * D + d.
struct PoseSequence {
  SkeletonSpec spec;
  Eigen::MatrixXd frames;
  double fps = 25.0;
  std::string source_id;
  std::optional<NormalizationParams> norm;  // present when baked into the file

  int frame_count() const { return static_cast<int>(frames.rows()); }
  void validate() const;
};

// Canonical pose container. ".pose" selects the text variant, ".poseb" the
// binary one.
PoseSequence load_pose_file(const std::filesystem::path& path);
void save_pose_file(const PoseSequence& seq, const std::filesystem::path& path);

// Affine per-axis rescale into [0,1]. With no params they are computed from
// the sequence itself; with given params values outside the range clamp.
std::pair<PoseSequence, NormalizationParams> normalize(
    const PoseSequence& seq, const std::optional<NormalizationParams>& params = std::nullopt);

NormalizationParams compute_normalization(const PoseSequence& seq);
NormalizationParams compute_normalization(const std::vector<PoseSequence>& seqs);

// Inverse affine map of normalize().
PoseSequence denormalize(const PoseSequence& seq, const NormalizationParams& params);

// Keeps frames 0, factor, 2*factor, ...; fps is divided by factor.
PoseSequence subsample(const PoseSequence& seq, int factor);

}  // namespace posecode
