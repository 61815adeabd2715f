#include "posecode/stitcher.hpp"

#include <algorithm>
#include <string>

#include "posecode/spline.hpp"

namespace posecode {

void StitchConfig::validate() const {
  if (blend_width < 1) throw UsageError("stitch: blend width must be >= 1");
  if (spline_order < 2) throw UsageError("stitch: spline order must be >= 2");
  if (smoothing < 0.0) throw UsageError("stitch: smoothing must be >= 0");
}

PoseSequence linear_stitch(const PoseSequence& seq, const std::vector<int>& boundaries,
                           const StitchConfig& config) {
  config.validate();
  seq.validate();
  const int u = seq.frame_count();
  const int w = config.blend_width;

  int prev = -1;
  for (const int b : boundaries) {
    if (b <= 0 || b >= u) throw UsageError("stitch: boundary " + std::to_string(b) +
                                           " outside (0, " + std::to_string(u) + ")");
    if (b <= prev) throw UsageError("stitch: boundaries must be strictly increasing");
    if (b - w < 0 || b + w > u - 1)
      throw UsageError("stitch: blend window around boundary " + std::to_string(b) +
                       " leaves the sequence");
    if (prev >= 0 && b - prev < 2 * w)
      throw UsageError("stitch: blend windows overlap (boundary spacing " +
                       std::to_string(b - prev) + " < 2*blend_width " + std::to_string(2 * w) +
                       ")");
    prev = b;
  }

  PoseSequence out = seq;
  for (const int b : boundaries) {
    const Eigen::RowVectorXd left = seq.frames.row(b - w);
    const Eigen::RowVectorXd right = seq.frames.row(b + w);
    for (int i = b - w + 1; i < b + w; ++i) {
      const double t = static_cast<double>(i - (b - w)) / (2.0 * w);
      out.frames.row(i) = (1.0 - t) * left + t * right;
    }
  }
  return out;
}

PoseSequence spline_resample(const PoseSequence& seq, int target_len, const StitchConfig& config) {
  config.validate();
  seq.validate();
  if (target_len < 1) throw UsageError("stitch: target length must be >= 1");
  if (seq.frame_count() <= config.spline_order)
    throw DataError("stitch: sequence of " + std::to_string(seq.frame_count()) +
                    " frames too short for spline order " + std::to_string(config.spline_order));

  PoseSequence out = seq;
  out.frames = spline_resample_channels(seq.frames, target_len, config.spline_order,
                                        config.smoothing);
  out.fps = seq.fps * static_cast<double>(target_len) / seq.frame_count();
  return out;
}

PoseSequence stitch_apply(const PoseSequence& seq, const std::vector<int>& boundaries,
                          const StitchConfig& config) {
  PoseSequence out = spline_resample(linear_stitch(seq, boundaries, config), seq.frame_count(),
                                     config);
  out.fps = seq.fps;
  out.frames = out.frames.cwiseMax(0.0).cwiseMin(1.0);
  return out;
}

double boundary_jerk(const PoseSequence& seq, const std::vector<int>& boundaries) {
  double worst = 0.0;
  for (const int b : boundaries) {
    if (b <= 0 || b >= seq.frame_count()) throw UsageError("jerk: boundary out of range");
    worst = std::max(worst, (seq.frames.row(b) - seq.frames.row(b - 1)).norm());
  }
  return worst;
}

}  // namespace posecode
