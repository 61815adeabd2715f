#pragma once

#include <vector>

#include "posecode/pose_data.hpp"

namespace posecode {

struct StitchConfig {
  int blend_width = 2;   // frames per side of each boundary
  int spline_order = 3;  // degree of the resampling spline
  double smoothing = 0.0;

  void validate() const;
};

// Replaces the frames strictly inside (b - w, b + w) around each boundary b
// by the per-coordinate linear interpolation of the anchor frames seq[b - w]
// and seq[b + w]. Frame count and frames outside the blend windows are
// unchanged.
PoseSequence linear_stitch(const PoseSequence& seq, const std::vector<int>& boundaries,
                           const StitchConfig& config);

// Fits an order-k smoothing spline per coordinate channel over the
// frame-index domain and resamples uniformly to target_len frames.
PoseSequence spline_resample(const PoseSequence& seq, int target_len, const StitchConfig& config);

// linear_stitch followed by spline_resample back to the original length,
// with a final clamp to [0,1] (splines may overshoot the normalized range).
PoseSequence stitch_apply(const PoseSequence& seq, const std::vector<int>& boundaries,
                          const StitchConfig& config);

// max ||p_b - p_{b-1}|| over the given boundaries; the seam-discontinuity
// measure stitching is meant to reduce.
double boundary_jerk(const PoseSequence& seq, const std::vector<int>& boundaries);

}  // namespace posecode
