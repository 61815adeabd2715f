#include "doctest.h"
#include "posecode/rng.hpp"
#include "posecode/spline.hpp"
#include "posecode/stitcher.hpp"

using namespace posecode;

namespace {

PoseSequence make_seq(const Eigen::MatrixXd& frames, int joints, int dims) {
  PoseSequence seq;
  seq.spec = SkeletonSpec::plain(joints, dims);
  seq.frames = frames;
  seq.fps = 25.0;
  seq.source_id = "stitch";
  return seq;
}

}  // namespace

TEST_CASE("interpolating spline reproduces its samples") {
  Rng rng(31);
  Eigen::VectorXd y(12);
  for (int i = 0; i < 12; ++i) y(i) = rng.uniform(0.0, 1.0);
  const BSpline s = BSpline::fit(y, 3, 0.0);
  for (int i = 0; i < 12; ++i) CHECK(s(static_cast<double>(i)) == doctest::Approx(y(i)).epsilon(1e-10));
}

TEST_CASE("spline reproduces a linear ramp exactly at any sampling") {
  Eigen::VectorXd y(10);
  for (int i = 0; i < 10; ++i) y(i) = 0.05 + 0.1 * i;
  const BSpline s = BSpline::fit(y, 3, 0.0);
  for (double x = 0.0; x <= 9.0; x += 0.173) CHECK(std::abs(s(x) - (0.05 + 0.1 * x)) < 1e-9);

  Eigen::MatrixXd channels(10, 1);
  channels.col(0) = y;
  const Eigen::MatrixXd resampled = spline_resample_channels(channels, 23, 3, 0.0);
  for (int t = 0; t < 23; ++t) {
    const double x = 9.0 * t / 22.0;
    CHECK(std::abs(resampled(t, 0) - (0.05 + 0.1 * x)) < 1e-9);
  }
}

TEST_CASE("spline smoothing damps a noisy channel") {
  Rng rng(32);
  Eigen::VectorXd y(40);
  for (int i = 0; i < 40; ++i) y(i) = 0.5 + 0.3 * std::sin(0.3 * i) + rng.uniform(-0.1, 0.1);
  Eigen::MatrixXd ch(40, 1);
  ch.col(0) = y;
  const Eigen::MatrixXd rough = spline_resample_channels(ch, 40, 3, 0.0);
  const Eigen::MatrixXd smooth = spline_resample_channels(ch, 40, 3, 10.0);
  auto curvature = [](const Eigen::MatrixXd& m) {
    double acc = 0.0;
    for (int i = 1; i + 1 < m.rows(); ++i)
      acc += std::abs(m(i - 1, 0) - 2 * m(i, 0) + m(i + 1, 0));
    return acc;
  };
  CHECK(curvature(smooth) < curvature(rough));
}

TEST_CASE("spline order and sample-count validation") {
  Eigen::VectorXd y(3);
  y << 0, 1, 2;
  CHECK_THROWS_AS(BSpline::fit(y, 3, 0.0), DataError);   // needs >= k+1 samples
  CHECK_THROWS_AS(BSpline::fit(y, 1, 0.0), UsageError);  // order >= 2
  CHECK_NOTHROW(BSpline::fit(y, 2, 0.0));
}

TEST_CASE("linear stitch replaces interior frames with the anchor segment") {
  // Two constant 4-frame blocks: p-block then q-block, boundary at 4.
  const int u = 8;
  Eigen::MatrixXd frames(u, 2);
  for (int i = 0; i < 4; ++i) frames.row(i) << 0.2, 0.4;
  for (int i = 4; i < 8; ++i) frames.row(i) << 0.8, 0.6;
  const PoseSequence seq = make_seq(frames, 1, 2);
  StitchConfig cfg;
  cfg.blend_width = 1;

  const PoseSequence out = linear_stitch(seq, {4}, cfg);
  CHECK(out.frame_count() == u);
  // Frames outside the blend window untouched.
  for (int i : {0, 1, 2, 5, 6, 7}) CHECK((out.frames.row(i) - seq.frames.row(i)).norm() == 0.0);
  // w=1: the single replaced frame (index 4) is the midpoint of the anchors.
  CHECK(out.frames(4, 0) == doctest::Approx(0.5));
  CHECK(out.frames(4, 1) == doctest::Approx(0.5));
  // And it lies on the segment [p, q] per coordinate.
  CHECK(out.frames(4, 0) >= 0.2);
  CHECK(out.frames(4, 0) <= 0.8);
}

TEST_CASE("linear stitch is the identity when the seam is already continuous") {
  // Both blocks constant and equal: anchors coincide, interpolation is flat.
  Eigen::MatrixXd frames(8, 2);
  for (int i = 0; i < 8; ++i) frames.row(i) << 0.3, 0.7;
  const PoseSequence seq = make_seq(frames, 1, 2);
  StitchConfig cfg;
  cfg.blend_width = 2;
  const PoseSequence out = linear_stitch(seq, {4}, cfg);
  CHECK((out.frames - seq.frames).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("linear stitch validates boundaries and widths") {
  Eigen::MatrixXd frames = Eigen::MatrixXd::Constant(12, 2, 0.5);
  const PoseSequence seq = make_seq(frames, 1, 2);
  StitchConfig cfg;
  cfg.blend_width = 2;
  CHECK_THROWS_AS(linear_stitch(seq, {0}, cfg), UsageError);
  CHECK_THROWS_AS(linear_stitch(seq, {12}, cfg), UsageError);
  CHECK_THROWS_AS(linear_stitch(seq, {6, 4}, cfg), UsageError);   // not increasing
  CHECK_THROWS_AS(linear_stitch(seq, {4, 7}, cfg), UsageError);   // overlap: spacing 3 < 2w
  CHECK_THROWS_AS(linear_stitch(seq, {1}, cfg), UsageError);      // window leaves sequence
  CHECK_NOTHROW(linear_stitch(seq, {4, 8}, cfg));
  cfg.blend_width = 0;
  CHECK_THROWS_AS(linear_stitch(seq, {4}, cfg), UsageError);
}

TEST_CASE("stitch apply preserves length and keeps [0,1]") {
  Rng rng(33);
  Eigen::MatrixXd frames(16, 4);
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 4; ++c) frames(r, c) = rng.uniform(0.0, 1.0);
  const PoseSequence seq = make_seq(frames, 2, 2);
  StitchConfig cfg;
  cfg.blend_width = 1;
  const PoseSequence out = stitch_apply(seq, {4, 8, 12}, cfg);
  CHECK(out.frame_count() == 16);
  CHECK(out.frames.minCoeff() >= 0.0);
  CHECK(out.frames.maxCoeff() <= 1.0);
  CHECK(out.fps == seq.fps);
}

TEST_CASE("stitch apply with no boundaries equals the resampling spline alone") {
  Rng rng(34);
  Eigen::MatrixXd frames(10, 2);
  for (int r = 0; r < 10; ++r)
    for (int c = 0; c < 2; ++c) frames(r, c) = rng.uniform(0.1, 0.9);
  const PoseSequence seq = make_seq(frames, 1, 2);
  StitchConfig cfg;
  const PoseSequence via_apply = stitch_apply(seq, {}, cfg);
  const PoseSequence via_spline = spline_resample(seq, 10, cfg);
  CHECK((via_apply.frames - via_spline.frames).cwiseAbs().maxCoeff() < 1e-12);
  // ... and the interpolating spline at the original length reproduces input.
  CHECK((via_spline.frames - seq.frames).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("stitch apply is near-identity on smooth input") {
  Eigen::MatrixXd frames(20, 2);
  for (int r = 0; r < 20; ++r) {
    frames(r, 0) = 0.5 + 0.4 * std::sin(0.2 * r);
    frames(r, 1) = 0.5 + 0.3 * std::cos(0.25 * r);
  }
  const PoseSequence seq = make_seq(frames, 1, 2);
  StitchConfig cfg;
  cfg.blend_width = 1;
  const PoseSequence out = stitch_apply(seq, {5, 10, 15}, cfg);
  CHECK((out.frames - seq.frames).cwiseAbs().maxCoeff() < 1e-2);
}

TEST_CASE("stitching a discontinuous seam reduces boundary jerk") {
  // Sharp jump at the boundary; stitching must shrink it.
  Eigen::MatrixXd frames(12, 2);
  for (int i = 0; i < 6; ++i) frames.row(i) << 0.1 + 0.01 * i, 0.2;
  for (int i = 6; i < 12; ++i) frames.row(i) << 0.9 - 0.01 * (i - 6), 0.8;
  const PoseSequence seq = make_seq(frames, 1, 2);
  StitchConfig cfg;
  cfg.blend_width = 2;
  const std::vector<int> boundaries = {6};
  const PoseSequence out = stitch_apply(seq, boundaries, cfg);
  CHECK(out.frame_count() == 12);
  CHECK(boundary_jerk(out, boundaries) < boundary_jerk(seq, boundaries));
}

TEST_CASE("spline resample rejects sequences shorter than the order") {
  Eigen::MatrixXd frames = Eigen::MatrixXd::Constant(3, 2, 0.5);
  const PoseSequence seq = make_seq(frames, 1, 2);
  StitchConfig cfg;  // order 3 needs >= 4 frames
  CHECK_THROWS_AS(spline_resample(seq, 5, cfg), DataError);
}
