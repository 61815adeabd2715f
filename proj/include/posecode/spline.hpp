#pragma once

#include <Eigen/Dense>

#include "posecode/error.hpp"

namespace posecode {

// Univariate B-spline of degree k over the sample-index domain [0, n-1],
// fitted to n samples y_0..y_{n-1} at x_i = i by penalized least squares:
//
//   min_a ||B a - y||^2 + s ||D2 a||^2
//
// with a clamped knot vector whose interior knots follow the Greville
// averaging rule, so at s = 0 the system is square and the fit interpolates
// the samples exactly.
class BSpline {
 public:
  // order: spline degree k >= 2; smoothing: s >= 0. Requires n >= k + 1.
  static BSpline fit(const Eigen::VectorXd& y, int order, double smoothing);

  double operator()(double x) const;

  int degree() const { return degree_; }

 private:
  BSpline() = default;

  int degree_ = 3;
  Eigen::VectorXd knots_;
  Eigen::VectorXd coeffs_;
  double x_max_ = 0.0;
};

// Fits one spline per column of `channels` and evaluates all of them at
// `target_len` points placed uniformly over [0, n-1].
Eigen::MatrixXd spline_resample_channels(const Eigen::MatrixXd& channels, int target_len,
                                         int order, double smoothing);

}  // namespace posecode
