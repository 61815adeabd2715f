#include "posecode/spline.hpp"

#include <algorithm>
#include <string>

namespace posecode {

namespace {

// Cox-de Boor: values of the n basis functions of degree k at x.
Eigen::VectorXd basis_row(const Eigen::VectorXd& knots, int n_basis, int k, double x) {
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n_basis + k);  // degree-0 seed, padded
  // Locate the knot span; clamp x into the valid domain.
  const double x0 = knots(k);
  const double x1 = knots(knots.size() - k - 1);
  x = std::clamp(x, x0, x1);
  int span = k;
  while (span + 1 < static_cast<int>(knots.size()) - k - 1 && x >= knots(span + 1)) ++span;
  b(span) = 1.0;
  for (int d = 1; d <= k; ++d) {
    for (int i = span - d; i <= span; ++i) {
      if (i < 0 || i >= b.size()) continue;
      double left = 0.0, right = 0.0;
      const double den_l = knots(i + d) - knots(i);
      if (den_l > 0.0) left = (x - knots(i)) / den_l * b(i);
      if (i + 1 <= span) {
        const double den_r = knots(i + d + 1) - knots(i + 1);
        if (den_r > 0.0) right = (knots(i + d + 1) - x) / den_r * b(i + 1);
      }
      b(i) = left + right;
    }
  }
  return b.head(n_basis);
}

}  // namespace

BSpline BSpline::fit(const Eigen::VectorXd& y, int order, double smoothing) {
  const int n = static_cast<int>(y.size());
  const int k = order;
  if (k < 2) throw UsageError("spline: order must be >= 2, got " + std::to_string(k));
  if (smoothing < 0.0) throw UsageError("spline: smoothing must be >= 0");
  if (n <= k)
    throw DataError("spline: need at least order + 1 = " + std::to_string(k + 1) +
                    " samples, got " + std::to_string(n));

  BSpline s;
  s.degree_ = k;
  s.x_max_ = n - 1.0;

  // Clamped knot vector with Greville-averaged interior knots over x_i = i.
  const int n_knots = n + k + 1;
  s.knots_.resize(n_knots);
  for (int i = 0; i <= k; ++i) s.knots_(i) = 0.0;
  for (int i = 0; i <= k; ++i) s.knots_(n_knots - 1 - i) = n - 1.0;
  for (int j = 1; j <= n - k - 1; ++j) {
    double acc = 0.0;
    for (int i = j; i < j + k; ++i) acc += i;
    s.knots_(j + k) = acc / k;
  }

  Eigen::MatrixXd B(n, n);
  for (int i = 0; i < n; ++i) B.row(i) = basis_row(s.knots_, n, k, static_cast<double>(i));

  if (smoothing == 0.0) {
    s.coeffs_ = B.partialPivLu().solve(y);
  } else {
    Eigen::MatrixXd D2 = Eigen::MatrixXd::Zero(n - 2, n);
    for (int i = 0; i < n - 2; ++i) {
      D2(i, i) = 1.0;
      D2(i, i + 1) = -2.0;
      D2(i, i + 2) = 1.0;
    }
    const Eigen::MatrixXd A = B.transpose() * B + smoothing * (D2.transpose() * D2);
    s.coeffs_ = A.ldlt().solve(B.transpose() * y);
  }
  return s;
}

double BSpline::operator()(double x) const {
  const int n = static_cast<int>(coeffs_.size());
  return basis_row(knots_, n, degree_, x).dot(coeffs_);
}

Eigen::MatrixXd spline_resample_channels(const Eigen::MatrixXd& channels, int target_len,
                                         int order, double smoothing) {
  if (target_len < 1) throw UsageError("spline resample: target length must be >= 1");
  const int n = static_cast<int>(channels.rows());
  Eigen::MatrixXd out(target_len, channels.cols());
  const double span = n - 1.0;
  for (Eigen::Index c = 0; c < channels.cols(); ++c) {
    const BSpline s = BSpline::fit(channels.col(c), order, smoothing);
    for (int t = 0; t < target_len; ++t) {
      const double x = target_len == 1 ? 0.0 : span * t / (target_len - 1.0);
      out(t, c) = s(x);
    }
  }
  return out;
}

}  // namespace posecode
