#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "wpp/error.hpp"
#include "wpp/image.hpp"

namespace wpp {

struct MetricsReport {
  double psnr = 0.0;
  double blur_effect = 0.0;
  Index crop = 0;
};

/// -10 log10(mean squared difference). Identical images raise ZeroMseError.
inline double psnr(const Image& x, const Image& y) {
  require_same_dims(x, y, "psnr");
  const double mse = (x.matrix() - y.matrix()).squaredNorm() / static_cast<double>(x.size());
  if (mse == 0.0) throw ZeroMseError("psnr of identical images is infinite");
  return -10.0 * std::log10(mse);
}

inline Image crop_boundary(const Image& x, Index margin) {
  if (margin < 0) throw InvalidArgument("crop margin must be >= 0");
  if (2 * margin >= std::min(x.rows(), x.cols()))
    throw DimensionError("crop margin " + std::to_string(margin) + " too large for " +
                         detail::dims_str(x.rows(), x.cols()));
  return crop(x, margin, margin, x.rows() - 2 * margin, x.cols() - 2 * margin);
}

namespace detail {

// Half-sample symmetric index: ... b a | a b c ... c | c b ...
inline Index reflect_index(Index i, Index n) {
  if (n == 1) return 0;
  const Index period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

// Uniform moving average of odd length along one axis (0 = down rows, 1 = across columns).
inline Eigen::MatrixXd uniform_filter(const Eigen::MatrixXd& m, Index length, int axis) {
  const Index half = length / 2;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m.rows(), m.cols());
  for (Index t = -half; t <= half; ++t) {
    if (axis == 0)
      for (Index i = 0; i < m.rows(); ++i) out.row(i) += m.row(reflect_index(i + t, m.rows()));
    else
      for (Index j = 0; j < m.cols(); ++j) out.col(j) += m.col(reflect_index(j + t, m.cols()));
  }
  return out / static_cast<double>(2 * half + 1);
}

inline double directional_blur(const Eigen::MatrixXd& f, int axis) {
  const Eigen::MatrixXd b = uniform_filter(f, 9, axis);
  Eigen::MatrixXd df, db;
  if (axis == 0) {
    df = (f.bottomRows(f.rows() - 1) - f.topRows(f.rows() - 1)).cwiseAbs();
    db = (b.bottomRows(b.rows() - 1) - b.topRows(b.rows() - 1)).cwiseAbs();
  } else {
    df = (f.rightCols(f.cols() - 1) - f.leftCols(f.cols() - 1)).cwiseAbs();
    db = (b.rightCols(b.cols() - 1) - b.leftCols(b.cols() - 1)).cwiseAbs();
  }
  const double s_f = df.sum();
  if (s_f == 0.0) return 0.0;
  const double s_v = (df - db).cwiseMax(0.0).sum();
  return std::clamp((s_f - s_v) / s_f, 0.0, 1.0);
}

}  // namespace detail

/// Perceptual blur of Crete-Roffet et al.: neighbour variations of x are
/// compared with those of a length-9 uniform blur of x along each axis; the
/// larger of the two directional ratios is returned. 0 is sharp, 1 blurry.
/// Images without any variation score 0.
inline double blur_effect(const Image& x) {
  if (x.rows() < 9 || x.cols() < 9)
    throw DimensionError("blur effect needs at least 9x9 pixels, got " + detail::dims_str(x.rows(), x.cols()));
  return std::max(detail::directional_blur(x.matrix(), 0), detail::directional_blur(x.matrix(), 1));
}

/// (2r+1) x (2r+1) box blur with symmetric boundaries.
inline Image box_blur(const Image& x, Index radius) {
  if (radius < 0) throw InvalidArgument("blur radius must be >= 0");
  return Image(detail::uniform_filter(detail::uniform_filter(x.matrix(), 2 * radius + 1, 0), 2 * radius + 1, 1));
}

inline MetricsReport evaluate(const Image& x, const Image& truth, Index margin) {
  const Image xc = crop_boundary(x, margin);
  return MetricsReport{psnr(xc, crop_boundary(truth, margin)), blur_effect(xc), margin};
}

}  // namespace wpp
