#pragma once

// Grayscale images, dense patch extraction and empirical patch distributions.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "wpp/error.hpp"

namespace wpp {

using Index = Eigen::Index;

/// A d1 x d2 grid of real intensities, stored column-major.
class Image {
 public:
  Image() : data_(Eigen::MatrixXd::Zero(1, 1)) {}

  Image(Index rows, Index cols, double fill = 0.0) {
    if (rows < 1 || cols < 1)
      throw DimensionError("image dims must be >= 1, got " + detail::dims_str(rows, cols));
    data_ = Eigen::MatrixXd::Constant(rows, cols, fill);
  }

  explicit Image(Eigen::MatrixXd m) : data_(std::move(m)) {
    if (data_.rows() < 1 || data_.cols() < 1)
      throw DimensionError("image dims must be >= 1, got " +
                           detail::dims_str(data_.rows(), data_.cols()));
    if (!data_.allFinite()) throw InvalidArgument("image contains non-finite values");
  }

  Index rows() const { return data_.rows(); }
  Index cols() const { return data_.cols(); }
  Index size() const { return data_.size(); }

  double& operator()(Index r, Index c) { return data_(r, c); }
  double operator()(Index r, Index c) const { return data_(r, c); }

  const Eigen::MatrixXd& matrix() const { return data_; }
  Eigen::MatrixXd& matrix() { return data_; }

  bool same_dims(const Image& o) const { return rows() == o.rows() && cols() == o.cols(); }

 private:
  Eigen::MatrixXd data_;
};

inline void require_same_dims(const Image& a, const Image& b, const char* what) {
  if (!a.same_dims(b))
    throw DimensionError(std::string(what) + ": " + detail::dims_str(a.rows(), a.cols()) +
                         " vs " + detail::dims_str(b.rows(), b.cols()));
}

struct PatchShape {
  Index rows = 1;
  Index cols = 1;
  Index size() const { return rows * cols; }
  friend bool operator==(const PatchShape&, const PatchShape&) = default;
};

/// A single s1 x s2 patch flattened column-major.
struct Patch {
  PatchShape shape;
  Eigen::VectorXd values;
};

/// Uniform empirical measure over equally shaped patches. Patches are the
/// columns of a (s1*s2) x count matrix; the weight 1/count is implied.
/// Duplicates are kept as distinct atoms.
class PatchDistribution {
 public:
  PatchDistribution(PatchShape shape, Eigen::MatrixXd patches)
      : shape_(shape), patches_(std::move(patches)) {
    if (shape_.rows < 1 || shape_.cols < 1) throw DimensionError("patch shape must be >= 1x1");
    if (patches_.rows() != shape_.size())
      throw DimensionError("patch matrix has " + std::to_string(patches_.rows()) +
                           " rows, shape needs " + std::to_string(shape_.size()));
    if (patches_.cols() < 1) throw DimensionError("patch distribution must be non-empty");
  }

  PatchShape shape() const { return shape_; }
  Index count() const { return patches_.cols(); }
  Index dim() const { return patches_.rows(); }

  auto patch(Index k) const { return patches_.col(k); }
  Patch patch_copy(Index k) const { return Patch{shape_, patches_.col(k)}; }
  const Eigen::MatrixXd& matrix() const { return patches_; }

 private:
  PatchShape shape_;
  Eigen::MatrixXd patches_;
};

/// Number of stride-1 patch positions along each axis.
inline std::pair<Index, Index> patch_grid(const Image& img, PatchShape shape) {
  if (shape.rows < 1 || shape.cols < 1) throw DimensionError("patch shape must be >= 1x1");
  if (shape.rows > img.rows() || shape.cols > img.cols())
    throw DimensionError("patch " + detail::dims_str(shape.rows, shape.cols) +
                         " larger than image " + detail::dims_str(img.rows(), img.cols()));
  return {img.rows() - shape.rows + 1, img.cols() - shape.cols + 1};
}

/// All overlapping patches at stride 1. Patch j has top-left corner
/// (j mod n1, j / n1) with n1 = d1 - s1 + 1, i.e. column-major scan order.
inline PatchDistribution extract_patches(const Image& img, PatchShape shape) {
  const auto [n1, n2] = patch_grid(img, shape);
  Eigen::MatrixXd out(shape.size(), n1 * n2);
  const auto& m = img.matrix();
  for (Index c = 0; c < n2; ++c)
    for (Index r = 0; r < n1; ++r) {
      auto col = out.col(r + c * n1);
      for (Index b = 0; b < shape.cols; ++b)
        col.segment(b * shape.rows, shape.rows) = m.col(c + b).segment(r, shape.rows);
    }
  return PatchDistribution(shape, std::move(out));
}

inline PatchDistribution extract_patches(const Image& img, Index s1, Index s2) {
  return extract_patches(img, PatchShape{s1, s2});
}

/// Uniform sample of min(count, N) patches without replacement. The kept
/// patches stay in their original order.
inline PatchDistribution subsample_distribution(const PatchDistribution& dist, Index count,
                                                std::uint64_t seed) {
  if (count < 1) throw InvalidArgument("subsample count must be >= 1");
  const Index n = dist.count();
  if (count >= n) return dist;
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::mt19937_64 rng(seed);
  // partial Fisher-Yates over the first `count` slots
  for (Index i = 0; i < count; ++i) {
    std::uniform_int_distribution<Index> pick(i, n - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
  }
  idx.resize(static_cast<std::size_t>(count));
  std::sort(idx.begin(), idx.end());
  Eigen::MatrixXd out(dist.dim(), count);
  for (Index i = 0; i < count; ++i) out.col(i) = dist.patch(idx[static_cast<std::size_t>(i)]);
  return PatchDistribution(dist.shape(), std::move(out));
}

/// Concatenation with uniform weight 1/sum(counts), i.e. the batch-averaged
/// measure when every part has the same count.
inline PatchDistribution merge_distributions(std::span<const PatchDistribution> dists) {
  if (dists.empty()) throw InvalidArgument("merge of an empty list");
  const PatchShape shape = dists.front().shape();
  Index total = 0;
  for (const auto& d : dists) {
    if (!(d.shape() == shape)) throw DimensionError("merge: patch shapes differ");
    total += d.count();
  }
  Eigen::MatrixXd out(shape.size(), total);
  Index at = 0;
  for (const auto& d : dists) {
    out.middleCols(at, d.count()) = d.matrix();
    at += d.count();
  }
  return PatchDistribution(shape, std::move(out));
}

inline PatchDistribution merge_distributions(const std::vector<PatchDistribution>& dists) {
  return merge_distributions(std::span<const PatchDistribution>(dists));
}

namespace detail {

// Keys cubic convolution kernel with a = -0.5.
inline double keys_cubic(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

// Upsampling weights along one axis: out[u] = sum_t w[u][t] * in[clamp(i0[u] + t)].
struct CubicAxis {
  std::vector<Index> base;
  std::vector<std::array<double, 4>> weights;
};

inline CubicAxis cubic_axis(Index n_in, Index factor) {
  const Index n_out = n_in * factor;
  CubicAxis ax;
  ax.base.resize(static_cast<std::size_t>(n_out));
  ax.weights.resize(static_cast<std::size_t>(n_out));
  for (Index u = 0; u < n_out; ++u) {
    // pixel-center alignment
    const double src = (static_cast<double>(u) + 0.5) / static_cast<double>(factor) - 0.5;
    const double fl = std::floor(src);
    const double frac = src - fl;
    ax.base[static_cast<std::size_t>(u)] = static_cast<Index>(fl) - 1;
    for (int t = 0; t < 4; ++t)
      ax.weights[static_cast<std::size_t>(u)][static_cast<std::size_t>(t)] =
          keys_cubic(frac - static_cast<double>(t - 1));
  }
  return ax;
}

}  // namespace detail

/// Separable bicubic upsampling (Keys, a = -0.5) with edge replication.
inline Image bicubic_upsample(const Image& img, Index factor) {
  if (factor < 1) throw InvalidArgument("upsample factor must be >= 1");
  if (factor == 1) return img;
  const Index r_in = img.rows(), c_in = img.cols();
  const auto ar = detail::cubic_axis(r_in, factor);
  const auto ac = detail::cubic_axis(c_in, factor);
  auto clamp = [](Index v, Index n) { return std::clamp<Index>(v, 0, n - 1); };

  // rows first: (r_in*f) x c_in
  Eigen::MatrixXd tmp(r_in * factor, c_in);
  for (Index u = 0; u < r_in * factor; ++u) {
    const auto& w = ar.weights[static_cast<std::size_t>(u)];
    const Index b = ar.base[static_cast<std::size_t>(u)];
    tmp.row(u) = w[0] * img.matrix().row(clamp(b, r_in)) + w[1] * img.matrix().row(clamp(b + 1, r_in)) +
                 w[2] * img.matrix().row(clamp(b + 2, r_in)) + w[3] * img.matrix().row(clamp(b + 3, r_in));
  }
  Eigen::MatrixXd out(r_in * factor, c_in * factor);
  for (Index v = 0; v < c_in * factor; ++v) {
    const auto& w = ac.weights[static_cast<std::size_t>(v)];
    const Index b = ac.base[static_cast<std::size_t>(v)];
    out.col(v) = w[0] * tmp.col(clamp(b, c_in)) + w[1] * tmp.col(clamp(b + 1, c_in)) +
                 w[2] * tmp.col(clamp(b + 2, c_in)) + w[3] * tmp.col(clamp(b + 3, c_in));
  }
  return Image(std::move(out));
}

/// Rectangular sub-image; the window must lie inside the image.
inline Image crop(const Image& img, Index r0, Index c0, Index rows, Index cols) {
  if (r0 < 0 || c0 < 0 || r0 + rows > img.rows() || c0 + cols > img.cols())
    throw DimensionError("crop window outside image");
  return Image(Eigen::MatrixXd(img.matrix().block(r0, c0, rows, cols)));
}

}  // namespace wpp
