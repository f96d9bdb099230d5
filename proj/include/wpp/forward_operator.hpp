#pragma once

// Superresolution forward operators f(x) and their adjoints.
//
// StridedConv:       f(x)(i,j) = b + sum_{a,c} k(a,c) x(i*s + a - o1, j*s + c - o2)
//                    with o = (K-1)/2 and zeros outside x; output is ceil(d/s).
// FourierDownsample: f(x) = S(k (*) x + b) with circular convolution and the
//                    spectral-truncation resampler S = (N/M) F_n^-1 D F_m.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "wpp/error.hpp"
#include "wpp/fft.hpp"
#include "wpp/image.hpp"

namespace wpp {

enum class OperatorMode { StridedConv, FourierDownsample };

struct ForwardOperator {
  Image kernel;
  double bias = 0.0;
  Index stride = 1;
  OperatorMode mode = OperatorMode::StridedConv;
  /// FourierDownsample output dims; 0 means input dims / stride.
  Index target_rows = 0;
  Index target_cols = 0;

  std::pair<Index, Index> output_dims(Index rows, Index cols) const {
    if (stride < 1) throw InvalidArgument("stride must be >= 1");
    if (mode == OperatorMode::StridedConv)
      return {(rows + stride - 1) / stride, (cols + stride - 1) / stride};
    if (target_rows > 0 && target_cols > 0) {
      if (target_rows > rows || target_cols > cols)
        throw DimensionError("fourier target " + detail::dims_str(target_rows, target_cols) +
                             " larger than input " + detail::dims_str(rows, cols));
      return {target_rows, target_cols};
    }
    if (rows % stride != 0 || cols % stride != 0)
      throw DimensionError("input " + detail::dims_str(rows, cols) + " not divisible by stride " +
                           std::to_string(stride));
    return {rows / stride, cols / stride};
  }
};

struct NoiseModel {
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

/// size x size Gaussian sampled at pixel centres around (size-1)/2, sum 1.
inline Image gaussian_kernel(Index size, double sigma) {
  if (size < 1) throw InvalidArgument("kernel size must be >= 1");
  if (!(sigma > 0.0)) throw InvalidArgument("kernel sigma must be > 0");
  const double c = (static_cast<double>(size) - 1.0) / 2.0;
  Eigen::MatrixXd k(size, size);
  for (Index j = 0; j < size; ++j)
    for (Index i = 0; i < size; ++i) {
      const double di = static_cast<double>(i) - c, dj = static_cast<double>(j) - c;
      k(i, j) = std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
    }
  k /= k.sum();
  return Image(std::move(k));
}

/// Discrete delta of the given size at (size-1)/2.
inline Image delta_kernel(Index size) {
  Image k(size, size, 0.0);
  k((size - 1) / 2, (size - 1) / 2) = 1.0;
  return k;
}

namespace detail {

// One axis of the frequency selection D: output index i reads input index
// i when i <= n/2, else i + m - n. For even n < m the Nyquist row averages
// the two aliased inputs n/2 and m - n/2 so that Hermitian symmetry, and
// hence a real output, is preserved exactly.
struct FrequencyTap {
  Index src;
  double weight;
};

inline std::vector<std::vector<FrequencyTap>> frequency_selection(Index n, Index m) {
  std::vector<std::vector<FrequencyTap>> taps(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    auto& t = taps[static_cast<std::size_t>(i)];
    if (n % 2 == 0 && 2 * i == n) {
      t.push_back({i, 0.5});
      t.push_back({i + m - n, 0.5});
    } else if (2 * i <= n) {
      t.push_back({i, 1.0});
    } else {
      t.push_back({i + m - n, 1.0});
    }
  }
  return taps;
}

// D: m1 x m2 spectrum -> n1 x n2 spectrum.
inline fft::ComplexMatrix select_frequencies(const fft::ComplexMatrix& z, Index n1, Index n2) {
  const auto tr = frequency_selection(n1, z.rows());
  const auto tc = frequency_selection(n2, z.cols());
  fft::ComplexMatrix rows_done = fft::ComplexMatrix::Zero(n1, z.cols());
  for (Index i = 0; i < n1; ++i)
    for (const auto& t : tr[static_cast<std::size_t>(i)]) rows_done.row(i) += t.weight * z.row(t.src);
  fft::ComplexMatrix out = fft::ComplexMatrix::Zero(n1, n2);
  for (Index j = 0; j < n2; ++j)
    for (const auto& t : tc[static_cast<std::size_t>(j)]) out.col(j) += t.weight * rows_done.col(t.src);
  return out;
}

// D^T: n1 x n2 spectrum -> m1 x m2 spectrum (zero filling).
inline fft::ComplexMatrix select_frequencies_adjoint(const fft::ComplexMatrix& z, Index m1, Index m2) {
  const auto tr = frequency_selection(z.rows(), m1);
  const auto tc = frequency_selection(z.cols(), m2);
  fft::ComplexMatrix cols_done = fft::ComplexMatrix::Zero(z.rows(), m2);
  for (Index j = 0; j < z.cols(); ++j)
    for (const auto& t : tc[static_cast<std::size_t>(j)]) cols_done.col(t.src) += t.weight * z.col(j);
  fft::ComplexMatrix out = fft::ComplexMatrix::Zero(m1, m2);
  for (Index i = 0; i < z.rows(); ++i)
    for (const auto& t : tr[static_cast<std::size_t>(i)]) out.row(t.src) += t.weight * cols_done.row(i);
  return out;
}

inline Eigen::MatrixXd padded_kernel(const Image& k, Index rows, Index cols) {
  if (k.rows() > rows || k.cols() > cols)
    throw DimensionError("kernel " + dims_str(k.rows(), k.cols()) + " larger than image " +
                         dims_str(rows, cols));
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(rows, cols);
  p.topLeftCorner(k.rows(), k.cols()) = k.matrix();
  return p;
}

inline void require_target_fits(const Image& x, Index n1, Index n2) {
  if (n1 < 1 || n2 < 1 || n1 > x.rows() || n2 > x.cols())
    throw DimensionError("fourier target " + dims_str(n1, n2) + " incompatible with source " +
                         dims_str(x.rows(), x.cols()));
}

}  // namespace detail

/// Spectral truncation S followed by the inverse DFT, before discarding the
/// imaginary part. Exposed so real-valuedness can be checked.
inline fft::ComplexMatrix fourier_downsample_complex(const Image& x, Index n1, Index n2) {
  detail::require_target_fits(x, n1, n2);
  const double scale = static_cast<double>(n1 * n2) / static_cast<double>(x.size());
  fft::ComplexMatrix out = fft::inverse(detail::select_frequencies(fft::forward(x.matrix()), n1, n2));
  out *= scale;
  return out;
}

inline Image fourier_downsample(const Image& x, Index n1, Index n2) {
  return Image(Eigen::MatrixXd(fourier_downsample_complex(x, n1, n2).real()));
}

namespace detail {

inline Image strided_forward(const Image& x, const ForwardOperator& op, bool with_bias) {
  const auto [r_out, c_out] = op.output_dims(x.rows(), x.cols());
  const Index kr = op.kernel.rows(), kc = op.kernel.cols();
  const Index o1 = (kr - 1) / 2, o2 = (kc - 1) / 2;
  const auto& xm = x.matrix();
  const auto& km = op.kernel.matrix();
  Eigen::MatrixXd y(r_out, c_out);
  for (Index j = 0; j < c_out; ++j)
    for (Index i = 0; i < r_out; ++i) {
      double acc = with_bias ? op.bias : 0.0;
      for (Index c = 0; c < kc; ++c) {
        const Index xc = j * op.stride + c - o2;
        if (xc < 0 || xc >= x.cols()) continue;
        for (Index a = 0; a < kr; ++a) {
          const Index xr = i * op.stride + a - o1;
          if (xr < 0 || xr >= x.rows()) continue;
          acc += km(a, c) * xm(xr, xc);
        }
      }
      y(i, j) = acc;
    }
  return Image(std::move(y));
}

inline Image strided_adjoint(const Image& g, const ForwardOperator& op, Index rows, Index cols) {
  const Index kr = op.kernel.rows(), kc = op.kernel.cols();
  const Index o1 = (kr - 1) / 2, o2 = (kc - 1) / 2;
  const auto& gm = g.matrix();
  const auto& km = op.kernel.matrix();
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(rows, cols);
  for (Index j = 0; j < g.cols(); ++j)
    for (Index i = 0; i < g.rows(); ++i) {
      const double v = gm(i, j);
      for (Index c = 0; c < kc; ++c) {
        const Index xc = j * op.stride + c - o2;
        if (xc < 0 || xc >= cols) continue;
        for (Index a = 0; a < kr; ++a) {
          const Index xr = i * op.stride + a - o1;
          if (xr < 0 || xr >= rows) continue;
          x(xr, xc) += km(a, c) * v;
        }
      }
    }
  return Image(std::move(x));
}

inline Image fourier_forward(const Image& x, const ForwardOperator& op, bool with_bias) {
  const auto [n1, n2] = op.output_dims(x.rows(), x.cols());
  const fft::ComplexMatrix kh = fft::forward(padded_kernel(op.kernel, x.rows(), x.cols()));
  fft::ComplexMatrix spec = kh.cwiseProduct(fft::forward(x.matrix()));
  if (with_bias) spec(0, 0) += static_cast<double>(x.size()) * op.bias;
  fft::ComplexMatrix out = fft::inverse(select_frequencies(spec, n1, n2));
  out *= static_cast<double>(n1 * n2) / static_cast<double>(x.size());
  return Image(Eigen::MatrixXd(out.real()));
}

inline Image fourier_adjoint(const Image& g, const ForwardOperator& op, Index rows, Index cols) {
  const fft::ComplexMatrix kh = fft::forward(padded_kernel(op.kernel, rows, cols));
  const fft::ComplexMatrix z = select_frequencies_adjoint(fft::forward(g.matrix()), rows, cols);
  const fft::ComplexMatrix out = fft::inverse(kh.conjugate().cwiseProduct(z));
  return Image(Eigen::MatrixXd(out.real()));
}

}  // namespace detail

inline Image apply_forward(const Image& x, const ForwardOperator& op) {
  if (op.mode == OperatorMode::StridedConv) return detail::strided_forward(x, op, true);
  return detail::fourier_forward(x, op, true);
}

/// Linear part of apply_forward (bias dropped).
inline Image apply_linear(const Image& x, const ForwardOperator& op) {
  if (op.mode == OperatorMode::StridedConv) return detail::strided_forward(x, op, false);
  return detail::fourier_forward(x, op, false);
}

/// Exact adjoint of apply_linear. `rows` x `cols` are the high-res dims.
inline Image apply_adjoint(const Image& g, const ForwardOperator& op, Index rows, Index cols) {
  const auto [r_out, c_out] = op.output_dims(rows, cols);
  if (g.rows() != r_out || g.cols() != c_out)
    throw DimensionError("adjoint input " + detail::dims_str(g.rows(), g.cols()) + " but operator outputs " +
                         detail::dims_str(r_out, c_out));
  if (op.mode == OperatorMode::StridedConv) return detail::strided_adjoint(g, op, rows, cols);
  return detail::fourier_adjoint(g, op, rows, cols);
}

/// Adjoint for the natural high-res dims: g.rows()*stride etc. when no
/// Fourier target is set.
inline Image apply_adjoint(const Image& g, const ForwardOperator& op) {
  return apply_adjoint(g, op, g.rows() * op.stride, g.cols() * op.stride);
}

inline Image add_noise(const Image& y, const NoiseModel& nm) {
  if (!std::isfinite(nm.sigma) || nm.sigma < 0.0) throw InvalidArgument("noise sigma must be finite and >= 0");
  if (nm.sigma == 0.0) return y;
  std::mt19937_64 rng(nm.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd out = y.matrix();
  for (Index j = 0; j < out.cols(); ++j)
    for (Index i = 0; i < out.rows(); ++i) out(i, j) += nm.sigma * normal(rng);
  return Image(std::move(out));
}

struct OperatorEstimate {
  Image kernel;
  double bias = 0.0;
};

/// Kernel and bias of y ~ S(k (*) x + b) from one registered pair.
///
/// The quotient  t = F^-1( M/N * D^T( y^ ./ D(x^) ) )  equals the zero-padded
/// kernel plus the constant b / x^_00 (up to the high-frequency part of k).
/// The constant is read off as the mean of t outside the top-left
/// kernel_size x kernel_size window. |D(x^)| is raised by 1e-5 at fixed phase.
inline OperatorEstimate estimate_operator(const Image& x_ref, const Image& y_ref, Index kernel_size) {
  constexpr double kStabilizer = 1e-5;
  const Index m1 = x_ref.rows(), m2 = x_ref.cols();
  const Index n1 = y_ref.rows(), n2 = y_ref.cols();
  if (n1 > m1 || n2 > m2)
    throw DimensionError("low-res " + detail::dims_str(n1, n2) + " larger than high-res " +
                         detail::dims_str(m1, m2));
  if (kernel_size < 1 || kernel_size > m1 || kernel_size > m2)
    throw InvalidArgument("kernel size must be in [1, min(high-res dims)]");
  if (kernel_size * kernel_size >= m1 * m2)
    throw InvalidArgument("kernel window leaves no pixels for the bias estimate");

  const fft::ComplexMatrix xh = fft::forward(x_ref.matrix());
  const double dc = xh(0, 0).real();
  if (std::abs(dc) < 1e-12 * static_cast<double>(x_ref.size()))
    throw EstimationError("high-res image has zero mean; bias is not identifiable");

  const fft::ComplexMatrix yh = fft::forward(y_ref.matrix());
  fft::ComplexMatrix dx = detail::select_frequencies(xh, n1, n2);
  for (Index j = 0; j < n2; ++j)
    for (Index i = 0; i < n1; ++i) {
      const std::complex<double> v = dx(i, j);
      const double mag = std::abs(v);
      dx(i, j) = mag > 0.0 ? v * ((mag + kStabilizer) / mag) : std::complex<double>(kStabilizer, 0.0);
    }
  const fft::ComplexMatrix q = yh.cwiseQuotient(dx);
  const double ratio = static_cast<double>(m1 * m2) / static_cast<double>(n1 * n2);
  const Eigen::MatrixXd t =
      (fft::inverse(detail::select_frequencies_adjoint(q, m1, m2)) * ratio).real();

  const double window_sum = t.topLeftCorner(kernel_size, kernel_size).sum();
  const double outside_mean =
      (t.sum() - window_sum) / static_cast<double>(m1 * m2 - kernel_size * kernel_size);

  OperatorEstimate est;
  est.bias = outside_mean * dc;
  est.kernel = Image(Eigen::MatrixXd(t.topLeftCorner(kernel_size, kernel_size).array() - outside_mean));
  return est;
}

}  // namespace wpp
