#pragma once

// Seeded procedural grain textures: value-noise octaves pushed through a soft
// threshold, giving sharp-edged blobs at several scales.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>

#include "wpp/error.hpp"
#include "wpp/image.hpp"

namespace wpp {

struct TextureSpec {
  Index rows = 256;
  Index cols = 256;
  double cell = 12.0;        // lattice spacing of the coarsest octave, pixels
  int octaves = 3;
  double persistence = 0.5;  // amplitude ratio between octaves
  double threshold = 0.5;    // on the min-max normalised noise
  double softness = 0.04;    // width of the logistic threshold
  double low = 0.15;
  double high = 0.85;
  double grain = 0.03;       // amplitude of the finest unthresholded octave
  std::uint64_t seed = 0;

  void validate() const {
    if (rows < 1 || cols < 1) throw InvalidArgument("texture dims must be >= 1");
    if (!(cell >= 1.0)) throw InvalidArgument("texture cell must be >= 1");
    if (octaves < 1) throw InvalidArgument("texture octaves must be >= 1");
    if (!(softness > 0.0)) throw InvalidArgument("texture softness must be > 0");
  }
};

namespace detail {

inline Eigen::MatrixXd value_noise(Index rows, Index cols, double cell, std::mt19937_64& rng) {
  const Index gr = static_cast<Index>(std::ceil(static_cast<double>(rows) / cell)) + 2;
  const Index gc = static_cast<Index>(std::ceil(static_cast<double>(cols) / cell)) + 2;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd lattice(gr, gc);
  for (Index j = 0; j < gc; ++j)
    for (Index i = 0; i < gr; ++i) lattice(i, j) = u(rng);
  auto smooth = [](double t) { return t * t * (3.0 - 2.0 * t); };
  Eigen::MatrixXd out(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    const double fy = static_cast<double>(j) / cell;
    const Index j0 = static_cast<Index>(fy);
    const double ty = smooth(fy - static_cast<double>(j0));
    for (Index i = 0; i < rows; ++i) {
      const double fx = static_cast<double>(i) / cell;
      const Index i0 = static_cast<Index>(fx);
      const double tx = smooth(fx - static_cast<double>(i0));
      const double top = lattice(i0, j0) * (1 - ty) + lattice(i0, j0 + 1) * ty;
      const double bot = lattice(i0 + 1, j0) * (1 - ty) + lattice(i0 + 1, j0 + 1) * ty;
      out(i, j) = top * (1 - tx) + bot * tx;
    }
  }
  return out;
}

}  // namespace detail

inline Image generate_texture(const TextureSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(spec.rows, spec.cols);
  double amp = 1.0, cell = spec.cell;
  for (int o = 0; o < spec.octaves; ++o) {
    acc += amp * detail::value_noise(spec.rows, spec.cols, std::max(1.0, cell), rng);
    amp *= spec.persistence;
    cell /= 2.0;
  }
  const double lo = acc.minCoeff(), hi = acc.maxCoeff();
  if (hi > lo) acc = (acc.array() - lo) / (hi - lo);
  Eigen::MatrixXd img =
      spec.low + (spec.high - spec.low) / (1.0 + (-(acc.array() - spec.threshold) / spec.softness).exp());
  if (spec.grain > 0.0)
    img += spec.grain * (detail::value_noise(spec.rows, spec.cols, 2.0, rng).array() - 0.5).matrix();
  return Image(Eigen::MatrixXd(img.cwiseMax(0.0).cwiseMin(1.0)));
}

}  // namespace wpp
