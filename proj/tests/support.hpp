#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "wpp/image.hpp"

namespace wpp::testing {

inline Image random_image(Index rows, Index cols, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::MatrixXd m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = u(rng);
  return Image(m);
}

inline PatchDistribution random_distribution(Index count, Index s1, Index s2, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd m(s1 * s2, count);
  for (Index j = 0; j < count; ++j)
    for (Index i = 0; i < s1 * s2; ++i) m(i, j) = u(rng);
  return PatchDistribution({s1, s2}, m);
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

// Uniform measures with N and M atoms: replicate both to L = lcm(N, M) atoms
// of equal mass, then the optimum is a permutation (Birkhoff). Exhaustive.
inline double brute_force_w2(const PatchDistribution& a, const PatchDistribution& b) {
  const Index L = std::lcm(a.count(), b.count());
  std::vector<Index> ia, ib(static_cast<std::size_t>(L));
  for (Index k = 0; k < L; ++k) ia.push_back(k / (L / a.count()));
  for (Index k = 0; k < L; ++k) ib[static_cast<std::size_t>(k)] = k / (L / b.count());
  std::vector<Index> perm(static_cast<std::size_t>(L));
  std::iota(perm.begin(), perm.end(), Index{0});
  double best = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (Index k = 0; k < L; ++k)
      c += (a.patch(ia[static_cast<std::size_t>(k)]) - b.patch(ib[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])]))
               .squaredNorm();
    best = std::min(best, c / static_cast<double>(L));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace wpp::testing
