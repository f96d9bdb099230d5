#include <gtest/gtest.h>

#include <random>

#include "support.hpp"
#include "wpp/exact_transport.hpp"
#include "wpp/transport.hpp"

using namespace wpp;
using wpp::testing::brute_force_w2;
using wpp::testing::random_distribution;
using wpp::testing::random_image;

namespace {

PatchDistribution atoms(std::initializer_list<double> v) {
  Eigen::MatrixXd m(1, static_cast<Index>(v.size()));
  Index k = 0;
  for (double x : v) m(0, k++) = x;
  return PatchDistribution({1, 1}, m);
}

DualPotential random_potential(Index n, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  DualPotential p = DualPotential::zeros(n);
  for (Index k = 0; k < n; ++k) p.values(k) = g(rng);
  return p;
}

DualAscentConfig full_batch(int steps, double decay = 0.0) {
  DualAscentConfig c;
  c.steps = steps;
  c.step_size = 1.0;
  c.decay = decay;
  c.minibatch = 0;
  return c;
}

}  // namespace

TEST(CTransform, SingleReference) {
  const auto ref = atoms({0.3});
  const auto v = c_transform(DualPotential::zeros(1), Patch{{1, 1}, Eigen::VectorXd::Constant(1, 0.9)}, ref);
  EXPECT_NEAR(v.value, 0.36, 1e-15);
  EXPECT_EQ(v.kappa, 0);
}

TEST(CTransform, TwoCandidates) {
  const auto v = c_transform(DualPotential::zeros(2), Patch{{1, 1}, Eigen::VectorXd::Constant(1, 0.4)}, atoms({0.0, 1.0}));
  EXPECT_NEAR(v.value, 0.16, 1e-15);
  EXPECT_EQ(v.kappa, 0);
}

TEST(CTransform, TieGoesToLowestIndex) {
  const auto ref = atoms({0.0, 1.0, 0.0});
  const auto v = c_transform(DualPotential::zeros(3), Patch{{1, 1}, Eigen::VectorXd::Constant(1, 0.5)}, ref);
  EXPECT_EQ(v.kappa, 0);
  const auto [vals, kappa] = c_transform_all(DualPotential::zeros(3), atoms({0.5, 0.0}), ref);
  EXPECT_EQ(kappa[0], 0);
  EXPECT_EQ(kappa[1], 0);
}

TEST(CTransform, ShiftLowersValueKeepsArgmin) {
  const auto ref = random_distribution(9, 2, 2, 1);
  const auto p = random_distribution(1, 2, 2, 2).patch_copy(0);
  const auto psi = random_potential(9, 3);
  DualPotential shifted = psi;
  shifted.values.array() += 0.7;
  const auto a = c_transform(psi, p, ref), b = c_transform(shifted, p, ref);
  EXPECT_NEAR(b.value, a.value - 0.7, 1e-14);
  EXPECT_EQ(a.kappa, b.kappa);
}

TEST(CTransform, BatchedSearchMatchesBruteForce) {
  // enough reference atoms to exercise several search blocks
  const auto ref = random_distribution(1300, 3, 3, 4);
  const auto src = random_distribution(200, 3, 3, 5);
  const auto psi = random_potential(1300, 6, 0.3);
  const auto [vals, kappa] = c_transform_all(psi, src, ref);
  for (Index j = 0; j < src.count(); ++j) {
    const auto c = c_transform(psi, src.patch_copy(j), ref);
    EXPECT_EQ(kappa[static_cast<std::size_t>(j)], c.kappa);
    EXPECT_NEAR(vals(j), c.value, 1e-12);
  }
}

TEST(CTransform, ShapeMismatch) {
  const auto ref = random_distribution(3, 2, 2, 1);
  EXPECT_THROW(c_transform(DualPotential::zeros(2), ref.patch_copy(0), ref), DimensionError);
  EXPECT_THROW(c_transform(DualPotential::zeros(3), Patch{{1, 4}, Eigen::VectorXd::Zero(4)}, ref), DimensionError);
  EXPECT_THROW(dual_objective(DualPotential::zeros(3), random_distribution(3, 1, 1, 2), ref), DimensionError);
}

TEST(DualObjective, IdenticalListsAtZero) {
  const auto d = random_distribution(7, 2, 3, 7);
  EXPECT_NEAR(dual_objective(DualPotential::zeros(7), d, d), 0.0, 1e-15);
}

TEST(DualObjective, AtZeroIsMeanNearestDistance) {
  const auto src = random_distribution(11, 2, 2, 8);
  const auto ref = random_distribution(6, 2, 2, 9);
  double expect = 0.0;
  for (Index j = 0; j < 11; ++j) {
    double best = 1e300;
    for (Index k = 0; k < 6; ++k) best = std::min(best, (src.patch(j) - ref.patch(k)).squaredNorm());
    expect += best / 11.0;
  }
  EXPECT_NEAR(dual_objective(DualPotential::zeros(6), src, ref), expect, 1e-14);
}

TEST(DualObjective, ShiftInvariant) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> c(-5.0, 5.0);
  for (int t = 0; t < 20; ++t) {
    const auto src = random_distribution(8, 2, 2, 100 + t);
    const auto ref = random_distribution(5, 2, 2, 200 + t);
    const auto psi = random_potential(5, 300 + t);
    DualPotential shifted = psi;
    shifted.values.array() += c(rng);
    EXPECT_NEAR(dual_objective(shifted, src, ref), dual_objective(psi, src, ref), 1e-9);
  }
}

TEST(DualObjective, WeakDuality) {
  for (int t = 0; t < 30; ++t) {
    const auto src = random_distribution(2 + t % 5, 1, 2, 400 + t);
    const auto ref = random_distribution(2 + (t / 5) % 5, 1, 2, 500 + t);
    const double lp = w2_exact_lp(src, ref).value;
    for (int s = 0; s < 5; ++s)
      EXPECT_LE(dual_objective(random_potential(ref.count(), 600 + 10 * t + s), src, ref), lp + 1e-9);
  }
}

TEST(AscendDual, ZeroStepsReturnsStart) {
  const auto src = random_distribution(5, 1, 1, 1), ref = random_distribution(4, 1, 1, 2);
  const auto psi = random_potential(4, 3);
  EXPECT_EQ(ascend_dual(src, ref, psi, full_batch(0)).values, psi.values);
}

TEST(AscendDual, IdenticalDistributionsStayOptimal) {
  const auto d = random_distribution(6, 2, 2, 11);
  const auto psi = ascend_dual(d, d, DualPotential::zeros(6), full_batch(50));
  EXPECT_NEAR(dual_objective(psi, d, d), 0.0, 1e-12);
}

TEST(AscendDual, ConvergesToLinearProgramOnSmallInstance) {
  const auto src = random_distribution(6, 1, 1, 12), ref = random_distribution(6, 1, 1, 13);
  const double lp = w2_exact_lp(src, ref).value;
  const auto psi = ascend_dual(src, ref, DualPotential::zeros(6), full_batch(500, 1.0));
  EXPECT_LT(wpp::testing::rel_err(dual_objective(psi, src, ref), lp), 1e-3);
}

TEST(AscendDual, FinalNotBelowStart) {
  // a constant unit step overshoots on instances this small; decay it
  for (int t = 0; t < 20; ++t) {
    const Index n = 2 + t % 7;
    const auto src = random_distribution(n, 1, 2, 700 + t), ref = random_distribution(n, 1, 2, 800 + t);
    const auto psi = ascend_dual(src, ref, DualPotential::zeros(n), full_batch(500, 1.0));
    EXPECT_GE(dual_objective(psi, src, ref), dual_objective(DualPotential::zeros(n), src, ref) - 1e-12);
  }
}

TEST(AscendDual, DeterministicMinibatches) {
  const auto src = random_distribution(200, 2, 2, 14), ref = random_distribution(30, 2, 2, 15);
  DualAscentConfig c = full_batch(20);
  c.minibatch = 17;
  c.seed = 5;
  const auto a = ascend_dual(src, ref, DualPotential::zeros(30), c);
  const auto b = ascend_dual(src, ref, DualPotential::zeros(30), c);
  EXPECT_EQ(a.values, b.values);
  c.seed = 6;
  EXPECT_NE(ascend_dual(src, ref, DualPotential::zeros(30), c).values, a.values);
}

TEST(AscendDual, GradientStepMatchesHistogram) {
  // one full-batch step: psi_k += 1/M - count_k / N
  const auto src = atoms({0.0, 0.1, 0.9});
  const auto ref = atoms({0.0, 1.0});
  const auto psi = ascend_dual(src, ref, DualPotential::zeros(2), full_batch(1));
  EXPECT_NEAR(psi.values(0), 0.5 - 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(psi.values(1), 0.5 - 1.0 / 3.0, 1e-15);
}

TEST(AscendDual, InvalidConfig) {
  const auto d = random_distribution(3, 1, 1, 1);
  DualAscentConfig c;
  c.step_size = 0.0;
  EXPECT_THROW(ascend_dual(d, d, DualPotential::zeros(3), c), InvalidArgument);
  c = DualAscentConfig{};
  c.steps = -1;
  EXPECT_THROW(ascend_dual(d, d, DualPotential::zeros(3), c), InvalidArgument);
  EXPECT_THROW(ascend_dual(d, d, DualPotential::zeros(2), DualAscentConfig{}), DimensionError);
}

TEST(Semidual, IdenticalDistributions) {
  const auto d = random_distribution(9, 2, 2, 16);
  const auto r = w2_semidual(d, d, full_batch(20));
  EXPECT_NEAR(r.value, 0.0, 1e-9);
  for (Index j = 0; j < 9; ++j) EXPECT_EQ(d.patch(r.assign[static_cast<std::size_t>(j)]), d.patch(j));
}

TEST(Semidual, SingletonsGiveSquaredDistance) {
  const auto a = random_distribution(1, 2, 2, 17), b = random_distribution(1, 2, 2, 18);
  for (int steps : {0, 1, 7}) {
    EXPECT_NEAR(w2_semidual(a, b, full_batch(steps)).value, (a.patch(0) - b.patch(0)).squaredNorm(), 1e-14);
  }
}

TEST(Semidual, ValueIsObjectiveAtReturnedPotential) {
  const auto src = random_distribution(40, 2, 2, 19), ref = random_distribution(25, 2, 2, 20);
  const auto r = w2_semidual(src, ref, full_batch(15));
  EXPECT_DOUBLE_EQ(r.value, dual_objective(r.psi, src, ref));
  const auto [vals, kappa] = c_transform_all(r.psi, src, ref);
  EXPECT_EQ(r.assign, kappa);
}

TEST(Semidual, WarmStartContinuesAscent) {
  const auto src = random_distribution(6, 1, 1, 21), ref = random_distribution(6, 1, 1, 22);
  const auto once = w2_semidual(src, ref, full_batch(20));
  const auto twice = w2_semidual(src, ref, full_batch(20), once.psi);
  EXPECT_EQ(twice.psi.values, ascend_dual(src, ref, once.psi, full_batch(20)).values);
}

TEST(ExactLp, OneDimensionalPairing) {
  EXPECT_NEAR(w2_exact_lp(atoms({0, 1}), atoms({2, 3})).value, 4.0, 1e-12);
}

TEST(ExactLp, SingletonsAndIdentical) {
  const auto a = random_distribution(1, 3, 1, 23), b = random_distribution(1, 3, 1, 24);
  EXPECT_NEAR(w2_exact_lp(a, b).value, (a.patch(0) - b.patch(0)).squaredNorm(), 1e-14);
  const auto d = random_distribution(5, 2, 1, 25);
  const auto r = w2_exact_lp(d, d);
  EXPECT_NEAR(r.value, 0.0, 1e-14);
  EXPECT_NEAR((r.plan.pi - Eigen::MatrixXd::Identity(5, 5) / 5.0).cwiseAbs().maxCoeff(), 0.0, 1e-15);
}

TEST(ExactLp, MatchesPermutationOracleAndPlanIsFeasible) {
  for (int t = 0; t < 40; ++t) {
    const Index n = 1 + t % 4, m = 1 + (t / 4) % 4;
    const auto src = random_distribution(n, 1 + t % 2, 1 + t % 3, 900 + t);
    const auto ref = random_distribution(m, 1 + t % 2, 1 + t % 3, 1000 + t);
    if (std::lcm(n, m) > 8) continue;
    const auto r = w2_exact_lp(src, ref);
    EXPECT_NEAR(r.value, brute_force_w2(src, ref), 1e-12);
    EXPECT_LT((r.plan.pi.rowwise().sum().array() - 1.0 / n).abs().maxCoeff(), 1e-9);
    EXPECT_LT((r.plan.pi.colwise().sum().array() - 1.0 / m).abs().maxCoeff(), 1e-9);
    EXPECT_GE(r.plan.pi.minCoeff(), 0.0);
    double cost = 0.0;
    for (Index j = 0; j < n; ++j)
      for (Index k = 0; k < m; ++k) cost += r.plan.pi(j, k) * (src.patch(j) - ref.patch(k)).squaredNorm();
    EXPECT_NEAR(cost, r.value, 1e-12);
  }
}

TEST(ExactLp, SymmetricAndZeroOnlyForEqualMultisets) {
  const auto a = random_distribution(4, 2, 2, 26), b = random_distribution(6, 2, 2, 27);
  EXPECT_NEAR(w2_exact_lp(a, b).value, w2_exact_lp(b, a).value, 1e-12);
  EXPECT_GT(w2_exact_lp(a, b).value, 0.0);
  Eigen::MatrixXd perm = a.matrix();
  perm.col(0).swap(perm.col(3));
  EXPECT_NEAR(w2_exact_lp(a, PatchDistribution(a.shape(), perm)).value, 0.0, 1e-14);
}

TEST(ExactLp, CapacityGuard) {
  const auto big = random_distribution(1001, 1, 1, 28);
  EXPECT_THROW(w2_exact_lp(big, big), CapacityError);
}

TEST(Gradient, ZeroWhenAssignedToSelf) {
  const Image x = random_image(6, 5, 29);
  const auto ref = extract_patches(x, 2, 2);
  Assignment id(static_cast<std::size_t>(ref.count()));
  std::iota(id.begin(), id.end(), Index{0});
  EXPECT_EQ(w2_gradient_image(x, ref, id, 2, 2).matrix(), Eigen::MatrixXd::Zero(6, 5));
}

TEST(Gradient, SinglePixel) {
  const Image x(Eigen::MatrixXd::Constant(1, 1, 0.8));
  const auto g = w2_gradient_image(x, atoms({0.3}), {0}, 1, 1);
  EXPECT_NEAR(g(0, 0), 2.0 * (0.8 - 0.3), 1e-15);
}

TEST(Gradient, FixedAssignmentFiniteDifferences) {
  const Image x = random_image(8, 8, 30);
  const auto ref = random_distribution(20, 3, 3, 31);
  const auto [vals, assign] = c_transform_all(DualPotential::zeros(20), extract_patches(x, 3, 3), ref);
  auto energy = [&](const Image& z) {
    const auto p = extract_patches(z, 3, 3);
    double e = 0.0;
    for (Index j = 0; j < p.count(); ++j) e += (p.patch(j) - ref.patch(assign[static_cast<std::size_t>(j)])).squaredNorm();
    return e / static_cast<double>(p.count());
  };
  const Image g = w2_gradient_image(x, ref, assign, 3, 3);
  const double h = 1e-5;
  for (Index j = 0; j < 8; ++j)
    for (Index i = 0; i < 8; ++i) {
      Image xp = x, xm = x;
      xp(i, j) += h;
      xm(i, j) -= h;
      const double fd = (energy(xp) - energy(xm)) / (2 * h);
      EXPECT_NEAR(g(i, j), fd, 1e-6 * std::max(1.0, std::abs(fd)));
    }
}

TEST(Gradient, StaleAssignment) {
  const Image x = random_image(5, 5, 32);
  EXPECT_THROW(w2_gradient_image(x, random_distribution(3, 2, 2, 33), Assignment(3, 0), 2, 2), DimensionError);
}

TEST(LemmaMergedBound, MeanOfPerImageAtLeastMerged) {
  for (int t = 0; t < 15; ++t) {
    const int b = 2 + t % 3;
    const auto ref = random_distribution(6, 2, 2, 1100 + t);
    std::vector<PatchDistribution> parts;
    double mean = 0.0;
    for (int i = 0; i < b; ++i) {
      parts.push_back(extract_patches(random_image(3, 4, 1200 + 10 * t + i), 2, 2));
      mean += w2_exact_lp(parts.back(), ref).value / b;
    }
    EXPECT_GE(mean - w2_exact_lp(merge_distributions(parts), ref).value, -1e-9);
  }
}
