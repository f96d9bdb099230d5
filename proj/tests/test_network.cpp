#include <gtest/gtest.h>

#include "support.hpp"
#include "wpp/exact_transport.hpp"
#include "wpp/network.hpp"

using namespace wpp;
using wpp::testing::random_image;

namespace {

NetworkParams random_params(NetworkArch arch, std::uint64_t seed, double scale = 0.5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  NetworkParams p = NetworkParams::zeros(arch);
  for (Index k = 0; k < p.values.size(); ++k) p.values(k) = g(rng);
  return p;
}

ForwardOperator blur_op(Index stride, Index size = 5, double sigma = 1.0) {
  ForwardOperator op;
  op.kernel = gaussian_kernel(size, sigma);
  op.stride = stride;
  return op;
}

double inner(const Image& a, const Image& b) { return a.matrix().cwiseProduct(b.matrix()).sum(); }

}  // namespace

TEST(Params, LayoutAndValidation) {
  const NetworkArch arch{3, 4, 2};
  // 1->4, 4->4, 4->1 convolutions with biases
  EXPECT_EQ(NetworkParams::parameter_count(arch), (4 * 9 + 4) + (16 * 9 + 4) + (4 * 9 + 1));
  NetworkParams p = NetworkParams::zeros(arch);
  p.values.resize(3);
  EXPECT_THROW(p.validate(), DimensionError);
  EXPECT_THROW(NetworkParams::zeros(NetworkArch{0, 4, 2}), InvalidArgument);
}

TEST(Forward, ZeroWeightsGiveBicubic) {
  const Image y = random_image(7, 6, 1);
  EXPECT_EQ(forward_net(NetworkParams::zeros({3, 5, 4}), y).matrix(), bicubic_upsample(y, 4).matrix());
}

TEST(Forward, FreshInitialisationIsBicubic) {
  const Image y = random_image(7, 6, 2);
  EXPECT_EQ(forward_net(NetworkParams::initialize({4, 8, 4}, 3), y).matrix(), bicubic_upsample(y, 4).matrix());
}

TEST(Forward, OutputDims) {
  const Image a = forward_net(random_params({2, 3, 4}, 4), random_image(25, 25, 5));
  EXPECT_EQ(a.rows(), 100);
  EXPECT_EQ(a.cols(), 100);
  const Image b = forward_net(random_params({2, 3, 8}, 6), random_image(20, 20, 7));
  EXPECT_EQ(b.rows(), 160);
  EXPECT_EQ(b.cols(), 160);
}

TEST(Backward, ZeroUpstreamGivesZeroGradient) {
  const Image y = random_image(5, 5, 8);
  const auto theta = random_params({3, 4, 2}, 9);
  EXPECT_EQ(backward_net(theta, y, Image(10, 10, 0.0)).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_THROW(backward_net(theta, y, Image(9, 10, 0.0)), DimensionError);
}

TEST(Backward, SingleLinearLayerIsCorrelation) {
  const NetworkArch arch{1, 1, 2};
  const auto theta = random_params(arch, 10);
  const Image y = random_image(4, 5, 11);
  const Image u = bicubic_upsample(y, 2);
  const Image up = random_image(8, 10, 12);
  const auto g = backward_net(theta, y, up);
  const auto L = conv_layouts(arch).front();
  for (Index a = 0; a < 3; ++a)
    for (Index b = 0; b < 3; ++b) {
      double expect = 0.0;
      for (Index c = 0; c < 10; ++c)
        for (Index r = 0; r < 8; ++r) {
          const Index rr = r + a - 1, cc = c + b - 1;
          if (rr >= 0 && rr < 8 && cc >= 0 && cc < 10) expect += up(r, c) * u(rr, cc);
        }
      EXPECT_NEAR(g(L.w(0, 0, a, b)), expect, 1e-12);
    }
  EXPECT_NEAR(g(L.bias), up.matrix().sum(), 1e-12);
}

TEST(Backward, FiniteDifferencesOnTinyNets) {
  const NetworkArch arch{2, 4, 2};
  const double h = 1e-6;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto theta = random_params(arch, 100 + seed);
    const Image y = random_image(3, 3, 200 + seed);  // 6x6 network input after upsampling
    const Image up = random_image(6, 6, 300 + seed, -1, 1);
    const auto g = backward_net(theta, y, up);
    for (Index k = 0; k < theta.values.size(); ++k) {
      NetworkParams tp = theta, tm = theta;
      tp.values(k) += h;
      tm.values(k) -= h;
      const double fd = (inner(forward_net(tp, y), up) - inner(forward_net(tm, y), up)) / (2 * h);
      EXPECT_LT(std::abs(fd - g(k)), 1e-3 * std::max(1.0, std::abs(fd))) << "seed " << seed << " param " << k;
    }
  }
}

TEST(Loss, NoPriorIsMeanFidelity) {
  TrainConfig cfg;
  cfg.lambda = 0.0;
  cfg.arch = {2, 3, 2};
  cfg.patch = {2, 2};
  const auto op = blur_op(2);
  const auto theta = random_params(cfg.arch, 13, 0.2);
  std::vector<Image> batch{random_image(4, 4, 14), random_image(4, 4, 15), random_image(4, 4, 16)};
  double expect = 0.0;
  for (const auto& y : batch) expect += (apply_forward(forward_net(theta, y), op).matrix() - y.matrix()).squaredNorm() / 3.0;
  const auto r = wppnet_loss(theta, batch, op, extract_patches(random_image(6, 6, 17), 2, 2), cfg);
  EXPECT_NEAR(r.value, expect, 1e-12);
  EXPECT_EQ(r.wpp, 0.0);
}

TEST(Loss, BatchOfTwoMatchesExactTransport) {
  TrainConfig cfg;
  cfg.lambda = 12.5;
  cfg.arch = {2, 3, 2};
  cfg.patch = {2, 2};
  cfg.dual.steps = 2000;
  cfg.dual.decay = 1.0;
  cfg.dual.minibatch = 0;
  const auto op = blur_op(2);
  const auto theta = random_params(cfg.arch, 18, 0.2);
  std::vector<Image> batch{random_image(3, 3, 19), random_image(3, 3, 20)};
  const auto ref = extract_patches(random_image(4, 5, 21), 2, 2);
  double fid = 0.0;
  std::vector<PatchDistribution> parts;
  for (const auto& y : batch) {
    const Image x = forward_net(theta, y);
    fid += (apply_forward(x, op).matrix() - y.matrix()).squaredNorm() / 2.0;
    parts.push_back(extract_patches(x, 2, 2));
  }
  const double expect = fid + cfg.lambda * w2_exact_lp(merge_distributions(parts), ref).value;
  const auto r = wppnet_loss(theta, batch, op, ref, cfg);
  EXPECT_NEAR(r.fidelity, fid, 1e-12);
  EXPECT_LE(r.value, expect + 1e-9);
  EXPECT_LT(std::abs(r.value - expect), 1e-3 * expect);
}

TEST(Loss, GradientMatchesFrozenFiniteDifferences) {
  // With the potential fixed the W2 term is locally (1/N) sum ||P_j - q_kappa(j)||^2 - psi terms,
  // so a tiny step in theta must change the loss at the rate given by the gradient.
  TrainConfig cfg;
  cfg.arch = {2, 3, 2};
  cfg.patch = {2, 2};
  cfg.dual.steps = 0;
  const auto op = blur_op(2);
  const auto theta = random_params(cfg.arch, 22, 0.2);
  std::vector<Image> batch{random_image(3, 3, 23), random_image(4, 3, 24)};
  const auto ref = extract_patches(random_image(5, 5, 25), 2, 2);
  DualPotential psi = DualPotential::zeros(ref.count());
  for (Index k = 0; k < ref.count(); ++k) psi.values(k) = 0.01 * static_cast<double>(k % 5);
  const auto r = wppnet_loss(theta, batch, op, ref, cfg, psi);
  const double h = 1e-7;
  for (Index k = 0; k < theta.values.size(); k += 3) {
    NetworkParams tp = theta, tm = theta;
    tp.values(k) += h;
    tm.values(k) -= h;
    const double fd = (wppnet_loss(tp, batch, op, ref, cfg, psi).value - wppnet_loss(tm, batch, op, ref, cfg, psi).value) / (2 * h);
    EXPECT_NEAR(r.grad(k), fd, 1e-4 * std::max(1.0, std::abs(fd)));
  }
}

TEST(Loss, SingleImageBatch) {
  TrainConfig cfg;
  cfg.arch = {2, 3, 2};
  cfg.patch = {2, 2};
  cfg.dual.minibatch = 0;
  const auto theta = random_params(cfg.arch, 26, 0.2);
  const Image y = random_image(4, 4, 27);
  const auto ref = extract_patches(random_image(6, 6, 28), 2, 2);
  const auto r = wppnet_loss(theta, std::vector{y}, blur_op(2), ref, cfg);
  const Image x = forward_net(theta, y);
  const double fid = (apply_forward(x, blur_op(2)).matrix() - y.matrix()).squaredNorm();
  EXPECT_NEAR(r.value, fid + cfg.lambda * w2_semidual(extract_patches(x, 2, 2), ref, cfg.dual).value, 1e-12);
  EXPECT_THROW(wppnet_loss(theta, std::vector<Image>{}, blur_op(2), ref, cfg), InvalidArgument);
}

TEST(Loss, MergedBoundOnNetworkOutputs) {
  const NetworkArch arch{2, 3, 2};
  for (int t = 0; t < 10; ++t) {
    const auto theta = random_params(arch, 400 + t, 0.3);
    const auto ref = extract_patches(random_image(4, 4, 500 + t), 2, 2);
    std::vector<PatchDistribution> parts;
    double mean = 0.0;
    const int b = 2 + t % 3;
    for (int i = 0; i < b; ++i) {
      parts.push_back(extract_patches(forward_net(theta, random_image(2, 3, 600 + 10 * t + i)), 2, 2));
      mean += w2_exact_lp(parts.back(), ref).value / b;
    }
    EXPECT_GE(mean - w2_exact_lp(merge_distributions(parts), ref).value, -1e-9);
  }
}

TEST(Batches, DisjointCover) {
  const auto batches = make_batches(23, 5, 7);
  ASSERT_EQ(batches.size(), 5u);
  std::vector<int> seen(23, 0);
  for (const auto& b : batches)
    for (auto i : b) ++seen[i];
  for (int s : seen) EXPECT_EQ(s, 1);
  EXPECT_EQ(batches.back().size(), 3u);
}

class TrainingTest : public ::testing::Test {
 protected:
  void SetUp() override {
    op = blur_op(2);
    for (int i = 0; i < 8; ++i) data.push_back(apply_forward(random_image(12, 12, 700 + i), op));
    ref = extract_patches(random_image(16, 16, 800), 3, 3);
    cfg.arch = {2, 4, 2};
    cfg.patch = {3, 3};
    cfg.batch_size = 4;
    cfg.epochs = 2;
    cfg.adam.learning_rate = 1e-3;
    cfg.dual.steps = 200;
    cfg.seed = 3;
  }
  ForwardOperator op;
  std::vector<Image> data;
  PatchDistribution ref{{1, 1}, Eigen::MatrixXd::Zero(1, 1)};
  TrainConfig cfg;
};

TEST_F(TrainingTest, ZeroEpochsReturnsInitial) {
  cfg.epochs = 0;
  const auto init = random_params(cfg.arch, 5, 0.1);
  const auto r = train(data, op, ref, cfg, init);
  EXPECT_EQ(r.theta.values, init.values);
  EXPECT_TRUE(r.trace.empty());
}

TEST_F(TrainingTest, SmokeLossDecreases) {
  const auto r = train(data, op, ref, cfg);
  ASSERT_EQ(r.trace.size(), 2u);
  for (const auto& e : r.trace) EXPECT_TRUE(std::isfinite(e.loss));
  EXPECT_LT(r.trace.back().loss, r.trace.front().loss);
}

TEST_F(TrainingTest, NoPriorFidelityDecreases) {
  cfg.lambda = 0.0;
  cfg.epochs = 5;
  const auto init = random_params(cfg.arch, 6, 0.1);
  const auto r = train(data, op, ref, cfg, init);
  EXPECT_LT(r.trace.back().fidelity, r.trace.front().fidelity);
}

TEST_F(TrainingTest, Deterministic) {
  const auto a = train(data, op, ref, cfg), b = train(data, op, ref, cfg);
  EXPECT_EQ(a.theta.values, b.theta.values);
  cfg.seed = 4;
  EXPECT_NE(train(data, op, ref, cfg).theta.values, a.theta.values);
}

TEST_F(TrainingTest, EmptyDataset) {
  EXPECT_THROW(train({}, op, ref, cfg), InvalidArgument);
}
