#pragma once

// Semi-discrete Wasserstein-2 between empirical patch distributions through
// the Kantorovich semi-dual
//
//   F(psi) = 1/N sum_j psi^c(P_j) + 1/M sum_k psi_k,
//   psi^c(p) = min_k ||p - q_k||^2 - psi_k,
//
// maximised over psi in R^M by (stochastic) gradient ascent.

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include "wpp/error.hpp"
#include "wpp/image.hpp"

namespace wpp {

/// Kantorovich potential, one entry per reference patch.
struct DualPotential {
  Eigen::VectorXd values;

  static DualPotential zeros(Index n) { return {Eigen::VectorXd::Zero(n)}; }
  Index size() const { return values.size(); }
};

/// kappa[j] = index of the reference patch attaining the c-transform of source patch j.
using Assignment = std::vector<Index>;

/// N x M coupling; rows sum to 1/N, columns to 1/M.
struct TransportPlan {
  Eigen::MatrixXd pi;
};

struct DualAscentConfig {
  int steps = 20;
  double step_size = 1.0;
  /// Step t uses step_size / (1 + decay * t); 0 keeps the step constant.
  double decay = 0.0;
  /// Source patches sampled per step; 0 means every source patch.
  Index minibatch = 10000;
  std::uint64_t seed = 0;

  void validate() const {
    if (steps < 0) throw InvalidArgument("dual ascent steps must be >= 0");
    if (!(step_size > 0.0)) throw InvalidArgument("dual ascent step size must be > 0");
    if (!(decay >= 0.0)) throw InvalidArgument("dual ascent decay must be >= 0");
    if (minibatch < 0) throw InvalidArgument("dual ascent minibatch must be >= 0");
  }
};

struct CTransformValue {
  double value = 0.0;
  Index kappa = 0;
};

namespace detail {

inline void check_compatible(const DualPotential& psi, const PatchDistribution& ref) {
  if (psi.size() != ref.count())
    throw DimensionError("potential has " + std::to_string(psi.size()) + " entries, reference has " +
                         std::to_string(ref.count()) + " patches");
}

inline void check_compatible(const PatchDistribution& src, const PatchDistribution& ref) {
  if (!(src.shape() == ref.shape()))
    throw DimensionError("patch shapes differ: " + dims_str(src.shape().rows, src.shape().cols) +
                         " vs " + dims_str(ref.shape().rows, ref.shape().cols));
}

/// Evaluates the c-transform for a set of source columns. The argmin is found
/// from ||q||^2 - psi - 2 q.p scored blockwise with a matrix product; the
/// returned value is recomputed exactly from the winning difference.
/// Ties resolve to the lowest reference index.
class NearestPotentialSearch {
 public:
  NearestPotentialSearch(const PatchDistribution& ref, const DualPotential& psi)
      : ref_(ref.matrix()), psi_(psi.values) {
    offset_ = ref_.colwise().squaredNorm().transpose() - psi_;
    const Index m = ref_.cols();
    block_ = std::max<Index>(1, std::min<Index>(512, (Index{1} << 21) / std::max<Index>(m, 1)));
  }

  template <typename Sources, typename Visit>
  void run(const Sources& src, const std::vector<Index>* subset, Visit&& visit) const {
    const Index total = subset ? static_cast<Index>(subset->size()) : src.cols();
    Eigen::MatrixXd chunk;
    Eigen::MatrixXd scores;
    for (Index start = 0; start < total; start += block_) {
      const Index len = std::min(block_, total - start);
      chunk.resize(src.rows(), len);
      for (Index b = 0; b < len; ++b)
        chunk.col(b) = src.col(subset ? (*subset)[static_cast<std::size_t>(start + b)] : start + b);
      scores.noalias() = -2.0 * ref_.transpose() * chunk;
      scores.colwise() += offset_;
      for (Index b = 0; b < len; ++b) {
        Index best = 0;
        double best_score = scores(0, b);
        for (Index k = 1; k < scores.rows(); ++k) {
          if (scores(k, b) < best_score) {
            best_score = scores(k, b);
            best = k;
          }
        }
        const double exact = (chunk.col(b) - ref_.col(best)).squaredNorm() - psi_(best);
        visit(start + b, CTransformValue{exact, best});
      }
    }
  }

 private:
  const Eigen::MatrixXd& ref_;
  const Eigen::VectorXd& psi_;
  Eigen::VectorXd offset_;
  Index block_ = 1;
};

}  // namespace detail

/// psi^c(p) and the lowest minimising reference index.
inline CTransformValue c_transform(const DualPotential& psi, const Patch& p,
                                   const PatchDistribution& ref) {
  detail::check_compatible(psi, ref);
  if (!(p.shape == ref.shape()) || p.values.size() != ref.dim())
    throw DimensionError("patch shape does not match reference distribution");
  CTransformValue best{std::numeric_limits<double>::infinity(), 0};
  for (Index k = 0; k < ref.count(); ++k) {
    const double v = (p.values - ref.patch(k)).squaredNorm() - psi.values(k);
    if (v < best.value) best = {v, k};
  }
  return best;
}

/// c-transform of every source patch: values and argmin indices.
inline std::pair<Eigen::VectorXd, Assignment> c_transform_all(const DualPotential& psi,
                                                              const PatchDistribution& src,
                                                              const PatchDistribution& ref) {
  detail::check_compatible(src, ref);
  detail::check_compatible(psi, ref);
  Eigen::VectorXd values(src.count());
  Assignment kappa(static_cast<std::size_t>(src.count()));
  detail::NearestPotentialSearch(ref, psi).run(src.matrix(), nullptr,
                                               [&](Index j, CTransformValue c) {
                                                 values(j) = c.value;
                                                 kappa[static_cast<std::size_t>(j)] = c.kappa;
                                               });
  return {std::move(values), std::move(kappa)};
}

/// Semi-dual objective F(psi); a lower bound on W2^2 for every psi.
inline double dual_objective(const DualPotential& psi, const PatchDistribution& src,
                             const PatchDistribution& ref) {
  const auto [values, kappa] = c_transform_all(psi, src, ref);
  return values.mean() + psi.values.mean();
}

/// Gradient ascent on F. Each step estimates
///   dF/dpsi_k = 1/M - #{j in batch : kappa(j) = k} / |batch|
/// from a minibatch of source patches (all of them when minibatch is 0 or
/// at least N). Deterministic for a fixed seed.
inline DualPotential ascend_dual(const PatchDistribution& src, const PatchDistribution& ref,
                                 DualPotential psi, const DualAscentConfig& cfg) {
  cfg.validate();
  detail::check_compatible(src, ref);
  detail::check_compatible(psi, ref);
  if (cfg.steps == 0) return psi;

  const Index n = src.count();
  const Index m = ref.count();
  const bool full = cfg.minibatch == 0 || cfg.minibatch >= n;
  const Index batch = full ? n : cfg.minibatch;

  std::mt19937_64 rng(cfg.seed);
  std::vector<Index> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), Index{0});
  std::vector<Index> picked(static_cast<std::size_t>(batch));
  Eigen::VectorXd hist(m);

  for (int step = 0; step < cfg.steps; ++step) {
    if (!full) {
      for (Index i = 0; i < batch; ++i) {
        std::uniform_int_distribution<Index> pick(i, n - 1);
        std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
      }
      std::copy_n(pool.begin(), batch, picked.begin());
    }
    hist.setZero();
    detail::NearestPotentialSearch(ref, psi).run(
        src.matrix(), full ? nullptr : &picked,
        [&](Index, CTransformValue c) { hist(c.kappa) += 1.0; });
    const Eigen::VectorXd grad =
        Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m)) - hist / static_cast<double>(batch);
    psi.values += cfg.step_size / (1.0 + cfg.decay * step) * grad;
  }
  return psi;
}

struct SemidualResult {
  double value = 0.0;
  DualPotential psi;
  Assignment assign;
};

/// W2^2 estimate: F at the ascended potential, with the per-patch argmins.
/// `psi0` warm-starts the ascent (zeros when absent).
inline SemidualResult w2_semidual(const PatchDistribution& src, const PatchDistribution& ref,
                                  const DualAscentConfig& cfg,
                                  std::optional<DualPotential> psi0 = std::nullopt) {
  detail::check_compatible(src, ref);
  DualPotential start = psi0 ? std::move(*psi0) : DualPotential::zeros(ref.count());
  SemidualResult out;
  out.psi = ascend_dual(src, ref, std::move(start), cfg);
  auto [values, kappa] = c_transform_all(out.psi, src, ref);
  out.value = values.mean() + out.psi.values.mean();
  out.assign = std::move(kappa);
  return out;
}

/// Gradient of the fixed-assignment objective
///   1/N sum_j ||P_j(x) - q_kappa(j)||^2
/// with respect to the pixels of x: each residual 2/N (P_j(x) - q_kappa(j))
/// is overlap-added back to the pixels of patch j.
inline Image w2_gradient_image(const Image& x, const PatchDistribution& ref, const Assignment& assign,
                               PatchShape shape) {
  const auto [n1, n2] = patch_grid(x, shape);
  const Index n = n1 * n2;
  if (!(shape == ref.shape())) throw DimensionError("gradient: patch shape differs from reference");
  if (static_cast<Index>(assign.size()) != n)
    throw DimensionError("assignment has " + std::to_string(assign.size()) + " entries, image has " +
                         std::to_string(n) + " patches");
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(x.rows(), x.cols());
  const double scale = 2.0 / static_cast<double>(n);
  const auto& xm = x.matrix();
  for (Index c = 0; c < n2; ++c)
    for (Index r = 0; r < n1; ++r) {
      const Index k = assign[static_cast<std::size_t>(r + c * n1)];
      if (k < 0 || k >= ref.count()) throw DimensionError("assignment index out of range");
      const auto q = ref.patch(k);
      for (Index b = 0; b < shape.cols; ++b)
        grad.col(c + b).segment(r, shape.rows) +=
            scale * (xm.col(c + b).segment(r, shape.rows) - q.segment(b * shape.rows, shape.rows));
    }
  return Image(std::move(grad));
}

inline Image w2_gradient_image(const Image& x, const PatchDistribution& ref, const Assignment& assign,
                               Index s1, Index s2) {
  return w2_gradient_image(x, ref, assign, PatchShape{s1, s2});
}

}  // namespace wpp
