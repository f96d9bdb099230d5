#pragma once

// Variational reconstruction with the Wasserstein patch prior:
//
//   J(x) = 1/2 ||f(x) - y||^2 + lambda * W2^2(mu_x, mu_ref)
//
// minimised by Adam from the bicubic upsampling of y. The W2 term is the
// semi-dual at a potential that is re-ascended (warm started) every step.

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

#include "wpp/adam.hpp"
#include "wpp/error.hpp"
#include "wpp/forward_operator.hpp"
#include "wpp/image.hpp"
#include "wpp/transport.hpp"

namespace wpp {

struct ReconstructionConfig {
  double lambda = 12.5;
  /// Observation noise level; only used to report rho = lambda / sigma^2.
  double noise_sigma = 0.01;
  int outer_iterations = 200;
  AdamConfig adam{0.01, 0.9, 0.999, 1e-8};
  DualAscentConfig dual{};
  PatchShape patch{6, 6};
  Index reference_subsample = 10000;

  /// Weight of the prior in the MAP reading: p(x) ~ exp(-rho W2^2).
  double rho() const { return lambda / (noise_sigma * noise_sigma); }

  void validate() const {
    if (!(lambda >= 0.0)) throw InvalidArgument("lambda must be >= 0");
    if (outer_iterations < 0) throw InvalidArgument("outer iterations must be >= 0");
    if (reference_subsample < 1) throw InvalidArgument("reference subsample must be >= 1");
    adam.validate();
    dual.validate();
  }
};

struct ObjectiveValue {
  double total = 0.0;
  double fidelity = 0.0;
  double wpp = 0.0;
};

struct GradientResult {
  Image grad;
  DualPotential psi;
  ObjectiveValue value;
};

namespace detail {

inline void check_reconstruction_dims(const Image& x, const Image& y, const ForwardOperator& op) {
  const auto [r, c] = op.output_dims(x.rows(), x.cols());
  if (r != y.rows() || c != y.cols())
    throw DimensionError("f(x) has dims " + dims_str(r, c) + " but y is " + dims_str(y.rows(), y.cols()));
}

}  // namespace detail

/// Objective at the potential ascended from `psi_warm` (zeros if absent).
inline ObjectiveValue objective(const Image& x, const Image& y, const ForwardOperator& op,
                                const PatchDistribution& ref, const ReconstructionConfig& cfg,
                                std::optional<DualPotential> psi_warm = std::nullopt) {
  cfg.validate();
  detail::check_reconstruction_dims(x, y, op);
  ObjectiveValue v;
  v.fidelity = 0.5 * (apply_forward(x, op).matrix() - y.matrix()).squaredNorm();
  if (cfg.lambda > 0.0) v.wpp = w2_semidual(extract_patches(x, cfg.patch), ref, cfg.dual, std::move(psi_warm)).value;
  v.total = v.fidelity + cfg.lambda * v.wpp;
  return v;
}

/// Objective with a frozen potential and assignment:
///   1/2 ||f(x)-y||^2 + lambda (1/N sum_j ||P_j(x) - q_kappa(j)||^2 - psi_kappa(j) + mean psi).
/// Equals objective() wherever kappa is the c-transform argmin at psi.
inline double frozen_objective(const Image& x, const Image& y, const ForwardOperator& op,
                               const PatchDistribution& ref, const ReconstructionConfig& cfg,
                               const DualPotential& psi, const Assignment& assign) {
  detail::check_reconstruction_dims(x, y, op);
  const double fid = 0.5 * (apply_forward(x, op).matrix() - y.matrix()).squaredNorm();
  const auto src = extract_patches(x, cfg.patch);
  if (static_cast<Index>(assign.size()) != src.count()) throw DimensionError("stale assignment");
  double acc = 0.0;
  for (Index j = 0; j < src.count(); ++j) {
    const Index k = assign[static_cast<std::size_t>(j)];
    acc += (src.patch(j) - ref.patch(k)).squaredNorm() - psi.values(k);
  }
  return fid + cfg.lambda * (acc / static_cast<double>(src.count()) + psi.values.mean());
}

/// Gradient of the frozen objective: f^T(f(x) - y) + lambda * overlap-added patch residuals.
inline Image frozen_gradient(const Image& x, const Image& y, const ForwardOperator& op,
                             const PatchDistribution& ref, const ReconstructionConfig& cfg,
                             const Assignment& assign) {
  detail::check_reconstruction_dims(x, y, op);
  Image residual(Eigen::MatrixXd(apply_forward(x, op).matrix() - y.matrix()));
  Image g = apply_adjoint(residual, op, x.rows(), x.cols());
  if (cfg.lambda > 0.0) g.matrix() += cfg.lambda * w2_gradient_image(x, ref, assign, cfg.patch).matrix();
  return g;
}

/// Full gradient: ascend psi from the warm start, take the induced
/// assignment and differentiate the frozen objective there.
inline GradientResult gradient(const Image& x, const Image& y, const ForwardOperator& op,
                               const PatchDistribution& ref, const ReconstructionConfig& cfg,
                               std::optional<DualPotential> psi_warm = std::nullopt) {
  cfg.validate();
  detail::check_reconstruction_dims(x, y, op);
  Image residual(Eigen::MatrixXd(apply_forward(x, op).matrix() - y.matrix()));
  GradientResult out{apply_adjoint(residual, op, x.rows(), x.cols()),
                     psi_warm ? *psi_warm : DualPotential::zeros(ref.count()),
                     {}};
  out.value.fidelity = 0.5 * residual.matrix().squaredNorm();
  if (cfg.lambda > 0.0) {
    auto w2 = w2_semidual(extract_patches(x, cfg.patch), ref, cfg.dual, std::move(psi_warm));
    out.grad.matrix() += cfg.lambda * w2_gradient_image(x, ref, w2.assign, cfg.patch).matrix();
    out.psi = std::move(w2.psi);
    out.value.wpp = w2.value;
  }
  out.value.total = out.value.fidelity + cfg.lambda * out.value.wpp;
  return out;
}

struct ReconstructionResult {
  Image x;
  /// Objective before every update, plus one entry for the returned iterate.
  std::vector<ObjectiveValue> trace;
};

/// Adam descent on J from bicubic_upsample(y, stride). The potential is
/// warm-started across iterations; the output is clamped to [0,1] only at
/// the end.
inline ReconstructionResult reconstruct(const Image& y, const ForwardOperator& op,
                                        const PatchDistribution& ref, const ReconstructionConfig& cfg) {
  cfg.validate();
  if (!(cfg.patch == ref.shape())) throw DimensionError("reference patch shape differs from config");
  Image x = bicubic_upsample(y, op.stride);
  detail::check_reconstruction_dims(x, y, op);

  ReconstructionResult out;
  std::optional<DualPotential> psi;
  Adam adam(x.size(), cfg.adam);
  for (int it = 0; it < cfg.outer_iterations; ++it) {
    DualAscentConfig dual = cfg.dual;
    dual.seed = cfg.dual.seed + static_cast<std::uint64_t>(it);
    ReconstructionConfig step_cfg = cfg;
    step_cfg.dual = dual;
    auto g = gradient(x, y, op, ref, step_cfg, std::move(psi));
    out.trace.push_back(g.value);
    psi = std::move(g.psi);
    Eigen::Map<Eigen::VectorXd> params(x.matrix().data(), x.size());
    adam.step(params, Eigen::Map<const Eigen::VectorXd>(g.grad.matrix().data(), g.grad.size()));
  }
  if (cfg.outer_iterations > 0) {
    ReconstructionConfig last = cfg;
    last.dual.seed = cfg.dual.seed + static_cast<std::uint64_t>(cfg.outer_iterations);
    out.trace.push_back(objective(x, y, op, ref, last, psi));
  } else {
    out.trace.push_back(objective(x, y, op, ref, cfg));
  }
  x.matrix() = x.matrix().cwiseMax(0.0).cwiseMin(1.0);
  out.x = std::move(x);
  return out;
}

}  // namespace wpp
