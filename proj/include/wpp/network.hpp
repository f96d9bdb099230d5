#pragma once

// Small residual superresolution CNN trained with the batch-merged
// Wasserstein patch prior loss
//
//   L(theta) = 1/b sum_i ||f(G(y_i)) - y_i||^2 + lambda W2^2(1/b sum_i mu_{G(y_i)}, mu_ref).
//
// G(y) = up(y) + R(up(y)) where up is bicubic upsampling and R is a stack of
// 3x3 zero-padded convolutions with ReLU between layers and a linear last
// layer. Gradients are hand-derived reverse mode.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "wpp/adam.hpp"
#include "wpp/error.hpp"
#include "wpp/forward_operator.hpp"
#include "wpp/image.hpp"
#include "wpp/transport.hpp"

namespace wpp {

struct NetworkArch {
  int depth = 8;
  int channels = 32;
  Index factor = 4;

  void validate() const {
    if (depth < 1) throw InvalidArgument("network depth must be >= 1");
    if (channels < 1) throw InvalidArgument("network channels must be >= 1");
    if (factor < 1) throw InvalidArgument("upsample factor must be >= 1");
  }
  friend bool operator==(const NetworkArch&, const NetworkArch&) = default;
};

/// Offsets of one 3x3 convolution inside the flat parameter vector.
/// Weight (o, i, a, b) lives at weights + ((o * in + i) * 3 + a) * 3 + b.
struct ConvLayout {
  Index in = 1;
  Index out = 1;
  Index weights = 0;
  Index bias = 0;

  Index w(Index o, Index i, Index a, Index b) const { return weights + ((o * in + i) * 3 + a) * 3 + b; }
};

inline std::vector<ConvLayout> conv_layouts(const NetworkArch& arch) {
  arch.validate();
  std::vector<ConvLayout> layers;
  Index at = 0;
  for (int l = 0; l < arch.depth; ++l) {
    ConvLayout c;
    c.in = l == 0 ? 1 : arch.channels;
    c.out = l == arch.depth - 1 ? 1 : arch.channels;
    c.weights = at;
    at += c.out * c.in * 9;
    c.bias = at;
    at += c.out;
    layers.push_back(c);
  }
  return layers;
}

/// Network weights as one flat vector plus the architecture that lays it out.
struct NetworkParams {
  NetworkArch arch;
  Eigen::VectorXd values;

  static Index parameter_count(const NetworkArch& arch) {
    const auto layers = conv_layouts(arch);
    return layers.back().bias + layers.back().out;
  }

  static NetworkParams zeros(const NetworkArch& arch) {
    return {arch, Eigen::VectorXd::Zero(parameter_count(arch))};
  }

  /// He fan-in initialisation for hidden layers; the last layer starts at
  /// zero so the untrained network is exactly bicubic upsampling.
  static NetworkParams initialize(const NetworkArch& arch, std::uint64_t seed) {
    NetworkParams p = zeros(arch);
    std::mt19937_64 rng(seed);
    const auto layers = conv_layouts(arch);
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
      std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / (9.0 * static_cast<double>(layers[l].in))));
      for (Index k = 0; k < layers[l].out * layers[l].in * 9; ++k) p.values(layers[l].weights + k) = normal(rng);
    }
    return p;
  }

  void validate() const {
    if (values.size() != parameter_count(arch))
      throw DimensionError("parameter vector has " + std::to_string(values.size()) + " entries, architecture needs " +
                           std::to_string(parameter_count(arch)));
    if (!values.allFinite()) throw InvalidArgument("network parameters are not finite");
  }
};

namespace detail {

using Channels = std::vector<Eigen::MatrixXd>;

// Valid overlap of a 3x3 tap (dr, dc) on an R x C grid.
struct TapWindow {
  Index r0, c0, nr, nc;
};

inline TapWindow tap_window(Index rows, Index cols, Index dr, Index dc) {
  const Index r0 = std::max<Index>(0, -dr), c0 = std::max<Index>(0, -dc);
  const Index r1 = std::min(rows, rows - dr), c1 = std::min(cols, cols - dc);
  return {r0, c0, std::max<Index>(0, r1 - r0), std::max<Index>(0, c1 - c0)};
}

// out_o(r, c) = bias_o + sum_{i,a,b} w(o,i,a,b) in_i(r + a - 1, c + b - 1)
inline Channels conv3x3(const Channels& in, const Eigen::VectorXd& params, const ConvLayout& L) {
  const Index rows = in.front().rows(), cols = in.front().cols();
  Channels out(static_cast<std::size_t>(L.out));
  for (Index o = 0; o < L.out; ++o) out[static_cast<std::size_t>(o)] = Eigen::MatrixXd::Constant(rows, cols, params(L.bias + o));
  for (Index i = 0; i < L.in; ++i)
    for (Index a = 0; a < 3; ++a)
      for (Index b = 0; b < 3; ++b) {
        const auto win = tap_window(rows, cols, a - 1, b - 1);
        if (win.nr == 0 || win.nc == 0) continue;
        const auto src = in[static_cast<std::size_t>(i)].block(win.r0 + a - 1, win.c0 + b - 1, win.nr, win.nc);
        for (Index o = 0; o < L.out; ++o)
          out[static_cast<std::size_t>(o)].block(win.r0, win.c0, win.nr, win.nc) += params(L.w(o, i, a, b)) * src;
      }
  return out;
}

struct ForwardCache {
  Image upsampled;
  std::vector<Channels> inputs;  // input of every layer
  Image output;
};

inline ForwardCache forward_cached(const NetworkParams& theta, const Image& y) {
  theta.validate();
  const auto layers = conv_layouts(theta.arch);
  ForwardCache cache;
  cache.upsampled = bicubic_upsample(y, theta.arch.factor);
  Channels h{cache.upsampled.matrix()};
  for (std::size_t l = 0; l < layers.size(); ++l) {
    cache.inputs.push_back(h);
    h = conv3x3(h, theta.values, layers[l]);
    if (l + 1 < layers.size())
      for (auto& m : h) m = m.cwiseMax(0.0);
  }
  cache.output = Image(Eigen::MatrixXd(cache.upsampled.matrix() + h.front()));
  return cache;
}

// Accumulates d<G(y), upstream>/dtheta into grad.
inline void backward_cached(const NetworkParams& theta, const ForwardCache& cache, const Image& upstream,
                            Eigen::Ref<Eigen::VectorXd> grad) {
  const auto layers = conv_layouts(theta.arch);
  Channels gz{upstream.matrix()};
  for (std::size_t l = layers.size(); l-- > 0;) {
    const ConvLayout& L = layers[l];
    const Channels& h = cache.inputs[l];
    const Index rows = h.front().rows(), cols = h.front().cols();
    for (Index o = 0; o < L.out; ++o) grad(L.bias + o) += gz[static_cast<std::size_t>(o)].sum();
    Channels gh;
    if (l > 0) gh.assign(static_cast<std::size_t>(L.in), Eigen::MatrixXd::Zero(rows, cols));
    for (Index i = 0; i < L.in; ++i)
      for (Index a = 0; a < 3; ++a)
        for (Index b = 0; b < 3; ++b) {
          const auto win = tap_window(rows, cols, a - 1, b - 1);
          if (win.nr == 0 || win.nc == 0) continue;
          const auto src = h[static_cast<std::size_t>(i)].block(win.r0 + a - 1, win.c0 + b - 1, win.nr, win.nc);
          for (Index o = 0; o < L.out; ++o) {
            const auto g = gz[static_cast<std::size_t>(o)].block(win.r0, win.c0, win.nr, win.nc);
            grad(L.w(o, i, a, b)) += g.cwiseProduct(src).sum();
            if (l > 0)
              gh[static_cast<std::size_t>(i)].block(win.r0 + a - 1, win.c0 + b - 1, win.nr, win.nc) +=
                  theta.values(L.w(o, i, a, b)) * g;
          }
        }
    if (l > 0) {
      // the input of layer l is relu(z_{l-1}); relu(z) > 0 exactly where z > 0
      for (Index i = 0; i < L.in; ++i)
        gh[static_cast<std::size_t>(i)] =
            (h[static_cast<std::size_t>(i)].array() > 0.0).select(gh[static_cast<std::size_t>(i)], 0.0);
      gz = std::move(gh);
    }
  }
}

}  // namespace detail

/// G_theta(y) = bicubic(y) + residual(bicubic(y)).
inline Image forward_net(const NetworkParams& theta, const Image& y) {
  return detail::forward_cached(theta, y).output;
}

/// Gradient of <forward_net(theta, y), upstream> with respect to theta.
inline Eigen::VectorXd backward_net(const NetworkParams& theta, const Image& y, const Image& upstream) {
  const auto cache = detail::forward_cached(theta, y);
  require_same_dims(cache.output, upstream, "backward_net upstream");
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(theta.values.size());
  detail::backward_cached(theta, cache, upstream, grad);
  return grad;
}

struct TrainConfig {
  double lambda = 12.5;
  Index batch_size = 25;
  int epochs = 20;
  AdamConfig adam{1e-4, 0.9, 0.999, 1e-8};
  DualAscentConfig dual{};
  PatchShape patch{6, 6};
  NetworkArch arch{};
  std::uint64_t seed = 0;

  void validate() const {
    if (!(lambda >= 0.0)) throw InvalidArgument("lambda must be >= 0");
    if (batch_size < 1) throw InvalidArgument("batch size must be >= 1");
    if (epochs < 0) throw InvalidArgument("epochs must be >= 0");
    adam.validate();
    dual.validate();
    arch.validate();
  }
};

struct LossResult {
  double value = 0.0;
  double fidelity = 0.0;
  double wpp = 0.0;
  Eigen::VectorXd grad;
  DualPotential psi;
};

/// Batch-merged loss, its parameter gradient and the ascended potential.
/// The W2 gradient of image i under the merged measure is the single-image
/// overlap-add gradient weighted by N_i / N_total.
inline LossResult wppnet_loss(const NetworkParams& theta, std::span<const Image> batch, const ForwardOperator& op,
                              const PatchDistribution& ref, const TrainConfig& cfg,
                              std::optional<DualPotential> psi_warm = std::nullopt) {
  cfg.validate();
  if (batch.empty()) throw InvalidArgument("empty batch");
  if (!(cfg.patch == ref.shape())) throw DimensionError("reference patch shape differs from config");
  const double b = static_cast<double>(batch.size());

  std::vector<detail::ForwardCache> caches;
  std::vector<Image> residuals;
  std::vector<PatchDistribution> parts;
  LossResult out;
  for (const auto& y : batch) {
    caches.push_back(detail::forward_cached(theta, y));
    const Image& x = caches.back().output;
    const auto [r, c] = op.output_dims(x.rows(), x.cols());
    if (r != y.rows() || c != y.cols())
      throw DimensionError("f(G(y)) has dims " + detail::dims_str(r, c) + " but y is " +
                           detail::dims_str(y.rows(), y.cols()));
    residuals.emplace_back(Eigen::MatrixXd(apply_forward(x, op).matrix() - y.matrix()));
    out.fidelity += residuals.back().matrix().squaredNorm() / b;
    if (cfg.lambda > 0.0) parts.push_back(extract_patches(x, cfg.patch));
  }

  Assignment assign;
  Index total = 0;
  out.psi = psi_warm ? *psi_warm : DualPotential::zeros(ref.count());
  if (cfg.lambda > 0.0) {
    const auto merged = merge_distributions(parts);
    total = merged.count();
    auto w2 = w2_semidual(merged, ref, cfg.dual, std::move(psi_warm));
    out.wpp = w2.value;
    out.psi = std::move(w2.psi);
    assign = std::move(w2.assign);
  }
  out.value = out.fidelity + cfg.lambda * out.wpp;

  out.grad = Eigen::VectorXd::Zero(theta.values.size());
  Index offset = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Image& x = caches[i].output;
    Image upstream = apply_adjoint(residuals[i], op, x.rows(), x.cols());
    upstream.matrix() *= 2.0 / b;
    if (cfg.lambda > 0.0) {
      const Index n_i = parts[i].count();
      const Assignment local(assign.begin() + offset, assign.begin() + offset + n_i);
      offset += n_i;
      const double weight = cfg.lambda * static_cast<double>(n_i) / static_cast<double>(total);
      upstream.matrix() += weight * w2_gradient_image(x, ref, local, cfg.patch).matrix();
    }
    detail::backward_cached(theta, caches[i], upstream, out.grad);
  }
  return out;
}

inline LossResult wppnet_loss(const NetworkParams& theta, const std::vector<Image>& batch, const ForwardOperator& op,
                              const PatchDistribution& ref, const TrainConfig& cfg,
                              std::optional<DualPotential> psi_warm = std::nullopt) {
  return wppnet_loss(theta, std::span<const Image>(batch), op, ref, cfg, std::move(psi_warm));
}

struct EpochStats {
  double loss = 0.0;
  double fidelity = 0.0;
  double wpp = 0.0;
};

struct TrainResult {
  NetworkParams theta;
  std::vector<EpochStats> trace;  // mean over batches, one entry per epoch
};

/// Fixed disjoint batches from one seeded shuffle of the dataset.
inline std::vector<std::vector<std::size_t>> make_batches(std::size_t count, Index batch_size, std::uint64_t seed) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = count; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t at = 0; at < count; at += static_cast<std::size_t>(batch_size))
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(at),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(count, at + static_cast<std::size_t>(batch_size))));
  return batches;
}

/// Adam over cfg.epochs sweeps of a fixed batch partition. Each batch keeps
/// its own potential, warm-started from the previous epoch.
inline TrainResult train(const std::vector<Image>& dataset, const ForwardOperator& op, const PatchDistribution& ref,
                         const TrainConfig& cfg, std::optional<NetworkParams> init = std::nullopt) {
  cfg.validate();
  if (dataset.empty()) throw InvalidArgument("empty training set");
  TrainResult out{init ? *init : NetworkParams::initialize(cfg.arch, cfg.seed), {}};
  out.theta.validate();

  const auto batches = make_batches(dataset.size(), cfg.batch_size, cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::optional<DualPotential>> potentials(batches.size());
  Adam adam(out.theta.values.size(), cfg.adam);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochStats stats;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      std::vector<Image> batch;
      for (auto idx : batches[bi]) batch.push_back(dataset[idx]);
      TrainConfig step_cfg = cfg;
      step_cfg.dual.seed = cfg.dual.seed + static_cast<std::uint64_t>(epoch) * batches.size() + bi;
      auto loss = wppnet_loss(out.theta, batch, op, ref, step_cfg, potentials[bi]);
      potentials[bi] = std::move(loss.psi);
      adam.step(out.theta.values, loss.grad);
      stats.loss += loss.value;
      stats.fidelity += loss.fidelity;
      stats.wpp += loss.wpp;
    }
    const double nb = static_cast<double>(batches.size());
    out.trace.push_back({stats.loss / nb, stats.fidelity / nb, stats.wpp / nb});
  }
  return out;
}

}  // namespace wpp
