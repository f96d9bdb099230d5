#pragma once

// Exact W2^2 between two small uniform empirical measures.
//
// The uniform transportation problem is scaled to integers: with
// L = lcm(N, M) every source carries L/N units and every target L/M units.
// Integral optimal flows exist, so min-cost flow by successive shortest
// paths (Dijkstra with reduced costs) solves the LP exactly. For N = M this
// is the Hungarian method.

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "wpp/error.hpp"
#include "wpp/image.hpp"
#include "wpp/transport.hpp"

namespace wpp {

inline constexpr Index kExactTransportMaxPairs = 1000000;

struct ExactTransportResult {
  double value = 0.0;
  TransportPlan plan;
};

namespace detail {

/// Min-cost transportation with integer supplies on a dense cost matrix.
/// Returns the integer flow matrix.
inline Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> solve_transportation(
    const Eigen::MatrixXd& cost, std::int64_t supply, std::int64_t demand) {
  using Flow = std::int64_t;
  const Index n = cost.rows();
  const Index m = cost.cols();
  // nodes: 0 = super source, 1..n sources, n+1..n+m targets, n+m+1 = super sink
  const Index nodes = n + m + 2;
  const Index s_node = 0, t_node = n + m + 1;
  auto src_node = [](Index j) { return 1 + j; };
  auto dst_node = [n](Index k) { return 1 + n + k; };

  Eigen::Matrix<Flow, Eigen::Dynamic, Eigen::Dynamic> flow =
      Eigen::Matrix<Flow, Eigen::Dynamic, Eigen::Dynamic>::Zero(n, m);
  std::vector<Flow> left_supply(static_cast<std::size_t>(n), supply);
  std::vector<Flow> left_demand(static_cast<std::size_t>(m), demand);
  std::vector<double> pot(static_cast<std::size_t>(nodes), 0.0);
  std::vector<double> dist(static_cast<std::size_t>(nodes));
  std::vector<Index> prev(static_cast<std::size_t>(nodes));
  std::vector<char> done(static_cast<std::size_t>(nodes));
  const double inf = std::numeric_limits<double>::infinity();
  Flow remaining = supply * n;

  auto relax = [&](Index u, Index v, double c) {
    const double rc = std::max(0.0, c + pot[static_cast<std::size_t>(u)] - pot[static_cast<std::size_t>(v)]);
    const double nd = dist[static_cast<std::size_t>(u)] + rc;
    if (nd < dist[static_cast<std::size_t>(v)]) {
      dist[static_cast<std::size_t>(v)] = nd;
      prev[static_cast<std::size_t>(v)] = u;
    }
  };

  while (remaining > 0) {
    std::fill(dist.begin(), dist.end(), inf);
    std::fill(prev.begin(), prev.end(), Index{-1});
    std::fill(done.begin(), done.end(), 0);
    dist[static_cast<std::size_t>(s_node)] = 0.0;
    for (;;) {
      Index u = -1;
      double best = inf;
      for (Index v = 0; v < nodes; ++v)
        if (!done[static_cast<std::size_t>(v)] && dist[static_cast<std::size_t>(v)] < best) {
          best = dist[static_cast<std::size_t>(v)];
          u = v;
        }
      if (u < 0) break;
      done[static_cast<std::size_t>(u)] = 1;
      if (u == s_node) {
        for (Index j = 0; j < n; ++j)
          if (left_supply[static_cast<std::size_t>(j)] > 0) relax(u, src_node(j), 0.0);
      } else if (u <= n) {
        const Index j = u - 1;
        for (Index k = 0; k < m; ++k) relax(u, dst_node(k), cost(j, k));
      } else if (u < t_node) {
        const Index k = u - 1 - n;
        for (Index j = 0; j < n; ++j)
          if (flow(j, k) > 0) relax(u, src_node(j), -cost(j, k));
        if (left_demand[static_cast<std::size_t>(k)] > 0) relax(u, t_node, 0.0);
      }
    }
    if (dist[static_cast<std::size_t>(t_node)] == inf)
      throw Error("internal", "transportation solver found no augmenting path");
    const double dt = dist[static_cast<std::size_t>(t_node)];
    for (Index v = 0; v < nodes; ++v)
      pot[static_cast<std::size_t>(v)] += std::min(dist[static_cast<std::size_t>(v)], dt);

    // bottleneck along the path
    Flow push = remaining;
    for (Index v = t_node; v != s_node; v = prev[static_cast<std::size_t>(v)]) {
      const Index u = prev[static_cast<std::size_t>(v)];
      if (u == s_node) push = std::min(push, left_supply[static_cast<std::size_t>(v - 1)]);
      else if (v == t_node) push = std::min(push, left_demand[static_cast<std::size_t>(u - 1 - n)]);
      else if (u > n) push = std::min(push, flow(v - 1, u - 1 - n));  // backward arc
    }
    for (Index v = t_node; v != s_node; v = prev[static_cast<std::size_t>(v)]) {
      const Index u = prev[static_cast<std::size_t>(v)];
      if (u == s_node) left_supply[static_cast<std::size_t>(v - 1)] -= push;
      else if (v == t_node) left_demand[static_cast<std::size_t>(u - 1 - n)] -= push;
      else if (u > n) flow(v - 1, u - 1 - n) -= push;
      else flow(u - 1, v - 1 - n) += push;
    }
    remaining -= push;
  }
  return flow;
}

}  // namespace detail

/// Exact optimal value and an optimal plan. Guarded to N*M <= 10^6.
inline ExactTransportResult w2_exact_lp(const PatchDistribution& src, const PatchDistribution& ref) {
  detail::check_compatible(src, ref);
  const Index n = src.count();
  const Index m = ref.count();
  if (n * m > kExactTransportMaxPairs)
    throw CapacityError("exact transport limited to N*M <= 10^6, got " + std::to_string(n) + "*" +
                        std::to_string(m));
  Eigen::MatrixXd cost(n, m);
  for (Index k = 0; k < m; ++k)
    for (Index j = 0; j < n; ++j) cost(j, k) = (src.patch(j) - ref.patch(k)).squaredNorm();

  const std::int64_t total = std::lcm<std::int64_t>(n, m);
  const auto flow = detail::solve_transportation(cost, total / n, total / m);

  ExactTransportResult out;
  out.plan.pi = flow.cast<double>() / static_cast<double>(total);
  out.value = (out.plan.pi.array() * cost.array()).sum();
  return out;
}

}  // namespace wpp
