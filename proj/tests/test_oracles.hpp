#pragma once

// Independent reference computations used only by the tests. None of these
// call into the library routine they are used to check.

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "repgn/geometry.hpp"
#include "repgn/graph.hpp"

namespace repgn::fixtures {

/// IoU by counting the centers of an n x n raster of the unit square.
inline double raster_iou(const BoundingBox &a, const BoundingBox &b, int n) {
  long inter = 0, uni = 0;
  auto inside = [](const BoundingBox &r, double x, double y) {
    return r.x1() < x && x < r.x2() && r.y1() < y && y < r.y2();
  };
  for (int i = 0; i < n; ++i) {
    const double x = (i + 0.5) / n;
    for (int j = 0; j < n; ++j) {
      const double y = (j + 0.5) / n;
      const bool ia = inside(a, x, y), ib = inside(b, x, y);
      inter += ia && ib;
      uni += ia || ib;
    }
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Dense symmetric weight matrix of a graph.
inline Eigen::MatrixXd dense_weights(const ProposalGraph &g) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(g.node_count(), g.node_count());
  for (const auto &e : g.edges()) {
    w(e.i, e.j) = e.w;
    w(e.j, e.i) = e.w;
  }
  return w;
}

/// N_cut by explicit double loops over the dense weight matrix.
inline double enumerate_ncut(const ProposalGraph &g, const std::vector<int> &labels, int set_count) {
  const Eigen::MatrixXd w = dense_weights(g);
  double total = 0.0;
  for (int s = 0; s < set_count; ++s) {
    double cut = 0.0, assoc = 0.0;
    for (int u = 0; u < g.node_count(); ++u) {
      if (labels[u] != s)
        continue;
      for (int v = 0; v < g.node_count(); ++v) {
        assoc += w(u, v);
        if (labels[v] != s)
          cut += w(u, v);
      }
    }
    total += cut / assoc;
  }
  return total;
}

/// Brute-force minimum 2-way N_cut value over all 2^(n-1) - 1 bipartitions.
inline double enumerate_min_ncut(const ProposalGraph &g) {
  const int n = g.node_count();
  double best = INFINITY;
  for (unsigned mask = 1; mask < (1u << (n - 1)); ++mask) {
    std::vector<int> labels(n, 0);
    for (int u = 1; u < n; ++u)
      labels[u] = (mask >> (u - 1)) & 1u;
    const double v = enumerate_ncut(g, labels, 2);
    if (std::isfinite(v))
      best = std::min(best, v);
  }
  return best;
}

/// Unit-weight graph from an edge list.
inline ProposalGraph unit_graph(int n, const std::vector<std::pair<int, int>> &pairs, double w = 1.0) {
  std::vector<Edge> edges;
  for (auto [a, b] : pairs)
    edges.push_back({std::min(a, b), std::max(a, b), w});
  std::vector<NodeId> ids(n);
  for (int k = 0; k < n; ++k)
    ids[k] = k;
  return ProposalGraph(ids, Eigen::MatrixXd(n, 0), edges);
}

/// Two unit triangles {0,1,2} and {3,4,5} joined by a 2-3 bridge.
inline ProposalGraph bridged_triangles(double bridge = 0.1, int extra_isolated = 0) {
  std::vector<Edge> edges = {{0, 1, 1.0}, {0, 2, 1.0}, {1, 2, 1.0}, {3, 4, 1.0}, {3, 5, 1.0}, {4, 5, 1.0},
                             {2, 3, bridge}};
  const int n = 6 + extra_isolated;
  std::vector<NodeId> ids(n);
  for (int k = 0; k < n; ++k)
    ids[k] = k;
  return ProposalGraph(ids, Eigen::MatrixXd(n, 0), edges);
}

} // namespace repgn::fixtures
