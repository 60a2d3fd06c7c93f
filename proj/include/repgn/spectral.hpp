#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "repgn/eigen_solver.hpp"
#include "repgn/errors.hpp"
#include "repgn/graph.hpp"

namespace repgn {

/// Assignment of every node of a graph to one of set_count disjoint,
/// non-empty sets.
struct Partition {
  std::vector<int> labels;
  int set_count = 0;

  bool operator==(const Partition &) const = default;
};

/// Relabels sets densely in order of their smallest member.
inline Partition canonical_partition(std::span<const int> labels) {
  Partition p;
  p.labels.resize(labels.size());
  std::vector<std::pair<int, int>> seen; // original -> canonical
  for (std::size_t u = 0; u < labels.size(); ++u) {
    auto it = std::find_if(seen.begin(), seen.end(), [&](const auto &s) { return s.first == labels[u]; });
    if (it == seen.end()) {
      seen.emplace_back(labels[u], static_cast<int>(seen.size()));
      p.labels[u] = seen.back().second;
    } else {
      p.labels[u] = it->second;
    }
  }
  p.set_count = static_cast<int>(seen.size());
  return p;
}

struct SetCut {
  double cut = 0.0;
  double assoc = 0.0;
};

struct CutReport {
  double ncut_value = 0.0;
  std::vector<SetCut> per_set;
};

/// Total connection from the given nodes to the whole graph, i.e. the sum of
/// their weighted degrees.
inline double assoc(const ProposalGraph &g, std::span<const int> set) {
  double s = 0.0;
  for (int u : set)
    s += g.weighted_degree(u);
  return s;
}

/// Weight of edges with exactly one endpoint in the given set.
inline double cut(const ProposalGraph &g, std::span<const int> set) {
  std::vector<char> in(g.node_count(), 0);
  for (int u : set)
    in[u] = 1;
  double s = 0.0;
  for (const auto &e : g.edges())
    if (in[e.i] != in[e.j])
      s += e.w;
  return s;
}

/// N_cut = sum over sets A of cut(A, V \ A) / assoc(A, V).
inline CutReport ncut_value(const ProposalGraph &g, const Partition &p) {
  const int m = g.node_count();
  if (static_cast<int>(p.labels.size()) != m)
    throw InvalidInput("ncut_value: partition covers " + std::to_string(p.labels.size()) +
                       " nodes, graph has " + std::to_string(m));
  if (p.set_count < 1 && m > 0)
    throw InvalidInput("ncut_value: partition has no sets");
  CutReport r;
  r.per_set.assign(static_cast<std::size_t>(std::max(p.set_count, 0)), {});
  std::vector<int> sizes(r.per_set.size(), 0);
  for (int l : p.labels) {
    if (l < 0 || l >= p.set_count)
      throw InvalidInput("ncut_value: label " + std::to_string(l) + " outside [0, set_count)");
    ++sizes[l];
  }
  for (std::size_t s = 0; s < sizes.size(); ++s)
    if (sizes[s] == 0)
      throw InvalidInput("ncut_value: set " + std::to_string(s) + " is empty");

  for (const auto &e : g.edges()) {
    const int a = p.labels[e.i];
    const int b = p.labels[e.j];
    r.per_set[a].assoc += e.w;
    r.per_set[b].assoc += e.w;
    if (a != b) {
      r.per_set[a].cut += e.w;
      r.per_set[b].cut += e.w;
    }
  }
  for (std::size_t s = 0; s < r.per_set.size(); ++s) {
    if (r.per_set[s].assoc <= 0.0)
      throw DegeneratePartition("ncut_value: set " + std::to_string(s) + " has zero assoc");
    r.ncut_value += r.per_set[s].cut / r.per_set[s].assoc;
  }
  return r;
}

/// L_sym = I - D^{-1/2} W D^{-1/2}.
inline Eigen::MatrixXd normalized_laplacian(const ProposalGraph &g) {
  const int m = g.node_count();
  Eigen::VectorXd inv_sqrt(m);
  for (int u = 0; u < m; ++u) {
    const double d = g.weighted_degree(u);
    if (!(d > 0.0))
      throw InvalidInput("normalized_laplacian: node " + std::to_string(u) + " has zero degree");
    inv_sqrt[u] = 1.0 / std::sqrt(d);
  }
  Eigen::MatrixXd l = Eigen::MatrixXd::Identity(m, m);
  for (const auto &e : g.edges()) {
    const double v = e.w * inv_sqrt[e.i] * inv_sqrt[e.j];
    l(e.i, e.j) -= v;
    l(e.j, e.i) -= v;
  }
  return l;
}

struct Eigenpair {
  double value = 0.0;
  Eigen::VectorXd vector;
};

/// Flips v so that its largest-magnitude entry (first one, within a relative
/// 1e-9 band) is positive.
inline void fix_sign(Eigen::VectorXd &v) {
  if (v.size() == 0)
    return;
  const double peak = v.cwiseAbs().maxCoeff();
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    if (std::abs(v[k]) >= peak * (1.0 - 1e-9)) {
      if (v[k] < 0)
        v = -v;
      return;
    }
  }
}

/// Second-smallest eigenpair of a symmetric Laplacian, unit norm, sign-fixed.
inline Eigenpair fiedler_vector(const Eigen::MatrixXd &laplacian, const EigenOptions &opts = {}) {
  if (laplacian.rows() < 2)
    throw InvalidInput("fiedler_vector: need at least 2 nodes");
  auto eig = symmetric_eigen(laplacian, opts);
  Eigenpair out{eig.values[1], eig.vectors.col(1)};
  out.vector.normalize();
  fix_sign(out.vector);
  return out;
}

struct TwoWayCut {
  Partition partition;
  CutReport report;
};

/// Spectral bipartition: orders nodes by the back-mapped Fiedler vector
/// y = D^{-1/2} z and takes the prefix split with the smallest exact N_cut
/// (ties go to the shortest prefix).
inline TwoWayCut two_way_ncut(const ProposalGraph &g, const EigenOptions &opts = {}) {
  const int m = g.node_count();
  if (m < 2)
    throw InvalidInput("two_way_ncut: need at least 2 nodes");
  if (!is_connected(g))
    throw InvalidInput("two_way_ncut: graph is not connected");

  const auto fiedler = fiedler_vector(normalized_laplacian(g), opts);
  std::vector<double> y(m);
  for (int u = 0; u < m; ++u)
    y[u] = fiedler.vector[u] / std::sqrt(g.weighted_degree(u));
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return y[a] < y[b]; });

  double volume = 0.0;
  for (int u = 0; u < m; ++u)
    volume += g.weighted_degree(u);

  std::vector<char> in_prefix(m, 0);
  double cut_w = 0.0;
  double assoc_a = 0.0;
  double best = std::numeric_limits<double>::infinity();
  int best_k = 1;
  for (int k = 1; k < m; ++k) {
    const int u = order[k - 1];
    double to_prefix = 0.0;
    for (const auto &nb : g.neighbors(u))
      if (in_prefix[nb.node])
        to_prefix += nb.w;
    in_prefix[u] = 1;
    cut_w += g.weighted_degree(u) - 2.0 * to_prefix;
    assoc_a += g.weighted_degree(u);
    const double value = cut_w / assoc_a + cut_w / (volume - assoc_a);
    if (value < best) {
      best = value;
      best_k = k;
    }
  }

  std::vector<int> labels(m, 1);
  for (int k = 0; k < best_k; ++k)
    labels[order[k]] = 0;
  TwoWayCut out;
  out.partition = canonical_partition(labels);
  out.report = ncut_value(g, out.partition);
  return out;
}

/// Hierarchical bipartitioning. A split is kept when its N_cut is at most
/// stop_ncut and both sides have at least min_part nodes; accepted sides are
/// split again. A side that falls apart into several connected components is
/// split along them (an N_cut of zero) under the same min_part rule.
inline Partition recursive_ncut(const ProposalGraph &g, double stop_ncut, int min_part = 1,
                                const EigenOptions &opts = {}) {
  if (g.node_count() == 0)
    return {};
  std::vector<std::vector<int>> leaves;

  auto recurse = [&](auto &&self, std::vector<int> nodes) -> void {
    if (nodes.size() < 2) {
      leaves.push_back(std::move(nodes));
      return;
    }
    const auto sub = induced_subgraph(g, nodes);
    const auto cc = connected_components(sub);
    if (cc.component_count() > 1) {
      const bool ok = std::all_of(cc.component_sizes.begin(), cc.component_sizes.end(),
                                  [&](int s) { return s >= min_part; });
      if (!ok || !(0.0 <= stop_ncut)) {
        leaves.push_back(std::move(nodes));
        return;
      }
      for (int c = 0; c < cc.component_count(); ++c) {
        std::vector<int> part;
        for (int local : cc.members(c))
          part.push_back(nodes[local]);
        self(self, std::move(part));
      }
      return;
    }
    const auto split = two_way_ncut(sub, opts);
    std::vector<int> side[2];
    for (std::size_t k = 0; k < nodes.size(); ++k)
      side[split.partition.labels[k]].push_back(nodes[k]);
    const bool accept = split.report.ncut_value <= stop_ncut &&
                        static_cast<int>(side[0].size()) >= min_part &&
                        static_cast<int>(side[1].size()) >= min_part;
    if (!accept) {
      leaves.push_back(std::move(nodes));
      return;
    }
    self(self, std::move(side[0]));
    self(self, std::move(side[1]));
  };

  std::vector<int> all(g.node_count());
  std::iota(all.begin(), all.end(), 0);
  recurse(recurse, std::move(all));

  std::vector<int> labels(g.node_count(), -1);
  for (std::size_t s = 0; s < leaves.size(); ++s)
    for (int u : leaves[s])
      labels[u] = static_cast<int>(s);
  return canonical_partition(labels);
}

/// Exhaustive minimum-N_cut bipartition; the verification oracle for
/// two_way_ncut. Node 0 always carries label 0, and among equal values
/// (within 1e-12) the lexicographically smallest label vector wins.
inline TwoWayCut brute_force_ncut(const ProposalGraph &g) {
  constexpr int max_nodes = 15;
  const int m = g.node_count();
  if (m > max_nodes)
    throw SizeLimit("brute_force_ncut: " + std::to_string(m) + " nodes exceeds limit of " +
                    std::to_string(max_nodes));
  if (m < 2)
    throw InvalidInput("brute_force_ncut: need at least 2 nodes");

  TwoWayCut best;
  bool found = false;
  Partition candidate;
  candidate.set_count = 2;
  candidate.labels.assign(m, 0);
  const unsigned limit = 1u << (m - 1);
  for (unsigned mask = 1; mask < limit; ++mask) {
    for (int u = 1; u < m; ++u)
      candidate.labels[u] = static_cast<int>((mask >> (u - 1)) & 1u);
    CutReport r;
    try {
      r = ncut_value(g, candidate);
    } catch (const DegeneratePartition &) {
      continue;
    }
    const double tol = 1e-12 * std::max(1.0, std::abs(best.report.ncut_value));
    const bool better = !found || r.ncut_value < best.report.ncut_value - tol;
    const bool tie = found && std::abs(r.ncut_value - best.report.ncut_value) <= tol &&
                     candidate.labels < best.partition.labels;
    if (better || tie) {
      best.partition = candidate;
      best.report = std::move(r);
      found = true;
    }
  }
  if (!found)
    throw DegeneratePartition("brute_force_ncut: every bipartition has a zero-assoc set");
  return best;
}

} // namespace repgn
