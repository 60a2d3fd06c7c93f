#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "repgn/errors.hpp"
#include "repgn/geometry.hpp"
#include "repgn/parallel.hpp"

namespace repgn {

using NodeId = std::int64_t;

/// Undirected weighted edge between local node indices, always i < j.
struct Edge {
  int i = 0;
  int j = 0;
  double w = 0.0;

  bool operator==(const Edge &) const = default;
};

/// Immutable undirected simple graph over proposals. Nodes are addressed by
/// local index [0, M); node_ids carries the stable external identifier of each
/// node so that subgraphs can be mapped back to the original proposal list.
class ProposalGraph {
public:
  struct Neighbor {
    int node;
    double w;
  };

  ProposalGraph() = default;

  ProposalGraph(std::vector<NodeId> node_ids, Eigen::MatrixXd features, std::vector<Edge> edges)
      : ids_(std::move(node_ids)), features_(std::move(features)), edges_(std::move(edges)) {
    const auto m = static_cast<int>(ids_.size());
    if (features_.rows() != 0 && features_.rows() != m)
      throw InvalidInput("graph: feature rows (" + std::to_string(features_.rows()) +
                         ") do not match node count (" + std::to_string(m) + ")");
    if (features_.rows() == 0)
      features_.resize(m, features_.cols());
    std::sort(edges_.begin(), edges_.end(),
              [](const Edge &a, const Edge &b) { return a.i != b.i ? a.i < b.i : a.j < b.j; });
    adjacency_.assign(m, {});
    degree_.assign(m, 0.0);
    for (std::size_t k = 0; k < edges_.size(); ++k) {
      const Edge &e = edges_[k];
      if (e.i < 0 || e.j >= m || e.i >= e.j)
        throw InvalidInput("graph: edge (" + std::to_string(e.i) + "," + std::to_string(e.j) +
                           ") violates 0 <= i < j < M");
      if (k > 0 && edges_[k - 1].i == e.i && edges_[k - 1].j == e.j)
        throw InvalidInput("graph: duplicate edge (" + std::to_string(e.i) + "," +
                           std::to_string(e.j) + ")");
      if (!std::isfinite(e.w) || e.w <= 0.0)
        throw InvalidInput("graph: edge weight must be finite and positive");
      adjacency_[e.i].push_back({e.j, e.w});
      adjacency_[e.j].push_back({e.i, e.w});
    }
    for (int u = 0; u < m; ++u) {
      auto &row = adjacency_[u];
      std::sort(row.begin(), row.end(), [](const Neighbor &a, const Neighbor &b) { return a.node < b.node; });
      double d = 0.0;
      for (const auto &nb : row)
        d += nb.w;
      degree_[u] = d;
    }
  }

  int node_count() const { return static_cast<int>(ids_.size()); }
  Eigen::Index feature_dim() const { return features_.cols(); }
  const std::vector<NodeId> &node_ids() const { return ids_; }
  const Eigen::MatrixXd &features() const { return features_; }
  const std::vector<Edge> &edges() const { return edges_; }
  /// Neighbors of u sorted by local index.
  const std::vector<Neighbor> &neighbors(int u) const { return adjacency_[u]; }
  double weighted_degree(int u) const { return degree_[u]; }

  double total_weight() const {
    double s = 0.0;
    for (const auto &e : edges_)
      s += e.w;
    return s;
  }

  /// Weight of edge (u, v), 0 if absent.
  double weight(int u, int v) const {
    const auto &row = adjacency_[u];
    auto it = std::lower_bound(row.begin(), row.end(), v,
                               [](const Neighbor &nb, int x) { return nb.node < x; });
    return (it != row.end() && it->node == v) ? it->w : 0.0;
  }

private:
  std::vector<NodeId> ids_;
  Eigen::MatrixXd features_;
  std::vector<Edge> edges_;
  std::vector<std::vector<Neighbor>> adjacency_;
  std::vector<double> degree_;
};

/// Connects every pair of proposals whose IoU strictly exceeds iou_thr, using
/// the IoU as the edge weight. Node ids are 0..M-1.
inline ProposalGraph build_graph(std::span<const BoundingBox> boxes, const Eigen::MatrixXd &features,
                                 double iou_thr, unsigned threads = 1) {
  const auto m = static_cast<int>(boxes.size());
  if (features.rows() != m)
    throw InvalidInput("build_graph: " + std::to_string(m) + " boxes but " +
                       std::to_string(features.rows()) + " feature rows");
  if (!(iou_thr >= 0.0 && iou_thr < 1.0))
    throw InvalidInput("build_graph: iou_thr must lie in [0,1)");

  std::vector<std::vector<Edge>> rows(m);
  parallel_for(static_cast<std::size_t>(m), threads, [&](std::size_t iu) {
    const int i = static_cast<int>(iu);
    for (int j = i + 1; j < m; ++j) {
      const double w = iou(boxes[i], boxes[j]);
      if (w > iou_thr)
        rows[i].push_back({i, j, w});
    }
  });
  std::vector<Edge> edges;
  for (auto &r : rows)
    edges.insert(edges.end(), r.begin(), r.end());

  std::vector<NodeId> ids(m);
  std::iota(ids.begin(), ids.end(), NodeId{0});
  return ProposalGraph(std::move(ids), features, std::move(edges));
}

struct ComponentLabeling {
  std::vector<int> labels;
  std::vector<int> component_sizes;

  int component_count() const { return static_cast<int>(component_sizes.size()); }

  /// Local node indices of component c, ascending.
  std::vector<int> members(int c) const {
    std::vector<int> out;
    for (int u = 0; u < static_cast<int>(labels.size()); ++u)
      if (labels[u] == c)
        out.push_back(u);
    return out;
  }
};

/// Components are numbered in ascending order of their smallest node index.
inline ComponentLabeling connected_components(const ProposalGraph &g) {
  const int m = g.node_count();
  ComponentLabeling out;
  out.labels.assign(m, -1);
  std::vector<int> stack;
  for (int s = 0; s < m; ++s) {
    if (out.labels[s] >= 0)
      continue;
    const int c = out.component_count();
    int size = 0;
    out.labels[s] = c;
    stack.push_back(s);
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      ++size;
      for (const auto &nb : g.neighbors(u)) {
        if (out.labels[nb.node] < 0) {
          out.labels[nb.node] = c;
          stack.push_back(nb.node);
        }
      }
    }
    out.component_sizes.push_back(size);
  }
  return out;
}

inline bool is_connected(const ProposalGraph &g) {
  return g.node_count() <= 1 || connected_components(g).component_count() == 1;
}

/// Subgraph induced by the given local node indices (ascending, unique).
/// Node ids, feature rows and edge weights are carried over unchanged.
inline ProposalGraph induced_subgraph(const ProposalGraph &g, std::span<const int> nodes) {
  std::vector<int> local(g.node_count(), -1);
  std::vector<NodeId> ids;
  ids.reserve(nodes.size());
  Eigen::MatrixXd feats(static_cast<Eigen::Index>(nodes.size()), g.feature_dim());
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const int u = nodes[k];
    if (u < 0 || u >= g.node_count() || local[u] >= 0 || (k > 0 && nodes[k - 1] >= u))
      throw InvalidInput("induced_subgraph: node list must be ascending, unique and in range");
    local[u] = static_cast<int>(k);
    ids.push_back(g.node_ids()[u]);
    feats.row(static_cast<Eigen::Index>(k)) = g.features().row(u);
  }
  std::vector<Edge> edges;
  for (const auto &e : g.edges())
    if (local[e.i] >= 0 && local[e.j] >= 0)
      edges.push_back({local[e.i], local[e.j], e.w});
  return ProposalGraph(std::move(ids), std::move(feats), std::move(edges));
}

struct FilterResult {
  ProposalGraph graph;
  std::vector<NodeId> removed;
};

/// Drops every connected component with fewer than min_size nodes.
inline FilterResult filter_components(const ProposalGraph &g, int min_size) {
  if (min_size < 1)
    throw InvalidInput("filter_components: min_size must be >= 1");
  const auto cc = connected_components(g);
  std::vector<int> keep;
  FilterResult out;
  for (int u = 0; u < g.node_count(); ++u) {
    if (cc.component_sizes[cc.labels[u]] >= min_size)
      keep.push_back(u);
    else
      out.removed.push_back(g.node_ids()[u]);
  }
  std::sort(out.removed.begin(), out.removed.end());
  out.graph = induced_subgraph(g, keep);
  return out;
}

} // namespace repgn
