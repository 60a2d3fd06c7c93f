#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "repgn/errors.hpp"
#include "repgn/graph.hpp"
#include "repgn/parallel.hpp"
#include "repgn/spectral.hpp"

namespace repgn {

struct GcpoolConfig {
  int min_size = 3;        // components and parts smaller than this are dropped
  double stop_ncut = 0.5;  // largest N_cut at which a split is accepted
  int min_part = 1;        // smallest side a split may produce
  EigenOptions eigen{};
  unsigned threads = 1;
};

/// Part index per node of the pooled graph; std::nullopt for filtered nodes.
struct PseudoLabeling {
  std::vector<std::optional<int>> labels;
  int part_count = 0;
};

struct CoarseNode {
  Eigen::VectorXd feature;
  std::vector<NodeId> member_ids; // ascending
  int source_part = 0;
};

struct GcpoolResult {
  PseudoLabeling labeling;
  std::vector<CoarseNode> coarse;
  int component_count = 0;          // connected components before filtering
  std::vector<NodeId> filtered;     // dropped by the component-size filter
  std::vector<NodeId> refiltered;   // dropped after cutting (parts below min_size)
};

/// Arithmetic mean of the rows.
inline Eigen::VectorXd pool_part(const Eigen::MatrixXd &features) {
  if (features.rows() == 0)
    throw InvalidInput("pool_part: cannot pool an empty part");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(features.cols());
  for (Eigen::Index r = 0; r < features.rows(); ++r)
    sum += features.row(r).transpose();
  return sum / static_cast<double>(features.rows());
}

/// Graph Cut Pool: drop small connected components, split each surviving
/// component by recursive normalized cut, drop parts that came out smaller than
/// min_size, and average-pool the features of each remaining part.
inline GcpoolResult gcpool(const ProposalGraph &g, const GcpoolConfig &cfg = {}) {
  if (cfg.min_size < 1 || cfg.min_part < 1 || !(cfg.stop_ncut > 0.0))
    throw InvalidInput("gcpool: min_size, min_part and stop_ncut must be positive");
  const int m = g.node_count();
  GcpoolResult out;
  out.labeling.labels.assign(m, std::nullopt);

  const auto cc = connected_components(g);
  out.component_count = cc.component_count();
  std::vector<std::vector<int>> survivors;
  for (int c = 0; c < cc.component_count(); ++c) {
    auto members = cc.members(c);
    if (cc.component_sizes[c] >= cfg.min_size)
      survivors.push_back(std::move(members));
    else
      for (int u : members)
        out.filtered.push_back(g.node_ids()[u]);
  }

  // Each component is cut independently; results land in per-component slots.
  std::vector<std::vector<std::vector<int>>> cut_parts(survivors.size());
  parallel_for(survivors.size(), cfg.threads, [&](std::size_t c) {
    const auto &members = survivors[c];
    const auto sub = induced_subgraph(g, members);
    const auto p = recursive_ncut(sub, cfg.stop_ncut, cfg.min_part, cfg.eigen);
    cut_parts[c].assign(static_cast<std::size_t>(p.set_count), {});
    for (std::size_t k = 0; k < members.size(); ++k)
      cut_parts[c][static_cast<std::size_t>(p.labels[k])].push_back(members[k]);
  });

  std::vector<std::vector<int>> parts;
  for (auto &per_component : cut_parts) {
    for (auto &part : per_component) {
      if (static_cast<int>(part.size()) >= cfg.min_size)
        parts.push_back(std::move(part));
      else
        for (int u : part)
          out.refiltered.push_back(g.node_ids()[u]);
    }
  }
  std::sort(parts.begin(), parts.end(), [](const auto &a, const auto &b) { return a.front() < b.front(); });
  std::sort(out.filtered.begin(), out.filtered.end());
  std::sort(out.refiltered.begin(), out.refiltered.end());

  out.labeling.part_count = static_cast<int>(parts.size());
  for (std::size_t j = 0; j < parts.size(); ++j) {
    Eigen::MatrixXd rows(static_cast<Eigen::Index>(parts[j].size()), g.feature_dim());
    CoarseNode node;
    node.source_part = static_cast<int>(j);
    for (std::size_t k = 0; k < parts[j].size(); ++k) {
      const int u = parts[j][k];
      out.labeling.labels[u] = static_cast<int>(j);
      rows.row(static_cast<Eigen::Index>(k)) = g.features().row(u);
      node.member_ids.push_back(g.node_ids()[u]);
    }
    std::sort(node.member_ids.begin(), node.member_ids.end());
    node.feature = pool_part(rows);
    out.coarse.push_back(std::move(node));
  }
  return out;
}

/// Appends one node per coarse node, connected to every member of its part.
/// The weight to member u is the mean weight of u's edges to the other members
/// of the part, or 1 when u has no such edge (e.g. a singleton part). Coarse
/// nodes are not connected to each other. New ids continue after the largest
/// existing id.
inline ProposalGraph augment_with_coarse(const ProposalGraph &g, const std::vector<CoarseNode> &coarse) {
  if (coarse.empty())
    return g;
  const int m = g.node_count();
  std::unordered_map<NodeId, int> local;
  NodeId next_id = 0;
  for (int u = 0; u < m; ++u) {
    local.emplace(g.node_ids()[u], u);
    next_id = std::max(next_id, g.node_ids()[u] + 1);
  }

  auto ids = g.node_ids();
  auto edges = g.edges();
  Eigen::MatrixXd feats(m + static_cast<Eigen::Index>(coarse.size()), g.feature_dim());
  feats.topRows(m) = g.features();
  for (std::size_t k = 0; k < coarse.size(); ++k) {
    const auto &cn = coarse[k];
    if (cn.feature.size() != g.feature_dim())
      throw InvalidInput("augment_with_coarse: coarse feature dimension mismatch");
    const int node = m + static_cast<int>(k);
    ids.push_back(next_id + static_cast<NodeId>(k));
    feats.row(node) = cn.feature.transpose();

    std::vector<int> members;
    for (NodeId id : cn.member_ids) {
      auto it = local.find(id);
      if (it == local.end())
        throw InvalidInput("augment_with_coarse: member id " + std::to_string(id) + " not in graph");
      members.push_back(it->second);
    }
    for (int u : members) {
      double sum = 0.0;
      int count = 0;
      for (int v : members) {
        if (v == u)
          continue;
        const double w = g.weight(u, v);
        if (w > 0.0) {
          sum += w;
          ++count;
        }
      }
      edges.push_back({u, node, count > 0 ? sum / count : 1.0});
    }
  }
  return ProposalGraph(std::move(ids), std::move(feats), std::move(edges));
}

} // namespace repgn
