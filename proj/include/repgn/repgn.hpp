#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "repgn/attention.hpp"
#include "repgn/errors.hpp"
#include "repgn/gcpool.hpp"
#include "repgn/geometry.hpp"
#include "repgn/graph.hpp"

namespace repgn {

enum class NormMode { literal, moment_match };
enum class NormStats { global, per_channel };

struct RepGNConfig {
  double iou_thr = 0.3;
  int min_size = 3;
  double stop_ncut = 0.5;
  int min_part = 1;
  double lambda = 1.0;
  double epsilon = 1e-8;
  int head_count = 8;
  int layers = 1;
  NormMode norm_mode = NormMode::moment_match;
  NormStats norm_stats = NormStats::global;
  bool dense_attention = false;
  bool iou_bias = false;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  double eigen_tolerance = 1e-10;
  int eigen_max_iterations = 1000;

  void validate() const {
    if (!(iou_thr >= 0.0 && iou_thr < 1.0))
      throw InvalidInput("config: iou_thr must lie in [0,1)");
    if (min_size < 1)
      throw InvalidInput("config: min_size must be >= 1");
    if (min_part < 1)
      throw InvalidInput("config: min_part must be >= 1");
    if (!(stop_ncut > 0.0))
      throw InvalidInput("config: stop_ncut must be > 0");
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
      throw InvalidInput("config: lambda must be finite and >= 0");
    if (!(epsilon > 0.0) || !std::isfinite(epsilon))
      throw InvalidInput("config: epsilon must be finite and > 0");
    if (head_count < 1 || layers < 1)
      throw InvalidInput("config: head_count and layers must be >= 1");
    if (threads < 1)
      throw InvalidInput("config: threads must be >= 1");
    if (!(eigen_tolerance > 0.0) || eigen_max_iterations < 1)
      throw InvalidInput("config: eigen_tolerance and eigen_max_iterations must be positive");
  }

  GcpoolConfig gcpool_config() const {
    return {min_size, stop_ncut, min_part, {eigen_tolerance, eigen_max_iterations}, threads};
  }

  AttentionOptions attention_options() const { return {dense_attention, iou_bias, threads}; }
};

namespace detail {

struct Moments {
  double mean = 0.0;
  double var = 0.0; // population
};

template <typename Block>
Moments moments(const Block &x) {
  Moments mo;
  const auto n = static_cast<double>(x.size());
  if (n == 0)
    return mo;
  mo.mean = x.sum() / n;
  mo.var = (x.array() - mo.mean).square().sum() / n;
  return mo;
}

template <typename Out, typename Z, typename V>
void normalize_block(Out &&out, const Z &z, const V &v, double epsilon, NormMode mode) {
  const Moments mv = moments(v);
  if (mode == NormMode::literal) {
    const double denom = mv.var + epsilon;
    if (!(denom > 0.0))
      throw NumericalFailure("identical_normalize: Var[V] + epsilon is zero");
    out = ((z.array() - mv.mean) / denom).matrix();
    return;
  }
  const Moments mz = moments(z);
  const double scale = (std::sqrt(mv.var) + epsilon) / (std::sqrt(mz.var) + epsilon);
  out = ((z.array() - mz.mean) * scale + mv.mean).matrix();
}

} // namespace detail

/// Residual mix Z = lambda * refined + original followed by normalization
/// against the statistics of the original features.
///  - literal:      (Z - E[V]) / (Var[V] + epsilon)
///  - moment_match: (Z - E[Z]) * (std[V] + epsilon) / (std[Z] + epsilon) + E[V]
/// moment_match reproduces the mean of V exactly and its variance up to an
/// O(epsilon / std) factor; with lambda = 0 it returns V unchanged.
inline Eigen::MatrixXd identical_normalize(const Eigen::MatrixXd &refined, const Eigen::MatrixXd &original,
                                           double lambda, double epsilon, NormMode mode,
                                           NormStats stats = NormStats::global) {
  if (refined.rows() != original.rows() || refined.cols() != original.cols())
    throw InvalidInput("identical_normalize: refined and original shapes differ");
  if (!(epsilon >= 0.0))
    throw InvalidInput("identical_normalize: epsilon must be >= 0");
  const Eigen::MatrixXd z = lambda * refined + original;
  Eigen::MatrixXd out(z.rows(), z.cols());
  if (z.size() == 0)
    return out;
  if (stats == NormStats::global) {
    detail::normalize_block(out, z, original, epsilon, mode);
  } else {
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
      Eigen::VectorXd col(z.rows());
      detail::normalize_block(col, z.col(c), original.col(c), epsilon, mode);
      out.col(c) = col;
    }
  }
  return out;
}

struct ForwardDiagnostics {
  int edge_count = 0;
  int component_count = 0;
  int part_count = 0;
  int coarse_count = 0;
  PseudoLabeling labeling;
  std::vector<NodeId> filtered;
  std::vector<NodeId> refiltered;
  std::vector<std::pair<std::string, double>> stage_ms;
};

struct RefinedProposals {
  Eigen::MatrixXd features;
  std::vector<NodeId> original_ids;
  ForwardDiagnostics diagnostics;
};

/// Runs the stacked attention layers over graph g, starting from its features.
inline Eigen::MatrixXd run_attention_layers(const ProposalGraph &g, std::span<const AttentionParams> layers,
                                            const AttentionOptions &opts) {
  Eigen::MatrixXd x = g.features();
  for (const auto &layer : layers) {
    if (layer.output_dim() != x.cols())
      throw InvalidInput("attention layer maps dim " + std::to_string(x.cols()) + " to " +
                         std::to_string(layer.output_dim()) + "; stacked layers must preserve the dimension");
    x = multi_head_attend(x, layer, g, opts);
  }
  return x;
}

namespace detail {

class StageTimer {
public:
  explicit StageTimer(std::vector<std::pair<std::string, double>> &sink) : sink_(sink) {}
  void lap(std::string name) {
    const auto now = std::chrono::steady_clock::now();
    sink_.emplace_back(std::move(name), std::chrono::duration<double, std::milli>(now - last_).count());
    last_ = now;
  }

private:
  std::vector<std::pair<std::string, double>> &sink_;
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

inline RefinedProposals forward_impl(std::span<const BoundingBox> boxes, const Eigen::MatrixXd &features,
                                     std::span<const AttentionParams> layers, const RepGNConfig &cfg,
                                     bool use_gcpool) {
  cfg.validate();
  if (layers.empty())
    throw InvalidInput("repgn_forward: at least one attention layer is required");
  RefinedProposals out;
  auto &diag = out.diagnostics;
  StageTimer timer(diag.stage_ms);

  const ProposalGraph g = build_graph(boxes, features, cfg.iou_thr, cfg.threads);
  out.original_ids = g.node_ids();
  diag.edge_count = static_cast<int>(g.edges().size());
  diag.labeling.labels.assign(g.node_count(), std::nullopt);
  timer.lap("graph");
  if (g.node_count() == 0) {
    out.features = features;
    return out;
  }

  ProposalGraph attended = g;
  if (use_gcpool) {
    auto pooled = gcpool(g, cfg.gcpool_config());
    diag.component_count = pooled.component_count;
    diag.part_count = pooled.labeling.part_count;
    diag.coarse_count = static_cast<int>(pooled.coarse.size());
    diag.filtered = std::move(pooled.filtered);
    diag.refiltered = std::move(pooled.refiltered);
    diag.labeling = std::move(pooled.labeling);
    attended = augment_with_coarse(g, pooled.coarse);
  } else {
    diag.component_count = connected_components(g).component_count();
  }
  timer.lap("gcpool");

  const Eigen::MatrixXd refined = run_attention_layers(attended, layers, cfg.attention_options());
  timer.lap("attention");

  // Coarse nodes are appended after the originals; only the first M rows leave.
  out.features = identical_normalize(refined.topRows(g.node_count()), features, cfg.lambda, cfg.epsilon,
                                     cfg.norm_mode, cfg.norm_stats);
  timer.lap("normalize");
  return out;
}

} // namespace detail

/// Full relational refinement: IoU graph, graph cut pooling with coarse-node
/// augmentation, graph attention, identical normalization. Returns one row per
/// input proposal.
inline RefinedProposals repgn_forward(std::span<const BoundingBox> boxes, const Eigen::MatrixXd &features,
                                      std::span<const AttentionParams> layers, const RepGNConfig &cfg) {
  return detail::forward_impl(boxes, features, layers, cfg, true);
}

/// Same pipeline without the pooling branch.
inline RefinedProposals repgn_forward_no_gcpool(std::span<const BoundingBox> boxes, const Eigen::MatrixXd &features,
                                                std::span<const AttentionParams> layers, const RepGNConfig &cfg) {
  return detail::forward_impl(boxes, features, layers, cfg, false);
}

/// One seeded parameter set per layer, each mapping dim -> dim through
/// head_count heads and a projection.
inline std::vector<AttentionParams> default_layers(int dim, const RepGNConfig &cfg) {
  std::vector<AttentionParams> layers;
  for (int l = 0; l < cfg.layers; ++l)
    layers.push_back(init_attention_params(dim, cfg.head_count, dim, cfg.seed + static_cast<std::uint64_t>(l)));
  return layers;
}

} // namespace repgn
