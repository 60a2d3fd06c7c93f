#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "repgn/attention.hpp"
#include "repgn/graph.hpp"
#include "repgn/spectral.hpp"

namespace repgn::oracle {

/// Two unit-weight k-cliques joined by one bridge of the given weight between
/// a random member of each. Node numbering is shuffled.
inline ProposalGraph bridged_cliques(int k, double bridge_weight, std::mt19937_64 &rng) {
  const int n = 2 * k;
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Edge> edges;
  auto add = [&](int a, int b, double w) {
    int u = perm[a], v = perm[b];
    if (u > v)
      std::swap(u, v);
    edges.push_back({u, v, w});
  };
  for (int side = 0; side < 2; ++side)
    for (int a = 0; a < k; ++a)
      for (int b = a + 1; b < k; ++b)
        add(side * k + a, side * k + b, 1.0);
  std::uniform_int_distribution<int> pick(0, k - 1);
  add(pick(rng), k + pick(rng), bridge_weight);
  std::vector<NodeId> ids(n);
  std::iota(ids.begin(), ids.end(), NodeId{0});
  return ProposalGraph(std::move(ids), Eigen::MatrixXd(n, 0), std::move(edges));
}

/// Random connected graph: a random spanning tree plus each remaining pair
/// with probability density, weights uniform in [0.05, 1].
inline ProposalGraph random_connected_graph(int n, double density, std::mt19937_64 &rng) {
  std::uniform_real_distribution<double> weight(0.05, 1.0);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<Edge> edges;
  std::vector<std::vector<char>> used(n, std::vector<char>(n, 0));
  for (int v = 1; v < n; ++v) {
    std::uniform_int_distribution<int> parent(0, v - 1);
    const int u = parent(rng);
    edges.push_back({u, v, weight(rng)});
    used[u][v] = 1;
  }
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v)
      if (!used[u][v] && coin(rng) < density)
        edges.push_back({u, v, weight(rng)});
  std::vector<NodeId> ids(n);
  std::iota(ids.begin(), ids.end(), NodeId{0});
  return ProposalGraph(std::move(ids), Eigen::MatrixXd(n, 0), std::move(edges));
}

/// Random graph on n nodes where each pair is an edge with probability density.
inline ProposalGraph random_graph(int n, double density, const Eigen::MatrixXd &features, std::mt19937_64 &rng) {
  std::uniform_real_distribution<double> weight(0.05, 1.0);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<Edge> edges;
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v)
      if (coin(rng) < density)
        edges.push_back({u, v, weight(rng)});
  std::vector<NodeId> ids(n);
  std::iota(ids.begin(), ids.end(), NodeId{0});
  return ProposalGraph(std::move(ids), features, std::move(edges));
}

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64 &rng,
                                     double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r)
      m(r, c) = u(rng);
  return m;
}

/// |a - b| relative to the larger magnitude, with magnitudes below floor
/// treated as floor so that two near-zero values compare by absolute error.
inline double relative_error(double a, double b, double floor = 1e-3) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Central difference (f(x + h) - f(x - h)) / 2h of a scalar function with
/// respect to one coordinate referenced by slot.
inline double central_difference(const std::function<double()> &f, double &slot, double step) {
  const double saved = slot;
  slot = saved + step;
  const double plus = f();
  slot = saved - step;
  const double minus = f();
  slot = saved;
  return (plus - minus) / (2.0 * step);
}

struct GradientCheck {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
};

/// Compares attention_gradients with central differences of
/// <upstream, multi_head_attend(features)> over every input coordinate.
inline GradientCheck check_attention_gradients(Eigen::MatrixXd features, AttentionParams params,
                                               const ProposalGraph &g, const Eigen::MatrixXd &upstream,
                                               const AttentionOptions &opts = {}, double step = 1e-5) {
  const auto analytic = attention_gradients(features, params, g, upstream, opts);
  auto loss = [&] { return (upstream.array() * multi_head_attend(features, params, g, opts).array()).sum(); };
  GradientCheck out;
  auto visit = [&](double &slot, double a) {
    out.max_relative_error = std::max(out.max_relative_error, relative_error(a, central_difference(loss, slot, step)));
    ++out.coordinates;
  };
  for (Eigen::Index r = 0; r < features.rows(); ++r)
    for (Eigen::Index c = 0; c < features.cols(); ++c)
      visit(features(r, c), analytic.features(r, c));
  for (int h = 0; h < params.head_count(); ++h) {
    for (Eigen::Index k = 0; k < params.heads[h].score_weights.size(); ++k)
      visit(params.heads[h].score_weights[k], analytic.score_weights[h][k]);
    visit(params.heads[h].score_bias, analytic.score_bias[h]);
  }
  if (params.projection)
    for (Eigen::Index r = 0; r < params.projection->rows(); ++r)
      for (Eigen::Index c = 0; c < params.projection->cols(); ++c)
        visit((*params.projection)(r, c), (*analytic.projection)(r, c));
  return out;
}

struct NcutOracleSummary {
  int trials = 0;
  int agreements = 0;
  double max_value_gap = 0.0;
};

/// two_way_ncut against brute_force_ncut on bridged k-cliques, k in {3,4,5}
/// restricted to 2k <= max_n, bridge weight uniform in [0.01, 0.2].
inline NcutOracleSummary run_ncut_oracle(int max_n, int trials, std::uint64_t seed, double tolerance = 1e-10) {
  std::vector<int> sizes;
  for (int k : {3, 4, 5})
    if (2 * k <= max_n)
      sizes.push_back(k);
  if (sizes.empty())
    throw InvalidInput("oracle ncut: max-n must be at least 6");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, sizes.size() - 1);
  std::uniform_real_distribution<double> bridge(0.01, 0.2);
  NcutOracleSummary s;
  for (int t = 0; t < trials; ++t) {
    const int k = sizes[pick(rng)];
    const double w = bridge(rng);
    const auto g = bridged_cliques(k, w, rng);
    const auto spectral = two_way_ncut(g);
    const auto exact = brute_force_ncut(g);
    const double gap = std::abs(spectral.report.ncut_value - exact.report.ncut_value);
    s.max_value_gap = std::max(s.max_value_gap, gap);
    ++s.trials;
    if (spectral.partition == exact.partition && gap <= tolerance)
      ++s.agreements;
  }
  return s;
}

struct GradOracleSummary {
  int trials = 0;
  int passed = 0;
  double max_relative_error = 0.0;
};

/// Random attention instances with M <= 8, d <= 6 and h in {1, 2, 4}; every
/// second instance carries an output projection.
inline GradOracleSummary run_grad_oracle(int trials, std::uint64_t seed, double tolerance = 1e-5) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> node_count(1, 8);
  std::uniform_int_distribution<int> dim(1, 6);
  const int head_choices[] = {1, 2, 4};
  std::uniform_int_distribution<int> head_pick(0, 2);
  GradOracleSummary s;
  for (int t = 0; t < trials; ++t) {
    const int m = node_count(rng);
    const int d = dim(rng);
    const int h = head_choices[head_pick(rng)];
    const std::optional<int> out_dim = (t % 2 == 1) ? std::optional<int>(d) : std::nullopt;
    auto params = init_attention_params(d, h, out_dim, rng());
    const Eigen::MatrixXd x = random_matrix(m, d, rng);
    const auto g = random_graph(m, 0.5, x, rng);
    const Eigen::MatrixXd upstream = random_matrix(m, params.output_dim(), rng);
    AttentionOptions opts;
    opts.dense_attention = (t % 3 == 2);
    opts.iou_bias = (t % 4 == 3);
    const auto check = check_attention_gradients(x, params, g, upstream, opts);
    s.max_relative_error = std::max(s.max_relative_error, check.max_relative_error);
    ++s.trials;
    if (check.max_relative_error < tolerance)
      ++s.passed;
  }
  return s;
}

} // namespace repgn::oracle
