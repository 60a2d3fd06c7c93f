#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "repgn/errors.hpp"
#include "repgn/graph.hpp"
#include "repgn/parallel.hpp"

namespace repgn {

/// Learned pairwise scorer of one attention head. The score of the ordered
/// pair (i, j) is score_weights . [x_i ; x_j] + score_bias.
struct AttentionHead {
  Eigen::VectorXd score_weights; // length 2 * dim
  double score_bias = 0.0;
};

struct AttentionParams {
  int dim = 0;
  std::vector<AttentionHead> heads;
  /// (head_count * dim) x d_out; absent means the concatenated heads are the output.
  std::optional<Eigen::MatrixXd> projection;

  int head_count() const { return static_cast<int>(heads.size()); }
  int output_dim() const {
    return projection ? static_cast<int>(projection->cols()) : head_count() * dim;
  }

  void validate() const {
    if (dim < 1 || heads.empty())
      throw InvalidInput("attention params: need dim >= 1 and at least one head");
    for (const auto &h : heads) {
      if (h.score_weights.size() != 2 * dim)
        throw InvalidInput("attention params: score_weights length " +
                           std::to_string(h.score_weights.size()) + " != 2 * dim (" +
                           std::to_string(2 * dim) + ")");
      if (!h.score_weights.allFinite() || !std::isfinite(h.score_bias))
        throw InvalidInput("attention params: non-finite score parameters");
    }
    if (projection) {
      if (projection->rows() != static_cast<Eigen::Index>(head_count()) * dim)
        throw InvalidInput("attention params: projection has " + std::to_string(projection->rows()) +
                           " rows, expected head_count * dim = " + std::to_string(head_count() * dim));
      if (!projection->allFinite())
        throw InvalidInput("attention params: non-finite projection");
    }
  }
};

/// Seeded uniform initialization: score parameters in +-1/sqrt(2 dim),
/// projection entries in +-1/sqrt(head_count dim).
inline AttentionParams init_attention_params(int dim, int head_count, std::optional<int> output_dim,
                                             std::uint64_t seed) {
  if (dim < 1 || head_count < 1)
    throw InvalidInput("init_attention_params: dim and head_count must be >= 1");
  std::mt19937_64 rng(seed);
  const double a = 1.0 / std::sqrt(2.0 * dim);
  std::uniform_real_distribution<double> score(-a, a);
  AttentionParams p;
  p.dim = dim;
  for (int h = 0; h < head_count; ++h) {
    AttentionHead head;
    head.score_weights.resize(2 * dim);
    for (int k = 0; k < 2 * dim; ++k)
      head.score_weights[k] = score(rng);
    head.score_bias = score(rng);
    p.heads.push_back(std::move(head));
  }
  if (output_dim) {
    const int rows = head_count * dim;
    const double b = 1.0 / std::sqrt(static_cast<double>(rows));
    std::uniform_real_distribution<double> proj(-b, b);
    Eigen::MatrixXd w(rows, *output_dim);
    for (int c = 0; c < *output_dim; ++c)
      for (int r = 0; r < rows; ++r)
        w(r, c) = proj(rng);
    p.projection = std::move(w);
  }
  return p;
}

struct AttentionOptions {
  /// Attend over all node pairs instead of graph neighbors plus self.
  bool dense_attention = false;
  /// Add log(w_ij) to the score of graph edges (self pairs and non-edges get 0).
  bool iou_bias = false;
  unsigned threads = 1;
};

/// Pre-softmax scores; entries with mask == false are not attendable and their
/// score is meaningless.
struct AffinityMatrix {
  Eigen::MatrixXd scores;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask;

  Eigen::Index size() const { return scores.rows(); }
};

inline AffinityMatrix similarity_scores(const Eigen::MatrixXd &features, const AttentionHead &head,
                                        const ProposalGraph &g, const AttentionOptions &opts = {}) {
  const Eigen::Index m = features.rows();
  const Eigen::Index d = features.cols();
  if (head.score_weights.size() != 2 * d)
    throw InvalidInput("similarity_scores: score_weights length " + std::to_string(head.score_weights.size()) +
                       " does not match 2 * feature dim " + std::to_string(2 * d));
  if (g.node_count() != m)
    throw InvalidInput("similarity_scores: graph has " + std::to_string(g.node_count()) +
                       " nodes, features have " + std::to_string(m) + " rows");

  // score(i, j) = w_left . x_i + w_right . x_j + bias
  const Eigen::VectorXd left = features * head.score_weights.head(d);
  const Eigen::VectorXd right = features * head.score_weights.tail(d);

  AffinityMatrix aff;
  aff.scores = Eigen::MatrixXd::Zero(m, m);
  aff.mask.setConstant(m, m, opts.dense_attention);
  for (Eigen::Index i = 0; i < m; ++i)
    aff.mask(i, i) = true;
  for (const auto &e : g.edges()) {
    aff.mask(e.i, e.j) = true;
    aff.mask(e.j, e.i) = true;
  }
  parallel_for(static_cast<std::size_t>(m), opts.threads, [&](std::size_t iu) {
    const auto i = static_cast<Eigen::Index>(iu);
    for (Eigen::Index j = 0; j < m; ++j)
      if (aff.mask(i, j))
        aff.scores(i, j) = left[i] + right[j] + head.score_bias;
  });
  if (opts.iou_bias) {
    for (const auto &e : g.edges()) {
      const double b = std::log(e.w);
      aff.scores(e.i, e.j) += b;
      aff.scores(e.j, e.i) += b;
    }
  }
  return aff;
}

struct WeightedEntry {
  Eigen::Index node;
  double weight;
};

/// Softmax over the attendable entries of row i. Entries are returned in a
/// canonical order (descending score, then by feature row) that does not depend
/// on node numbering, so every sum taken over them is permutation-exact.
inline std::vector<WeightedEntry> row_softmax(const AffinityMatrix &aff, const Eigen::MatrixXd &features,
                                              Eigen::Index i) {
  const Eigen::Index m = aff.size();
  std::vector<WeightedEntry> row;
  for (Eigen::Index j = 0; j < m; ++j) {
    if (!aff.mask(i, j))
      continue;
    const double s = aff.scores(i, j);
    if (!std::isfinite(s))
      throw NumericalFailure("attend: non-finite score at (" + std::to_string(i) + "," + std::to_string(j) + ")");
    row.push_back({j, s});
  }
  if (row.empty())
    throw InvalidInput("attend: row " + std::to_string(i) + " has no attendable entry");
  std::sort(row.begin(), row.end(), [&](const WeightedEntry &a, const WeightedEntry &b) {
    if (a.weight != b.weight)
      return a.weight > b.weight;
    const auto ra = features.row(a.node);
    const auto rb = features.row(b.node);
    for (Eigen::Index k = 0; k < ra.size(); ++k)
      if (ra[k] != rb[k])
        return ra[k] < rb[k];
    return false;
  });
  const double peak = row.front().weight;
  double z = 0.0;
  for (auto &entry : row) {
    entry.weight = std::exp(entry.weight - peak);
    z += entry.weight;
  }
  for (auto &entry : row)
    entry.weight /= z;
  return row;
}

/// v'_i = softmax(A_i) . V over attendable entries.
inline Eigen::MatrixXd attend(const Eigen::MatrixXd &features, const AffinityMatrix &aff, unsigned threads = 1) {
  const Eigen::Index m = features.rows();
  if (aff.scores.rows() != m || aff.scores.cols() != m || aff.mask.rows() != m || aff.mask.cols() != m)
    throw InvalidInput("attend: affinity matrix is not " + std::to_string(m) + "x" + std::to_string(m));
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m, features.cols());
  parallel_for(static_cast<std::size_t>(m), threads, [&](std::size_t iu) {
    const auto i = static_cast<Eigen::Index>(iu);
    for (const auto &entry : row_softmax(aff, features, i))
      out.row(i) += entry.weight * features.row(entry.node);
  });
  return out;
}

inline void check_feature_dim(const Eigen::MatrixXd &features, const AttentionParams &params) {
  if (features.cols() != params.dim)
    throw InvalidInput("attention: feature dim " + std::to_string(features.cols()) +
                       " does not match params dim " + std::to_string(params.dim));
}

/// Concatenation of all head outputs, M x (head_count * dim).
inline Eigen::MatrixXd concat_heads(const Eigen::MatrixXd &features, const AttentionParams &params,
                                    const ProposalGraph &g, const AttentionOptions &opts = {}) {
  params.validate();
  check_feature_dim(features, params);
  const Eigen::Index d = params.dim;
  Eigen::MatrixXd cat(features.rows(), params.head_count() * d);
  for (int h = 0; h < params.head_count(); ++h) {
    const auto aff = similarity_scores(features, params.heads[h], g, opts);
    cat.middleCols(h * d, d) = attend(features, aff, opts.threads);
  }
  return cat;
}

inline Eigen::MatrixXd multi_head_attend(const Eigen::MatrixXd &features, const AttentionParams &params,
                                         const ProposalGraph &g, const AttentionOptions &opts = {}) {
  Eigen::MatrixXd cat = concat_heads(features, params, g, opts);
  if (!params.projection)
    return cat;
  return cat * *params.projection;
}

struct AttentionGradients {
  Eigen::MatrixXd features;
  std::vector<Eigen::VectorXd> score_weights;
  std::vector<double> score_bias;
  std::optional<Eigen::MatrixXd> projection;
};

/// Analytic gradient of <upstream, multi_head_attend(features)> with respect to
/// the input features and every parameter.
inline AttentionGradients attention_gradients(const Eigen::MatrixXd &features, const AttentionParams &params,
                                              const ProposalGraph &g, const Eigen::MatrixXd &upstream,
                                              const AttentionOptions &opts = {}) {
  params.validate();
  check_feature_dim(features, params);
  const Eigen::Index m = features.rows();
  const Eigen::Index d = params.dim;
  if (upstream.rows() != m || upstream.cols() != params.output_dim())
    throw InvalidInput("attention_gradients: upstream must be " + std::to_string(m) + "x" +
                       std::to_string(params.output_dim()));

  AttentionGradients grad;
  grad.features = Eigen::MatrixXd::Zero(m, d);

  // Gradient flowing into the concatenated head outputs.
  Eigen::MatrixXd d_cat;
  if (params.projection) {
    const Eigen::MatrixXd cat = concat_heads(features, params, g, opts);
    grad.projection = cat.transpose() * upstream;
    d_cat = upstream * params.projection->transpose();
  } else {
    d_cat = upstream;
  }

  for (int h = 0; h < params.head_count(); ++h) {
    const auto &head = params.heads[h];
    const Eigen::VectorXd w_left = head.score_weights.head(d);
    const Eigen::VectorXd w_right = head.score_weights.tail(d);
    Eigen::VectorXd d_left = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd d_right = Eigen::VectorXd::Zero(d);
    double d_bias = 0.0;

    const auto aff = similarity_scores(features, head, g, opts);
    const auto d_out = d_cat.middleCols(h * d, d);
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto row = row_softmax(aff, features, i);
      const Eigen::RowVectorXd gi = d_out.row(i);
      // d p_ij = g_i . x_j ; d s_ij = p_ij (d p_ij - sum_k p_ik d p_ik)
      std::vector<double> dp(row.size());
      double mean = 0.0;
      for (std::size_t k = 0; k < row.size(); ++k) {
        dp[k] = gi.dot(features.row(row[k].node));
        mean += row[k].weight * dp[k];
      }
      double ds_sum = 0.0;
      for (std::size_t k = 0; k < row.size(); ++k) {
        const Eigen::Index j = row[k].node;
        const double p = row[k].weight;
        const double ds = p * (dp[k] - mean);
        grad.features.row(j) += p * gi;
        grad.features.row(j) += ds * w_right.transpose();
        d_right += ds * features.row(j).transpose();
        ds_sum += ds;
      }
      grad.features.row(i) += ds_sum * w_left.transpose();
      d_left += ds_sum * features.row(i).transpose();
      d_bias += ds_sum;
    }
    Eigen::VectorXd dw(2 * d);
    dw << d_left, d_right;
    grad.score_weights.push_back(std::move(dw));
    grad.score_bias.push_back(d_bias);
  }
  return grad;
}

} // namespace repgn
