#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "repgn/attention.hpp"
#include "repgn/oracle.hpp"
#include "test_oracles.hpp"

using namespace repgn;

namespace {

AttentionHead head_of(std::initializer_list<double> w, double bias = 0.0) {
  AttentionHead h;
  h.score_weights = Eigen::Map<const Eigen::VectorXd>(w.begin(), static_cast<Eigen::Index>(w.size()));
  h.score_bias = bias;
  return h;
}

ProposalGraph complete(int n) {
  std::vector<std::pair<int, int>> pairs;
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b)
      pairs.emplace_back(a, b);
  return fixtures::unit_graph(n, pairs, 0.5);
}

} // namespace

TEST(SimilarityScores, Examples) {
  Eigen::MatrixXd x(2, 2);
  x << 2, 0, 0, 3;
  const auto g = complete(2);
  const auto aff = similarity_scores(x, head_of({1, 0, 0, 1}), g);
  EXPECT_EQ(aff.scores(0, 1), 5.0);
  EXPECT_EQ(aff.scores(0, 0), 2.0);
  EXPECT_TRUE(aff.mask.all());

  const auto zero = similarity_scores(x, head_of({0, 0, 0, 0}), g);
  EXPECT_EQ(zero.scores.cwiseAbs().maxCoeff(), 0.0);

  EXPECT_THROW(similarity_scores(x, head_of({1, 0, 1}), g), InvalidInput);
}

TEST(SimilarityScores, MaskFollowsGraphUnlessDense) {
  const auto g = fixtures::unit_graph(3, {{0, 1}});
  const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(3, 1);
  const auto sparse = similarity_scores(x, head_of({1, 1}), g);
  EXPECT_TRUE(sparse.mask(0, 1) && sparse.mask(1, 0));
  EXPECT_FALSE(sparse.mask(0, 2) || sparse.mask(2, 0) || sparse.mask(1, 2));
  for (int i = 0; i < 3; ++i)
    EXPECT_TRUE(sparse.mask(i, i));
  AttentionOptions dense;
  dense.dense_attention = true;
  EXPECT_TRUE(similarity_scores(x, head_of({1, 1}), g, dense).mask.all());
}

TEST(SimilarityScores, IouBiasAddsLogWeight) {
  const auto g = fixtures::unit_graph(2, {{0, 1}}, 0.25);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Zero(2, 1);
  AttentionOptions opts;
  opts.iou_bias = true;
  const auto aff = similarity_scores(x, head_of({0, 0}), g, opts);
  EXPECT_DOUBLE_EQ(aff.scores(0, 1), std::log(0.25));
  EXPECT_EQ(aff.scores(0, 0), 0.0);
}

TEST(Attend, Examples) {
  Eigen::MatrixXd one(1, 3);
  one << 0.3, -1, 2;
  const auto g1 = fixtures::unit_graph(1, {});
  EXPECT_EQ(attend(one, similarity_scores(one, head_of({1, 2, 3, 4, 5, 6}, 0.7), g1)), one);

  Eigen::MatrixXd x(2, 2);
  x << 1, 0, 0, 1;
  AffinityMatrix aff;
  aff.scores.resize(2, 2);
  aff.scores << std::log(3.0), 0, 0, 0;
  aff.mask.setConstant(2, 2, true);
  const auto out = attend(x, aff);
  EXPECT_NEAR(out(0, 0), 0.75, 1e-15);
  EXPECT_NEAR(out(0, 1), 0.25, 1e-15);

  std::mt19937_64 rng(1);
  const auto y = oracle::random_matrix(5, 3, rng);
  AffinityMatrix uniform;
  uniform.scores = Eigen::MatrixXd::Constant(5, 5, 0.4);
  uniform.mask.setConstant(5, 5, true);
  const auto u = attend(y, uniform);
  const Eigen::RowVectorXd mean = y.colwise().mean();
  for (int i = 0; i < 5; ++i)
    EXPECT_LT((u.row(i) - mean).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Attend, NonFiniteScoreIsNumericalFailure) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(2, 1);
  AffinityMatrix aff;
  aff.scores = Eigen::MatrixXd::Zero(2, 2);
  aff.scores(0, 1) = INFINITY;
  aff.mask.setConstant(2, 2, true);
  EXPECT_THROW(attend(x, aff), NumericalFailure);
}

TEST(Attend, SoftmaxRowsSumToOneAndOutputsStayInHull) {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 40; ++t) {
    const int m = 1 + t;
    const auto x = oracle::random_matrix(m, 4, rng, 3.0);
    const auto g = oracle::random_graph(m, 0.2, x, rng);
    AttentionOptions opts;
    opts.dense_attention = t % 2;
    const auto params = init_attention_params(4, 1, std::nullopt, t);
    const auto aff = similarity_scores(x, params.heads[0], g, opts);
    const auto out = attend(x, aff);
    for (int i = 0; i < m; ++i) {
      const auto row = row_softmax(aff, x, i);
      double s = 0;
      for (const auto &e : row)
        s += e.weight;
      EXPECT_NEAR(s, 1.0, 1e-12);
      for (int c = 0; c < 4; ++c) {
        double lo = INFINITY, hi = -INFINITY;
        for (const auto &e : row) {
          lo = std::min(lo, x(e.node, c));
          hi = std::max(hi, x(e.node, c));
        }
        EXPECT_GE(out(i, c), lo - 1e-12);
        EXPECT_LE(out(i, c), hi + 1e-12);
      }
    }
  }
}

TEST(Attend, ShiftInvariantPerRow) {
  std::mt19937_64 rng(4);
  const auto x = oracle::random_matrix(12, 3, rng);
  const auto g = oracle::random_graph(12, 0.4, x, rng);
  auto aff = similarity_scores(x, init_attention_params(3, 1, std::nullopt, 5).heads[0], g);
  const auto base = attend(x, aff);
  aff.scores.row(7).array() += 123.25;
  const auto shifted = attend(x, aff);
  EXPECT_LT((base - shifted).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Attend, PermutationEquivariantExactly) {
  std::mt19937_64 rng(23);
  for (int t = 0; t < 20; ++t) {
    const int m = 2 + t;
    const auto x = oracle::random_matrix(m, 3, rng);
    const auto g = oracle::random_graph(m, 0.3, x, rng);
    const auto params = init_attention_params(3, 1, std::nullopt, t);
    AttentionOptions opts;
    opts.dense_attention = t % 2;
    const auto out = attend(x, similarity_scores(x, params.heads[0], g, opts));

    std::vector<int> perm(m);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::MatrixXd px(m, 3);
    for (int u = 0; u < m; ++u)
      px.row(perm[u]) = x.row(u);
    std::vector<Edge> pe;
    for (const auto &e : g.edges())
      pe.push_back({std::min(perm[e.i], perm[e.j]), std::max(perm[e.i], perm[e.j]), e.w});
    const ProposalGraph pg(g.node_ids(), px, pe);
    const auto pout = attend(px, similarity_scores(px, params.heads[0], pg, opts));
    for (int u = 0; u < m; ++u)
      EXPECT_EQ(pout.row(perm[u]), out.row(u));
  }
}

TEST(MultiHeadAttend, SingleHeadIdentityProjectionEqualsAttend) {
  std::mt19937_64 rng(2);
  const auto x = oracle::random_matrix(6, 3, rng);
  const auto g = oracle::random_graph(6, 0.5, x, rng);
  auto p = init_attention_params(3, 1, std::nullopt, 1);
  const auto plain = attend(x, similarity_scores(x, p.heads[0], g));
  EXPECT_EQ(multi_head_attend(x, p, g), plain);
  p.projection = Eigen::MatrixXd::Identity(3, 3);
  EXPECT_EQ(multi_head_attend(x, p, g), plain);
}

TEST(MultiHeadAttend, IdenticalHeadsDuplicateBlocks) {
  std::mt19937_64 rng(3);
  const auto x = oracle::random_matrix(5, 2, rng);
  const auto g = oracle::random_graph(5, 0.5, x, rng);
  auto p = init_attention_params(2, 1, std::nullopt, 9);
  p.heads.push_back(p.heads[0]);
  const auto out = multi_head_attend(x, p, g);
  ASSERT_EQ(out.cols(), 4);
  EXPECT_EQ(out.leftCols(2), out.rightCols(2));
}

TEST(MultiHeadAttend, EightHeadsProjectSpatialDescriptorsTo1024) {
  std::mt19937_64 rng(4);
  const auto x = oracle::random_matrix(10, 7, rng);
  const auto g = oracle::random_graph(10, 0.3, x, rng);
  const auto p = init_attention_params(7, 8, 1024, 0);
  EXPECT_EQ(p.projection->rows(), 56);
  const auto out = multi_head_attend(x, p, g);
  EXPECT_EQ(out.rows(), 10);
  EXPECT_EQ(out.cols(), 1024);
}

TEST(MultiHeadAttend, DimensionErrors) {
  const auto g = fixtures::unit_graph(2, {{0, 1}});
  const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(2, 3);
  auto p = init_attention_params(3, 2, std::nullopt, 0);
  p.projection = Eigen::MatrixXd::Ones(5, 3);
  EXPECT_THROW(multi_head_attend(x, p, g), InvalidInput);
  const auto q = init_attention_params(4, 1, std::nullopt, 0);
  EXPECT_THROW(multi_head_attend(x, q, g), InvalidInput);
}

TEST(InitAttentionParams, SeededAndBounded) {
  const auto a = init_attention_params(5, 3, 5, 42), b = init_attention_params(5, 3, 5, 42);
  const double bound = 1.0 / std::sqrt(10.0);
  for (int h = 0; h < 3; ++h) {
    EXPECT_EQ(a.heads[h].score_weights, b.heads[h].score_weights);
    EXPECT_LE(a.heads[h].score_weights.cwiseAbs().maxCoeff(), bound);
    EXPECT_LE(std::abs(a.heads[h].score_bias), bound);
  }
  EXPECT_EQ(*a.projection, *b.projection);
  EXPECT_NE(init_attention_params(5, 3, 5, 43).heads[0].score_weights, a.heads[0].score_weights);
}

TEST(AttentionGradients, ZeroUpstreamGivesZeroGradients) {
  std::mt19937_64 rng(5);
  const auto x = oracle::random_matrix(5, 3, rng);
  const auto g = oracle::random_graph(5, 0.5, x, rng);
  const auto p = init_attention_params(3, 2, 3, 1);
  const auto grad = attention_gradients(x, p, g, Eigen::MatrixXd::Zero(5, 3));
  EXPECT_EQ(grad.features.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(grad.projection->cwiseAbs().maxCoeff(), 0.0);
  for (int h = 0; h < 2; ++h) {
    EXPECT_EQ(grad.score_weights[h].cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(grad.score_bias[h], 0.0);
  }
}

TEST(AttentionGradients, SingleNodeFeatureGradientIsUpstream) {
  Eigen::MatrixXd x(1, 3);
  x << 0.2, -0.4, 1.5;
  auto p = init_attention_params(3, 1, std::nullopt, 2);
  p.projection = Eigen::MatrixXd::Identity(3, 3);
  Eigen::MatrixXd up(1, 3);
  up << 1, 2, -3;
  const auto grad = attention_gradients(x, p, fixtures::unit_graph(1, {}), up);
  EXPECT_LT((grad.features - up).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(AttentionGradients, FiniteDifferenceFiveNodes) {
  std::mt19937_64 rng(77);
  const auto x = oracle::random_matrix(5, 4, rng);
  const auto g = oracle::random_graph(5, 0.6, x, rng);
  const auto p = init_attention_params(4, 2, 4, 3);
  const auto up = oracle::random_matrix(5, 4, rng);
  const auto check = oracle::check_attention_gradients(x, p, g, up);
  EXPECT_LT(check.max_relative_error, 1e-5);
  EXPECT_EQ(check.coordinates, 20u + 2 * 9u + 32u);
}

TEST(AttentionGradients, FiniteDifferenceRandomized) {
  const auto s = oracle::run_grad_oracle(60, 2024);
  EXPECT_EQ(s.passed, s.trials) << "max relative error " << s.max_relative_error;
}

TEST(Oracle, CentralDifferenceOnQuadratic) {
  double x = 1.5;
  const auto f = [&] { return 3 * x * x - 2 * x; };
  EXPECT_NEAR(oracle::central_difference(f, x, 1e-5), 6 * 1.5 - 2, 1e-8);
  EXPECT_EQ(x, 1.5);
  EXPECT_NEAR(oracle::relative_error(1e-9, 0.0), 1e-6, 1e-20);
  EXPECT_NEAR(oracle::relative_error(2.0, 1.0), 0.5, 1e-15);
}
