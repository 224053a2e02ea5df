#include "noisymoe/gmm.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <numeric>

using namespace noisymoe;
using namespace testutil;

namespace {

GmmModel two_blobs_truth(Index p, double offset) {
  GmmModel m;
  m.k = 2;
  m.weights = Vector::Constant(2, 0.5);
  m.means = {Vector::Constant(p, -offset), Vector::Constant(p, offset)};
  m.covariances = {Matrix::Identity(p, p), Matrix::Identity(p, p)};
  return m;
}

}  // namespace

TEST(GmmPosterior, SingleComponentIsOne) {
  Rng rng(1);
  GmmModel m = random_gmm(1, 3, rng);
  Vector post = posterior_tilde_z(m, normal_vector(3, rng));
  ASSERT_EQ(post.size(), 1);
  EXPECT_DOUBLE_EQ(post(0), 1.0);
  EXPECT_EQ(assign(m, normal_vector(3, rng)), 0);
}

TEST(GmmPosterior, MirrorModelMidpointIsHalfAndTieGoesToZero) {
  GmmModel m = two_blobs_truth(2, 1.5);
  m.covariances = {Matrix::Identity(2, 2) * 0.7, Matrix::Identity(2, 2) * 0.7};
  Vector mid = Vector::Zero(2);
  Vector post = posterior_tilde_z(m, mid);
  EXPECT_NEAR(post(0), 0.5, 1e-10);
  EXPECT_NEAR(post(1), 0.5, 1e-10);
  EXPECT_EQ(assign(m, mid), 0);
}

TEST(GmmPosterior, MatchesNaiveDensityRatio) {
  Rng rng(7);
  for (int t = 0; t < 100; ++t) {
    GmmModel m = random_gmm(3, 2, rng, 1.0);
    Vector x = normal_vector(2, rng);
    Vector fast = posterior_tilde_z(m, x);
    Vector naive = naive_posterior(m, x);
    for (Index j = 0; j < 3; ++j) EXPECT_NEAR(fast(j), naive(j), 1e-9);
    Index best = 0;
    naive.maxCoeff(&best);
    EXPECT_EQ(assign(m, x), best);
  }
}

TEST(GmmPosterior, NormalizedWithoutNanUnderUnderflow) {
  Rng rng(11);
  for (int t = 0; t < 1000; ++t) {
    GmmModel m = random_gmm(4, 3, rng, 50.0);
    Vector x = normal_vector(3, rng, 400.0);
    Vector post = posterior_tilde_z(m, x);
    EXPECT_FALSE(post.hasNaN());
    EXPECT_NEAR(post.sum(), 1.0, 1e-10);
    EXPECT_TRUE((post.array() >= 0.0).all());
  }
}

TEST(GmmPosterior, PermutationEquivariance) {
  Rng rng(3);
  GmmModel m = random_gmm(4, 2, rng);
  std::vector<Index> perm{2, 0, 3, 1};
  GmmModel q = m;
  for (Index j = 0; j < 4; ++j) {
    auto s = static_cast<std::size_t>(perm[static_cast<std::size_t>(j)]);
    q.weights(j) = m.weights(perm[static_cast<std::size_t>(j)]);
    q.means[static_cast<std::size_t>(j)] = m.means[s];
    q.covariances[static_cast<std::size_t>(j)] = m.covariances[s];
  }
  for (int t = 0; t < 50; ++t) {
    Vector x = normal_vector(2, rng, 3.0);
    Vector a = posterior_tilde_z(m, x), b = posterior_tilde_z(q, x);
    for (Index j = 0; j < 4; ++j) EXPECT_NEAR(b(j), a(perm[static_cast<std::size_t>(j)]), 1e-12);
  }
}

TEST(GmmAssign, InvariantToSharedWeightScale) {
  Rng rng(5);
  GmmModel m = random_gmm(3, 2, rng);
  GmmModel scaled = m;
  scaled.weights *= 7.5;
  for (int t = 0; t < 200; ++t) {
    Vector x = normal_vector(2, rng, 3.0);
    EXPECT_EQ(assign(m, x), assign(scaled, x));
  }
}

TEST(GmmFit, TwoSeparatedClusters) {
  Rng rng(21);
  const Index p = 3;
  Matrix x = sample_gmm(two_blobs_truth(p, 10.0), 400, rng);
  GmmFitConfig cfg;
  cfg.k = 2;
  cfg.seed = 9;
  GmmModel m = fit_gmm(x, cfg);
  ASSERT_EQ(m.k, 2);

  // Oracle: sample means of the points split by the sign of coordinate 0.
  std::vector<Index> neg, pos;
  for (Index i = 0; i < x.rows(); ++i) (x(i, 0) < 0 ? neg : pos).push_back(i);
  Vector mneg = take_rows(x, neg).colwise().mean().transpose();
  Vector mpos = take_rows(x, pos).colwise().mean().transpose();
  Index lo = m.means[0](0) < m.means[1](0) ? 0 : 1;
  EXPECT_LT((m.means[static_cast<std::size_t>(lo)] - mneg).cwiseAbs().maxCoeff(), 0.2);
  EXPECT_LT((m.means[static_cast<std::size_t>(1 - lo)] - mpos).cwiseAbs().maxCoeff(), 0.2);
  EXPECT_NEAR(m.weights(0), 0.5, 0.05);
  EXPECT_NEAR(m.weights.sum(), 1.0, 1e-10);
}

TEST(GmmFit, SingleComponentClosedForm) {
  Rng rng(4);
  Matrix x = normal_matrix(60, 3, rng) * random_spd(3, rng);
  x.col(1).array() += 4.0;
  GmmFitConfig cfg;
  cfg.k = 1;
  cfg.cov_floor = 0.01;
  GmmModel m = fit_gmm(x, cfg);
  Vector mean = x.colwise().mean().transpose();
  Matrix c = x.rowwise() - mean.transpose();
  Matrix s = c.transpose() * c / static_cast<double>(x.rows());
  EXPECT_LT((m.means[0] - mean).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((m.covariances[0] - (s + 0.01 * Matrix::Identity(3, 3))).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_DOUBLE_EQ(m.weights(0), 1.0);
}

TEST(GmmFit, CovariancesSymmetricAboveFloor) {
  Rng rng(8);
  GmmModel truth = random_gmm(3, 2, rng, 4.0);
  Matrix x = sample_gmm(truth, 300, rng);
  GmmFitConfig cfg;
  cfg.k = 3;
  cfg.cov_floor = 1e-3;
  GmmModel m = fit_gmm(x, cfg);
  for (const auto& c : m.covariances) {
    EXPECT_LT((c - c.transpose()).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Matrix>(c).eigenvalues().minCoeff(), 1e-3 * (1.0 - 1e-9));
  }
}

TEST(GmmFit, ObjectiveTraceNonDecreasing) {
  Rng rng(12);
  for (int t = 0; t < 10; ++t) {
    GmmModel truth = random_gmm(3, 2, rng, 2.0);
    Matrix x = sample_gmm(truth, 200, rng);
    GmmFitConfig cfg;
    cfg.k = 3;
    cfg.seed = static_cast<std::uint64_t>(t);
    for (auto floor : {std::optional<double>(0.0), std::optional<double>()}) {
      cfg.cov_floor = floor;
      auto res = fit_gmm_traced(x, cfg);
      for (const auto& r : res.restarts) {
        if (!r.error.empty()) continue;
        for (std::size_t i = 1; i < r.objective.size(); ++i) EXPECT_GE(r.objective[i], r.objective[i - 1] - 1e-8);
      }
    }
  }
}

TEST(GmmFit, BestRestartWins) {
  Rng rng(31);
  Matrix x = sample_gmm(random_gmm(4, 2, rng, 2.0), 250, rng);
  GmmFitConfig cfg;
  cfg.k = 4;
  cfg.n_restarts = 6;
  auto res = fit_gmm_traced(x, cfg);
  for (const auto& r : res.restarts)
    if (r.error.empty()) EXPECT_LE(r.objective.back(), res.model.objective + 1e-9);
}

TEST(GmmFit, DeterministicAcrossThreadCounts) {
  Rng rng(2);
  Matrix x = sample_gmm(random_gmm(3, 2, rng, 2.0), 300, rng);
  GmmFitConfig cfg;
  cfg.k = 3;
  cfg.seed = 17;
  cfg.threads = 1;
  GmmModel a = fit_gmm(x, cfg);
  cfg.threads = 4;
  GmmModel b = fit_gmm(x, cfg);
  EXPECT_EQ(a.log_likelihood, b.log_likelihood);
  for (Index j = 0; j < 3; ++j) EXPECT_EQ(a.means[static_cast<std::size_t>(j)], b.means[static_cast<std::size_t>(j)]);
}

TEST(GmmFit, RejectsBadInput) {
  Matrix x = Matrix::Zero(5, 2);
  GmmFitConfig cfg;
  cfg.k = 2;
  try {
    fit_gmm(x, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::too_few_points);
  }
  Matrix y = Matrix::Ones(20, 2);
  y(3, 1) = std::numeric_limits<double>::quiet_NaN();
  try {
    fit_gmm(y, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::non_finite);
  }
  GmmModel m = two_blobs_truth(2, 1.0);
  try {
    posterior_tilde_z(m, Vector::Zero(3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::dimension_mismatch);
  }
}

TEST(GmmBic, ParamCountAndFormula) {
  EXPECT_EQ(gmm_param_count(1, 1), 2);
  EXPECT_EQ(gmm_param_count(2, 3), 1 + 6 + 12);
  GmmModel m = two_blobs_truth(2, 1.0);
  m.log_likelihood = -100.0;
  EXPECT_NEAR(gmm_bic(m, 50), 200.0 + 11.0 * std::log(50.0), 1e-12);
}

TEST(GmmBic, SingleGaussianElbowIsOne) {
  Rng rng(40);
  Matrix x = normal_matrix(400, 2, rng);
  BicTable t = select_k_bic(x, {1, 2, 3}, GmmFitConfig{});
  ASSERT_EQ(t.rows.size(), 3u);
  EXPECT_EQ(t.suggested_k, 1);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& r : t.rows) best = std::min(best, r.bic);
  EXPECT_LE(t.rows[0].bic, best + 0.01 * std::abs(best));
}

TEST(GmmBic, SingleCandidate) {
  Rng rng(41);
  Matrix x = normal_matrix(100, 2, rng);
  BicTable t = select_k_bic(x, {3}, GmmFitConfig{});
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.suggested_k, 3);
}

TEST(GmmBic, TwoClustersPreferTwo) {
  Rng rng(42);
  Matrix x = sample_gmm(two_blobs_truth(2, 8.0), 400, rng);
  BicTable t = select_k_bic(x, {1, 2, 4}, GmmFitConfig{});
  EXPECT_LT(t.rows[1].bic, t.rows[0].bic);
  EXPECT_EQ(t.suggested_k, 2);
}
