#include "noisymoe/lts.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace noisymoe;
using namespace testutil;

namespace {

struct Planted {
  Matrix x;
  Vector y;
  std::vector<Index> outliers;
};

// y = 2x + 1 exactly on `clean` points, plus `bad` points shifted by +100.
Planted planted_line(Index clean, Index bad, Rng& rng) {
  Planted d;
  d.x = normal_matrix(clean + bad, 1, rng, 2.0);
  d.y = (2.0 * d.x.col(0)).array() + 1.0;
  std::vector<Index> idx(static_cast<std::size_t>(clean + bad));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  for (Index i = 0; i < bad; ++i) {
    Index j = idx[static_cast<std::size_t>(i)];
    d.y(j) += 100.0;
    d.outliers.push_back(j);
  }
  return d;
}

double naive_ssr(const Matrix& x, const Vector& y, double b0, const Vector& b, const std::vector<Index>& set) {
  double s = 0.0;
  for (Index i : set) {
    double r = y(i) - b0;
    for (Index j = 0; j < x.cols(); ++j) r -= b(j) * x(i, j);
    s += r * r;
  }
  return s;
}

void expect_consistent(const LtsFit& f, const Matrix& x, const Vector& y) {
  ASSERT_EQ(static_cast<Index>(f.retained.size()), f.h);
  double obj = naive_ssr(x, y, f.beta0, f.beta, f.retained) / static_cast<double>(f.h - x.cols() - 1);
  EXPECT_NEAR(f.objective, obj, 1e-10 * std::max(1.0, std::abs(obj)));
  EXPECT_EQ(f.retained, smallest_residuals(x, y, f.linear(), f.h));
}

}  // namespace

TEST(LtsH, FormulaAndClamp) {
  EXPECT_EQ(lts_h(100, 3, 0.5), 52);
  EXPECT_EQ(lts_h(12, 1, 0.5), 7);
  EXPECT_EQ(lts_h(10, 3, 1.0), 10);
  EXPECT_EQ(lts_h(4, 1, 0.5), 3);
  EXPECT_EQ(lts_h(3, 1, 0.5), 3);
}

TEST(LtsFit, AlphaOneIsOls) {
  Rng rng(1);
  Matrix x = normal_matrix(40, 3, rng);
  Vector y = x * Vector::LinSpaced(3, 1.0, 3.0) + normal_vector(40, rng, 0.5);
  LtsConfig cfg;
  cfg.alpha = 1.0;
  LtsFit f = lts_fit(x, y, cfg);
  LinearFit o = ols(x, y);
  EXPECT_EQ(f.h, 40);
  EXPECT_NEAR(f.beta0, o.beta0, 1e-8);
  EXPECT_LT((f.beta - o.beta).cwiseAbs().maxCoeff(), 1e-8);
  expect_consistent(f, x, y);
}

TEST(LtsFit, ExhaustiveMatchesEnumerationOnTwelvePoints) {
  Rng rng(2);
  Matrix x = normal_matrix(12, 1, rng);
  Vector y = x.col(0) * 1.5 + normal_vector(12, rng, 0.3);
  y(3) += 8.0;
  y(9) -= 6.0;
  LtsConfig cfg;
  cfg.exhaustive = true;
  LtsFit a = lts_fit(x, y, cfg);
  LtsFit b = lts_enumerate(x, y, a.h);
  EXPECT_EQ(a.objective, b.objective);
  EXPECT_EQ(a.retained, b.retained);
  expect_consistent(a, x, y);
}

TEST(LtsFit, EnumerateFullSetIsOls) {
  Rng rng(3);
  Matrix x = normal_matrix(8, 2, rng);
  Vector y = normal_vector(8, rng);
  LtsFit f = lts_enumerate(x, y, 8);
  LinearFit o = ols(x, y);
  EXPECT_NEAR(f.beta0, o.beta0, 1e-10);
  EXPECT_LT((f.beta - o.beta).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(LtsFit, EnumerateDropsObviousOutlier) {
  Matrix x(6, 1);
  x << 0, 1, 2, 3, 4, 5;
  Vector y(6);
  y << 1.0, 3.1, 4.9, 7.0, 30.0, 11.05;
  LtsFit f = lts_enumerate(x, y, 4);
  EXPECT_EQ(std::find(f.retained.begin(), f.retained.end(), 4), f.retained.end());
  EXPECT_NEAR(f.beta(0), 2.0, 0.1);
}

TEST(LtsFit, PlantedLineWithOutliers) {
  Rng rng(4);
  Planted d = planted_line(60, 25, rng);
  LtsConfig cfg;
  cfg.seed = 5;
  LtsFit f = lts_fit(d.x, d.y, cfg);
  EXPECT_EQ(f.h, 43);
  EXPECT_NEAR(f.beta0, 1.0, 1e-6);
  EXPECT_NEAR(f.beta(0), 2.0, 1e-6);
  for (Index o : d.outliers) EXPECT_EQ(std::find(f.retained.begin(), f.retained.end(), o), f.retained.end());
  ErrorParams th = estimate_error_params(f, d.x, d.y);
  EXPECT_LT(th.sigma * th.sigma, 1e-10);
  expect_consistent(f, d.x, d.y);
}

TEST(LtsFit, CStepsNeverIncreaseObjective) {
  Rng rng(6);
  for (int t = 0; t < 30; ++t) {
    Matrix x = normal_matrix(50, 2, rng);
    Vector y = x * Vector::Ones(2) + normal_vector(50, rng);
    for (Index i = 0; i < 10; ++i) y(i) += 20.0 * normal_vector(1, rng)(0);
    LinearFit start{normal_vector(1, rng)(0), normal_vector(2, rng), 3};
    CStepTrace tr = lts_csteps(x, y, start, lts_h(50, 2, 0.5), 50);
    for (std::size_t i = 1; i < tr.objective.size(); ++i) EXPECT_LE(tr.objective[i], tr.objective[i - 1] + 1e-12);
  }
}

TEST(LtsFit, AffineEquivarianceInResponse) {
  Rng rng(7);
  Matrix x = normal_matrix(40, 2, rng);
  Vector y = x * Vector::LinSpaced(2, -1.0, 2.0) + normal_vector(40, rng, 0.2);
  for (Index i = 0; i < 8; ++i) y(i * 5) += 15.0;
  LtsConfig cfg;
  cfg.seed = 3;
  LtsFit f = lts_fit(x, y, cfg);
  const double a = -2.5, b = 4.0;
  Vector y2 = (a * y).array() + b;
  LtsFit g = lts_fit(x, y2, cfg);
  EXPECT_EQ(f.retained, g.retained);
  EXPECT_NEAR(g.beta0, a * f.beta0 + b, 1e-9);
  EXPECT_LT((g.beta - a * f.beta).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(LtsFit, FastMatchesExhaustiveOnSmallProblems) {
  Rng rng(8);
  int matches = 0;
  for (int t = 0; t < 40; ++t) {
    Matrix x = normal_matrix(11, 1, rng);
    Vector y = x.col(0) + normal_vector(11, rng, 0.5);
    y(t % 11) += 5.0;
    LtsConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(t);
    LtsFit fast = lts_fit(x, y, cfg);
    LtsFit exact = lts_enumerate(x, y, fast.h);
    expect_consistent(fast, x, y);
    EXPECT_GE(fast.objective, exact.objective - 1e-12);
    matches += std::abs(fast.objective - exact.objective) <= 1e-9 * std::max(1.0, exact.objective);
  }
  EXPECT_GE(matches, 38);
}

TEST(LtsFit, DeterministicAcrossThreadCounts) {
  Rng rng(9);
  Matrix x = normal_matrix(80, 3, rng);
  Vector y = x * Vector::Ones(3) + normal_vector(80, rng);
  LtsConfig cfg;
  cfg.seed = 11;
  LtsFit a = lts_fit(x, y, cfg);
  cfg.threads = 3;
  LtsFit b = lts_fit(x, y, cfg);
  EXPECT_EQ(a.objective, b.objective);
  EXPECT_EQ(a.retained, b.retained);
}

TEST(LtsFit, Errors) {
  Matrix x = Matrix::Zero(3, 2);
  Vector y = Vector::Zero(3);
  try {
    lts_fit(x, y, LtsConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::too_few_points);
  }
  Matrix xs = Matrix::Ones(10, 1);
  Vector ys = Vector::LinSpaced(10, 0.0, 1.0);
  try {
    lts_fit(xs, ys, LtsConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::singular_design);
  }
  Matrix xl = Matrix::Zero(40, 1);
  Vector yl = Vector::Zero(40);
  try {
    lts_enumerate(xl, yl, 20);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::too_large);
  }
}

TEST(LtsErrorParams, HandComputable) {
  Matrix x = Matrix::Zero(4, 1);
  Vector y(4);
  y << 1.0, -1.0, 1.0, -1.0;
  LtsFit f;
  f.beta0 = 0.0;
  f.beta = Vector::Zero(1);
  f.retained = {0, 1, 2, 3};
  f.h = 4;
  EXPECT_DOUBLE_EQ(estimate_error_params(f, x, y).sigma, 1.0);
  Vector z = Vector::Zero(4);
  EXPECT_EQ(estimate_error_params(f, x, z).sigma, 0.0);
  try {
    estimate_error_params(f, x, y, ErrorFamily::laplace);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::unsupported_family);
  }
}
