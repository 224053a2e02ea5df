#pragma once

#include "noisymoe/common.hpp"

namespace noisymoe {

/// Intercept plus slope vector of a linear predictor.
struct LinearFit {
  double beta0 = 0.0;
  Vector beta;
  Index rank = 0;

  template <class D>
    requires(D::ColsAtCompileTime == 1)
  double predict(const Eigen::MatrixBase<D>& x) const { return beta0 + beta.dot(x); }
  Vector predict(const Eigen::Ref<const Matrix>& x) const {
    return (x * beta).array() + beta0;
  }
};

/// [1 | x]
inline Matrix with_intercept(const Eigen::Ref<const Matrix>& x) {
  Matrix a(x.rows(), x.cols() + 1);
  a.col(0).setOnes();
  a.rightCols(x.cols()) = x;
  return a;
}

/// Least squares with an unpenalized intercept. Rank-deficient designs get the
/// minimum-norm solution; `rank` reports the numerical rank of [1 | x].
inline LinearFit ols(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Vector>& y) {
  require(x.rows() == y.size(), ErrorCode::dimension_mismatch, "ols: rows of x and y differ");
  Matrix a = with_intercept(x);
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(a);
  Vector coef = cod.solve(y);
  LinearFit fit;
  fit.beta0 = coef(0);
  fit.beta = coef.tail(x.cols());
  fit.rank = cod.rank();
  return fit;
}

/// Weighted least squares (weights >= 0) with intercept, minimum-norm on rank loss.
inline LinearFit wls(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Vector>& y,
                     const Eigen::Ref<const Vector>& w) {
  Vector sw = w.array().max(0.0).sqrt().matrix();
  Matrix a = sw.asDiagonal() * with_intercept(x);
  Vector b = sw.cwiseProduct(y);
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(a);
  Vector coef = cod.solve(b);
  LinearFit fit;
  fit.beta0 = coef(0);
  fit.beta = coef.tail(x.cols());
  fit.rank = cod.rank();
  return fit;
}

/// Multivariate normal log-density with a cached Cholesky factor.
class GaussianLogDensity {
 public:
  GaussianLogDensity() = default;
  GaussianLogDensity(Vector mean, const Matrix& cov) : mean_(std::move(mean)), llt_(cov) {
    require(llt_.info() == Eigen::Success, ErrorCode::degenerate_component,
            "covariance is not positive definite");
    const Matrix& l = llt_.matrixL();
    log_norm_ = -0.5 * static_cast<double>(mean_.size()) * kLogTwoPi -
                l.diagonal().array().log().sum();
  }

  double operator()(const Eigen::Ref<const Vector>& x) const {
    Vector z = llt_.matrixL().solve(x - mean_);
    return log_norm_ - 0.5 * z.squaredNorm();
  }

  /// Row-wise log-density of an N x p matrix.
  Vector rows(const Eigen::Ref<const Matrix>& x) const {
    Matrix centered = (x.rowwise() - mean_.transpose()).transpose();
    llt_.matrixL().solveInPlace(centered);
    return (log_norm_ - 0.5 * centered.colwise().squaredNorm().array()).matrix().transpose();
  }

 private:
  Vector mean_;
  Eigen::LLT<Matrix> llt_;
  double log_norm_ = 0.0;
};

inline double normal_log_pdf(double r, double sigma) {
  return -0.5 * kLogTwoPi - std::log(sigma) - 0.5 * (r / sigma) * (r / sigma);
}

/// Biased (1/N) sample covariance.
inline Matrix sample_covariance(const Eigen::Ref<const Matrix>& x) {
  Vector mean = x.colwise().mean().transpose();
  Matrix c = x.rowwise() - mean.transpose();
  return (c.transpose() * c) / static_cast<double>(x.rows());
}

}  // namespace noisymoe
