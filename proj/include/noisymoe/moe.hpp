#pragma once

#include "noisymoe/common.hpp"
#include "noisymoe/gmm.hpp"
#include "noisymoe/linalg.hpp"
#include "noisymoe/lts.hpp"
#include "noisymoe/transition.hpp"

#include <optional>

namespace noisymoe {

/// One linear expert with its error distribution.
struct ExpertModel {
  double beta0 = 0.0;
  Vector beta;
  ErrorFamily error_family = ErrorFamily::gaussian;
  double sigma = 0.0;

  double mean(const Eigen::Ref<const Vector>& x) const { return beta0 + beta.dot(x); }
};

enum class ClusterStatus { fitted, thin, empty };

inline const char* to_string(ClusterStatus s) {
  switch (s) {
    case ClusterStatus::fitted: return "fitted";
    case ClusterStatus::thin: return "thin";
    case ClusterStatus::empty: return "empty";
  }
  return "fitted";
}

struct NoisyMoeDiagnostics {
  std::vector<Index> labeled_counts;   // |I_k|
  std::vector<Index> retained_counts;  // h_k (|I_k| for untrimmed fallbacks)
  std::vector<ClusterStatus> status;
  std::vector<double> lts_objective;
  std::vector<double> eg_trace;
  double sigma_floor = 0.0;
  Index screened_out = 0;
};

struct NoisyMoeModel {
  GmmModel gmm;
  std::vector<ExpertModel> experts;
  TransitionMatrix transition;
  double alpha_used = 0.5;
  NoisyMoeDiagnostics diagnostics;

  Index k() const { return gmm.k; }
};

enum class GmmPool { all, unlabeled_only };

struct NoisyMoeConfig {
  Index k = 1;
  double alpha = 0.5;
  GmmFitConfig gmm;
  LtsConfig lts;
  EgConfig eg;
  GmmPool pool = GmmPool::all;
  ErrorFamily family = ErrorFamily::gaussian;
  /// Drop labeled points with ||x||_2 above this radius before Steps 2-4.
  std::optional<double> screen_radius;
  unsigned threads = 1;
};

namespace detail {

inline double response_scale(const Eigen::Ref<const Vector>& y) {
  double s = sample_sd(y);
  return s > 0.0 && std::isfinite(s) ? s : 1.0;
}

inline double rms(const Eigen::Ref<const Vector>& r) {
  return r.size() == 0 ? 0.0 : std::sqrt(r.squaredNorm() / static_cast<double>(r.size()));
}

inline std::vector<std::vector<Index>> partition(const std::vector<Index>& labels, Index k) {
  std::vector<std::vector<Index>> groups(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < labels.size(); ++i)
    groups[static_cast<std::size_t>(labels[i])].push_back(static_cast<Index>(i));
  return groups;
}

inline Matrix expert_densities(const std::vector<ExpertModel>& experts, const Eigen::Ref<const Matrix>& x,
                               const Eigen::Ref<const Vector>& y) {
  Matrix d(x.rows(), static_cast<Index>(experts.size()));
  for (std::size_t k = 0; k < experts.size(); ++k) {
    const auto& e = experts[k];
    for (Index i = 0; i < x.rows(); ++i)
      d(i, static_cast<Index>(k)) = std::exp(normal_log_pdf(y(i) - e.mean(x.row(i).transpose()), e.sigma));
  }
  return d;
}

}  // namespace detail

/// Steps 2-5 given an already fitted (or known) covariate mixture.
inline NoisyMoeModel fit_noisy_moe(const GmmModel& gmm, const Eigen::Ref<const Matrix>& x_in,
                                   const Eigen::Ref<const Vector>& y_in, const NoisyMoeConfig& cfg) {
  require(x_in.rows() == y_in.size(), ErrorCode::dimension_mismatch, "moe: rows of x and y differ");
  require(x_in.rows() >= 1, ErrorCode::too_few_points, "moe: no labeled data");
  require(x_in.cols() == gmm.dim(), ErrorCode::dimension_mismatch, "moe: covariate dimension differs from gmm");
  require(cfg.alpha >= 0.5 && cfg.alpha <= 1.0, ErrorCode::invalid_argument, "moe: alpha must lie in [0.5, 1]");

  Matrix x = x_in;
  Vector y = y_in;
  NoisyMoeModel model;
  model.gmm = gmm;
  model.alpha_used = cfg.alpha;
  const Index k = gmm.k, p = x.cols();

  if (cfg.screen_radius) {
    std::vector<Index> keep;
    for (Index i = 0; i < x.rows(); ++i)
      if (x.row(i).norm() <= *cfg.screen_radius) keep.push_back(i);
    model.diagnostics.screened_out = x.rows() - static_cast<Index>(keep.size());
    require(!keep.empty(), ErrorCode::too_few_points, "moe: screening removed every labeled point");
    x = take_rows(x, keep);
    y = take(y, keep);
  }

  GmmEvaluator ev(gmm);
  auto groups = detail::partition(ev.assign(x), k);
  const double sigma_floor = 1e-8 * detail::response_scale(y);
  auto& diag = model.diagnostics;
  diag.sigma_floor = sigma_floor;
  diag.labeled_counts.resize(static_cast<std::size_t>(k));
  diag.retained_counts.resize(static_cast<std::size_t>(k));
  diag.status.resize(static_cast<std::size_t>(k));
  diag.lts_objective.assign(static_cast<std::size_t>(k), std::numeric_limits<double>::quiet_NaN());
  model.experts.resize(static_cast<std::size_t>(k));

  std::optional<ExpertModel> global;
  auto global_fit = [&] {
    if (!global) {
      LinearFit f = ols(x, y);
      global = ExpertModel{f.beta0, f.beta, cfg.family, detail::rms(y - f.predict(x))};
    }
    return *global;
  };
  bool any_empty = false;
  for (const auto& g : groups) any_empty |= g.empty();
  if (any_empty) global_fit();

  LtsConfig lts = cfg.lts;
  lts.alpha = cfg.alpha;
  parallel_for(static_cast<std::size_t>(k), cfg.threads, [&](std::size_t c) {
    const auto& idx = groups[c];
    const auto m = static_cast<Index>(idx.size());
    diag.labeled_counts[c] = m;
    ExpertModel e;
    if (m == 0) {
      e = *global;
      diag.status[c] = ClusterStatus::empty;
      diag.retained_counts[c] = 0;
    } else {
      Matrix xs = take_rows(x, idx);
      Vector ys = take(y, idx);
      if (m < 2 * (p + 2)) {
        LinearFit f = ols(xs, ys);
        e = ExpertModel{f.beta0, f.beta, cfg.family, detail::rms(ys - f.predict(xs))};
        diag.status[c] = ClusterStatus::thin;
        diag.retained_counts[c] = m;
      } else {
        LtsConfig local = lts;
        local.seed = stream_seed(lts.seed, c);
        LtsFit fit = lts_fit(xs, ys, local);
        ErrorParams th = estimate_error_params(fit, xs, ys, cfg.family);
        e = ExpertModel{fit.beta0, fit.beta, th.family, th.sigma};
        diag.status[c] = ClusterStatus::fitted;
        diag.retained_counts[c] = fit.h;
        diag.lts_objective[c] = fit.objective;
      }
    }
    e.sigma = std::max(e.sigma, sigma_floor);
    model.experts[c] = std::move(e);
  });

  EgProblem prob{ev.posterior(x), detail::expert_densities(model.experts, x, y)};
  EgResult eg = fit_transition(prob, cfg.eg);
  model.transition = std::move(eg.transition);
  diag.eg_trace = std::move(eg.trace);
  return model;
}

/// Full pipeline; the covariate mixture is fitted on the pooled covariates or
/// on the unlabeled ones only, per cfg.pool.
inline NoisyMoeModel fit_noisy_moe(const Eigen::Ref<const Matrix>& x_labeled, const Eigen::Ref<const Vector>& y,
                                   const Eigen::Ref<const Matrix>& x_unlabeled, const NoisyMoeConfig& cfg) {
  require(x_unlabeled.rows() == 0 || x_unlabeled.cols() == x_labeled.cols(), ErrorCode::dimension_mismatch,
          "moe: labeled and unlabeled covariates differ in dimension");
  GmmFitConfig gcfg = cfg.gmm;
  gcfg.k = cfg.k;
  GmmModel gmm;
  if (cfg.pool == GmmPool::unlabeled_only) {
    gmm = fit_gmm(x_unlabeled, gcfg);
  } else {
    Matrix pooled(x_labeled.rows() + x_unlabeled.rows(), x_labeled.cols());
    pooled << x_labeled, x_unlabeled;
    gmm = fit_gmm(pooled, gcfg);
  }
  return fit_noisy_moe(gmm, x_labeled, y, cfg);
}

/// P(Z = . | x) = Pi * P(Z~ = . | x).
template <class D>
  requires(D::ColsAtCompileTime == 1)
inline Vector gate(const NoisyMoeModel& m, const Eigen::MatrixBase<D>& x) {
  return m.transition.pi * posterior_tilde_z(m.gmm, x);
}

/// N x K gate matrix for a batch of covariates.
inline Matrix gate(const NoisyMoeModel& m, const Eigen::Ref<const Matrix>& x) {
  return GmmEvaluator(m.gmm).posterior(x) * m.transition.pi.transpose();
}

inline Matrix expert_means(const std::vector<ExpertModel>& experts, const Eigen::Ref<const Matrix>& x) {
  Matrix out(x.rows(), static_cast<Index>(experts.size()));
  for (std::size_t k = 0; k < experts.size(); ++k)
    out.col(static_cast<Index>(k)) = (x * experts[k].beta).array() + experts[k].beta0;
  return out;
}

template <class D>
  requires(D::ColsAtCompileTime == 1)
inline double predict(const NoisyMoeModel& m, const Eigen::MatrixBase<D>& x) {
  Vector g = gate(m, x);
  double y = 0.0;
  for (Index k = 0; k < m.k(); ++k) y += g(k) * m.experts[static_cast<std::size_t>(k)].mean(x);
  return y;
}

inline Vector predict(const NoisyMoeModel& m, const Eigen::Ref<const Matrix>& x) {
  return gate(m, x).cwiseProduct(expert_means(m.experts, x)).rowwise().sum();
}

/// min over clusters j of the empirical frequency P(Z = j | s(X) = j).
inline double empirical_gamma0(const std::vector<Index>& assignment, const std::vector<Index>& z, Index k) {
  require(assignment.size() == z.size(), ErrorCode::dimension_mismatch, "gamma0: label vectors differ in length");
  std::vector<double> hits(static_cast<std::size_t>(k), 0.0), total(static_cast<std::size_t>(k), 0.0);
  for (std::size_t i = 0; i < z.size(); ++i) {
    auto a = static_cast<std::size_t>(assignment[i]);
    total[a] += 1.0;
    if (z[i] == assignment[i]) hits[a] += 1.0;
  }
  double gamma = 1.0;
  for (std::size_t j = 0; j < total.size(); ++j) {
    require(total[j] > 0.0, ErrorCode::empty_cell, "gamma0: cluster " + std::to_string(j) + " received no points");
    gamma = std::min(gamma, hits[j] / total[j]);
  }
  return gamma;
}

/// Same, with s(X) taken as the argmax posterior of `gmm` (the Bayes rule when
/// `gmm` holds the true parameters).
inline double empirical_gamma0(const GmmModel& gmm, const Eigen::Ref<const Matrix>& x, const std::vector<Index>& z) {
  return empirical_gamma0(GmmEvaluator(gmm).assign(x), z, gmm.k);
}

}  // namespace noisymoe
