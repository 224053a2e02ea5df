#pragma once

#include "noisymoe/common.hpp"
#include "noisymoe/linalg.hpp"

#include <optional>

namespace noisymoe {

/// Mixture of K multivariate normals describing X | Z~.
struct GmmModel {
  Index k = 0;
  Vector weights;
  std::vector<Vector> means;
  std::vector<Matrix> covariances;
  /// Data log-likelihood at the returned parameters.
  double log_likelihood = 0.0;
  /// Training objective: log-likelihood plus the covariance-floor penalty.
  double objective = 0.0;

  Index dim() const { return means.empty() ? 0 : means.front().size(); }
};

struct GmmFitConfig {
  Index k = 1;
  int max_iter = 500;
  double tol = 1e-8;
  int n_restarts = 5;
  /// Added to covariance diagonals. Unset means 1e-6 times the mean diagonal
  /// of the global sample covariance.
  std::optional<double> cov_floor;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// Per-restart diagnostics of fit_gmm.
struct GmmRestartTrace {
  std::vector<double> objective;  // one entry per EM iteration
  int reseeds = 0;
  bool converged = false;
  std::string error;  // empty when the restart succeeded
};

struct GmmFitResult {
  GmmModel model;
  Index best_restart = 0;
  double cov_floor = 0.0;
  std::vector<GmmRestartTrace> restarts;
};

/// Caches the Cholesky factors of a model for repeated posterior queries.
class GmmEvaluator {
 public:
  explicit GmmEvaluator(const GmmModel& m) : log_weights_(m.weights.array().log().matrix()) {
    dens_.reserve(static_cast<std::size_t>(m.k));
    for (Index j = 0; j < m.k; ++j)
      dens_.emplace_back(m.means[static_cast<std::size_t>(j)], m.covariances[static_cast<std::size_t>(j)]);
    dim_ = m.dim();
  }

  Index k() const { return log_weights_.size(); }

  /// N x K matrix of log weight + log density.
  Matrix joint_log(const Eigen::Ref<const Matrix>& x) const {
    require(x.cols() == dim_, ErrorCode::dimension_mismatch, "gmm: covariate dimension mismatch");
    Matrix out(x.rows(), k());
    for (Index j = 0; j < k(); ++j)
      out.col(j) = dens_[static_cast<std::size_t>(j)].rows(x).array() + log_weights_(j);
    return out;
  }

  /// Row-normalized posterior P(Z~ = j | x_i), computed with a max shift.
  Matrix posterior(const Eigen::Ref<const Matrix>& x) const {
    Matrix lj = joint_log(x);
    for (Index i = 0; i < lj.rows(); ++i) {
      double m = lj.row(i).maxCoeff();
      lj.row(i) = (lj.row(i).array() - m).exp();
      lj.row(i) /= lj.row(i).sum();
    }
    return lj;
  }

  template <class D>
    requires(D::ColsAtCompileTime == 1)
  Vector posterior(const Eigen::MatrixBase<D>& x) const {
    Matrix row = x.transpose();
    return posterior(Eigen::Ref<const Matrix>(row)).row(0).transpose();
  }

  std::vector<Index> assign(const Eigen::Ref<const Matrix>& x) const {
    Matrix lj = joint_log(x);
    std::vector<Index> out(static_cast<std::size_t>(x.rows()));
    for (Index i = 0; i < x.rows(); ++i) out[static_cast<std::size_t>(i)] = argmax(lj.row(i).transpose());
    return out;
  }

  Vector log_likelihood_rows(const Eigen::Ref<const Matrix>& x) const {
    Matrix lj = joint_log(x);
    Vector out(x.rows());
    for (Index i = 0; i < x.rows(); ++i) out(i) = log_sum_exp(lj.row(i).transpose());
    return out;
  }

 private:
  Vector log_weights_;
  std::vector<GaussianLogDensity> dens_;
  Index dim_ = 0;
};

template <class D>
  requires(D::ColsAtCompileTime == 1)
inline Vector posterior_tilde_z(const GmmModel& m, const Eigen::MatrixBase<D>& x) {
  return GmmEvaluator(m).posterior(x);
}

/// argmax of the posterior; ties go to the lowest index.
template <class D>
  requires(D::ColsAtCompileTime == 1)
inline Index assign(const GmmModel& m, const Eigen::MatrixBase<D>& x) {
  return argmax(posterior_tilde_z(m, x));
}

inline Index gmm_param_count(Index k, Index p) { return k - 1 + k * p + k * p * (p + 1) / 2; }

namespace detail {

inline std::vector<Vector> kmeanspp_seeds(const Matrix& x, Index k, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const Index n = x.rows();
  std::vector<Vector> centers;
  centers.reserve(static_cast<std::size_t>(k));
  Index first = std::min<Index>(n - 1, static_cast<Index>(unif(rng) * static_cast<double>(n)));
  centers.push_back(x.row(first).transpose());
  Vector d2 = (x.rowwise() - centers.back().transpose()).rowwise().squaredNorm();
  while (static_cast<Index>(centers.size()) < k) {
    double total = d2.sum();
    Index pick = n - 1;
    if (total > 0.0) {
      double u = unif(rng) * total, acc = 0.0;
      for (Index i = 0; i < n; ++i) {
        acc += d2(i);
        if (acc >= u && d2(i) > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = std::min<Index>(n - 1, static_cast<Index>(unif(rng) * static_cast<double>(n)));
    }
    centers.push_back(x.row(pick).transpose());
    d2 = d2.cwiseMin((x.rowwise() - centers.back().transpose()).rowwise().squaredNorm());
  }
  return centers;
}

struct EStep {
  Matrix resp;
  Vector row_ll;
  double log_likelihood = 0.0;
};

inline EStep gmm_estep(const GmmModel& m, const Matrix& x) {
  GmmEvaluator ev(m);
  EStep out;
  out.resp = ev.joint_log(x);
  out.row_ll.resize(x.rows());
  for (Index i = 0; i < x.rows(); ++i) {
    double m_i = out.resp.row(i).maxCoeff();
    out.resp.row(i) = (out.resp.row(i).array() - m_i).exp();
    double s = out.resp.row(i).sum();
    out.resp.row(i) /= s;
    out.row_ll(i) = m_i + std::log(s);
  }
  out.log_likelihood = out.row_ll.sum();
  return out;
}

// The floor enters as a penalty -0.5 * lambda * tr(Sigma_j^{-1}) with
// lambda = floor * N, whose exact M-step is (scatter + lambda I) / N_j. This
// keeps EM monotone in the penalized objective and gives S + floor * I at K = 1.
inline double floor_penalty(const GmmModel& m, double lambda) {
  if (lambda == 0.0) return 0.0;
  double tr = 0.0;
  for (const auto& c : m.covariances) tr += c.inverse().trace();
  return -0.5 * lambda * tr;
}

inline GmmModel fit_single_restart(const Matrix& x, const GmmFitConfig& cfg, double floor,
                                   const Matrix& global_cov, Rng rng, GmmRestartTrace& trace) {
  const Index n = x.rows(), p = x.cols(), k = cfg.k;
  const double lambda = floor * static_cast<double>(n);
  GmmModel m;
  m.k = k;
  m.weights = Vector::Constant(k, 1.0 / static_cast<double>(k));
  m.means = kmeanspp_seeds(x, k, rng);
  Matrix init_cov = global_cov + floor * Matrix::Identity(p, p);
  m.covariances.assign(static_cast<std::size_t>(k), init_cov);

  std::vector<bool> reseeded(static_cast<std::size_t>(k), false);
  double prev = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < cfg.max_iter; ++it) {
    EStep e = gmm_estep(m, x);
    double obj = e.log_likelihood + floor_penalty(m, lambda);
    trace.objective.push_back(obj);
    if (it > 0 && std::abs(obj - prev) < cfg.tol * std::abs(prev)) {
      trace.converged = true;
      break;
    }
    prev = obj;

    Vector mass = e.resp.colwise().sum().transpose();
    bool reseed = false;
    for (Index j = 0; j < k; ++j) {
      if (mass(j) >= 1e-8 * static_cast<double>(n)) continue;
      if (reseeded[static_cast<std::size_t>(j)])
        throw Error(ErrorCode::degenerate_component,
                    "component " + std::to_string(j) + " collapsed after re-seeding");
      Index worst;
      e.row_ll.minCoeff(&worst);
      m.means[static_cast<std::size_t>(j)] = x.row(worst).transpose();
      m.covariances[static_cast<std::size_t>(j)] = init_cov;
      m.weights(j) = 1.0 / static_cast<double>(k);
      m.weights /= m.weights.sum();
      reseeded[static_cast<std::size_t>(j)] = true;
      ++trace.reseeds;
      reseed = true;
    }
    if (reseed) {
      // objective sequence restarts from the re-seeded state
      trace.objective.clear();
      prev = -std::numeric_limits<double>::infinity();
      it = -1;
      continue;
    }

    for (Index j = 0; j < k; ++j) {
      const auto& r = e.resp.col(j);
      double nj = mass(j);
      Vector mu = (x.transpose() * r) / nj;
      Matrix c = x.rowwise() - mu.transpose();
      Matrix scatter = c.transpose() * r.asDiagonal() * c;
      Matrix cov = (scatter + lambda * Matrix::Identity(p, p)) / nj;
      m.means[static_cast<std::size_t>(j)] = mu;
      m.covariances[static_cast<std::size_t>(j)] = 0.5 * (cov + cov.transpose());
      m.weights(j) = nj / static_cast<double>(n);
    }
    m.weights /= m.weights.sum();
  }
  EStep e = gmm_estep(m, x);
  m.log_likelihood = e.log_likelihood;
  m.objective = e.log_likelihood + floor_penalty(m, lambda);
  if (!trace.converged) trace.objective.push_back(m.objective);
  return m;
}

}  // namespace detail

inline double default_cov_floor(const Eigen::Ref<const Matrix>& x) {
  return 1e-6 * sample_covariance(x).diagonal().mean();
}

/// EM with k-means++ seeding and several restarts; the restart with the best
/// training objective wins.
inline GmmFitResult fit_gmm_traced(const Eigen::Ref<const Matrix>& x_in, const GmmFitConfig& cfg) {
  require(cfg.k >= 1, ErrorCode::invalid_argument, "gmm: k must be >= 1");
  require(cfg.max_iter >= 1, ErrorCode::invalid_argument, "gmm: max_iter must be >= 1");
  require(cfg.tol > 0.0, ErrorCode::invalid_argument, "gmm: tol must be > 0");
  require(cfg.n_restarts >= 1, ErrorCode::invalid_argument, "gmm: n_restarts must be >= 1");
  require(!cfg.cov_floor || *cfg.cov_floor >= 0.0, ErrorCode::invalid_argument,
          "gmm: cov_floor must be >= 0");
  const Index n = x_in.rows(), p = x_in.cols();
  require(p >= 1, ErrorCode::dimension_mismatch, "gmm: no covariate columns");
  require(n >= cfg.k * (p + 1), ErrorCode::too_few_points, "gmm: need N >= k (p + 1) points");
  require(x_in.allFinite(), ErrorCode::non_finite, "gmm: non-finite covariates");

  Matrix x = x_in;
  Matrix global_cov = sample_covariance(x);
  GmmFitResult result;
  result.cov_floor = cfg.cov_floor ? *cfg.cov_floor : 1e-6 * global_cov.diagonal().mean();

  std::vector<GmmModel> models(static_cast<std::size_t>(cfg.n_restarts));
  result.restarts.resize(static_cast<std::size_t>(cfg.n_restarts));
  parallel_for(static_cast<std::size_t>(cfg.n_restarts), cfg.threads, [&](std::size_t r) {
    try {
      models[r] = detail::fit_single_restart(x, cfg, result.cov_floor, global_cov,
                                             make_rng(cfg.seed, r), result.restarts[r]);
    } catch (const Error& e) {
      result.restarts[r].error = e.what();
    }
  });

  std::optional<std::size_t> best;
  for (std::size_t r = 0; r < models.size(); ++r) {
    if (!result.restarts[r].error.empty()) continue;
    if (!best || models[r].objective > models[*best].objective) best = r;
  }
  if (!best) throw Error(ErrorCode::degenerate_component, result.restarts.front().error);
  result.model = std::move(models[*best]);
  result.best_restart = static_cast<Index>(*best);
  return result;
}

inline GmmModel fit_gmm(const Eigen::Ref<const Matrix>& x, const GmmFitConfig& cfg) {
  return fit_gmm_traced(x, cfg).model;
}

inline double gmm_bic(const GmmModel& m, Index n) {
  return -2.0 * m.log_likelihood +
         static_cast<double>(gmm_param_count(m.k, m.dim())) * std::log(static_cast<double>(n));
}

struct BicRow {
  Index k = 0;
  double bic = std::numeric_limits<double>::quiet_NaN();
  double log_likelihood = std::numeric_limits<double>::quiet_NaN();
  Index n_params = 0;
  std::string error;
};

struct BicTable {
  std::vector<BicRow> rows;
  Index suggested_k = 0;
};

/// Fits every candidate and suggests the smallest k after which the relative
/// BIC improvement drops below `elbow_threshold`.
inline BicTable select_k_bic(const Eigen::Ref<const Matrix>& x, std::vector<Index> candidates,
                             GmmFitConfig cfg, double elbow_threshold = 0.02) {
  require(!candidates.empty(), ErrorCode::invalid_argument, "bic: empty candidate list");
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  BicTable table;
  for (Index k : candidates) {
    BicRow row;
    row.k = k;
    row.n_params = gmm_param_count(k, x.cols());
    try {
      cfg.k = k;
      GmmModel m = fit_gmm(x, cfg);
      row.log_likelihood = m.log_likelihood;
      row.bic = gmm_bic(m, x.rows());
    } catch (const Error& e) {
      row.error = e.what();
    }
    table.rows.push_back(row);
  }
  std::vector<const BicRow*> ok;
  for (const auto& r : table.rows)
    if (r.error.empty()) ok.push_back(&r);
  if (ok.empty()) throw Error(ErrorCode::degenerate_component, "bic: every candidate failed");
  table.suggested_k = ok.back()->k;
  for (std::size_t i = 0; i + 1 < ok.size(); ++i) {
    double rel = (ok[i]->bic - ok[i + 1]->bic) / std::abs(ok[i]->bic);
    if (rel < elbow_threshold) {
      table.suggested_k = ok[i]->k;
      break;
    }
  }
  return table;
}

}  // namespace noisymoe
