#pragma once

#include "noisymoe/common.hpp"
#include "noisymoe/gmm.hpp"
#include "noisymoe/linalg.hpp"
#include "noisymoe/moe.hpp"

namespace noisymoe {

// ---------------------------------------------------------------------------
// Semi-supervised MoE: per-cluster OLS, gate = covariate-mixture posterior.
// ---------------------------------------------------------------------------

struct MoessModel {
  GmmModel gmm;
  std::vector<ExpertModel> experts;
  std::vector<Index> labeled_counts;
  std::vector<ClusterStatus> status;

  Index k() const { return gmm.k; }
};

inline MoessModel fit_moess(const GmmModel& gmm, const Eigen::Ref<const Matrix>& x,
                            const Eigen::Ref<const Vector>& y) {
  require(x.rows() == y.size(), ErrorCode::dimension_mismatch, "moess: rows of x and y differ");
  require(x.rows() >= 1, ErrorCode::too_few_points, "moess: no labeled data");
  require(x.cols() == gmm.dim(), ErrorCode::dimension_mismatch, "moess: covariate dimension differs from gmm");
  const Index k = gmm.k, p = x.cols();
  MoessModel model;
  model.gmm = gmm;
  auto groups = detail::partition(GmmEvaluator(gmm).assign(x), k);
  std::optional<ExpertModel> global;
  for (Index c = 0; c < k; ++c) {
    const auto& idx = groups[static_cast<std::size_t>(c)];
    model.labeled_counts.push_back(static_cast<Index>(idx.size()));
    if (idx.empty()) {
      if (!global) {
        LinearFit f = ols(x, y);
        global = ExpertModel{f.beta0, f.beta, ErrorFamily::gaussian, detail::rms(y - f.predict(x))};
      }
      model.experts.push_back(*global);
      model.status.push_back(ClusterStatus::empty);
      continue;
    }
    Matrix xs = take_rows(x, idx);
    Vector ys = take(y, idx);
    LinearFit f = ols(xs, ys);
    model.experts.push_back(ExpertModel{f.beta0, f.beta, ErrorFamily::gaussian, detail::rms(ys - f.predict(xs))});
    model.status.push_back(static_cast<Index>(idx.size()) < 2 * (p + 2) ? ClusterStatus::thin
                                                                        : ClusterStatus::fitted);
  }
  return model;
}

inline MoessModel fit_moess(const Eigen::Ref<const Matrix>& x_labeled, const Eigen::Ref<const Vector>& y,
                            const Eigen::Ref<const Matrix>& x_unlabeled, GmmFitConfig gcfg,
                            GmmPool pool = GmmPool::all) {
  GmmModel gmm;
  if (pool == GmmPool::unlabeled_only) {
    gmm = fit_gmm(x_unlabeled, gcfg);
  } else {
    Matrix pooled(x_labeled.rows() + x_unlabeled.rows(), x_labeled.cols());
    pooled << x_labeled, x_unlabeled;
    gmm = fit_gmm(pooled, gcfg);
  }
  return fit_moess(gmm, x_labeled, y);
}

inline Vector predict_moess(const MoessModel& m, const Eigen::Ref<const Matrix>& x) {
  return GmmEvaluator(m.gmm).posterior(x).cwiseProduct(expert_means(m.experts, x)).rowwise().sum();
}

template <class D>
  requires(D::ColsAtCompileTime == 1)
inline double predict_moess(const MoessModel& m, const Eigen::MatrixBase<D>& x) {
  Matrix row = x.transpose();
  return predict_moess(m, Eigen::Ref<const Matrix>(row))(0);
}

// ---------------------------------------------------------------------------
// Supervised MoE with a softmax gate, fitted by EM.
// ---------------------------------------------------------------------------

enum class GateKind { linear, quadratic };

inline const char* to_string(GateKind g) { return g == GateKind::linear ? "linear" : "quadratic"; }

/// Gate feature map: [1, x] or [1, x, x_i x_j for i <= j].
inline Matrix gate_features(GateKind kind, const Eigen::Ref<const Matrix>& x) {
  const Index n = x.rows(), p = x.cols();
  const Index d = kind == GateKind::linear ? 1 + p : 1 + p + p * (p + 1) / 2;
  Matrix phi(n, d);
  phi.col(0).setOnes();
  phi.middleCols(1, p) = x;
  if (kind == GateKind::quadratic) {
    Index c = 1 + p;
    for (Index i = 0; i < p; ++i)
      for (Index j = i; j < p; ++j) phi.col(c++) = x.col(i).cwiseProduct(x.col(j));
  }
  return phi;
}

struct MoeModel {
  GateKind gate_kind = GateKind::linear;
  /// K x d gate coefficients over gate_features; row 0 is pinned to zero.
  Matrix gate_params;
  std::vector<ExpertModel> experts;
  double log_likelihood = 0.0;

  Index k() const { return static_cast<Index>(experts.size()); }
};

struct MoeEmConfig {
  int n_restarts = 5;
  int max_iter = 1000;
  double tol = 1e-8;
  int irls_max_iter = 25;
  double ridge = 1e-8;
  int kmeans_iter = 50;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct MoeRestartTrace {
  std::vector<double> log_likelihood;
  int sigma_floor_hits = 0;
  bool converged = false;
  std::string error;
};

struct MoeFitResult {
  MoeModel model;
  Index best_restart = 0;
  std::vector<MoeRestartTrace> restarts;
};

/// Row-wise log softmax of the logits.
inline Matrix log_softmax_rows(const Matrix& logits) {
  Matrix out = logits;
  for (Index i = 0; i < out.rows(); ++i) {
    double lse = log_sum_exp(out.row(i).transpose());
    out.row(i).array() -= lse;
  }
  return out;
}

inline Matrix moe_gate(const MoeModel& m, const Eigen::Ref<const Matrix>& x) {
  Matrix logits = gate_features(m.gate_kind, x) * m.gate_params.transpose();
  return log_softmax_rows(logits).array().exp().matrix();
}

inline Vector predict_moe(const MoeModel& m, const Eigen::Ref<const Matrix>& x) {
  return moe_gate(m, x).cwiseProduct(expert_means(m.experts, x)).rowwise().sum();
}

template <class D>
  requires(D::ColsAtCompileTime == 1)
inline double predict_moe(const MoeModel& m, const Eigen::MatrixBase<D>& x) {
  Matrix row = x.transpose();
  return predict_moe(m, Eigen::Ref<const Matrix>(row))(0);
}

namespace detail {

/// k-means++ seeding followed by Lloyd iterations; returns labels.
inline std::vector<Index> kmeans_labels(const Matrix& x, Index k, int iters, Rng& rng) {
  std::vector<Vector> centers = kmeanspp_seeds(x, k, rng);
  std::vector<Index> labels(static_cast<std::size_t>(x.rows()), 0);
  for (int it = 0; it < iters; ++it) {
    bool changed = false;
    for (Index i = 0; i < x.rows(); ++i) {
      Index best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (Index c = 0; c < k; ++c) {
        double d = (x.row(i).transpose() - centers[static_cast<std::size_t>(c)]).squaredNorm();
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      if (labels[static_cast<std::size_t>(i)] != best) {
        changed = true;
        labels[static_cast<std::size_t>(i)] = best;
      }
    }
    std::vector<Vector> sums(static_cast<std::size_t>(k), Vector::Zero(x.cols()));
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < x.rows(); ++i) {
      auto l = static_cast<std::size_t>(labels[static_cast<std::size_t>(i)]);
      sums[l] += x.row(i).transpose();
      ++counts[l];
    }
    for (std::size_t c = 0; c < sums.size(); ++c)
      if (counts[c] > 0) centers[c] = sums[c] / static_cast<double>(counts[c]);
    if (!changed && it > 0) break;
  }
  return labels;
}

struct MoeState {
  Matrix gate_params;
  std::vector<ExpertModel> experts;
};

inline Matrix moe_log_joint(const MoeState& s, const Matrix& phi, const Matrix& x, const Vector& y) {
  Matrix lj = log_softmax_rows(phi * s.gate_params.transpose());
  for (std::size_t k = 0; k < s.experts.size(); ++k) {
    const auto& e = s.experts[k];
    Vector r = y - ((x * e.beta).array() + e.beta0).matrix();
    lj.col(static_cast<Index>(k)).array() +=
        -0.5 * kLogTwoPi - std::log(e.sigma) - 0.5 * (r.array() / e.sigma).square();
  }
  return lj;
}

inline double gate_q(const Matrix& params, const Matrix& phi, const Matrix& resp) {
  return resp.cwiseProduct(log_softmax_rows(phi * params.transpose())).sum();
}

// Newton ascent on sum_i sum_k r_ik log w_k(x_i) over rows 1..K-1, with a
// ridge on the Hessian and step halving so the objective never drops.
inline void gate_mstep(Matrix& params, const Matrix& phi, const Matrix& resp, const MoeEmConfig& cfg) {
  const Index k = params.rows(), d = params.cols(), free = (k - 1) * d;
  if (free == 0) return;
  double q = gate_q(params, phi, resp);
  for (int it = 0; it < cfg.irls_max_iter; ++it) {
    Matrix w = log_softmax_rows(phi * params.transpose()).array().exp().matrix();
    Vector grad(free);
    Matrix hess = Matrix::Zero(free, free);  // negative Hessian
    for (Index a = 1; a < k; ++a) {
      grad.segment((a - 1) * d, d) = phi.transpose() * (resp.col(a) - w.col(a));
      for (Index b = a; b < k; ++b) {
        Vector c = a == b ? Vector(w.col(a).cwiseProduct((1.0 - w.col(a).array()).matrix()))
                          : Vector(-w.col(a).cwiseProduct(w.col(b)));
        Matrix block = phi.transpose() * c.asDiagonal() * phi;
        hess.block((a - 1) * d, (b - 1) * d, d, d) = block;
        if (a != b) hess.block((b - 1) * d, (a - 1) * d, d, d) = block.transpose();
      }
    }
    hess.diagonal().array() += cfg.ridge;
    Vector delta = hess.ldlt().solve(grad);
    if (!delta.allFinite()) return;
    Matrix step = Matrix::Zero(k, d);
    for (Index a = 1; a < k; ++a) step.row(a) = delta.segment((a - 1) * d, d).transpose();
    double t = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 40; ++ls, t *= 0.5) {
      Matrix trial = params + t * step;
      double qt = gate_q(trial, phi, resp);
      if (qt >= q) {
        double gain = qt - q;
        params = trial;
        q = qt;
        moved = true;
        if (gain <= 1e-12 * std::max(1.0, std::abs(q))) return;
        break;
      }
    }
    if (!moved) return;
  }
}

inline MoeModel fit_moe_restart(const Matrix& x, const Vector& y, Index k, GateKind kind, const MoeEmConfig& cfg,
                                Rng rng, MoeRestartTrace& trace) {
  const Index n = x.rows();
  const double sigma_floor = 1e-6 * response_scale(y);
  Matrix phi = gate_features(kind, x);

  MoeState s;
  s.gate_params = Matrix::Zero(k, phi.cols());
  std::optional<ExpertModel> global;
  auto labels = kmeans_labels(x, k, cfg.kmeans_iter, rng);
  auto groups = partition(labels, k);
  for (Index c = 0; c < k; ++c) {
    const auto& idx = groups[static_cast<std::size_t>(c)];
    if (idx.empty()) {
      if (!global) {
        LinearFit f = ols(x, y);
        global = ExpertModel{f.beta0, f.beta, ErrorFamily::gaussian, rms(y - f.predict(x))};
      }
      s.experts.push_back(*global);
    } else {
      Matrix xs = take_rows(x, idx);
      Vector ys = take(y, idx);
      LinearFit f = ols(xs, ys);
      s.experts.push_back(ExpertModel{f.beta0, f.beta, ErrorFamily::gaussian, rms(ys - f.predict(xs))});
    }
    s.experts.back().sigma = std::max(s.experts.back().sigma, sigma_floor);
  }

  double prev = 0.0;
  for (int it = 0; it <= cfg.max_iter; ++it) {
    Matrix lj = moe_log_joint(s, phi, x, y);
    Matrix resp(n, k);
    double ll = 0.0;
    for (Index i = 0; i < n; ++i) {
      double lse = log_sum_exp(lj.row(i).transpose());
      ll += lse;
      resp.row(i) = (lj.row(i).array() - lse).exp();
    }
    trace.log_likelihood.push_back(ll);
    if (it > 0 && std::abs(ll - prev) < cfg.tol * std::abs(prev)) {
      trace.converged = true;
      break;
    }
    if (it == cfg.max_iter) break;
    prev = ll;

    for (Index c = 0; c < k; ++c) {
      Vector r = resp.col(c);
      double mass = r.sum();
      if (mass < 1e-8 * static_cast<double>(n))
        throw Error(ErrorCode::degenerate, "moe: expert " + std::to_string(c) + " lost all responsibility");
      LinearFit f = wls(x, y, r);
      Vector res = y - f.predict(x);
      double var = r.dot(res.cwiseProduct(res)) / mass;
      double sigma = std::sqrt(std::max(var, 0.0));
      if (sigma < sigma_floor) {
        sigma = sigma_floor;
        ++trace.sigma_floor_hits;
      }
      s.experts[static_cast<std::size_t>(c)] = ExpertModel{f.beta0, f.beta, ErrorFamily::gaussian, sigma};
    }
    gate_mstep(s.gate_params, phi, resp, cfg);
  }

  MoeModel m;
  m.gate_kind = kind;
  m.gate_params = s.gate_params;
  m.experts = s.experts;
  m.log_likelihood = trace.log_likelihood.back();
  return m;
}

}  // namespace detail

/// EM for the supervised mixture of experts, best of cfg.n_restarts restarts.
inline MoeFitResult fit_moe_em_traced(const Eigen::Ref<const Matrix>& x_in, const Eigen::Ref<const Vector>& y_in,
                                      Index k, GateKind kind, const MoeEmConfig& cfg) {
  require(x_in.rows() == y_in.size(), ErrorCode::dimension_mismatch, "moe-em: rows of x and y differ");
  require(k >= 1, ErrorCode::invalid_argument, "moe-em: k must be >= 1");
  require(cfg.n_restarts >= 1 && cfg.max_iter >= 1, ErrorCode::invalid_argument, "moe-em: invalid config");
  require(x_in.rows() >= k * (x_in.cols() + 2), ErrorCode::too_few_points, "moe-em: need n >= k (p + 2)");
  require(x_in.allFinite() && y_in.allFinite(), ErrorCode::non_finite, "moe-em: non-finite input");
  Matrix x = x_in;
  Vector y = y_in;

  MoeFitResult result;
  result.restarts.resize(static_cast<std::size_t>(cfg.n_restarts));
  std::vector<MoeModel> models(result.restarts.size());
  parallel_for(models.size(), cfg.threads, [&](std::size_t r) {
    try {
      models[r] = detail::fit_moe_restart(x, y, k, kind, cfg, make_rng(cfg.seed, r), result.restarts[r]);
    } catch (const Error& e) {
      result.restarts[r].error = e.what();
    }
  });
  std::optional<std::size_t> best;
  for (std::size_t r = 0; r < models.size(); ++r) {
    if (!result.restarts[r].error.empty()) continue;
    if (!best || models[r].log_likelihood > models[*best].log_likelihood) best = r;
  }
  if (!best) throw Error(ErrorCode::degenerate, result.restarts.front().error);
  result.model = std::move(models[*best]);
  result.best_restart = static_cast<Index>(*best);
  return result;
}

inline MoeModel fit_moe_em(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Vector>& y, Index k,
                           GateKind kind, const MoeEmConfig& cfg) {
  return fit_moe_em_traced(x, y, k, kind, cfg).model;
}

}  // namespace noisymoe
