#pragma once

#include "noisymoe/common.hpp"
#include "noisymoe/linalg.hpp"

#include <numeric>
#include <optional>

namespace noisymoe {

struct LtsConfig {
  /// Retaining fraction in [0.5, 1].
  double alpha = 0.5;
  int n_starts = 500;
  int n_keep = 10;
  int max_csteps = 50;
  std::uint64_t seed = 0;
  /// Enumerate every retained subset instead of the FAST-LTS search.
  bool exhaustive = false;
  unsigned threads = 1;
};

struct LtsFit {
  double beta0 = 0.0;
  Vector beta;
  /// Retained observation indices, ascending.
  std::vector<Index> retained;
  Index h = 0;
  /// Sum of retained squared residuals divided by (h - p - 1).
  double objective = std::numeric_limits<double>::infinity();
  bool converged = false;

  LinearFit linear() const { return LinearFit{beta0, beta, beta.size() + 1}; }
};

/// floor(alpha (m + p + 1)) clamped to [p + 2, m].
inline Index lts_h(Index m, Index p, double alpha) {
  auto h = static_cast<Index>(std::floor(alpha * static_cast<double>(m + p + 1)));
  return std::clamp<Index>(h, p + 2, m);
}

inline double trimmed_objective(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Vector>& y,
                                double beta0, const Eigen::Ref<const Vector>& beta,
                                const std::vector<Index>& retained) {
  double ssr = 0.0;
  for (Index i : retained) {
    double r = y(i) - beta0 - x.row(i).dot(beta);
    ssr += r * r;
  }
  return ssr / static_cast<double>(static_cast<Index>(retained.size()) - x.cols() - 1);
}

/// Indices of the h smallest squared residuals (ties by lowest index), ascending.
inline std::vector<Index> smallest_residuals(const Eigen::Ref<const Matrix>& x,
                                             const Eigen::Ref<const Vector>& y, const LinearFit& fit,
                                             Index h) {
  Vector r2 = (y - fit.predict(x)).array().square().matrix();
  std::vector<Index> idx(static_cast<std::size_t>(y.size()));
  std::iota(idx.begin(), idx.end(), Index{0});
  auto less = [&](Index a, Index b) { return r2(a) < r2(b) || (r2(a) == r2(b) && a < b); };
  std::nth_element(idx.begin(), idx.begin() + (h - 1), idx.end(), less);
  idx.resize(static_cast<std::size_t>(h));
  std::sort(idx.begin(), idx.end());
  return idx;
}

struct CStepTrace {
  LtsFit fit;
  /// Objective after each concentration step.
  std::vector<double> objective;
};

/// Concentration steps from `start`: select the h smallest residuals, refit by
/// OLS, repeat until the retained set is stable or `max_steps` refits are done.
/// The returned fit always pairs the coefficients with their own h smallest
/// residuals.
inline CStepTrace lts_csteps(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Vector>& y,
                             LinearFit start, Index h, int max_steps) {
  CStepTrace out;
  LinearFit cur = std::move(start);
  std::vector<Index> set = smallest_residuals(x, y, cur, h);
  out.objective.push_back(trimmed_objective(x, y, cur.beta0, cur.beta, set));
  bool converged = false;
  for (int step = 0; step < max_steps; ++step) {
    cur = ols(take_rows(x, set), take(y, set));
    std::vector<Index> next = smallest_residuals(x, y, cur, h);
    out.objective.push_back(trimmed_objective(x, y, cur.beta0, cur.beta, next));
    bool same = next == set;
    set = std::move(next);
    if (same) {
      converged = true;
      break;
    }
  }
  out.fit.beta0 = cur.beta0;
  out.fit.beta = cur.beta;
  out.fit.retained = std::move(set);
  out.fit.h = h;
  out.fit.objective = out.objective.back();
  out.fit.converged = converged;
  return out;
}

namespace detail {

inline double binomial(Index n, Index k) {
  if (k < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  double c = 1.0;
  for (Index i = 1; i <= k; ++i) c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
  return std::round(c);
}

inline LtsFit finalize_subset_fit(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Vector>& y,
                                  const LinearFit& best, Index h) {
  LtsFit fit;
  fit.beta0 = best.beta0;
  fit.beta = best.beta;
  fit.h = h;
  fit.retained = smallest_residuals(x, y, best, h);
  fit.objective = trimmed_objective(x, y, fit.beta0, fit.beta, fit.retained);
  fit.converged = true;
  return fit;
}

// Lexicographic walk over combinations held in an index array.
inline bool next_combination(std::vector<Index>& c, Index n) {
  const Index k = static_cast<Index>(c.size());
  Index i = k - 1;
  while (i >= 0 && c[static_cast<std::size_t>(i)] == n - k + i) --i;
  if (i < 0) return false;
  ++c[static_cast<std::size_t>(i)];
  for (Index j = i + 1; j < k; ++j) c[static_cast<std::size_t>(j)] = c[static_cast<std::size_t>(j - 1)] + 1;
  return true;
}

inline LtsFit lts_exhaustive(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Vector>& y, Index h) {
  const Index m = y.size();
  require(binomial(m, h) <= 1e6, ErrorCode::too_large, "lts: too many subsets to enumerate");
  std::vector<Index> c(static_cast<std::size_t>(h));
  std::iota(c.begin(), c.end(), Index{0});
  double best_ssr = std::numeric_limits<double>::infinity();
  LinearFit best;
  do {
    Vector ys = take(y, c);
    LinearFit f = ols(take_rows(x, c), ys);
    double ssr = (ys - f.predict(take_rows(x, c))).squaredNorm();
    if (ssr < best_ssr) {
      best_ssr = ssr;
      best = f;
    }
  } while (next_combination(c, m));
  return finalize_subset_fit(x, y, best, h);
}

struct StartResult {
  bool valid = false;
  LinearFit fit;
  double objective = std::numeric_limits<double>::infinity();
};

}  // namespace detail

/// Least trimmed squares with intercept. Default mode is FAST-LTS: random
/// elemental starts, two C-steps each, then the n_keep best are iterated to a
/// fixed point.
inline LtsFit lts_fit(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Vector>& y,
                      const LtsConfig& cfg) {
  const Index m = x.rows(), p = x.cols();
  require(y.size() == m, ErrorCode::dimension_mismatch, "lts: rows of x and y differ");
  require(cfg.alpha >= 0.5 && cfg.alpha <= 1.0, ErrorCode::invalid_argument, "lts: alpha must lie in [0.5, 1]");
  require(cfg.n_starts >= 1 && cfg.n_keep >= 1 && cfg.n_keep <= cfg.n_starts, ErrorCode::invalid_argument,
          "lts: need 1 <= n_keep <= n_starts");
  require(m >= p + 2, ErrorCode::too_few_points, "lts: need at least p + 2 points");
  require(x.allFinite() && y.allFinite(), ErrorCode::non_finite, "lts: non-finite input");
  const Index h = lts_h(m, p, cfg.alpha);

  if (cfg.exhaustive) return detail::lts_exhaustive(x, y, h);
  if (h == m) {
    LinearFit f = ols(x, y);
    return detail::finalize_subset_fit(x, y, f, h);
  }

  std::vector<detail::StartResult> starts(static_cast<std::size_t>(cfg.n_starts));
  parallel_for(starts.size(), cfg.threads, [&](std::size_t s) {
    Rng rng = make_rng(cfg.seed, s);
    std::vector<Index> pool(static_cast<std::size_t>(m));
    std::iota(pool.begin(), pool.end(), Index{0});
    for (Index j = 0; j <= p; ++j) {
      std::uniform_int_distribution<Index> pick(j, m - 1);
      std::swap(pool[static_cast<std::size_t>(j)], pool[static_cast<std::size_t>(pick(rng))]);
    }
    pool.resize(static_cast<std::size_t>(p + 1));
    LinearFit elemental = ols(take_rows(x, pool), take(y, pool));
    if (elemental.rank < p + 1) return;
    CStepTrace t = lts_csteps(x, y, std::move(elemental), h, 2);
    starts[s].valid = true;
    starts[s].fit = t.fit.linear();
    starts[s].objective = t.fit.objective;
  });

  std::vector<std::size_t> order;
  for (std::size_t s = 0; s < starts.size(); ++s)
    if (starts[s].valid) order.push_back(s);
  require(!order.empty(), ErrorCode::singular_design, "lts: every elemental start is rank-deficient");
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return starts[a].objective < starts[b].objective; });
  order.resize(std::min<std::size_t>(order.size(), static_cast<std::size_t>(cfg.n_keep)));

  std::vector<LtsFit> refined(order.size());
  parallel_for(order.size(), cfg.threads, [&](std::size_t c) {
    refined[c] = lts_csteps(x, y, starts[order[c]].fit, h, cfg.max_csteps).fit;
  });
  std::size_t best = 0;
  for (std::size_t c = 1; c < refined.size(); ++c)
    if (refined[c].objective < refined[best].objective) best = c;
  return refined[best];
}

/// Global trimmed-squares optimum by enumeration over all h-subsets. Intended
/// as an exact reference for small problems.
inline LtsFit lts_enumerate(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Vector>& y, Index h) {
  const Index m = x.rows(), p = x.cols();
  require(y.size() == m, ErrorCode::dimension_mismatch, "lts: rows of x and y differ");
  require(h >= p + 2 && h <= m, ErrorCode::invalid_argument, "lts: h must lie in [p + 2, m]");
  require(detail::binomial(m, h) <= 1e6, ErrorCode::too_large, "lts: too many subsets to enumerate");

  double best_ssr = std::numeric_limits<double>::infinity();
  LinearFit best;
  std::vector<Index> subset;
  subset.reserve(static_cast<std::size_t>(h));
  std::function<void(Index)> recurse = [&](Index from) {
    if (static_cast<Index>(subset.size()) == h) {
      Vector ys = take(y, subset);
      Matrix xs = take_rows(x, subset);
      LinearFit f = ols(xs, ys);
      double ssr = (ys - f.predict(xs)).squaredNorm();
      if (ssr < best_ssr) {
        best_ssr = ssr;
        best = f;
      }
      return;
    }
    Index need = h - static_cast<Index>(subset.size());
    for (Index i = from; i <= m - need; ++i) {
      subset.push_back(i);
      recurse(i + 1);
      subset.pop_back();
    }
  };
  recurse(0);
  return detail::finalize_subset_fit(x, y, best, h);
}

enum class ErrorFamily { gaussian, laplace };

inline const char* to_string(ErrorFamily f) { return f == ErrorFamily::gaussian ? "gaussian" : "laplace"; }

inline ErrorFamily parse_error_family(const std::string& s) {
  if (s == "gaussian") return ErrorFamily::gaussian;
  if (s == "laplace") return ErrorFamily::laplace;
  throw Error(ErrorCode::unsupported_family, "unknown error family '" + s + "'");
}

struct ErrorParams {
  ErrorFamily family = ErrorFamily::gaussian;
  double sigma = 0.0;
};

/// Maximum-likelihood error parameters from the retained residuals. Only the
/// Gaussian family is implemented.
inline ErrorParams estimate_error_params(const LtsFit& fit, const Eigen::Ref<const Matrix>& x,
                                         const Eigen::Ref<const Vector>& y,
                                         ErrorFamily family = ErrorFamily::gaussian) {
  if (family != ErrorFamily::gaussian)
    throw Error(ErrorCode::unsupported_family, std::string("no estimator for family ") + to_string(family));
  require(!fit.retained.empty(), ErrorCode::invalid_argument, "lts: empty retained set");
  double ssr = 0.0;
  for (Index i : fit.retained) {
    double r = y(i) - fit.beta0 - x.row(i).dot(fit.beta);
    ssr += r * r;
  }
  return {family, std::sqrt(ssr / static_cast<double>(fit.retained.size()))};
}

}  // namespace noisymoe
