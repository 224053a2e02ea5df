#pragma once

#include "noisymoe/baselines.hpp"
#include "noisymoe/common.hpp"
#include "noisymoe/gmm.hpp"
#include "noisymoe/moe.hpp"

#include <chrono>
#include <cstdio>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

namespace noisymoe {

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

struct SimulationConfig {
  Index k = 10;
  Index p = 3;
  Index n_labeled = 2000;
  /// Unlabeled sample size; only used when oracle_x is false.
  Index n_unlabeled = 20000;
  Index n_test = 20000;
  /// Diagonal of the corruption transition.
  double p0 = 0.8;
  /// Hand the true covariate mixture to the estimators instead of fitting it.
  bool oracle_x = true;
  std::uint64_t seed = 0;
  /// Every entry of mu_j runs linearly over [mu_lo, mu_hi] across components.
  double mu_lo = -3.0, mu_hi = 3.0;
  /// Every entry of (beta0_k, beta_k) runs linearly over [beta_lo, beta_hi].
  double beta_lo = -1.0, beta_hi = 1.0;
  double sigma = 0.1;
  /// Eigenvalues of each component covariance are drawn from U[d_lo, d_hi].
  double d_lo = 0.005, d_hi = 0.05;
  /// Mixture weights of Z~; empty means uniform.
  Vector weights;

  void validate() const {
    require(k >= 1 && p >= 1, ErrorCode::invalid_config, "sim: k and p must be >= 1");
    require(p0 >= 0.0 && p0 <= 1.0, ErrorCode::invalid_config, "sim: p0 must lie in [0, 1]");
    require(d_lo > 0.0 && d_hi >= d_lo, ErrorCode::invalid_config, "sim: d_range must be positive");
    require(sigma >= 0.0, ErrorCode::invalid_config, "sim: sigma must be >= 0");
    require(n_labeled >= 1 && n_test >= 1, ErrorCode::invalid_config, "sim: sample sizes must be >= 1");
    if (weights.size() > 0) {
      require(weights.size() == k, ErrorCode::invalid_config, "sim: weights must have k entries");
      require((weights.array() >= 0.0).all() && std::abs(weights.sum() - 1.0) < 1e-10,
              ErrorCode::invalid_config, "sim: weights must be a probability vector");
    }
  }
};

/// Data-generating parameters.
struct Truth {
  GmmModel gmm;
  std::vector<ExpertModel> experts;
  TransitionMatrix transition;

  /// 100 (1 - sum_k P(Z~ = k, Z = k)).
  double corruption_level() const {
    return 100.0 * (1.0 - gmm.weights.dot(transition.pi.diagonal()));
  }
};

inline double linear_grid(double lo, double hi, Index i, Index k) {
  return k == 1 ? lo : lo + static_cast<double>(i) * (hi - lo) / static_cast<double>(k - 1);
}

/// Random orthogonal matrix: QR of a Gaussian matrix with the R diagonal made positive.
inline Matrix random_orthogonal(Index p, Rng& rng) {
  std::normal_distribution<double> normal;
  Matrix g(p, p);
  for (Index j = 0; j < p; ++j)
    for (Index i = 0; i < p; ++i) g(i, j) = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(p, p);
  Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index j = 0; j < p; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

inline TransitionMatrix corruption_transition(Index k, double p0) {
  if (k == 1) return TransitionMatrix::identity(1);
  return TransitionMatrix::diagonal_heavy(k, p0);
}

inline Truth make_truth(const SimulationConfig& cfg, Rng& rng) {
  cfg.validate();
  const Index k = cfg.k, p = cfg.p;
  Truth t;
  t.gmm.k = k;
  t.gmm.weights = cfg.weights.size() == k ? cfg.weights : Vector::Constant(k, 1.0 / static_cast<double>(k));
  std::uniform_real_distribution<double> unif(cfg.d_lo, cfg.d_hi);
  for (Index j = 0; j < k; ++j) {
    t.gmm.means.push_back(Vector::Constant(p, linear_grid(cfg.mu_lo, cfg.mu_hi, j, k)));
    Matrix r = random_orthogonal(p, rng);
    Vector d(p);
    for (Index i = 0; i < p; ++i) d(i) = unif(rng);
    Matrix cov = r * d.asDiagonal() * r.transpose();
    t.gmm.covariances.push_back(0.5 * (cov + cov.transpose()));
  }
  for (Index j = 0; j < k; ++j) {
    double b = linear_grid(cfg.beta_lo, cfg.beta_hi, j, k);
    t.experts.push_back(ExpertModel{b, Vector::Constant(p, b), ErrorFamily::gaussian, cfg.sigma});
  }
  t.transition = corruption_transition(k, cfg.p0);
  return t;
}

struct SimSample {
  Matrix x;
  Vector y;
  std::vector<Index> z;
  std::vector<Index> tilde_z;
};

namespace detail {

inline Index draw_categorical(const Eigen::Ref<const Vector>& probs, double u) {
  double acc = 0.0;
  for (Index j = 0; j + 1 < probs.size(); ++j) {
    acc += probs(j);
    if (u < acc) return j;
  }
  return probs.size() - 1;
}

}  // namespace detail

/// Draws observations one at a time, so samples from equal seeds are nested:
/// a size-n draw is the prefix of any larger draw.
inline SimSample sample(const Truth& t, Index n, Rng& rng) {
  const Index p = t.gmm.dim(), k = t.gmm.k;
  std::vector<Matrix> chol;
  for (const auto& c : t.gmm.covariances) chol.push_back(Eigen::LLT<Matrix>(c).matrixL());
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal;
  SimSample s;
  s.x.resize(n, p);
  s.y.resize(n);
  s.z.resize(static_cast<std::size_t>(n));
  s.tilde_z.resize(static_cast<std::size_t>(n));
  Vector e(p);
  for (Index i = 0; i < n; ++i) {
    Index tz = detail::draw_categorical(t.gmm.weights, unif(rng));
    for (Index j = 0; j < p; ++j) e(j) = normal(rng);
    Vector xi = t.gmm.means[static_cast<std::size_t>(tz)] + chol[static_cast<std::size_t>(tz)] * e;
    Index z = k == 1 ? 0 : detail::draw_categorical(t.transition.pi.col(tz), unif(rng));
    const auto& ex = t.experts[static_cast<std::size_t>(z)];
    s.x.row(i) = xi.transpose();
    s.y(i) = ex.mean(xi) + ex.sigma * normal(rng);
    s.z[static_cast<std::size_t>(i)] = z;
    s.tilde_z[static_cast<std::size_t>(i)] = tz;
  }
  return s;
}

/// E(Y | x) under the true gate and experts.
inline Vector true_conditional_mean(const Truth& t, const Eigen::Ref<const Matrix>& x) {
  Matrix g = GmmEvaluator(t.gmm).posterior(x) * t.transition.pi.transpose();
  return g.cwiseProduct(expert_means(t.experts, x)).rowwise().sum();
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct Assignment {
  /// Row i is matched with column perm[i].
  std::vector<Index> perm;
  double cost = 0.0;
};

/// Exact minimum-cost perfect matching on a square cost matrix (O(K^3)
/// shortest augmenting paths with potentials).
inline Assignment hungarian(const Eigen::Ref<const Matrix>& cost) {
  const Index n = cost.rows();
  require(cost.rows() == cost.cols(), ErrorCode::dimension_mismatch, "hungarian: cost must be square");
  require(n <= 64, ErrorCode::too_large, "hungarian: K > 64");
  require(cost.allFinite(), ErrorCode::non_finite, "hungarian: non-finite cost");
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based arrays; column 0 is the virtual start.
  std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0), v(static_cast<std::size_t>(n + 1), 0.0);
  std::vector<Index> match(static_cast<std::size_t>(n + 1), 0), way(static_cast<std::size_t>(n + 1), 0);
  for (Index i = 1; i <= n; ++i) {
    match[0] = i;
    Index j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n + 1), inf);
    std::vector<bool> used(static_cast<std::size_t>(n + 1), false);
    do {
      used[static_cast<std::size_t>(j0)] = true;
      Index i0 = match[static_cast<std::size_t>(j0)], j1 = 0;
      double delta = inf;
      for (Index j = 1; j <= n; ++j) {
        auto sj = static_cast<std::size_t>(j);
        if (used[sj]) continue;
        double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[sj];
        if (cur < minv[sj]) {
          minv[sj] = cur;
          way[sj] = j0;
        }
        if (minv[sj] < delta) {
          delta = minv[sj];
          j1 = j;
        }
      }
      for (Index j = 0; j <= n; ++j) {
        auto sj = static_cast<std::size_t>(j);
        if (used[sj]) {
          u[static_cast<std::size_t>(match[sj])] += delta;
          v[sj] -= delta;
        } else {
          minv[sj] -= delta;
        }
      }
      j0 = j1;
    } while (match[static_cast<std::size_t>(j0)] != 0);
    do {
      Index j1 = way[static_cast<std::size_t>(j0)];
      match[static_cast<std::size_t>(j0)] = match[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  Assignment a;
  a.perm.assign(static_cast<std::size_t>(n), 0);
  for (Index j = 1; j <= n; ++j) a.perm[static_cast<std::size_t>(match[static_cast<std::size_t>(j)] - 1)] = j - 1;
  for (Index i = 0; i < n; ++i) a.cost += cost(i, a.perm[static_cast<std::size_t>(i)]);
  return a;
}

/// Sum over experts of ||(b0, b) - (b0*, b*)||^2 / (p + 1), minimized over
/// label permutations.
inline double mse_beta(const std::vector<ExpertModel>& est, const std::vector<ExpertModel>& truth) {
  require(est.size() == truth.size() && !est.empty(), ErrorCode::dimension_mismatch,
          "mse_beta: expert counts differ");
  const auto k = static_cast<Index>(est.size());
  const double denom = static_cast<double>(truth.front().beta.size() + 1);
  Matrix cost(k, k);
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < k; ++j) {
      const auto& a = est[static_cast<std::size_t>(i)];
      const auto& b = truth[static_cast<std::size_t>(j)];
      cost(i, j) = ((a.beta0 - b.beta0) * (a.beta0 - b.beta0) + (a.beta - b.beta).squaredNorm()) / denom;
    }
  return hungarian(cost).cost;
}

/// Test squared error relative to that of the true conditional mean.
inline double rpe(const Eigen::Ref<const Vector>& y, const Eigen::Ref<const Vector>& yhat,
                  const Eigen::Ref<const Vector>& ytrue_mean) {
  require(y.size() == yhat.size() && y.size() == ytrue_mean.size(), ErrorCode::dimension_mismatch,
          "rpe: length mismatch");
  double den = (y - ytrue_mean).squaredNorm();
  require(den > 0.0, ErrorCode::zero_denominator, "rpe: true-mean residual sum is zero");
  return (y - yhat).squaredNorm() / den;
}

inline double pe(const Eigen::Ref<const Vector>& y, const Eigen::Ref<const Vector>& yhat) {
  require(y.size() == yhat.size() && y.size() > 0, ErrorCode::dimension_mismatch, "pe: length mismatch");
  return (y - yhat).squaredNorm() / static_cast<double>(y.size());
}

// ---------------------------------------------------------------------------
// Benchmark runner
// ---------------------------------------------------------------------------

enum class Method { noisyss, moess, moeline, moequad };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::noisyss: return "noisyss";
    case Method::moess: return "moess";
    case Method::moeline: return "moeline";
    case Method::moequad: return "moequad";
  }
  return "noisyss";
}

inline Method parse_method(const std::string& s) {
  if (s == "noisyss") return Method::noisyss;
  if (s == "moess") return Method::moess;
  if (s == "moeline") return Method::moeline;
  if (s == "moequad") return Method::moequad;
  throw Error(ErrorCode::invalid_config, "unknown method '" + s + "'");
}

/// Table-style display name.
inline const char* display_name(Method m) {
  switch (m) {
    case Method::noisyss: return "NoisySS";
    case Method::moess: return "MoESS";
    case Method::moeline: return "MoEline";
    case Method::moequad: return "MoEquad";
  }
  return "";
}

enum class GridKind { corruption, p0, n };

inline const char* to_string(GridKind g) {
  switch (g) {
    case GridKind::corruption: return "corruption";
    case GridKind::p0: return "p0";
    case GridKind::n: return "n";
  }
  return "";
}

inline GridKind parse_grid_kind(const std::string& s) {
  if (s == "corruption") return GridKind::corruption;
  if (s == "p0") return GridKind::p0;
  if (s == "n") return GridKind::n;
  throw Error(ErrorCode::invalid_config, "unknown grid kind '" + s + "'");
}

struct BenchConfig {
  GridKind grid = GridKind::corruption;
  /// Corruption levels in percent, p0 values, or labeled sample sizes.
  std::vector<double> values{0, 10, 20, 30, 40, 50, 60};
  std::vector<Method> methods{Method::noisyss, Method::moess, Method::moeline, Method::moequad};
  int reps = 50;
  std::uint64_t seed = 0;
  /// Template for every replication; the grid overrides p0 or n_labeled.
  SimulationConfig sim;
  /// Reuse one draw of the random covariance rotations for every replication.
  bool freeze_truth = false;
  double alpha = 0.5;
  LtsConfig lts;
  EgConfig eg;
  GmmFitConfig gmm;
  MoeEmConfig moe_em;
  unsigned threads = 1;
};

struct ReplicationReport {
  double grid_value = 0.0;
  double p0 = 0.0;
  double corruption = 0.0;
  Index n = 0;
  int rep = 0;
  std::uint64_t seed = 0;
  Method method = Method::noisyss;
  double mse = std::numeric_limits<double>::quiet_NaN();
  double rpe = std::numeric_limits<double>::quiet_NaN();
  double seconds = 0.0;
  std::string error;

  bool ok() const { return error.empty(); }
};

struct SummaryRow {
  double grid_value = 0.0;
  Method method = Method::noisyss;
  int n_ok = 0;
  int n_failed = 0;
  double mse_mean = std::numeric_limits<double>::quiet_NaN();
  double mse_se = std::numeric_limits<double>::quiet_NaN();
  double rpe_mean = std::numeric_limits<double>::quiet_NaN();
  double rpe_se = std::numeric_limits<double>::quiet_NaN();
};

struct BenchResult {
  BenchConfig config;
  std::vector<ReplicationReport> reports;
  std::vector<SummaryRow> summary;

  const SummaryRow* find(double grid_value, Method m) const {
    for (const auto& r : summary)
      if (r.grid_value == grid_value && r.method == m) return &r;
    return nullptr;
  }
};

namespace detail {

enum StreamTag : std::uint64_t { kTruth = 1, kLabeled = 2, kUnlabeled = 3, kTest = 4, kFit = 5 };

struct GridPoint {
  double value;
  double p0;
  Index n;
};

inline GridPoint grid_point(const BenchConfig& cfg, double v) {
  switch (cfg.grid) {
    case GridKind::corruption: return {v, 1.0 - v / 100.0, cfg.sim.n_labeled};
    case GridKind::p0: return {v, v, cfg.sim.n_labeled};
    case GridKind::n: return {v, cfg.sim.p0, static_cast<Index>(std::llround(v))};
  }
  return {v, cfg.sim.p0, cfg.sim.n_labeled};
}

inline std::pair<double, double> mean_se(const std::vector<double>& v) {
  if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  return {mean, sd / std::sqrt(static_cast<double>(v.size()))};
}

}  // namespace detail

/// Fits every requested method on one replication's data. Exposed so that the
/// CLI and tests can reproduce single benchmark cells.
inline ReplicationReport evaluate_method(Method method, const Truth& truth, const SimSample& train,
                                         const SimSample& unlabeled, const SimSample& test, const Vector& test_mean,
                                         const BenchConfig& cfg, std::uint64_t fit_seed, bool oracle_x) {
  ReplicationReport rep;
  rep.method = method;
  auto t0 = std::chrono::steady_clock::now();
  try {
    const Index k = truth.gmm.k;
    auto covariate_gmm = [&] {
      if (oracle_x) return truth.gmm;
      GmmFitConfig g = cfg.gmm;
      g.k = k;
      g.seed = stream_seed(fit_seed, 0);
      Matrix pooled(train.x.rows() + unlabeled.x.rows(), train.x.cols());
      pooled << train.x, unlabeled.x;
      return fit_gmm(pooled, g);
    };
    std::vector<ExpertModel> experts;
    Vector yhat;
    switch (method) {
      case Method::noisyss: {
        NoisyMoeConfig nc;
        nc.k = k;
        nc.alpha = cfg.alpha;
        nc.lts = cfg.lts;
        nc.lts.seed = stream_seed(fit_seed, 1);
        nc.eg = cfg.eg;
        NoisyMoeModel m = fit_noisy_moe(covariate_gmm(), train.x, train.y, nc);
        experts = m.experts;
        yhat = predict(m, test.x);
        break;
      }
      case Method::moess: {
        MoessModel m = fit_moess(covariate_gmm(), train.x, train.y);
        experts = m.experts;
        yhat = predict_moess(m, test.x);
        break;
      }
      case Method::moeline:
      case Method::moequad: {
        MoeEmConfig ec = cfg.moe_em;
        ec.seed = stream_seed(fit_seed, 2);
        MoeModel m = fit_moe_em(train.x, train.y, k,
                                method == Method::moeline ? GateKind::linear : GateKind::quadratic, ec);
        experts = m.experts;
        yhat = predict_moe(m, test.x);
        break;
      }
    }
    rep.mse = mse_beta(experts, truth.experts);
    rep.rpe = rpe(test.y, yhat, test_mean);
    if (!std::isfinite(rep.mse) || !std::isfinite(rep.rpe)) rep.error = "NonFinite: metric is not finite";
  } catch (const std::exception& e) {
    rep.error = e.what();
  }
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

inline std::vector<SummaryRow> summarize(const BenchConfig& cfg, const std::vector<ReplicationReport>& reports) {
  std::vector<SummaryRow> out;
  for (double v : cfg.values)
    for (Method m : cfg.methods) {
      SummaryRow row;
      row.grid_value = v;
      row.method = m;
      std::vector<double> mse, rpe_v;
      for (const auto& r : reports) {
        if (r.grid_value != v || r.method != m) continue;
        if (r.ok()) {
          mse.push_back(r.mse);
          rpe_v.push_back(r.rpe);
          ++row.n_ok;
        } else {
          ++row.n_failed;
        }
      }
      std::tie(row.mse_mean, row.mse_se) = detail::mean_se(mse);
      std::tie(row.rpe_mean, row.rpe_se) = detail::mean_se(rpe_v);
      out.push_back(row);
    }
  return out;
}

/// Monte-Carlo replications over a grid of corruption levels (or p0, or n).
/// Within a replication every grid point reuses the same random streams, so
/// grid cells are compared on common random numbers; replications run in
/// parallel and are merged by index.
inline BenchResult run_benchmark(const BenchConfig& cfg) {
  require(cfg.reps >= 1, ErrorCode::invalid_config, "bench: reps must be >= 1");
  require(!cfg.values.empty() && !cfg.methods.empty(), ErrorCode::invalid_config, "bench: empty grid or methods");
  cfg.sim.validate();
  for (double v : cfg.values) {
    auto gp = detail::grid_point(cfg, v);
    require(gp.p0 >= 0.0 && gp.p0 <= 1.0, ErrorCode::invalid_config, "bench: grid value gives p0 outside [0, 1]");
    require(gp.n >= 1, ErrorCode::invalid_config, "bench: grid value gives n < 1");
  }

  const std::size_t per_rep = cfg.values.size() * cfg.methods.size();
  BenchResult result;
  result.config = cfg;
  result.reports.resize(static_cast<std::size_t>(cfg.reps) * per_rep);
  parallel_for(static_cast<std::size_t>(cfg.reps), cfg.threads, [&](std::size_t r) {
    const std::uint64_t rep_seed = stream_seed(cfg.seed, r);
    const std::uint64_t truth_seed =
        cfg.freeze_truth ? stream_seed(cfg.seed, detail::kTruth) : stream_seed(rep_seed, detail::kTruth);
    for (std::size_t g = 0; g < cfg.values.size(); ++g) {
      auto gp = detail::grid_point(cfg, cfg.values[g]);
      SimulationConfig sc = cfg.sim;
      sc.p0 = gp.p0;
      sc.n_labeled = gp.n;
      Rng truth_rng(truth_seed);
      Truth truth = make_truth(sc, truth_rng);
      Rng lab_rng = make_rng(rep_seed, detail::kLabeled);
      Rng unl_rng = make_rng(rep_seed, detail::kUnlabeled);
      Rng test_rng = make_rng(rep_seed, detail::kTest);
      SimSample train = sample(truth, sc.n_labeled, lab_rng);
      SimSample unlabeled = sc.oracle_x ? SimSample{} : sample(truth, sc.n_unlabeled, unl_rng);
      SimSample test = sample(truth, sc.n_test, test_rng);
      Vector test_mean = true_conditional_mean(truth, test.x);
      for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
        ReplicationReport rep = evaluate_method(cfg.methods[mi], truth, train, unlabeled, test, test_mean, cfg,
                                                stream_seed(rep_seed, detail::kFit), sc.oracle_x);
        rep.grid_value = gp.value;
        rep.p0 = gp.p0;
        rep.corruption = truth.corruption_level();
        rep.n = gp.n;
        rep.rep = static_cast<int>(r);
        rep.seed = rep_seed;
        result.reports[r * per_rep + g * cfg.methods.size() + mi] = std::move(rep);
      }
    }
  });
  // Order rows by grid point, then replication, then method.
  std::vector<ReplicationReport> ordered;
  ordered.reserve(result.reports.size());
  for (std::size_t g = 0; g < cfg.values.size(); ++g)
    for (int r = 0; r < cfg.reps; ++r)
      for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi)
        ordered.push_back(result.reports[static_cast<std::size_t>(r) * per_rep + g * cfg.methods.size() + mi]);
  result.reports = std::move(ordered);
  result.summary = summarize(cfg, result.reports);
  return result;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// One row per (grid point, replication, method). The `seconds` column is
/// only written when requested because it is not reproducible.
inline void write_reports_csv(std::ostream& os, const std::vector<ReplicationReport>& reports, GridKind grid,
                              bool with_timing = false) {
  os << "grid,value,p0,corruption,n,rep,seed,method,mse,rpe,status";
  if (with_timing) os << ",seconds";
  os << '\n';
  for (const auto& r : reports) {
    os << to_string(grid) << ',' << format_double(r.grid_value) << ',' << format_double(r.p0) << ','
       << format_double(r.corruption) << ',' << r.n << ',' << r.rep << ',' << r.seed << ',' << to_string(r.method)
       << ',' << format_double(r.mse) << ',' << format_double(r.rpe) << ',';
    if (r.ok()) {
      os << "ok";
    } else {
      std::string e = r.error;
      std::replace(e.begin(), e.end(), ',', ';');
      std::replace(e.begin(), e.end(), '\n', ' ');
      os << '"' << e << '"';
    }
    if (with_timing) os << ',' << format_double(r.seconds);
    os << '\n';
  }
}

/// Tables in the layout "value | method mean (se) ..." for MSE and RPE.
inline void write_summary_table(std::ostream& os, const BenchResult& res) {
  const auto& cfg = res.config;
  auto cell = [](double mean, double se) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f (%.3f)", mean, se);
    return std::string(buf);
  };
  auto label = [&](double v) {
    char buf[32];
    if (cfg.grid == GridKind::corruption)
      std::snprintf(buf, sizeof buf, "%g%%", v);
    else
      std::snprintf(buf, sizeof buf, "%g", v);
    return std::string(buf);
  };
  for (int metric = 0; metric < 2; ++metric) {
    os << (metric == 0 ? "Average MSE of expert coefficients" : "Average RPE") << " (standard error), reps = "
       << cfg.reps << '\n';
    char head[64];
    std::snprintf(head, sizeof head, "%-12s", to_string(cfg.grid));
    os << head;
    for (Method m : cfg.methods) {
      std::snprintf(head, sizeof head, " %18s", display_name(m));
      os << head;
    }
    os << '\n';
    for (double v : cfg.values) {
      std::snprintf(head, sizeof head, "%-12s", label(v).c_str());
      os << head;
      for (Method m : cfg.methods) {
        const SummaryRow* row = res.find(v, m);
        std::string c = row ? (metric == 0 ? cell(row->mse_mean, row->mse_se) : cell(row->rpe_mean, row->rpe_se))
                            : std::string("-");
        if (row && row->n_failed > 0) c += "*";
        std::snprintf(head, sizeof head, " %18s", c.c_str());
        os << head;
      }
      os << '\n';
    }
    os << '\n';
  }
}

}  // namespace noisymoe
