#pragma once

#include "noisymoe/common.hpp"

#include <optional>

namespace noisymoe {

/// Column-stochastic K x K matrix; entry (k, j) is P(Z = k | Z~ = j).
struct TransitionMatrix {
  Matrix pi;

  Index k() const { return pi.rows(); }

  static TransitionMatrix identity(Index k) { return {Matrix::Identity(k, k)}; }
  static TransitionMatrix uniform(Index k) {
    return {Matrix::Constant(k, k, 1.0 / static_cast<double>(k))};
  }
  /// Diagonal `rho`, off-diagonal (1 - rho) / (K - 1).
  static TransitionMatrix diagonal_heavy(Index k, double rho) {
    if (k == 1) return identity(1);
    Matrix m = Matrix::Constant(k, k, (1.0 - rho) / static_cast<double>(k - 1));
    m.diagonal().setConstant(rho);
    return {m};
  }

  bool is_column_stochastic(double tol = 1e-9) const {
    if (pi.rows() != pi.cols() || (pi.array() < 0.0).any()) return false;
    return ((pi.colwise().sum().array() - 1.0).abs() <= tol).all();
  }
};

enum class EgInit { uniform, diagonal_heavy };

struct EgConfig {
  double step = 0.5;
  int max_iter = 2000;
  /// Absolute objective-change threshold; unset means 1e-9 * n.
  std::optional<double> tol;
  EgInit init = EgInit::diagonal_heavy;
  double rho = 0.7;
  double density_floor = 1e-300;
  /// Keep every accepted iterate in EgResult::iterates.
  bool record_iterates = false;
};

/// Per-observation factors of the transition likelihood.
struct EgProblem {
  /// n x K, row i is P(Z~_i = . | x_i).
  Matrix gate_post;
  /// n x K, entry (i, k) is the density of y_i under expert k.
  Matrix expert_dens;

  Index n() const { return gate_post.rows(); }
  Index k() const { return gate_post.cols(); }

  void validate() const {
    require(gate_post.rows() == expert_dens.rows() && gate_post.cols() == expert_dens.cols(),
            ErrorCode::dimension_mismatch, "eg: gate_post and expert_dens shapes differ");
    require(gate_post.allFinite() && expert_dens.allFinite(), ErrorCode::non_finite,
            "eg: non-finite problem entries");
    require((expert_dens.array() >= 0.0).all(), ErrorCode::invalid_argument, "eg: negative density");
    require(((gate_post.rowwise().sum().array() - 1.0).abs() <= 1e-9).all(), ErrorCode::invalid_argument,
            "eg: gate_post rows must sum to 1");
  }
};

namespace detail {

// D_i = sum_{k, j} pi(k, j) gate_post(i, j) expert_dens(i, k), floored.
inline Vector eg_mixture(const EgProblem& prob, const Matrix& pi, double floor) {
  Matrix mixed = prob.gate_post * pi.transpose();  // (i, k) = sum_j pi(k, j) g(i, j)
  return prob.expert_dens.cwiseProduct(mixed).rowwise().sum().cwiseMax(floor);
}

}  // namespace detail

/// Negative log-likelihood of the labeled sample as a function of the transition.
inline double eg_objective(const EgProblem& prob, const TransitionMatrix& t, double density_floor = 1e-300) {
  return -detail::eg_mixture(prob, t.pi, density_floor).array().log().sum();
}

/// Gradient of eg_objective; entry (k, j) = -sum_i g(i, j) d(i, k) / D_i.
inline Matrix eg_gradient(const EgProblem& prob, const TransitionMatrix& t, double density_floor = 1e-300) {
  Vector inv = detail::eg_mixture(prob, t.pi, density_floor).cwiseInverse();
  return -(prob.expert_dens.transpose() * inv.asDiagonal() * prob.gate_post);
}

struct EgResult {
  TransitionMatrix transition;
  /// Objective of every accepted iterate, starting with the initial point.
  std::vector<double> trace;
  /// Accepted iterates, initial point first; filled when cfg.record_iterates.
  std::vector<Matrix> iterates;
  int iterations = 0;
  int rejected_steps = 0;
  bool converged = false;
};

/// Exponentiated-gradient descent with column-wise renormalization. The
/// gradient is divided by n before stepping; a step that raises the objective
/// is rejected and the step halved, and the step is doubled back (up to
/// cfg.step) after five consecutive accepted moves.
inline EgResult fit_transition(const EgProblem& prob, const EgConfig& cfg) {
  prob.validate();
  require(cfg.step > 0.0, ErrorCode::invalid_argument, "eg: step must be > 0");
  require(cfg.density_floor > 0.0, ErrorCode::invalid_argument, "eg: density_floor must be > 0");
  const Index k = prob.k();
  const double n = static_cast<double>(std::max<Index>(prob.n(), 1));
  const double tol = cfg.tol ? *cfg.tol : 1e-9 * n;

  EgResult res;
  res.transition = cfg.init == EgInit::uniform ? TransitionMatrix::uniform(k)
                                               : TransitionMatrix::diagonal_heavy(k, cfg.rho);
  double obj = eg_objective(prob, res.transition, cfg.density_floor);
  res.trace.push_back(obj);
  if (cfg.record_iterates) res.iterates.push_back(res.transition.pi);

  double step = cfg.step;
  int streak = 0;
  for (int it = 0; it < cfg.max_iter; ++it) {
    res.iterations = it + 1;
    Matrix grad = eg_gradient(prob, res.transition, cfg.density_floor) / n;
    if (!grad.allFinite()) throw Error(ErrorCode::non_finite, "eg: non-finite gradient");

    // Multiplicative update in log space, then renormalize every column.
    Matrix logg = res.transition.pi.array().log().matrix() - step * grad;
    Matrix next(k, k);
    for (Index j = 0; j < k; ++j) {
      double mx = logg.col(j).maxCoeff();
      next.col(j) = (logg.col(j).array() - mx).exp().matrix();
      next.col(j) /= next.col(j).sum();
    }
    TransitionMatrix cand{next};
    double cand_obj = eg_objective(prob, cand, cfg.density_floor);
    if (!(cand_obj <= obj)) {
      ++res.rejected_steps;
      step *= 0.5;
      streak = 0;
      if (step < 1e-12 * cfg.step) {
        res.converged = true;
        break;
      }
      continue;
    }
    double change = obj - cand_obj;
    res.transition = std::move(cand);
    obj = cand_obj;
    res.trace.push_back(obj);
    if (cfg.record_iterates) res.iterates.push_back(res.transition.pi);
    if (++streak >= 5 && step < cfg.step) {
      step = std::min(cfg.step, 2.0 * step);
      streak = 0;
    }
    if (change < tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

}  // namespace noisymoe
