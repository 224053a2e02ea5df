#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace noisymoe {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class ErrorCode {
  invalid_argument,
  dimension_mismatch,
  degenerate_component,
  too_few_points,
  singular_design,
  unsupported_family,
  too_large,
  non_finite,
  empty_cell,
  zero_denominator,
  degenerate,
  parse_error,
  schema_mismatch,
  model_version_mismatch,
  invalid_config,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "InvalidArgument";
    case ErrorCode::dimension_mismatch: return "DimensionMismatch";
    case ErrorCode::degenerate_component: return "DegenerateComponent";
    case ErrorCode::too_few_points: return "TooFewPoints";
    case ErrorCode::singular_design: return "SingularDesign";
    case ErrorCode::unsupported_family: return "UnsupportedFamily";
    case ErrorCode::too_large: return "TooLarge";
    case ErrorCode::non_finite: return "NonFinite";
    case ErrorCode::empty_cell: return "EmptyCell";
    case ErrorCode::zero_denominator: return "ZeroDenominator";
    case ErrorCode::degenerate: return "Degenerate";
    case ErrorCode::parse_error: return "ParseError";
    case ErrorCode::schema_mismatch: return "SchemaMismatch";
    case ErrorCode::model_version_mismatch: return "ModelVersionMismatch";
    case ErrorCode::invalid_config: return "InvalidConfig";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so the
/// CLI can map it onto an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

inline bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }

// ---------------------------------------------------------------------------
// Random streams
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent seed from a base seed and a path of stream ids,
/// e.g. stream_seed(seed, restart) or stream_seed(seed, rep, grid_point).
template <typename... Ids>
std::uint64_t stream_seed(std::uint64_t base, Ids... ids) {
  std::uint64_t s = splitmix64(base);
  ((s = splitmix64(s ^ splitmix64(static_cast<std::uint64_t>(ids) + 0x632be59bd9b4e019ULL))), ...);
  return s;
}

using Rng = std::mt19937_64;

template <typename... Ids>
Rng make_rng(std::uint64_t base, Ids... ids) {
  return Rng(stream_seed(base, ids...));
}

// ---------------------------------------------------------------------------
// Parallel loop
// ---------------------------------------------------------------------------

inline unsigned default_threads() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1u : n;
}

/// Runs body(i) for i in [0, count). Each index owns its output slot, so the
/// result never depends on the thread count. The first exception is rethrown.
inline void parallel_for(std::size_t count, unsigned threads,
                         const std::function<void(std::size_t)>& body) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::size_t workers = std::min<std::size_t>(threads, count);
  std::mutex mu;
  std::exception_ptr first_error;
  std::size_t next = 0;
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= count || first_error) return;
        i = next++;
      }
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  pool.clear();
  if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// Small numeric helpers
// ---------------------------------------------------------------------------

inline constexpr double kLogTwoPi = 1.83787706640934548356;

inline double log_sum_exp(const Eigen::Ref<const Vector>& v) {
  double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

/// Normalizes log-weights into probabilities with a max shift.
inline Vector softmax(const Eigen::Ref<const Vector>& logits) {
  Vector out = (logits.array() - logits.maxCoeff()).exp().matrix();
  out /= out.sum();
  return out;
}

/// Lowest index among the maxima.
inline Index argmax(const Eigen::Ref<const Vector>& v) {
  Index best = 0;
  for (Index i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  return best;
}

inline double sample_sd(const Eigen::Ref<const Vector>& v) {
  if (v.size() < 2) return 0.0;
  double mean = v.mean();
  return std::sqrt((v.array() - mean).square().sum() / static_cast<double>(v.size() - 1));
}

/// Gathers the given rows of a matrix.
inline Matrix take_rows(const Eigen::Ref<const Matrix>& m, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(rows[i]);
  return out;
}

inline Vector take(const Eigen::Ref<const Vector>& v, const std::vector<Index>& idx) {
  Vector out(static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Index>(i)) = v(idx[i]);
  return out;
}

}  // namespace noisymoe
