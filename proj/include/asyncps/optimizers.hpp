#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "asyncps/context.hpp"
#include "asyncps/dataset.hpp"
#include "asyncps/linalg.hpp"

namespace asyncps {

enum class Schedule { fixed, inverse_sqrt };

inline Schedule parse_schedule(std::string_view s) {
  if (s == "fixed") return Schedule::fixed;
  if (s == "inverse_sqrt") return Schedule::inverse_sqrt;
  throw std::invalid_argument("unknown schedule '" + std::string(s) + "'");
}

inline const char* to_string(Schedule s) { return s == Schedule::fixed ? "fixed" : "inverse_sqrt"; }

struct SgdState {
  DenseVector w;
  std::size_t k = 1;  // 1-based iteration counter
  double alpha0 = 0.1;
  Schedule schedule = Schedule::inverse_sqrt;

  double step_size() const {
    return schedule == Schedule::fixed ? alpha0 : alpha0 / std::sqrt(static_cast<double>(k));
  }
};

inline SgdState& sgd_step(SgdState& s, const DenseVector& gradient) {
  axpy(-s.step_size(), gradient, s.w);
  ++s.k;
  return s;
}

// Async variants start from the synchronous step divided by the worker count.
inline double async_step_size(double sync_step, std::size_t workers) {
  if (workers == 0) throw std::invalid_argument("async_step_size: workers must be >= 1");
  return sync_step / static_cast<double>(workers);
}

// One update per consumed result. The schedule advances once per m updates so
// that a full round of m results sees the same step as one synchronous step.
struct AsgdState {
  SgdState sgd;
  std::size_t workers = 1;
  std::size_t updates = 0;

  AsgdState(DenseVector w, double sync_alpha0, Schedule schedule, std::size_t m)
      : sgd{std::move(w), 1, async_step_size(sync_alpha0, m), schedule}, workers(m) {}

  double step_size() const { return sgd.step_size(); }
};

inline AsgdState& asgd_step(AsgdState& s, const TaskResult& r) {
  s.sgd.k = s.updates / s.workers + 1;
  axpy(-s.sgd.step_size(), r.gradient, s.sgd.w);
  ++s.updates;
  s.sgd.k = s.updates / s.workers + 1;
  return s;
}

enum class SagaMode { canonical, paper_literal };

inline SagaMode parse_saga_mode(std::string_view s) {
  if (s == "canonical") return SagaMode::canonical;
  if (s == "paper_literal") return SagaMode::paper_literal;
  throw std::invalid_argument("unknown saga mode '" + std::string(s) + "'");
}

inline const char* to_string(SagaMode m) { return m == SagaMode::canonical ? "canonical" : "paper_literal"; }

struct SagaState {
  DenseVector w;
  DenseVector average_history;
  double alpha = 0.01;
  std::size_t n = 0;
  double b = 0.1;
  std::size_t P = 1;
  SagaMode mode = SagaMode::canonical;
};

namespace detail {

inline void saga_update(SagaState& s, const DenseVector& g, const DenseVector& h, double avg_scale) {
  DenseVector diff = g - h;
  if (s.mode == SagaMode::canonical) {
    DenseVector dir = diff + s.average_history;
    axpy(avg_scale, diff, s.average_history);
    axpy(-s.alpha, dir, s.w);
  } else {
    axpy(avg_scale, diff, s.average_history);
    axpy(-s.alpha, diff + s.average_history, s.w);
  }
}

}  // namespace detail

// canonical:      w -= a (g - h + avg);  avg += (g - h) |S| / n
// paper_literal:  avg += (g - h) b n;    w -= a (g - h + avg)
inline SagaState& saga_step(SagaState& s, const DenseVector& g, const DenseVector& h, std::size_t batch_size) {
  if (s.n == 0) throw std::invalid_argument("saga_step: n must be >= 1");
  const double scale = s.mode == SagaMode::canonical
                           ? static_cast<double>(batch_size) / static_cast<double>(s.n)
                           : s.b * static_cast<double>(s.n);
  detail::saga_update(s, g, h, scale);
  return s;
}

// paper_literal scales the average by b n / P instead of b n.
inline SagaState& asaga_step(SagaState& s, const TaskResult& r) {
  if (!r.history_gradient) throw std::invalid_argument("asaga_step: result carries no history gradient");
  if (s.mode == SagaMode::canonical) return saga_step(s, r.gradient, *r.history_gradient, r.batch_size);
  if (s.P == 0) throw std::invalid_argument("asaga_step: P must be >= 1");
  detail::saga_update(s, r.gradient, *r.history_gradient,
                      s.b * static_cast<double>(s.n) / static_cast<double>(s.P));
  return s;
}

// Mean per-sample gradient over the whole dataset.
inline DenseVector full_gradient(const Dataset& ds, const DenseVector& w) {
  GradientSum acc(w.size());
  for (const auto& p : ds.partitions) {
    for (const auto& row : p.rows) acc.add(row, w);
  }
  if (acc.count == 0) return DenseVector(w.size());
  return acc.mean();
}

// 2 max ||x||^2: Lipschitz constant of the per-sample gradients.
inline double lipschitz_bound(const Dataset& ds) {
  double m = 0.0;
  for (const auto& p : ds.partitions) {
    for (const auto& row : p.rows) m = std::max(m, squared_norm(row));
  }
  return 2.0 * m;
}

struct BaselineSolution {
  DenseVector w;
  double objective = 0.0;
  bool regularized = false;
};

inline constexpr double kSingularCondition = 1e12;

// Solves (A'A + eps I) w = A'b; eps = 1e-8 trace / d only when A'A is
// numerically singular (LDLT pivots spanning more than 12 decades).
inline BaselineSolution solve_normal_equations(const Dataset& ds, std::size_t workers = 1) {
  const auto d = static_cast<Eigen::Index>(ds.d);
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
  for (const auto& p : ds.partitions) {
    for (const auto& row : p.rows) {
      for (std::size_t a = 0; a < row.nnz(); ++a) {
        const auto ia = static_cast<Eigen::Index>(row.indices[a]);
        rhs(ia) += row.values[a] * row.label;
        for (std::size_t c = 0; c < row.nnz(); ++c) {
          gram(ia, static_cast<Eigen::Index>(row.indices[c])) += row.values[a] * row.values[c];
        }
      }
    }
  }
  BaselineSolution out;
  out.w = DenseVector(ds.d);
  if (d == 0) {
    out.objective = objective(ds, out.w, workers);
    return out;
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  // Pivot ratio rather than rcond(): the latter misses exact zero pivots.
  const Eigen::VectorXd pivots = ldlt.vectorD().cwiseAbs();
  if (ldlt.info() != Eigen::Success || !(pivots.minCoeff() * kSingularCondition > pivots.maxCoeff())) {
    const double eps = 1e-8 * gram.trace() / static_cast<double>(d);
    gram.diagonal().array() += eps > 0.0 ? eps : 1e-12;
    ldlt.compute(gram);
    out.regularized = true;
  }
  const Eigen::VectorXd sol = ldlt.solve(rhs);
  for (Eigen::Index j = 0; j < d; ++j) out.w[static_cast<std::size_t>(j)] = sol(j);
  ensure_finite(out.w, "baseline solution");
  out.objective = objective(ds, out.w, workers);
  return out;
}

inline double compute_baseline(const Dataset& ds, std::size_t workers = 1) {
  return solve_normal_equations(ds, workers).objective;
}

}  // namespace asyncps
