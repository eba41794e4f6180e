#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "chfkit/errors.hpp"
#include "chfkit/metrics.hpp"

namespace chfkit {

/// Membership query: is `query` a convex combination of the rows of
/// `training_points`? Solved per point as a phase-1 linear feasibility
/// problem; an infeasibility gap <= tolerance counts as inside, so boundary
/// points are inside.
struct HullProblem {
  Eigen::MatrixXd training_points;  // n x d
  Eigen::VectorXd query;            // d
  double tolerance = 1e-8;
  long max_iterations = 0;  // 0 -> automatic cap
};

namespace detail {

/// Phase-1 simplex on: find lambda >= 0 with sum(lambda) = 1 and
/// points^T lambda = query. Minimizes the sum of artificial variables with
/// Bland's anti-cycling rule (lowest-index entering column, lowest-index tie
/// break on the ratio test); artificial columns that leave the basis are
/// retired. Returns the optimal infeasibility gap.
inline double phase1_infeasibility(const Eigen::MatrixXd& points, const Eigen::VectorXd& query,
                                   long max_iterations, long& iterations_used) {
  const Eigen::Index n = points.rows();
  const Eigen::Index d = points.cols();
  const Eigen::Index m = d + 1;             // equality rows: d coordinates + convexity
  const Eigen::Index total = n + m;         // lambda columns + artificials
  constexpr double kPivotEps = 1e-11;

  // Equality system rows; flip signs so every right-hand side is nonnegative.
  Eigen::MatrixXd body(m, total);
  Eigen::VectorXd rhs(m);
  body.setZero();
  for (Eigen::Index i = 0; i < m; ++i) {
    double b = (i < d) ? query[i] : 1.0;
    const double sign = (b < 0.0) ? -1.0 : 1.0;
    for (Eigen::Index j = 0; j < n; ++j)
      body(i, j) = sign * ((i < d) ? points(j, i) : 1.0);
    body(i, n + i) = 1.0;  // artificial
    rhs[i] = sign * b;
  }

  // Reduced costs for min sum(artificials) with the artificial basis:
  // cbar_j = -sum_i body(i, j) for lambda columns, 0 for artificials.
  Eigen::VectorXd cost(total);
  for (Eigen::Index j = 0; j < n; ++j) cost[j] = -body.col(j).sum();
  cost.tail(m).setZero();
  double objective = rhs.sum();

  std::vector<Eigen::Index> basis(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) basis[static_cast<std::size_t>(i)] = n + i;
  std::vector<bool> retired(static_cast<std::size_t>(total), false);

  iterations_used = 0;
  while (true) {
    // Bland: lowest-index column with a negative reduced cost.
    Eigen::Index enter = -1;
    for (Eigen::Index j = 0; j < total; ++j) {
      if (retired[static_cast<std::size_t>(j)]) continue;
      if (cost[j] < -kPivotEps) {
        enter = j;
        break;
      }
    }
    if (enter < 0) break;  // optimal

    Eigen::Index leave = -1;
    double best_ratio = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      const double a = body(i, enter);
      if (a > kPivotEps) {
        const double ratio = std::max(rhs[i], 0.0) / a;
        if (leave < 0 || ratio < best_ratio - kPivotEps ||
            (ratio <= best_ratio + kPivotEps &&
             basis[static_cast<std::size_t>(i)] < basis[static_cast<std::size_t>(leave)])) {
          leave = i;
          best_ratio = ratio;
        }
      }
    }
    if (leave < 0)
      throw NumericError("in_hull: unbounded phase-1 pivot (malformed problem)");

    // Pivot on (leave, enter).
    const double pivot = body(leave, enter);
    body.row(leave) /= pivot;
    rhs[leave] /= pivot;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (i == leave) continue;
      const double f = body(i, enter);
      if (f != 0.0) {
        body.row(i) -= f * body.row(leave);
        rhs[i] -= f * rhs[leave];
        if (rhs[i] < 0.0 && rhs[i] > -kPivotEps) rhs[i] = 0.0;
      }
    }
    const double cf = cost[enter];
    cost -= cf * body.row(leave).transpose();
    objective += cf * rhs[leave];

    const Eigen::Index leaving_var = basis[static_cast<std::size_t>(leave)];
    if (leaving_var >= n) retired[static_cast<std::size_t>(leaving_var)] = true;
    basis[static_cast<std::size_t>(leave)] = enter;

    if (++iterations_used >= max_iterations)
      throw NumericError("in_hull: iteration cap exceeded (" +
                         std::to_string(max_iterations) + ")");
  }
  return std::max(objective, 0.0);
}

}  // namespace detail

inline bool in_hull(const HullProblem& prob) {
  const Eigen::Index n = prob.training_points.rows();
  const Eigen::Index d = prob.training_points.cols();
  if (n < 1) throw DataError("in_hull: no training points");
  if (prob.query.size() != d) throw DataError("in_hull: query dimension mismatch");
  if (!prob.training_points.allFinite() || !prob.query.allFinite())
    throw DataError("in_hull: non-finite coordinates");
  if (!(prob.tolerance >= 0.0)) throw DataError("in_hull: negative tolerance");

  // A query beyond a coordinate's training range by more than the tolerance
  // is provably outside; skip the LP.
  for (Eigen::Index j = 0; j < d; ++j) {
    const double lo = prob.training_points.col(j).minCoeff();
    const double hi = prob.training_points.col(j).maxCoeff();
    if (prob.query[j] < lo - prob.tolerance || prob.query[j] > hi + prob.tolerance)
      return false;
  }

  const long cap = prob.max_iterations > 0 ? prob.max_iterations : 5000 + 10 * (d + 1);
  long used = 0;
  const double gap = detail::phase1_infeasibility(prob.training_points, prob.query, cap, used);
  return gap <= prob.tolerance;
}

/// Inside/outside partition of a test set; every index appears exactly once.
struct HullSplit {
  std::vector<int> inside_indices;
  std::vector<int> outside_indices;
};

/// Classifies every row of `test_points` against the hull of `train_points`.
/// Coordinates are expected in the same (standardized) frame. Queries are
/// independent, so they run on up to `workers` threads; a solver failure on
/// any point aborts the split rather than silently classifying it.
inline HullSplit split_by_hull(const Eigen::MatrixXd& train_points,
                               const Eigen::MatrixXd& test_points, double tolerance,
                               int workers = 1) {
  if (train_points.cols() != test_points.cols())
    throw DataError("split_by_hull: dimension mismatch");
  const Eigen::Index n_test = test_points.rows();
  const Eigen::Index d = train_points.cols();
  std::vector<char> inside(static_cast<std::size_t>(n_test), 0);
  const Eigen::VectorXd lo = train_points.colwise().minCoeff().transpose();
  const Eigen::VectorXd hi = train_points.colwise().maxCoeff().transpose();
  const long cap = 5000 + 10 * (d + 1);

  std::atomic<Eigen::Index> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker_fn = [&]() {
    while (true) {
      const Eigen::Index i = next.fetch_add(1);
      if (i >= n_test) return;
      try {
        const Eigen::VectorXd query = test_points.row(i).transpose();
        bool bbox_out = false;
        for (Eigen::Index j = 0; j < d; ++j) {
          if (query[j] < lo[j] - tolerance || query[j] > hi[j] + tolerance) {
            bbox_out = true;
            break;
          }
        }
        if (!bbox_out) {
          long used = 0;
          const double gap = detail::phase1_infeasibility(train_points, query, cap, used);
          inside[static_cast<std::size_t>(i)] = (gap <= tolerance) ? 1 : 0;
        }
      } catch (const NumericError& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error)
          first_error = std::make_exception_ptr(NumericError(
              "test point " + std::to_string(i) + ": " + e.what()));
        return;
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  workers = std::max(1, workers);
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(worker_fn);
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);

  HullSplit split;
  for (Eigen::Index i = 0; i < n_test; ++i) {
    if (inside[static_cast<std::size_t>(i)])
      split.inside_indices.push_back(static_cast<int>(i));
    else
      split.outside_indices.push_back(static_cast<int>(i));
  }
  return split;
}

/// Per-subset error reports; a subset too small to carry statistics (fewer
/// than 2 points -- R^2 needs truth variance) is left unset instead of
/// fabricating values.
struct SubsetReports {
  std::optional<ErrorReport> inside;
  std::optional<ErrorReport> outside;
};

inline SubsetReports split_error_report(const HullSplit& split,
                                        std::span<const double> predicted,
                                        std::span<const double> truth) {
  if (predicted.size() != truth.size())
    throw DataError("split_error_report: length mismatch");
  auto subset_report = [&](const std::vector<int>& idx) -> std::optional<ErrorReport> {
    if (idx.size() < 2) return std::nullopt;
    std::vector<double> p, t;
    p.reserve(idx.size());
    t.reserve(idx.size());
    for (int i : idx) {
      if (i < 0 || static_cast<std::size_t>(i) >= truth.size())
        throw DataError("split_error_report: index out of range");
      p.push_back(predicted[static_cast<std::size_t>(i)]);
      t.push_back(truth[static_cast<std::size_t>(i)]);
    }
    return error_report(p, t);
  };
  return {subset_report(split.inside_indices), subset_report(split.outside_indices)};
}

}  // namespace chfkit
