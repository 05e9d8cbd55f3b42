#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "icp/box_set.hpp"
#include "icp/bundle.hpp"
#include "icp/errors.hpp"
#include "icp/linalg.hpp"
#include "icp/master.hpp"
#include "icp/oracle.hpp"
#include "icp/schedule.hpp"

namespace icp {

/// Which iterates a run keeps in memory (and hence can evaluate post hoc).
struct RecordPolicy {
  enum class Kind { all, none, every };
  Kind kind = Kind::all;
  std::size_t every = 1;

  bool keeps(std::int64_t k) const {
    switch (kind) {
      case Kind::all: return true;
      case Kind::none: return false;
      case Kind::every: return k % static_cast<std::int64_t>(every) == 0;
    }
    return false;
  }

  static RecordPolicy parse(const std::string& s) {
    if (s == "all") return {};
    if (s == "none") return {Kind::none, 1};
    if (s.rfind("every:", 0) == 0) {
      std::size_t n = 0;
      try {
        n = std::stoul(s.substr(6));
      } catch (const std::exception&) {
        n = 0;
      }
      if (n == 0) throw ConfigError("record policy every:N needs N >= 1");
      return {Kind::every, n};
    }
    throw ConfigError("unknown record policy '" + s + "' (expected all, none or every:N)");
  }
};

struct RunConfig {
  Window window = Window::infinite();
  /// 0 selects the full-step method (p = m).
  std::size_t batch_size = 0;
  ScheduleMode schedule = ScheduleMode::cyclic;
  std::uint64_t seed = 0;
  StepSizeRule step = StepSizeRule::constant(1.0);
  /// Empty: the projection of the origin onto X.
  Vector x0;
  std::size_t max_iters = 100;
  std::optional<double> f_reference;
  /// Stops once f(x_k) - f_reference <= gap * |f_reference|; needs f(x_k)
  /// during the run, i.e. p = m.
  std::optional<double> early_stop_gap;
  /// Move the prox center only on strict objective improvement (p = m only).
  bool serious_step = false;
  /// Accept finite windows below minimum_window(m, p); the cut-coverage
  /// guarantee then no longer holds.
  bool allow_short_window = false;
  /// Record the weight-representation residuals of every master solution.
  bool check_weights = false;
  /// Fill f(x_k) after the run for every recorded iterate.
  bool evaluate_objective = true;
  RecordPolicy record_x;
  MasterOptions master;
};

struct IterationRecord {
  std::int64_t k = 0;
  double step = 0.0;
  /// Component evaluations performed through iteration k.
  std::size_t cum_evals = 0;
  /// Seconds since the loop started, at the end of iteration k.
  double wall_s = 0.0;
  /// f at the prox center of iteration k; NaN when not computed.
  double f_xk = std::numeric_limits<double>::quiet_NaN();
  double master_objective = 0.0;
  double master_residual = 0.0;
  std::size_t master_sweeps = 0;
  std::vector<std::size_t> batch;
  std::optional<WeightCheckReport> weight_check;

  bool has_objective() const { return !std::isnan(f_xk); }
};

struct RunTrace {
  std::size_t components = 0;
  std::size_t dimension = 0;
  Window window = Window::infinite();
  bool serious_step = false;
  std::vector<IterationRecord> rows;
  /// iterates[k] is the prox center of iteration k, empty when not recorded.
  std::vector<Vector> iterates;
  /// Output of the last master solve.
  Vector final_x;
  double max_subgradient_norm = 0.0;
  std::optional<double> declared_bound;
  bool aborted = false;
  std::string failure;

  /// x_k for 0 <= k <= rows.size(); nullptr when not recorded.
  const Vector* iterate(std::int64_t k) const {
    if (k < 0) return nullptr;
    const auto idx = static_cast<std::size_t>(k);
    if (idx == rows.size()) return final_x.empty() ? nullptr : &final_x;
    if (idx > rows.size() || iterates[idx].empty()) return nullptr;
    return &iterates[idx];
  }
};

/// Next prox center under the serious-step rule: the candidate only when its
/// objective is strictly better. Requires a full evaluation (p = m).
inline Vector serious_step_filter(double f_candidate, double f_current, std::span<const double> x_candidate,
                                  std::span<const double> x_current, std::size_t p, std::size_t m) {
  if (p != m) throw ConfigError("serious-step rule needs every component evaluated (p = m)");
  if (f_candidate < f_current) return Vector(x_candidate.begin(), x_candidate.end());
  return Vector(x_current.begin(), x_current.end());
}

/// Fills f(x_k) for the requested rows (all rows with a recorded iterate when
/// `iterations` is empty). Throws when a requested iterate was not recorded.
inline void evaluate_objective(const Problem& problem, RunTrace& trace,
                               std::optional<std::span<const std::int64_t>> iterations = std::nullopt) {
  if (!iterations) {
    for (std::size_t k = 0; k < trace.rows.size(); ++k)
      if (!trace.iterates[k].empty() && !trace.rows[k].has_objective())
        trace.rows[k].f_xk = problem.objective(trace.iterates[k]);
    return;
  }
  for (std::int64_t k : *iterations) {
    if (k < 0 || static_cast<std::size_t>(k) >= trace.rows.size())
      throw InvalidInput("evaluate_objective: iteration " + std::to_string(k) + " not in trace");
    const auto idx = static_cast<std::size_t>(k);
    if (trace.rows[idx].has_objective()) continue;
    if (trace.iterates[idx].empty())
      throw InvalidInput("evaluate_objective: iterate " + std::to_string(k) + " was not recorded");
    trace.rows[idx].f_xk = problem.objective(trace.iterates[idx]);
  }
}

inline void validate(const Problem& problem, const RunConfig& config) {
  const std::size_t m = problem.size();
  if (m == 0) throw ConfigError("problem has no components");
  for (const auto& c : problem.components)
    if (c->dimension() != problem.dimension()) throw ConfigError("component dimension differs from the domain");
  const std::size_t p = config.batch_size == 0 ? m : config.batch_size;
  if (p > m) throw ConfigError("batch size exceeds the number of components");
  if (config.serious_step && p != m) throw ConfigError("serious-step rule needs p = m");
  if (!config.window.is_infinite() && !config.allow_short_window && config.window.size() < minimum_window(m, p))
    throw ConfigError("window " + config.window.to_string() + " is below the minimum " +
                      std::to_string(minimum_window(m, p)) + " for m = " + std::to_string(m) +
                      ", p = " + std::to_string(p));
  if (!config.x0.empty() && !problem.domain.contains(config.x0)) throw ConfigError("x0 lies outside the feasible box");
  if (config.early_stop_gap && !config.f_reference) throw ConfigError("early stop needs a reference objective");
}

/// Runs the incremental limited-memory regularized cutting-plane method for
/// `max_iters` iterations. A master failure ends the run early with
/// `aborted` set and the rows recorded so far.
inline RunTrace run(const Problem& problem, const RunConfig& config) {
  validate(problem, config);
  const std::size_t m = problem.size();
  const std::size_t n = problem.dimension();
  const std::size_t p = config.batch_size == 0 ? m : config.batch_size;
  const bool full = p == m;

  RunTrace trace;
  trace.components = m;
  trace.dimension = n;
  trace.window = config.window;
  trace.serious_step = config.serious_step;
  trace.declared_bound = problem.subgradient_bound();
  trace.rows.reserve(config.max_iters);
  trace.iterates.reserve(config.max_iters);

  Schedule schedule(m, p, config.schedule, config.seed);
  std::vector<Bundle> bundles(m);
  std::vector<Vector> weights(m);
  for (std::size_t i = 0; i < m; ++i) bundles[i].component = i;

  Vector point = config.x0.empty() ? problem.domain.project(Vector(n, 0.0)) : config.x0;
  Vector center = point;
  double f_center = std::numeric_limits<double>::infinity();
  std::size_t cum_evals = 0;

  using clock = std::chrono::steady_clock;
  const auto start = clock::now();

  for (std::size_t iter = 0; iter < config.max_iters; ++iter) {
    const auto k = static_cast<std::int64_t>(iter);
    std::vector<std::size_t> batch = schedule.next_batch();
    std::vector<std::size_t> order = batch;
    std::sort(order.begin(), order.end());
    const double t = config.step.at(k);

    double batch_value = 0.0;
    for (std::size_t i : order) {
      Evaluation e = problem.components[i]->evaluate(point);
      trace.max_subgradient_norm = std::max(trace.max_subgradient_norm, norm(e.subgradient));
      batch_value += e.value;
      bundles[i].add(make_cut(i, point, e.value, e.subgradient, k));
      weights[i].push_back(0.0);
    }
    cum_evals += p;
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t removed = bundles[i].prune(k, config.window);
      weights[i].erase(weights[i].begin(), weights[i].begin() + static_cast<std::ptrdiff_t>(removed));
    }

    if (config.serious_step) {
      if (iter == 0) {
        center = point;
        f_center = batch_value;
      } else {
        center = serious_step_filter(batch_value, f_center, point, center, p, m);
        f_center = std::min(f_center, batch_value);
      }
    } else {
      center = point;
    }

    IterationRecord row;
    row.k = k;
    row.step = t;
    row.cum_evals = cum_evals;
    row.batch = std::move(batch);
    if (config.serious_step)
      row.f_xk = f_center;
    else if (full)
      row.f_xk = batch_value;

    MasterSolution sol;
    try {
      sol = solve_master(bundles, center, t, problem.domain, config.master, &weights);
    } catch (const MasterFailure& e) {
      trace.aborted = true;
      trace.failure = "iteration " + std::to_string(k) + ": " + e.what();
      break;
    }
    row.wall_s = std::chrono::duration<double>(clock::now() - start).count();
    row.master_objective = sol.objective;
    row.master_residual = sol.kkt_residual;
    row.master_sweeps = sol.sweeps;
    if (config.check_weights)
      row.weight_check = check_weight_representation(sol, bundles, center, t, problem.domain);

    trace.rows.push_back(std::move(row));
    trace.iterates.push_back(config.record_x.keeps(k) ? center : Vector{});
    weights = std::move(sol.weights);
    point = std::move(sol.x_next);

    const auto& last = trace.rows.back();
    if (config.early_stop_gap && last.has_objective() &&
        last.f_xk - *config.f_reference <= *config.early_stop_gap * std::abs(*config.f_reference))
      break;
  }
  trace.final_x = point;
  if (config.evaluate_objective) evaluate_objective(problem, trace);
  return trace;
}

/// Result of checking one inequality lhs <= rhs (+ tolerance).
struct InequalityCheck {
  bool holds = true;
  double lhs = 0.0;
  double rhs = 0.0;
  double slack() const { return rhs - lhs; }
};

/// ||x_k - x_s|| <= max(t_s..t_{k-1}) (k - s) m C.
inline InequalityCheck check_iterate_distance(const RunTrace& trace, std::int64_t s, std::int64_t k, double bound,
                                              double tolerance = 1e-9) {
  if (!(k > s) || s < 0) throw InvalidInput("iterate distance check needs 0 <= s < k");
  const Vector* xs = trace.iterate(s);
  const Vector* xk = trace.iterate(k);
  if (xs == nullptr || xk == nullptr) throw InvalidInput("iterate distance check: iterate not recorded");
  double t_max = 0.0;
  for (std::int64_t j = s; j < k; ++j) t_max = std::max(t_max, trace.rows[static_cast<std::size_t>(j)].step);
  InequalityCheck c;
  c.lhs = distance(*xk, *xs);
  c.rhs = t_max * static_cast<double>(k - s) * static_cast<double>(trace.components) * bound;
  c.holds = c.lhs <= c.rhs + tolerance;
  return c;
}

/// ||x_{k+1} - y||^2 <= ||x_k - y||^2 - 2 t_k (f(x_k) - f(y))
///                      + 4 t_k tbar m^2 C^2 W + t_k^2 m^2 C^2,
/// with tbar = max(t_{k-W}..t_{k-1}) and t_j = t_0 for j < 0. Needs a finite
/// window and f(x_k) in the trace.
inline InequalityCheck check_distance_recursion(const RunTrace& trace, std::int64_t k, std::span<const double> y,
                                                double f_y, double bound, double tolerance = 1e-9) {
  if (trace.window.is_infinite()) throw InvalidInput("distance recursion check needs a finite window");
  if (k < 0 || static_cast<std::size_t>(k) >= trace.rows.size()) throw InvalidInput("iteration not in trace");
  const Vector* xk = trace.iterate(k);
  const Vector* xnext = trace.iterate(k + 1);
  if (xk == nullptr || xnext == nullptr) throw InvalidInput("distance recursion check: iterate not recorded");
  const auto& row = trace.rows[static_cast<std::size_t>(k)];
  if (!row.has_objective()) throw InvalidInput("distance recursion check: f(x_k) not evaluated");

  const auto W = static_cast<std::int64_t>(trace.window.size());
  const double t0 = trace.rows.front().step;
  double t_max = 0.0;
  for (std::int64_t j = k - W; j < k; ++j)
    t_max = std::max(t_max, j < 0 ? t0 : trace.rows[static_cast<std::size_t>(j)].step);
  const double t = row.step;
  const double mc = static_cast<double>(trace.components) * bound;

  InequalityCheck c;
  c.lhs = squared_distance(*xnext, y);
  c.rhs = squared_distance(*xk, y) - 2.0 * t * (row.f_xk - f_y) + 4.0 * t * t_max * mc * mc * static_cast<double>(W) +
          t * t * mc * mc;
  c.holds = c.lhs <= c.rhs + tolerance;
  return c;
}

/// Worst-case suboptimality of the best iterate under a constant step t:
/// 2 m^2 t C^2 W + m^2 t C^2 / 2.
inline double constant_step_bound(std::size_t m, double t, double bound, std::size_t window) {
  const double mc2 = static_cast<double>(m * m) * bound * bound;
  return 2.0 * mc2 * t * static_cast<double>(window) + 0.5 * mc2 * t;
}

struct BoundConstant {
  double value = 0.0;
  /// True when no analytic bound was declared and the value is the largest
  /// observed subgradient norm inflated by 10%.
  bool heuristic = false;
};

inline BoundConstant bound_constant(const RunTrace& trace) {
  if (trace.declared_bound) return {*trace.declared_bound, false};
  return {1.1 * trace.max_subgradient_norm, true};
}

struct TargetHit {
  std::int64_t k = 0;
  /// Iterations executed through row k (k + 1).
  std::size_t iterations = 0;
  double wall_s = 0.0;
  std::size_t cum_evals = 0;
};

/// First row with f(x_k) - f_reference <= tol_fraction * |f_reference|.
inline std::optional<TargetHit> gap_to_target(std::span<const IterationRecord> rows,
                                              std::optional<double> f_reference, double tol_fraction) {
  if (!f_reference) throw ConfigError("gap_to_target needs a reference objective");
  const double threshold = tol_fraction * std::abs(*f_reference);
  for (const auto& row : rows) {
    if (!row.has_objective()) continue;
    if (row.f_xk - *f_reference <= threshold)
      return TargetHit{row.k, static_cast<std::size_t>(row.k) + 1, row.wall_s, row.cum_evals};
  }
  return std::nullopt;
}

}  // namespace icp
