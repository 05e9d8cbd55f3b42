#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "icp/box_set.hpp"
#include "icp/bundle.hpp"
#include "icp/errors.hpp"
#include "icp/linalg.hpp"

namespace icp {

struct MasterOptions {
  /// Relative tolerance: the KKT residual must not exceed
  /// tolerance * (1 + |objective|).
  double tolerance = 1e-8;
  std::size_t max_sweeps = 10000;
  /// Pairwise steps spent on one component per sweep.
  std::size_t block_steps = 64;
  /// Restricted-phase sweeps without certification before the exact
  /// active-set finisher is tried (0: never).
  std::size_t finisher_after = 32;
  /// The finisher is skipped when n plus the number of nonempty bundles
  /// exceeds this.
  std::size_t finisher_max_size = 200;
};

/// Minimizer of sum_i model_i(x) + ||x - center||^2 / (2 t) over a box, with
/// the simplex weights that represent it as a projected aggregate step.
struct MasterSolution {
  Vector x_next;
  /// weights[i][l] belongs to bundles[i].cuts[l]; each nonempty row sums to 1.
  std::vector<Vector> weights;
  /// center - t * sum_i sum_l weights[i][l] * gradient[i][l]
  Vector u_pre;
  double objective = 0.0;
  /// max_i (model_i(x_next) - min over positive-weight cuts of their value)
  double kkt_residual = 0.0;
  double duality_gap = 0.0;
  /// Absolute tolerance the residual was certified against.
  double certified_tolerance = 0.0;
  std::size_t sweeps = 0;
};

namespace detail {

// Concave dual over the product of per-component simplices:
//   q(w) = min_{x in X} sum_i sum_l w_il (a_il x + b_il) + ||x - c||^2 / (2t)
// whose inner minimizer is x(w) = P_X(c - t sum w_il a_il). The partial
// derivative of q in w_il is the cut value at x(w).
class MasterDual {
 public:
  MasterDual(std::span<const Bundle> bundles, std::span<const double> center, double step,
             const BoxSet& box, const std::vector<Vector>* warm_start)
      : bundles_(bundles), center_(center.begin(), center.end()), step_(step), box_(box), n_(center.size()) {
    const std::size_t m = bundles_.size();
    weights_.resize(m);
    values_.resize(m);
    working_.resize(m);
    in_working_.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      const auto& cuts = bundles_[i].cuts;
      weights_[i].assign(cuts.size(), 0.0);
      values_[i].assign(cuts.size(), 0.0);
      in_working_[i].assign(cuts.size(), false);
      for (const Cut& c : cuts)
        if (c.gradient.size() != n_) throw InvalidInput("master: cut dimension mismatch");
      if (!cuts.empty()) active_.push_back(i);
    }
    initialize_weights(warm_start);
    gradient_sum_.assign(n_, 0.0);
    u_.assign(n_, 0.0);
    x_.assign(n_, 0.0);
    rebuild_primal();
  }

  MasterSolution solve(const MasterOptions& options) {
    std::size_t sweeps = 0, stalled = 0;
    bool finisher_tried = false;
    double best_residual = std::numeric_limits<double>::infinity();
    for (;;) {
      const Pricing pr = price();
      best_residual = std::min(best_residual, pr.residual);
      if (pr.residual <= pr.tolerance) return finish(pr, sweeps);
      if (!std::isfinite(pr.residual)) throw MasterFailure(pr.residual, pr.tolerance, sweeps);

      for (std::size_t i : active_) {
        if (pr.block_residual[i] <= pr.tolerance) continue;
        const std::size_t best = pr.block_argmax[i];
        if (!in_working_[i][best]) {
          in_working_[i][best] = true;
          working_[i].push_back(best);
        }
      }

      // Restricted phase: block-coordinate ascent on the working cuts.
      for (;;) {
        refresh_working_values();
        const double residual = working_residual();
        if (residual <= pr.tolerance) break;
        if (sweeps >= options.max_sweeps)
          throw MasterFailure(std::min(best_residual, residual), pr.tolerance, sweeps);
        ++sweeps;
        for (std::size_t i : active_) {
          for (std::size_t s = 0; s < options.block_steps; ++s) {
            const auto [p, q, gap] = select_pair(i);
            if (gap <= pr.tolerance) break;
            if (!pair_step(i, p, q)) break;
            refresh_block_values(i);
          }
        }
        rebuild_primal();
        if (!finisher_tried && options.finisher_after > 0 && ++stalled >= options.finisher_after) {
          finisher_tried = true;
          if (n_ + active_.size() <= options.finisher_max_size && active_set_finish()) break;
        }
      }
    }
  }

  void set_tolerance(double relative) { relative_tolerance_ = relative; }

 private:
  struct Pricing {
    double objective = 0.0;
    double residual = 0.0;
    double tolerance = 0.0;
    std::vector<double> block_residual;
    std::vector<std::size_t> block_argmax;
  };

  struct Pair {
    std::size_t increase;
    std::size_t decrease;
    double gap;
  };

  void initialize_weights(const std::vector<Vector>* warm_start) {
    for (std::size_t i : active_) {
      auto& w = weights_[i];
      bool usable = warm_start != nullptr && warm_start->size() == bundles_.size() &&
                    (*warm_start)[i].size() == w.size();
      double total = 0.0;
      if (usable) {
        for (double v : (*warm_start)[i]) {
          if (!(v >= 0.0) || !std::isfinite(v)) usable = false;
          total += v;
        }
      }
      if (usable && total > 0.0) {
        for (std::size_t l = 0; l < w.size(); ++l) w[l] = (*warm_start)[i][l] / total;
      } else {
        // Most active cut at the prox center; lowest index on ties.
        const auto& cuts = bundles_[i].cuts;
        std::size_t best = 0;
        double best_value = cuts[0].value_at(center_);
        for (std::size_t l = 1; l < cuts.size(); ++l) {
          const double v = cuts[l].value_at(center_);
          if (v > best_value) {
            best_value = v;
            best = l;
          }
        }
        w[best] = 1.0;
      }
      for (std::size_t l = 0; l < w.size(); ++l) {
        if (w[l] > 0.0) {
          in_working_[i][l] = true;
          working_[i].push_back(l);
        }
      }
    }
  }

  void rebuild_primal() {
    std::fill(gradient_sum_.begin(), gradient_sum_.end(), 0.0);
    for (std::size_t i : active_) {
      const auto& cuts = bundles_[i].cuts;
      for (std::size_t l : working_[i]) {
        const double w = weights_[i][l];
        if (w == 0.0) continue;
        const auto& g = cuts[l].gradient;
        for (std::size_t j = 0; j < n_; ++j) gradient_sum_[j] += w * g[j];
      }
    }
    update_point();
  }

  void update_point() {
    for (std::size_t j = 0; j < n_; ++j) {
      u_[j] = center_[j] - step_ * gradient_sum_[j];
      x_[j] = box_.clamp(j, u_[j]);
    }
  }

  void refresh_block_values(std::size_t i) {
    const auto& cuts = bundles_[i].cuts;
    for (std::size_t l : working_[i]) values_[i][l] = cuts[l].value_at(x_);
  }

  void refresh_working_values() {
    for (std::size_t i : active_) refresh_block_values(i);
  }

  double prox_term() const { return squared_distance(x_, center_) / (2.0 * step_); }

  Pricing price() {
    Pricing pr;
    pr.block_residual.assign(bundles_.size(), 0.0);
    pr.block_argmax.assign(bundles_.size(), 0);
    double model_sum = 0.0;
    for (std::size_t i : active_) {
      const auto& cuts = bundles_[i].cuts;
      double best = -std::numeric_limits<double>::infinity();
      double lowest_supported = std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < cuts.size(); ++l) {
        const double v = cuts[l].value_at(x_);
        values_[i][l] = v;
        if (v > best) {
          best = v;
          pr.block_argmax[i] = l;
        }
        if (weights_[i][l] > 0.0) lowest_supported = std::min(lowest_supported, v);
      }
      model_sum += best;
      pr.block_residual[i] = best - lowest_supported;
      pr.residual = std::max(pr.residual, pr.block_residual[i]);
    }
    pr.objective = model_sum + prox_term();
    pr.tolerance = relative_tolerance_ * (1.0 + std::abs(pr.objective));
    return pr;
  }

  double working_residual() const {
    double r = 0.0;
    for (std::size_t i : active_) {
      double best = -std::numeric_limits<double>::infinity();
      double lowest_supported = std::numeric_limits<double>::infinity();
      for (std::size_t l : working_[i]) {
        best = std::max(best, values_[i][l]);
        if (weights_[i][l] > 0.0) lowest_supported = std::min(lowest_supported, values_[i][l]);
      }
      r = std::max(r, best - lowest_supported);
    }
    return r;
  }

  Pair select_pair(std::size_t i) const {
    Pair pair{0, 0, 0.0};
    double best = -std::numeric_limits<double>::infinity();
    double lowest = std::numeric_limits<double>::infinity();
    for (std::size_t l : working_[i]) {
      const double v = values_[i][l];
      if (v > best || (v == best && l < pair.increase)) {
        best = v;
        pair.increase = l;
      }
      if (weights_[i][l] > 0.0 && (v < lowest || (v == lowest && l < pair.decrease))) {
        lowest = v;
        pair.decrease = l;
      }
    }
    pair.gap = best - lowest;
    return pair;
  }

  // Moves weight delta from cut q to cut p. Returns false when no ascent is
  // possible.
  bool pair_step(std::size_t i, std::size_t p, std::size_t q) {
    if (p == q) return false;
    const auto& cut_p = bundles_[i].cuts[p];
    const auto& cut_q = bundles_[i].cuts[q];
    direction_.resize(n_);
    for (std::size_t j = 0; j < n_; ++j) direction_[j] = cut_p.gradient[j] - cut_q.gradient[j];
    const double max_delta = weights_[i][q];
    double delta = line_search(cut_p.intercept - cut_q.intercept, max_delta);
    if (!(delta > 0.0)) return false;

    if (delta >= max_delta) {
      delta = max_delta;
      weights_[i][q] = 0.0;
    } else {
      weights_[i][q] -= delta;
    }
    weights_[i][p] += delta;
    for (std::size_t j = 0; j < n_; ++j) gradient_sum_[j] += delta * direction_[j];
    update_point();
    return true;
  }

  // Exact line search on the piecewise-quadratic dual along a weight move
  // whose aggregate gradient change is direction_ and whose intercept change
  // is intercept_gap, for steps in [0, max_delta]. Returns 0 when the move is
  // not an ascent direction.
  double line_search(double intercept_gap, double max_delta) {
    // Directional derivative of the dual along the move, nonincreasing in delta.
    auto slope_at = [&](double delta) {
      double s = intercept_gap;
      for (std::size_t j = 0; j < n_; ++j) {
        if (direction_[j] == 0.0) continue;
        s += direction_[j] * box_.clamp(j, u_[j] - step_ * delta * direction_[j]);
      }
      return s;
    };

    const double initial = slope_at(0.0);
    if (!(initial > 0.0)) return 0.0;

    breakpoints_.clear();
    const auto& lo = box_.lower();
    const auto& hi = box_.upper();
    for (std::size_t j = 0; j < n_; ++j) {
      const double d = direction_[j];
      if (d == 0.0) continue;
      for (double bound : {lo[j], hi[j]}) {
        if (!std::isfinite(bound)) continue;
        const double b = (u_[j] - bound) / (step_ * d);
        if (b > 0.0 && b < max_delta) breakpoints_.push_back(b);
      }
    }
    std::sort(breakpoints_.begin(), breakpoints_.end());

    // First breakpoint where the slope is no longer positive.
    std::size_t lo_idx = 0, hi_idx = breakpoints_.size();
    while (lo_idx < hi_idx) {
      const std::size_t mid = (lo_idx + hi_idx) / 2;
      if (slope_at(breakpoints_[mid]) > 0.0)
        lo_idx = mid + 1;
      else
        hi_idx = mid;
    }
    const double seg_start = lo_idx == 0 ? 0.0 : breakpoints_[lo_idx - 1];
    const double seg_end = lo_idx == breakpoints_.size() ? max_delta : breakpoints_[lo_idx];
    const double s_start = lo_idx == 0 ? initial : slope_at(seg_start);
    const double s_end = slope_at(seg_end);

    if (s_end > 0.0) return seg_end;  // only possible when seg_end == max_delta
    // Slope is affine on the segment.
    const double delta = seg_start + s_start * (seg_end - seg_start) / (s_start - s_end);
    return std::clamp(delta, seg_start, seg_end);
  }

  // Primal active-set method on the equivalent QP in z = (x, r):
  //   min ||x - c||^2 / (2t) + sum_i r_i
  //   s.t. a_il x - r_i <= -b_il,  lo <= x <= hi.
  // Every component keeps at least one working cut, which makes each
  // equality-constrained subproblem strictly convex. On success the cut
  // multipliers replace the weights and the outer pricing certifies them.
  bool active_set_finish() {
    const std::size_t ma = active_.size(), nz = n_ + ma;
    std::vector<std::size_t> block_of(bundles_.size(), 0);
    for (std::size_t b = 0; b < ma; ++b) block_of[active_[b]] = b;

    struct Row {
      Vector a;
      double rhs;
      std::size_t block = 0, cut = 0;
      bool is_cut = false;
    };
    std::vector<Row> rows;
    for (std::size_t i : active_)
      for (std::size_t l = 0; l < bundles_[i].cuts.size(); ++l) {
        const Cut& c = bundles_[i].cuts[l];
        Row r{Vector(nz, 0.0), -c.intercept, i, l, true};
        std::copy(c.gradient.begin(), c.gradient.end(), r.a.begin());
        r.a[n_ + block_of[i]] = -1.0;
        rows.push_back(std::move(r));
      }
    for (std::size_t j = 0; j < n_; ++j) {
      if (std::isfinite(box_.upper()[j])) {
        Row r{Vector(nz, 0.0), box_.upper()[j]};
        r.a[j] = 1.0;
        rows.push_back(std::move(r));
      }
      if (std::isfinite(box_.lower()[j])) {
        Row r{Vector(nz, 0.0), -box_.lower()[j]};
        r.a[j] = -1.0;
        rows.push_back(std::move(r));
      }
    }

    Vector z(nz);
    std::copy(x_.begin(), x_.end(), z.begin());
    std::vector<std::size_t> working;
    std::vector<bool> in_set(rows.size(), false);
    for (std::size_t b = 0; b < ma; ++b) {
      const std::size_t i = active_[b];
      double best = -std::numeric_limits<double>::infinity();
      std::size_t arg = 0;
      for (std::size_t k = 0; k < rows.size(); ++k) {
        if (!rows[k].is_cut || rows[k].block != i) continue;
        const double v = bundles_[i].cuts[rows[k].cut].value_at(x_);
        if (v > best) {
          best = v;
          arg = k;
        }
      }
      z[n_ + b] = best;
      working.push_back(arg);
      in_set[arg] = true;
    }

    const double inv_t = 1.0 / step_;
    const std::size_t max_iters = 8 * (rows.size() + nz);
    Vector lambda;
    for (std::size_t it = 0;; ++it) {
      if (it >= max_iters) return false;
      const std::size_t nw = working.size(), dim = nz + nw;
      std::vector<double> K(dim * dim, 0.0);
      Vector rhs(dim, 0.0);
      for (std::size_t j = 0; j < n_; ++j) {
        K[j * dim + j] = inv_t;
        rhs[j] = -(z[j] - center_[j]) * inv_t;
      }
      for (std::size_t b = 0; b < ma; ++b) rhs[n_ + b] = -1.0;
      for (std::size_t w = 0; w < nw; ++w)
        for (std::size_t c = 0; c < nz; ++c) {
          K[(nz + w) * dim + c] = rows[working[w]].a[c];
          K[c * dim + nz + w] = rows[working[w]].a[c];
        }
      if (!solve_dense(K, rhs, dim)) return false;

      double step_norm = 0.0, z_norm = 1.0;
      for (std::size_t c = 0; c < nz; ++c) {
        step_norm = std::max(step_norm, std::abs(rhs[c]));
        z_norm = std::max(z_norm, std::abs(z[c]));
      }
      if (step_norm <= 1e-13 * z_norm) {
        lambda.assign(rhs.begin() + static_cast<std::ptrdiff_t>(nz), rhs.end());
        std::size_t worst = nw;
        double most_negative = -1e-12;
        for (std::size_t w = 0; w < nw; ++w)
          if (lambda[w] < most_negative) {
            most_negative = lambda[w];
            worst = w;
          }
        if (worst == nw) break;
        in_set[working[worst]] = false;
        working.erase(working.begin() + static_cast<std::ptrdiff_t>(worst));
        continue;
      }

      double alpha = 1.0;
      std::size_t blocking = rows.size();
      for (std::size_t k = 0; k < rows.size(); ++k) {
        if (in_set[k]) continue;
        double ap = 0.0, az = 0.0;
        for (std::size_t c = 0; c < nz; ++c) {
          ap += rows[k].a[c] * rhs[c];
          az += rows[k].a[c] * z[c];
        }
        if (ap <= 1e-15 * z_norm) continue;
        const double ratio = std::max(0.0, (rows[k].rhs - az) / ap);
        if (ratio < alpha) {
          alpha = ratio;
          blocking = k;
        }
      }
      for (std::size_t c = 0; c < nz; ++c) z[c] += alpha * rhs[c];
      if (blocking < rows.size()) {
        working.push_back(blocking);
        in_set[blocking] = true;
      }
    }

    std::vector<Vector> w_new = weights_;
    for (std::size_t i : active_) std::fill(w_new[i].begin(), w_new[i].end(), 0.0);
    for (std::size_t w = 0; w < working.size(); ++w) {
      const Row& r = rows[working[w]];
      if (r.is_cut) w_new[r.block][r.cut] = std::max(0.0, lambda[w]);
    }
    for (std::size_t i : active_) {
      double total = 0.0;
      for (double v : w_new[i]) total += v;
      if (!(total > 0.0)) return false;
      for (double& v : w_new[i]) v /= total;
    }
    weights_ = std::move(w_new);
    for (std::size_t i : active_)
      for (std::size_t l = 0; l < weights_[i].size(); ++l)
        if (weights_[i][l] > 0.0 && !in_working_[i][l]) {
          in_working_[i][l] = true;
          working_[i].push_back(l);
        }
    rebuild_primal();
    return true;
  }

  // Gaussian elimination with partial pivoting; the solution replaces rhs.
  static bool solve_dense(std::vector<double>& a, Vector& rhs, std::size_t dim) {
    for (std::size_t col = 0; col < dim; ++col) {
      std::size_t pivot = col;
      for (std::size_t r = col + 1; r < dim; ++r)
        if (std::abs(a[r * dim + col]) > std::abs(a[pivot * dim + col])) pivot = r;
      if (!(std::abs(a[pivot * dim + col]) > 1e-300)) return false;
      if (pivot != col) {
        for (std::size_t c = 0; c < dim; ++c) std::swap(a[col * dim + c], a[pivot * dim + c]);
        std::swap(rhs[col], rhs[pivot]);
      }
      for (std::size_t r = col + 1; r < dim; ++r) {
        const double f = a[r * dim + col] / a[col * dim + col];
        if (f == 0.0) continue;
        for (std::size_t c = col; c < dim; ++c) a[r * dim + c] -= f * a[col * dim + c];
        rhs[r] -= f * rhs[col];
      }
    }
    for (std::size_t r = dim; r-- > 0;) {
      double v = rhs[r];
      for (std::size_t c = r + 1; c < dim; ++c) v -= a[r * dim + c] * rhs[c];
      rhs[r] = v / a[r * dim + r];
    }
    return all_finite(rhs);
  }

  MasterSolution finish(const Pricing& pr, std::size_t sweeps) {
    MasterSolution sol;
    sol.x_next = x_;
    sol.u_pre = u_;
    sol.weights = weights_;
    sol.objective = pr.objective;
    sol.kkt_residual = pr.residual;
    sol.certified_tolerance = pr.tolerance;
    sol.sweeps = sweeps;
    double dual = prox_term();
    for (std::size_t i : active_)
      for (std::size_t l = 0; l < weights_[i].size(); ++l) dual += weights_[i][l] * values_[i][l];
    sol.duality_gap = pr.objective - dual;
    return sol;
  }

  std::span<const Bundle> bundles_;
  Vector center_;
  double step_;
  const BoxSet& box_;
  std::size_t n_;
  double relative_tolerance_ = 1e-8;

  std::vector<std::size_t> active_;
  std::vector<Vector> weights_;
  std::vector<Vector> values_;
  std::vector<std::vector<std::size_t>> working_;
  std::vector<std::vector<bool>> in_working_;
  Vector gradient_sum_;
  Vector u_;
  Vector x_;
  Vector direction_;
  std::vector<double> breakpoints_;
};

}  // namespace detail

/// Solves min_{x in X} sum_i model_i(x) + ||x - center||^2 / (2 step).
///
/// Works on the dual over per-component weight simplices, so the returned
/// point is exactly the projection of the weighted aggregate step. Empty
/// bundles contribute nothing; with every bundle empty the result is the
/// center. `warm_start` (weights aligned with the bundles) seeds the dual.
/// Throws MasterFailure when the sweep budget runs out uncertified.
inline MasterSolution solve_master(std::span<const Bundle> bundles, std::span<const double> center, double step,
                                   const BoxSet& box, const MasterOptions& options = {},
                                   const std::vector<Vector>* warm_start = nullptr) {
  if (!(step > 0.0) || !std::isfinite(step)) throw InvalidInput("master: step size must be positive and finite");
  if (center.size() != box.dimension()) throw InvalidInput("master: center dimension mismatch");
  if (!box.contains(center)) throw DomainError("master: prox center lies outside the feasible box");
  detail::MasterDual dual(bundles, center, step, box, warm_start);
  dual.set_tolerance(options.tolerance);
  return dual.solve(options);
}

/// Residuals of the weight/projection representation of a master solution.
struct WeightCheckReport {
  /// ||x_next - P_X(center - t sum w g)|| with the aggregate rebuilt from the bundles.
  double projection_residual = 0.0;
  /// ||u_pre - (center - t sum w g)||
  double aggregate_residual = 0.0;
  /// max_i |sum_l w_il - 1| over nonempty bundles (|sum| for empty ones).
  double simplex_residual = 0.0;
  double min_weight = 0.0;
  /// max |cut value - model value| at x_next over cuts with weight > 1e-6.
  double complementarity_residual = 0.0;
};

inline WeightCheckReport check_weight_representation(const MasterSolution& sol, std::span<const Bundle> bundles,
                                                     std::span<const double> center, double step,
                                                     const BoxSet& box) {
  const std::size_t n = center.size();
  WeightCheckReport r;
  Vector aggregate(n, 0.0);
  bool any_weight = false;
  r.min_weight = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    const auto& cuts = bundles[i].cuts;
    const Vector empty;
    const Vector& w = i < sol.weights.size() ? sol.weights[i] : empty;
    double total = 0.0;
    for (std::size_t l = 0; l < w.size() && l < cuts.size(); ++l) {
      total += w[l];
      any_weight = true;
      r.min_weight = std::min(r.min_weight, w[l]);
      for (std::size_t j = 0; j < n; ++j) aggregate[j] += w[l] * cuts[l].gradient[j];
    }
    if (w.size() != cuts.size()) r.simplex_residual = std::numeric_limits<double>::infinity();
    const double target = cuts.empty() ? 0.0 : 1.0;
    r.simplex_residual = std::max(r.simplex_residual, std::abs(total - target));

    const double model = bundles[i].model_value(sol.x_next);
    for (std::size_t l = 0; l < w.size() && l < cuts.size(); ++l)
      if (w[l] > 1e-6)
        r.complementarity_residual =
            std::max(r.complementarity_residual, std::abs(cuts[l].value_at(sol.x_next) - model));
  }
  if (!any_weight) r.min_weight = 0.0;
  Vector u(n);
  for (std::size_t j = 0; j < n; ++j) u[j] = center[j] - step * aggregate[j];
  r.aggregate_residual = sol.u_pre.size() == n ? distance(sol.u_pre, u) : std::numeric_limits<double>::infinity();
  r.projection_residual = distance(sol.x_next, box.project(u));
  return r;
}

}  // namespace icp
