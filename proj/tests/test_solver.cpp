#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "icp/errors.hpp"
#include "icp/oracle.hpp"
#include "icp/solver.hpp"

using namespace icp;

namespace {

Problem affine_problem(std::size_t m, double slope, const BoxSet& box) {
  Problem p{{}, box};
  for (std::size_t i = 0; i < m; ++i)
    p.components.push_back(std::make_shared<AffineOracle>(Vector(box.dimension(), slope), 0.0, box));
  return p;
}

std::vector<double> centers_1d(const RunTrace& tr) {
  std::vector<double> xs;
  for (std::size_t k = 0; k <= tr.rows.size(); ++k) xs.push_back((*tr.iterate(static_cast<std::int64_t>(k)))[0]);
  return xs;
}

SyntheticProblem seeded_abs(std::uint64_t seed, std::size_t m, std::size_t n) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vector> centers(m, Vector(n));
  for (auto& c : centers)
    for (double& v : c) v = u(rng);
  return make_abs_problem(centers, BoxSet::whole_space(n));
}

}  // namespace

TEST(Run, LinearOnOrthantStepsDownAndClamps) {
  const Problem p = affine_problem(1, 1.0, BoxSet::nonnegative_orthant(1));
  RunConfig c;
  c.step = StepSizeRule::constant(1.0);
  c.x0 = {3.0};
  c.max_iters = 6;
  const RunTrace tr = run(p, c);
  EXPECT_EQ(centers_1d(tr), (std::vector<double>{3, 2, 1, 0, 0, 0, 0}));
  EXPECT_FALSE(tr.aborted);
}

TEST(Run, WindowExpiryLeavesOneBundle) {
  const Problem p = affine_problem(2, 1.0, BoxSet::whole_space(1));
  RunConfig c;
  c.batch_size = 1;
  c.window = Window(1);
  c.allow_short_window = true;
  c.step = StepSizeRule::constant(1.0);
  c.x0 = {3.0};
  c.max_iters = 5;
  const RunTrace tr = run(p, c);
  EXPECT_EQ(centers_1d(tr), (std::vector<double>{3, 2, 1, 0, -1, -2}));
}

TEST(Run, ShortWindowRefusedByDefault) {
  const Problem p = affine_problem(2, 1.0, BoxSet::whole_space(1));
  RunConfig c;
  c.batch_size = 1;
  c.window = Window(1);
  EXPECT_THROW(run(p, c), ConfigError);
  c.window = Window(4);
  EXPECT_NO_THROW(run(p, c));
}

TEST(Run, ZeroFunctionKeepsStartingPoint) {
  const Problem p = affine_problem(1, 0.0, BoxSet::whole_space(2));
  for (auto w : {Window(1), Window::infinite()}) {
    RunConfig c;
    c.window = w;
    c.x0 = {0.5, -1.5};
    c.max_iters = 10;
    const RunTrace tr = run(p, c);
    for (std::size_t k = 0; k <= tr.rows.size(); ++k) EXPECT_EQ(*tr.iterate(static_cast<std::int64_t>(k)), c.x0);
    for (std::int64_t k = 0; k < 10 && !w.is_infinite(); ++k) {
      const auto chk = check_distance_recursion(tr, k, Vector{7.0, 7.0}, 0.0, 0.0);
      EXPECT_TRUE(chk.holds);
      EXPECT_NEAR(chk.lhs, chk.rhs, 1e-12);
    }
    EXPECT_TRUE(check_iterate_distance(tr, 0, 10, 0.0).holds);
  }
}

TEST(Run, DefaultStartIsProjectedOrigin) {
  const Problem p = affine_problem(1, 0.0, BoxSet(Vector{1.0}, Vector{2.0}));
  RunConfig c;
  c.max_iters = 1;
  EXPECT_EQ(*run(p, c).iterate(0), (Vector{1.0}));
}

TEST(Run, CumulativeEvaluationsAndBatches) {
  const auto sp = seeded_abs(1, 10, 2);
  RunConfig c;
  c.batch_size = 3;
  c.window = Window(7);
  c.step = StepSizeRule::constant(0.01);
  c.max_iters = 12;
  const RunTrace tr = run(sp.problem, c);
  ASSERT_EQ(tr.rows.size(), 12u);
  for (std::size_t k = 0; k < 12; ++k) {
    EXPECT_EQ(tr.rows[k].cum_evals, 3 * (k + 1));
    EXPECT_EQ(tr.rows[k].batch.size(), 3u);
    EXPECT_TRUE(tr.rows[k].has_objective());
    EXPECT_NEAR(tr.rows[k].f_xk, sp.problem.objective(tr.iterates[k]), 1e-12);
  }
}

TEST(Run, DeterministicForSameSeed) {
  const auto sp = seeded_abs(2, 12, 3);
  RunConfig c;
  c.batch_size = 4;
  c.schedule = ScheduleMode::shuffled;
  c.seed = 77;
  c.window = Window(6);
  c.step = StepSizeRule::constant(0.05);
  c.max_iters = 40;
  const RunTrace a = run(sp.problem, c), b = run(sp.problem, c);
  for (std::size_t k = 0; k < a.rows.size(); ++k) {
    EXPECT_EQ(a.iterates[k], b.iterates[k]);
    EXPECT_EQ(a.rows[k].f_xk, b.rows[k].f_xk);
    EXPECT_EQ(a.rows[k].batch, b.rows[k].batch);
  }
}

TEST(Run, RecordPolicyKeepsSelectedIterates) {
  const auto sp = seeded_abs(3, 4, 2);
  RunConfig c;
  c.max_iters = 10;
  c.record_x = RecordPolicy::parse("every:3");
  const RunTrace tr = run(sp.problem, c);
  for (std::size_t k = 0; k < 10; ++k) EXPECT_EQ(tr.iterates[k].empty(), k % 3 != 0);
  // Full-step rows know f during the run even when x is not kept.
  for (const auto& r : tr.rows) EXPECT_TRUE(r.has_objective());
  EXPECT_THROW(RecordPolicy::parse("every:0"), ConfigError);
  EXPECT_THROW(RecordPolicy::parse("sometimes"), ConfigError);
  EXPECT_EQ(RecordPolicy::parse("none").kind, RecordPolicy::Kind::none);
}

TEST(Run, IncrementalRowsNeedRecordedIterates) {
  const auto sp = seeded_abs(4, 6, 2);
  RunConfig c;
  c.batch_size = 2;
  c.window = Window(6);
  c.max_iters = 5;
  c.record_x = RecordPolicy::parse("none");
  RunTrace tr = run(sp.problem, c);
  for (const auto& r : tr.rows) EXPECT_FALSE(r.has_objective());
  const std::vector<std::int64_t> wanted{1};
  EXPECT_THROW(evaluate_objective(sp.problem, tr, wanted), InvalidInput);
}

TEST(Run, WeightChecksRecordedWhenRequested) {
  const auto sp = seeded_abs(5, 6, 3);
  RunConfig c;
  c.batch_size = 3;
  c.window = Window(4);
  c.check_weights = true;
  c.max_iters = 30;
  c.step = StepSizeRule::constant(0.1);
  for (const auto& r : run(sp.problem, c).rows) {
    ASSERT_TRUE(r.weight_check);
    EXPECT_LE(r.weight_check->projection_residual, 1e-6);
    EXPECT_LE(r.weight_check->simplex_residual, 1e-8);
  }
}

TEST(Run, ValidationErrors) {
  const auto sp = seeded_abs(6, 4, 1);
  RunConfig c;
  c.batch_size = 5;
  EXPECT_THROW(run(sp.problem, c), ConfigError);
  c.batch_size = 2;
  c.serious_step = true;
  EXPECT_THROW(run(sp.problem, c), ConfigError);
  c.serious_step = false;
  c.early_stop_gap = 0.01;
  EXPECT_THROW(run(sp.problem, c), ConfigError);
  RunConfig d;
  d.x0 = {1.0, 2.0};
  EXPECT_THROW(run(sp.problem, d), ConfigError);
}

TEST(Run, EarlyStopAtGap) {
  const auto sp = seeded_abs(7, 5, 2);
  RunConfig c;
  c.step = StepSizeRule::constant(0.1);
  c.max_iters = 1000;
  c.serious_step = true;
  c.f_reference = sp.f_star;
  c.early_stop_gap = 0.05;
  const RunTrace tr = run(sp.problem, c);
  EXPECT_LT(tr.rows.size(), 1000u);
  EXPECT_LE(tr.rows.back().f_xk - sp.f_star, 0.05 * std::abs(sp.f_star));
}

// ---- serious steps ---------------------------------------------------------

TEST(SeriousStep, Filter) {
  const Vector cand{1.0}, curr{2.0};
  EXPECT_EQ(serious_step_filter(5.0, 7.0, cand, curr, 3, 3), cand);
  EXPECT_EQ(serious_step_filter(7.0, 5.0, cand, curr, 3, 3), curr);
  EXPECT_EQ(serious_step_filter(5.0, 5.0, cand, curr, 3, 3), curr);
  EXPECT_THROW(serious_step_filter(5.0, 7.0, cand, curr, 2, 3), ConfigError);
}

TEST(SeriousStep, CenterObjectiveIsMonotone) {
  const auto sp = seeded_abs(8, 6, 2);
  RunConfig c;
  c.serious_step = true;
  c.step = StepSizeRule::constant(0.5);
  c.max_iters = 60;
  const RunTrace tr = run(sp.problem, c);
  for (std::size_t k = 1; k < tr.rows.size(); ++k) EXPECT_LE(tr.rows[k].f_xk, tr.rows[k - 1].f_xk);
}

// ---- inequality checks -----------------------------------------------------

TEST(IterateDistance, TightOnLinearRun) {
  const Problem p = affine_problem(1, 1.0, BoxSet::nonnegative_orthant(1));
  RunConfig c;
  c.step = StepSizeRule::constant(1.0);
  c.x0 = {3.0};
  c.max_iters = 5;
  const RunTrace tr = run(p, c);
  const auto chk = check_iterate_distance(tr, 0, 3, 1.0);
  EXPECT_TRUE(chk.holds);
  EXPECT_DOUBLE_EQ(chk.lhs, 3.0);
  EXPECT_DOUBLE_EQ(chk.rhs, 3.0);
  EXPECT_THROW(check_iterate_distance(tr, 3, 3, 1.0), InvalidInput);
}

TEST(IterateDistance, RandomAbsRunAllPairs) {
  const auto sp = seeded_abs(9, 8, 3);
  RunConfig c;
  c.batch_size = 2;
  c.schedule = ScheduleMode::shuffled;
  c.window = Window(8);
  c.step = StepSizeRule::constant(0.05);
  c.max_iters = 120;
  const RunTrace tr = run(sp.problem, c);
  const double C = *sp.problem.subgradient_bound();
  for (std::int64_t k = 1; k <= 120; ++k)
    for (std::int64_t s = std::max<std::int64_t>(0, k - 20); s < k; ++s)
      ASSERT_TRUE(check_iterate_distance(tr, s, k, C).holds) << s << "," << k;
}

TEST(DistanceRecursion, AbsProblemAllIterations) {
  const auto sp = make_abs_problem({Vector{0.0}, Vector{1.0}, Vector{4.0}}, BoxSet::whole_space(1));
  for (auto schedule : {ScheduleMode::cyclic, ScheduleMode::shuffled}) {
    RunConfig c;
    c.batch_size = 1;
    c.schedule = schedule;
    c.window = Window(6);
    c.step = StepSizeRule::harmonic(1.0);
    c.max_iters = 500;
    const RunTrace tr = run(sp.problem, c);
    for (std::int64_t k = 5; k < 500; ++k)
      ASSERT_TRUE(check_distance_recursion(tr, k, sp.minimizer, sp.f_star, 1.0).holds) << k;
  }
}

TEST(DistanceRecursion, NearTightAffineProbe) {
  // f(x) = x on R, W = 1, t = 1: x_{k+1} = x_k - 1 exactly, so with y = 0
  // lhs = (x - 1)^2 and rhs = x^2 - 2x + 4 + 1, slack = 4.
  const Problem p = affine_problem(1, 1.0, BoxSet::whole_space(1));
  RunConfig c;
  c.window = Window(1);
  c.step = StepSizeRule::constant(1.0);
  c.x0 = {5.0};
  c.max_iters = 4;
  const RunTrace tr = run(p, c);
  for (std::int64_t k = 0; k < 4; ++k) {
    const auto chk = check_distance_recursion(tr, k, Vector{0.0}, 0.0, 1.0);
    EXPECT_TRUE(chk.holds);
    EXPECT_NEAR(chk.slack(), 4.0, 1e-12);
  }
}

TEST(DistanceRecursion, NeedsFiniteWindow) {
  const Problem p = affine_problem(1, 1.0, BoxSet::whole_space(1));
  RunConfig c;
  c.max_iters = 2;
  const RunTrace tr = run(p, c);
  EXPECT_THROW(check_distance_recursion(tr, 0, Vector{0.0}, 0.0, 1.0), InvalidInput);
}

TEST(ConstantStepBound, Formula) {
  EXPECT_DOUBLE_EQ(constant_step_bound(20, 0.01, std::sqrt(3.0), 5), 2.0 * 400 * 0.01 * 3 * 5 + 0.5 * 400 * 0.01 * 3);
}

TEST(BoundConstant, DeclaredOrHeuristic) {
  const auto sp = seeded_abs(10, 3, 2);
  RunConfig c;
  c.max_iters = 3;
  const auto declared = bound_constant(run(sp.problem, c));
  EXPECT_FALSE(declared.heuristic);
  EXPECT_DOUBLE_EQ(declared.value, std::sqrt(2.0));

  struct Opaque final : ComponentOracle {
    Opaque() : ComponentOracle(BoxSet::whole_space(1), std::nullopt) {}
    Evaluation do_evaluate(std::span<const double> x) const override { return {2.0 * x[0], Vector{2.0}}; }
  };
  Problem p{{std::make_shared<Opaque>()}, BoxSet::whole_space(1)};
  const auto h = bound_constant(run(p, c));
  EXPECT_TRUE(h.heuristic);
  EXPECT_DOUBLE_EQ(h.value, 2.2);
}

// ---- gap to target -----------------------------------------------------------

namespace {
std::vector<IterationRecord> rows_with(std::initializer_list<double> fs) {
  std::vector<IterationRecord> rows;
  std::int64_t k = 0;
  for (double f : fs) {
    IterationRecord r;
    r.k = k;
    r.f_xk = f;
    r.cum_evals = static_cast<std::size_t>(10 * (k + 1));
    r.wall_s = 0.5 * static_cast<double>(k);
    rows.push_back(r);
    ++k;
  }
  return rows;
}
}  // namespace

TEST(GapToTarget, FirstRowWithinTolerance) {
  const auto rows = rows_with({10.0, 6.0, 5.004, 5.0004});
  const auto loose = gap_to_target(rows, 5.0, 0.001);
  ASSERT_TRUE(loose);
  EXPECT_EQ(loose->k, 2);
  EXPECT_EQ(loose->iterations, 3u);
  EXPECT_EQ(loose->cum_evals, 30u);
  const auto tight = gap_to_target(rows, 5.0, 0.0005);
  ASSERT_TRUE(tight);
  EXPECT_EQ(tight->k, 3);
  EXPECT_DOUBLE_EQ(tight->wall_s, 1.5);
}

TEST(GapToTarget, NotReached) { EXPECT_FALSE(gap_to_target(rows_with({10.0, 9.0}), 5.0, 0.001)); }

TEST(GapToTarget, SkipsRowsWithoutObjective) {
  auto rows = rows_with({10.0, 5.0, 5.0});
  rows[1].f_xk = std::nan("");
  EXPECT_EQ(gap_to_target(rows, 5.0, 0.001)->k, 2);
}

TEST(GapToTarget, NeedsReference) { EXPECT_THROW(gap_to_target(rows_with({1.0}), std::nullopt, 0.1), ConfigError); }
