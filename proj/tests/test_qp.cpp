#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace ratlearn;
using testutil::problem;
using testutil::vec;

namespace {

Matrix m11(double v) { return Matrix::Constant(1, 1, v); }

// Random strictly convex QP with a known feasible point; the first `eq` rows
// are equalities.
QuadraticPotentialProblem random_qp(std::mt19937_64 &rng, int n, int rows, int eq) {
  std::normal_distribution<double> N(0.0, 1.0);
  const Matrix R = testutil::random_spd(n, rng);
  Vector c(n), x0(n);
  for (int i = 0; i < n; ++i) {
    c[i] = 2.0 * N(rng);
    x0[i] = N(rng);
  }
  Matrix A(rows, n);
  for (int r = 0; r < rows; ++r)
    for (int i = 0; i < n; ++i)
      A(r, i) = N(rng);
  Vector b = A * x0;
  IndexSet eq_rows;
  for (int r = 0; r < rows; ++r) {
    if (r < eq)
      eq_rows.push_back(r);
    else
      b[r] += std::abs(N(rng));
  }
  return problem(R, c, A, b, eq_rows);
}

} // namespace

TEST(SolvePotential, InteriorScalarOptimum) {
  const auto prob = problem(m11(1), vec({-1}), m11(-1), vec({0}));
  const EquilibriumSolution s = solve_potential(prob);
  EXPECT_NEAR(s.x[0], 1.0, 1e-12);
  EXPECT_NEAR(s.lambda[0], 0.0, 1e-12);
  EXPECT_EQ(s.Z, IndexSet{});
  EXPECT_EQ(s.Y, IndexSet{0});
  EXPECT_EQ(s.W, IndexSet{});
}

TEST(SolvePotential, ScalarOptimumAtBound) {
  const auto prob = problem(m11(1), vec({1}), m11(-1), vec({0}));
  const EquilibriumSolution s = solve_potential(prob);
  EXPECT_NEAR(s.x[0], 0.0, 1e-12);
  EXPECT_NEAR(s.lambda[0], 1.0, 1e-12);
  EXPECT_EQ(s.Z, IndexSet{0});
  EXPECT_EQ(s.Y, IndexSet{});
  EXPECT_EQ(s.W, IndexSet{});
}

TEST(SolvePotential, TightBoundWithZeroDualIsDegenerate) {
  const auto prob = problem(m11(1), vec({0}), m11(-1), vec({0}));
  const EquilibriumSolution s = solve_potential(prob);
  EXPECT_NEAR(s.x[0], 0.0, 1e-12);
  EXPECT_EQ(s.W, IndexSet{0});
  EXPECT_EQ(s.Z, IndexSet{0});
  EXPECT_EQ(s.Y, IndexSet{0});
}

TEST(SolvePotential, CournotTwoFirms) {
  const AffineGameForm f = cournot_form(2);
  const auto prob = assemble(f, f.make_theta(vec({1, 1})), ContextVector{vec({0, 0})});
  const EquilibriumSolution s = solve_potential(prob);
  EXPECT_LT((s.x - vec({1.0 / 3, 1.0 / 3})).norm(), 1e-12);
  EXPECT_LT(s.lambda.norm(), 1e-12);
}

TEST(SolvePotential, EqualityRowsHaveFreeDuals) {
  // min 1/2|x|^2 + x1 s.t. x0 + x1 = 1, x >= 0: optimum (1, 0)
  Matrix A(3, 2);
  A << 1, 1,
      -1, 0,
       0, -1;
  const auto prob = problem(Matrix::Identity(2, 2), vec({0, 1}), A, vec({1, 0, 0}), {0});
  const EquilibriumSolution s = solve_potential(prob);
  EXPECT_LT((s.x - vec({1, 0})).norm(), 1e-12);
  EXPECT_NEAR(s.lambda[0], -1.0, 1e-12);
  EXPECT_NEAR(s.lambda[2], 0.0, 1e-12);
  EXPECT_TRUE(contains(s.Z, 0));
  EXPECT_EQ(s.W, IndexSet{2});
}

TEST(SolvePotential, InfeasibleStartUsesPhaseOne) {
  // x >= 2 (row -x <= -2): x = 0 is infeasible
  const auto prob = problem(m11(1), vec({0}), m11(-1), vec({-2}));
  const EquilibriumSolution s = solve_potential(prob);
  EXPECT_NEAR(s.x[0], 2.0, 1e-10);
  EXPECT_NEAR(s.lambda[0], 2.0, 1e-10);
}

TEST(SolvePotential, ReportsInfeasibleProblem) {
  Matrix A(2, 1);
  A << 1, -1;
  const auto prob = problem(m11(1), vec({0}), A, vec({-1, -1})); // x <= -1 and x >= 1
  try {
    solve_potential(prob);
    FAIL() << "expected Infeasible";
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::Infeasible);
  }
}

TEST(SolvePotential, RejectsIndefiniteR) {
  const auto prob = problem(m11(-1), vec({0}), m11(-1), vec({0}));
  EXPECT_THROW(solve_potential(prob), Error);
}

TEST(SolvePotential, WarmStartReachesSameSolution) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const auto prob = random_qp(rng, 4, 6, trial % 2);
    const EquilibriumSolution cold = solve_potential(prob);
    const WarmStart ws = warm_start_from(cold);
    const EquilibriumSolution warm = ActiveSetQP().solve(prob, &ws);
    EXPECT_LT((cold.x - warm.x).norm(), 1e-10);
    EXPECT_LE(warm.iterations, cold.iterations);
  }
}

TEST(SolvePotential, NoWorseThanRandomFeasiblePoints) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> U(-4.0, 4.0);
  for (int trial = 0; trial < 30; ++trial) {
    const auto prob = random_qp(rng, 3, 5, 0);
    const EquilibriumSolution s = solve_potential(prob);
    const double best = prob.potential(s.x);
    int found = 0;
    for (int draw = 0; draw < 200000 && found < 10; ++draw) {
      const Vector x = vec({U(rng), U(rng), U(rng)});
      if (((prob.A * x - prob.b).array() <= 0.0).all()) {
        ++found;
        EXPECT_LE(best, prob.potential(x) + 1e-12);
      }
    }
  }
}

TEST(SolvePotential, MatchesEnumerationOracle) {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + trial % 4;
    const int rows = 1 + trial % 6;
    const int eq = (trial % 5 == 0 && n > 2) ? 1 : 0;
    const auto prob = random_qp(rng, n, rows, eq);
    const EquilibriumSolution s = solve_potential(prob);
    const EquilibriumSolution o = enumerate_active_sets_qp(prob);
    EXPECT_NEAR(prob.potential(s.x), prob.potential(o.x), 1e-8) << "trial " << trial;
  }
}

TEST(KKTResiduals, ZeroAtExactSolution) {
  const auto prob = problem(m11(1), vec({1}), m11(-1), vec({0}));
  const KKTResiduals r = kkt_residuals(prob, vec({0}), vec({1}));
  EXPECT_LT(r.max(), 1e-15);
  const KKTResiduals bad = kkt_residuals(prob, vec({-1}), vec({-1}));
  EXPECT_GT(bad.primal, 0.5);
  EXPECT_GT(bad.dual, 0.5);
}

TEST(BestResponseGap, CournotEquilibriumHasZeroGap) {
  const AffineGameForm f = cournot_form(2);
  const Vector gap = best_response_gap(f, f.make_theta(vec({1, 1})),
                                       ContextVector{vec({0, 0})}, vec({1.0 / 3, 1.0 / 3}));
  EXPECT_LT(gap.maxCoeff(), 1e-12);
}

TEST(BestResponseGap, CournotZeroProductionIsNotAnEquilibrium) {
  const AffineGameForm f = cournot_form(2);
  const ContextVector mu{vec({0, 0})};
  const Vector gap = best_response_gap(f, f.make_theta(vec({1, 1})), mu, vec({0, 0}));
  // best response to 0 is 1/2, gaining 1/4 on the negated profit
  EXPECT_NEAR(gap[0], 0.25, 1e-12);
  EXPECT_NEAR(gap[1], 0.25, 1e-12);
}

TEST(BestResponseGap, SingleAgentEqualsPotentialGap) {
  const AffineGameForm f = testutil::scalar_game(true);
  const RationalityVector th = f.make_theta(vec({2}));
  const auto prob = assemble(f, th, ContextVector{Vector(0)});
  const Vector x = vec({0.5});
  const Vector gap = best_response_gap(f, th, ContextVector{Vector(0)}, x);
  EXPECT_NEAR(gap[0], prob.potential(x) - prob.potential(vec({2})), 1e-12);
}

TEST(BestResponseGap, SolvedEquilibriaHaveNoProfitableDeviation) {
  Rng rng(41);
  const AffineGameForm cf = cournot_form(5);
  const auto csample = cournot_context_sampler(5);
  const CongestionSpec spec = random_congestion_spec(6, 0.4, 3, 2, rng);
  const AffineGameForm gf = congestion_form(spec);
  const auto gsample = congestion_context_sampler(spec.graph, 3);
  for (int trial = 0; trial < 10; ++trial) {
    const RationalityVector ct = cf.make_theta(vec({1.0 + abs_normal(rng), 0.5 + abs_normal(rng)}));
    const ContextVector cmu = csample(rng);
    const Vector cx = solve_potential(assemble(cf, ct, cmu)).x;
    EXPECT_LE(best_response_gap(cf, ct, cmu, cx).maxCoeff(), 1e-6);
    const RationalityVector gt = gf.make_theta(vec({0.1 + abs_normal(rng), 0.1 + abs_normal(rng)}));
    const ContextVector gmu = gsample(rng);
    const Vector gx = solve_potential(assemble(gf, gt, gmu)).x;
    EXPECT_LE(best_response_gap(gf, gt, gmu, gx).maxCoeff(), 1e-6);
  }
}
