#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace ratlearn;
using testutil::point;
using testutil::vec;

TEST(FiniteDiff, ScalarGameClosedForm) {
  const AffineGameForm f = testutil::scalar_game(false);
  const FiniteDiffResult fd = finite_diff_grad(f, f.make_theta(vec({0})), point(vec({2}), Vector(0)));
  ASSERT_TRUE(fd.stable[0]);
  EXPECT_NEAR(fd.grad[0], -4.0, 1e-8);
}

TEST(FiniteDiff, StronglyActiveBoundGivesZero) {
  const AffineGameForm f = testutil::scalar_game(true);
  const FiniteDiffResult fd =
      finite_diff_grad(f, f.make_theta(vec({-1})), point(vec({2}), Vector(0)));
  ASSERT_TRUE(fd.stable[0]);
  EXPECT_EQ(fd.grad[0], 0.0);
}

TEST(FiniteDiff, KinkIsFlaggedUnstable) {
  const AffineGameForm f = testutil::scalar_game(true);
  const FiniteDiffResult fd =
      finite_diff_grad(f, f.make_theta(vec({0})), point(vec({2}), Vector(0)));
  EXPECT_FALSE(fd.stable[0]);
  EXPECT_TRUE(std::isnan(fd.grad[0]));
  EXPECT_TRUE(std::isnan(gradient_relative_error(vec({0}), fd)));
  EXPECT_THROW(finite_diff_grad(f, f.make_theta(vec({0})), point(vec({2}), Vector(0)), 0.0),
               Error);
}

TEST(FiniteDiff, RelativeErrorIgnoresUnstableComponents) {
  FiniteDiffResult fd;
  fd.grad = vec({2.0, std::numeric_limits<double>::quiet_NaN()});
  fd.stable = {true, false};
  EXPECT_NEAR(gradient_relative_error(vec({2.2, 100}), fd), 0.1, 1e-15);
}

TEST(Enumeration, ScalarPicksConsistentActiveSet) {
  // min 1/2 x^2 + c x with x >= 0
  const Matrix A = Matrix::Constant(1, 1, -1.0);
  EquilibriumSolution s =
      enumerate_active_sets_qp(testutil::problem(Matrix::Identity(1, 1), vec({-1}), A, vec({0})));
  EXPECT_NEAR(s.x[0], 1.0, 1e-14);
  EXPECT_TRUE(s.Z.empty());
  s = enumerate_active_sets_qp(testutil::problem(Matrix::Identity(1, 1), vec({1}), A, vec({0})));
  EXPECT_NEAR(s.x[0], 0.0, 1e-14);
  EXPECT_NEAR(s.lambda[0], 1.0, 1e-14);
  EXPECT_EQ(s.Z, IndexSet{0});
}

TEST(Enumeration, CournotTwoFirms) {
  const AffineGameForm f = cournot_form(2);
  const EquilibriumSolution s =
      enumerate_active_sets_qp(assemble(f, f.make_theta(vec({1, 1})), ContextVector{vec({0, 0})}));
  EXPECT_LT((s.x - vec({1.0 / 3, 1.0 / 3})).norm(), 1e-12);
}

TEST(Enumeration, InfeasibleAndOversizedInputs) {
  Matrix A(2, 1);
  A << 1, -1;
  EXPECT_THROW(enumerate_active_sets_qp(
                   testutil::problem(Matrix::Identity(1, 1), vec({0}), A, vec({-1, -1}))),
               Error);
  EXPECT_THROW(enumerate_active_sets_qp(testutil::problem(
                   Matrix::Identity(13, 13), Vector::Zero(13), -Matrix::Identity(13, 13),
                   Vector::Zero(13))),
               Error);
}

TEST(GridSearch, GridContainingTruthFindsZeroLoss) {
  const AffineGameForm f = cournot_form(3);
  const Dataset ds = generate_dataset(f, vec({2, 0.5}), cournot_context_sampler(3), 20, 0.0, 2);
  GridSpec grid;
  grid.axes = {GridAxis{1.0, 3.0, 5}, GridAxis{0.25, 1.25, 5}};
  const GridResult r = grid_search_theta(f, ds.train_points(), grid);
  EXPECT_EQ(r.evaluated, 25);
  EXPECT_LT(r.loss_best, 1e-18);
  EXPECT_LT((r.theta_best - vec({2, 0.5})).norm(), 1e-12);
}

TEST(GridSearch, SinglePointGrid) {
  const AffineGameForm f = cournot_form(2);
  const Dataset ds = generate_dataset(f, vec({2, 0.5}), cournot_context_sampler(2), 5, 0.1, 3);
  GridSpec grid;
  grid.axes = {GridAxis{1.5, 1.5, 1}, GridAxis{0.8, 0.8, 1}};
  const GridResult r = grid_search_theta(f, ds.points, grid);
  EXPECT_EQ(r.evaluated, 1);
  EXPECT_EQ(r.theta_best, vec({1.5, 0.8}));
  EXPECT_NEAR(r.loss_best, equilibrium_loss(f, f.make_theta(vec({1.5, 0.8})), ds.points), 1e-12);
}

TEST(GridSearch, RandomSearchAboveThreeParameters) {
  Rng rng(4);
  const CongestionSpec spec = random_congestion_spec(5, 0.6, 2, 4, rng);
  const AffineGameForm f = congestion_form(spec);
  const Dataset ds =
      generate_dataset(f, spec.theta_true, congestion_context_sampler(spec.graph, 2), 4, 0.0, 1);
  GridSpec grid;
  grid.axes.assign(4, GridAxis{0.1, 2.0, 0});
  grid.random_budget = 30;
  const GridResult r = grid_search_theta(f, ds.points, grid);
  EXPECT_EQ(r.evaluated, 30);
  EXPECT_TRUE(std::isfinite(r.loss_best));
  EXPECT_THROW(grid_search_theta(f, ds.points, GridSpec{}), Error);
}
