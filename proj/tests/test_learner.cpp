#include <gtest/gtest.h>

#include <sstream>

#include "test_util.hpp"

using namespace ratlearn;
using testutil::point;
using testutil::vec;

namespace {

Dataset single_point(const Vector &xbar, bool with_test = false) {
  Dataset ds;
  ds.n = ds.m = ds.p = 1;
  ds.points = {point(xbar, Vector(0))};
  ds.train = {0};
  if (with_test) {
    ds.points.push_back(point(xbar, Vector(0)));
    ds.test = {1};
  }
  return ds;
}

TrainConfig cfg_with(long T, double eta0, Vector theta0) {
  TrainConfig cfg;
  cfg.T = T;
  cfg.eta0 = eta0;
  cfg.theta_init = std::move(theta0);
  return cfg;
}

std::string csv(const RunLog &log) {
  std::ostringstream os;
  write_metrics_csv(os, log);
  return os.str();
}

} // namespace

TEST(StepSize, Schedules) {
  TrainConfig cfg;
  EXPECT_DOUBLE_EQ(step_size(0, cfg), 0.1);
  EXPECT_DOUBLE_EQ(step_size(3, cfg), 0.05);
  cfg.schedule = StepSchedule::Constant;
  for (long t : {0L, 1L, 99L, 100000L})
    EXPECT_DOUBLE_EQ(step_size(t, cfg), 0.1);
  cfg.schedule = StepSchedule::Inv;
  EXPECT_DOUBLE_EQ(step_size(4, cfg), 0.02);
  EXPECT_THROW(step_size(-1, cfg), Error);
}

TEST(TrainConfig, Validation) {
  const AffineGameForm f = testutil::scalar_game(false);
  const Dataset ds = single_point(vec({1}));
  TrainConfig cfg;
  cfg.T = 0;
  EXPECT_THROW(train(f, ds, cfg), Error);
  cfg = TrainConfig{};
  cfg.eta0 = 0.0;
  EXPECT_THROW(train(f, ds, cfg), Error);
  cfg = TrainConfig{};
  cfg.eval_every = 0;
  EXPECT_THROW(train(f, ds, cfg), Error);
}

TEST(Train, EmptyTrainingSplitIsAnError) {
  Dataset ds = single_point(vec({1}));
  ds.train.clear();
  ds.test = {0};
  EXPECT_THROW(train(testutil::scalar_game(false), ds, TrainConfig{}), Error);
}

TEST(Train, RejectsFormThatIsNotWellPosed) {
  EXPECT_THROW(train(testutil::scalar_game(false, 0.0), single_point(vec({1})), TrainConfig{}),
               Error);
}

TEST(Train, SingleStepUnrolls) {
  // x(theta) = theta, loss (theta - 2)^2, gradient -4 at theta = 0
  const TrainResult r =
      train(testutil::scalar_game(false), single_point(vec({2})), cfg_with(1, 0.1, vec({0})));
  EXPECT_NEAR(r.theta.theta[0], 0.4, 1e-15);
  ASSERT_EQ(r.log.records.size(), 1u);
  EXPECT_NEAR(r.log.records[0].grad_norm, 4.0, 1e-14);
  EXPECT_NEAR(r.log.records[0].train_loss, 4.0, 1e-14);
  EXPECT_DOUBLE_EQ(r.log.records[0].step_size, 0.1);
}

TEST(Train, ConsistentPointIsAFixedPoint) {
  const TrainResult r = train(testutil::scalar_game(false), single_point(vec({1.5})),
                              cfg_with(200, 0.3, vec({1.5})));
  EXPECT_EQ(r.theta.theta[0], 1.5);
  for (const auto &[t, th] : r.log.checkpoints)
    EXPECT_EQ(th[0], 1.5) << "t=" << t;
  for (const auto &rec : r.log.records)
    EXPECT_EQ(rec.grad_norm, 0.0);
}

TEST(Train, RecordCountFollowsEvalInterval) {
  const AffineGameForm f = testutil::scalar_game(false);
  TrainConfig cfg = cfg_with(250, 0.1, vec({0}));
  cfg.eval_every = 100;
  RunLog log = train(f, single_point(vec({1})), cfg).log;
  ASSERT_EQ(log.records.size(), 4u);
  EXPECT_EQ(log.records[0].iter, 0);
  EXPECT_EQ(log.records[1].iter, 100);
  EXPECT_EQ(log.records[2].iter, 200);
  EXPECT_EQ(log.records[3].iter, 249);
  cfg.T = 201;
  log = train(f, single_point(vec({1})), cfg).log;
  EXPECT_EQ(log.records.size(), 3u);
  EXPECT_EQ(log.checkpoints.size(), 3u);
}

TEST(Train, ProjectsInitialDrawOntoBox) {
  const AffineGameForm f = cournot_form(2);
  const Dataset ds = generate_dataset(f, vec({2, 1}), cournot_context_sampler(2), 5, 0.0, 1);
  const TrainResult r = train(f, ds, cfg_with(1, 0.01, vec({1, -4})));
  EXPECT_TRUE(r.log.init_projected);
  EXPECT_EQ(r.log.theta_initial[1], kMinSlope);
}

TEST(Train, DeterministicUnderSeed) {
  const AffineGameForm f = cournot_form(4);
  const Dataset ds = generate_dataset(f, vec({2, 0.7}), cournot_context_sampler(4), 40, 0.1, 5);
  TrainConfig cfg;
  cfg.T = 300;
  cfg.seed = 12;
  cfg.eval_every = 10;
  const TrainResult a = train(f, ds, cfg);
  const TrainResult b = train(f, ds, cfg);
  EXPECT_EQ(a.theta.theta, b.theta.theta);
  EXPECT_EQ(csv(a.log), csv(b.log));
  cfg.seed = 13;
  EXPECT_NE(csv(train(f, ds, cfg).log), csv(a.log));
}

TEST(Train, IteratesInduceNashEquilibria) {
  const AffineGameForm f = cournot_form(5);
  const Dataset ds = generate_dataset(f, vec({2, 0.7}), cournot_context_sampler(5), 30, 0.1, 2);
  TrainConfig cfg = cfg_with(300, 0.5, vec({1, 1}));
  cfg.check_nash = true;
  EXPECT_LE(train(f, ds, cfg).log.max_nash_gap, 1e-6);
}

TEST(Train, NoiselessCournotReachesTruth) {
  const AffineGameForm f = cournot_form(3);
  const Dataset ds = generate_dataset(f, vec({2, 0.7}), cournot_context_sampler(3), 30, 0.0, 4);
  const TrainResult r = train(f, ds, cfg_with(3000, 0.5, vec({1, 1})));
  EXPECT_LT(r.log.final_train_loss, 1e-6);
  EXPECT_LT(r.log.final_test_error, 1e-3);
  EXPECT_LT((r.theta.theta - vec({2, 0.7})).norm(), 1e-2);
}

TEST(Train, DegenerateStartUsesRule1) {
  // theta = 0 puts x = 0 on the bound with zero multiplier
  const AffineGameForm f = testutil::scalar_game(true);
  const TrainResult r = train(f, single_point(vec({1})), cfg_with(1, 0.1, vec({0})));
  ASSERT_EQ(r.log.events.size(), 1u);
  const DegeneracyEvent &ev = r.log.events[0];
  EXPECT_EQ(ev.W, IndexSet{0});
  EXPECT_EQ(ev.rule_used, DegeneracyRule::Rule1);
  EXPECT_EQ(ev.W1.size() + ev.W2.size(), 1u);
  EXPECT_TRUE(r.log.records[0].degenerate);
  // W1 = {0} frees x: gradient -2; W2 = {0} pins x: gradient 0
  EXPECT_NEAR(r.theta.theta[0], ev.W1.empty() ? 0.0 : 0.2, 1e-15);
}

TEST(Train, DegenerateStartUsesRule2) {
  const AffineGameForm f = testutil::scalar_game(true);
  TrainConfig cfg = cfg_with(1, 0.1, vec({0}));
  cfg.rule = DegeneracyRule::Rule2;
  cfg.epsilon = 1e-3;
  const TrainResult r = train(f, single_point(vec({1})), cfg);
  ASSERT_EQ(r.log.events.size(), 1u);
  const DegeneracyEvent &ev = r.log.events[0];
  EXPECT_EQ(ev.rule_used, DegeneracyRule::Rule2);
  EXPECT_EQ(ev.tries, 1);
  EXPECT_FALSE(ev.fell_back);
  ASSERT_EQ(ev.theta_tilde.size(), 1);
  EXPECT_LE(std::abs(ev.theta_tilde[0]), 1e-3);
  // gradient at theta_tilde: 2 (x - 1) if x = theta_tilde > 0, else 0
  const double expected = ev.theta_tilde[0] > 0.0 ? -0.1 * 2.0 * (ev.theta_tilde[0] - 1.0) : 0.0;
  EXPECT_NEAR(r.theta.theta[0], expected, 1e-15);
}

TEST(TestError, NoiselessDataAtTruthIsZero) {
  const AffineGameForm f = cournot_form(5);
  const Dataset ds = generate_dataset(f, vec({2, 0.7}), cournot_context_sampler(5), 50, 0.0, 6);
  EXPECT_LT(evaluate_test_error(f, f.make_theta(vec({2, 0.7})), ds.test_points()), 1e-9);
}

TEST(TestError, SinglePointAtDistanceTwo) {
  const AffineGameForm f = testutil::scalar_game(false);
  EXPECT_NEAR(evaluate_test_error(f, f.make_theta(vec({1})), {point(vec({3}), Vector(0))}), 2.0,
              1e-14);
  EXPECT_THROW(evaluate_test_error(f, f.make_theta(vec({1})), {}), Error);
}

TEST(TestError, NoiseLevelAtTruth) {
  // interior points only, so the observation noise is the whole error
  const int n = 5, K = 2000;
  const double sigma = 0.1;
  const AffineGameForm f = cournot_form(n);
  const ContextSampler cheap = [n](Rng &rng) {
    std::uniform_real_distribution<double> U(0.0, 0.5);
    ContextVector ctx{Vector(n)};
    for (int i = 0; i < n; ++i)
      ctx.mu[i] = U(rng);
    return ctx;
  };
  const Dataset ds = generate_dataset(f, vec({2, 0.7}), cheap, K, sigma, 8, 1.0);
  const double err = evaluate_test_error(f, f.make_theta(vec({2, 0.7})), ds.test_points());
  // rms of K chi(nm) draws: relative sd about 1 / sqrt(2 nm K)
  const double expected = sigma * std::sqrt(double(n));
  EXPECT_NEAR(err, expected, 3 * expected / std::sqrt(2.0 * n * K));
}

TEST(MetricsCsv, HeaderAndEmptyWallTime) {
  const TrainResult r =
      train(testutil::scalar_game(false), single_point(vec({2}), true), cfg_with(2, 0.1, vec({0})));
  const std::string out = csv(r.log);
  std::istringstream is(out);
  std::string header, row;
  std::getline(is, header);
  std::getline(is, row);
  EXPECT_EQ(header, "iter,train_loss,test_error,step_size,grad_norm,degenerate,clip,wall_ms");
  EXPECT_EQ(row, "0,4,2,0.10000000000000001,4,0,0,");
}
