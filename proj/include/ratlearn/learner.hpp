#pragma once

// Stochastic active-set learning loop. Every iteration draws a training point,
// computes the exact equilibrium at the current parameters, reads off the
// active set, resolves degeneracy, differentiates through the active-set
// system and takes a projected gradient step.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ratlearn/assumptions.hpp"
#include "ratlearn/dataset.hpp"
#include "ratlearn/diffgrad.hpp"
#include "ratlearn/errors.hpp"
#include "ratlearn/model.hpp"
#include "ratlearn/qp.hpp"
#include "ratlearn/rules.hpp"

namespace ratlearn {

enum class StepSchedule { Constant, InvSqrt, Inv };

inline const char *to_string(StepSchedule s) {
  switch (s) {
  case StepSchedule::Constant:
    return "constant";
  case StepSchedule::InvSqrt:
    return "sqrt";
  case StepSchedule::Inv:
    return "inv";
  }
  return "?";
}

struct TrainConfig {
  long T = 1000;
  StepSchedule schedule = StepSchedule::InvSqrt;
  double eta0 = 0.1;
  std::uint64_t seed = 0;
  double act_tol = 1e-7;
  double kkt_tol = 1e-8;
  DegeneracyRule rule = DegeneracyRule::Rule1;
  double epsilon = 0.0; // 0: 1e-3 * (1 + |theta|)
  int max_tries = 8;
  long eval_every = 100;
  std::optional<Vector> theta_init; // empty: standard normal draw
  int batch_size = 1;
  double clip_norm = 1e3;
  bool check_nash = false;       // best-response gap of every iterate
  bool record_wall_time = false; // wall_ms column; off keeps logs byte-stable

  void validate() const {
    if (T < 1)
      throw Error(ErrorCode::InvalidArgument, "T must be >= 1");
    if (!(eta0 > 0.0))
      throw Error(ErrorCode::InvalidArgument, "eta0 must be positive");
    if (eval_every < 1)
      throw Error(ErrorCode::InvalidArgument, "eval_every must be >= 1");
    if (batch_size < 1)
      throw Error(ErrorCode::InvalidArgument, "batch_size must be >= 1");
    if (epsilon < 0.0 || max_tries < 1)
      throw Error(ErrorCode::InvalidArgument, "bad Rule 2 settings");
  }
};

inline double step_size(long t, const TrainConfig &cfg) {
  if (t < 0)
    throw Error(ErrorCode::InvalidArgument, "negative iteration");
  switch (cfg.schedule) {
  case StepSchedule::Constant:
    return cfg.eta0;
  case StepSchedule::InvSqrt:
    return cfg.eta0 / std::sqrt(static_cast<double>(t) + 1.0);
  case StepSchedule::Inv:
    return cfg.eta0 / (static_cast<double>(t) + 1.0);
  }
  return cfg.eta0;
}

struct LogRecord {
  long iter = 0;
  double train_loss = 0.0;  // mean over the whole training split at theta^(t)
  double sample_loss = 0.0; // mean over the sampled batch
  double test_error = std::numeric_limits<double>::quiet_NaN();
  double step_size = 0.0;
  double grad_norm = 0.0;
  bool degenerate = false;
  bool clipped = false;
  double wall_ms = std::numeric_limits<double>::quiet_NaN();
};

struct RunLog {
  std::vector<LogRecord> records;
  std::vector<DegeneracyEvent> events;
  std::vector<std::pair<long, Vector>> checkpoints; // theta at logged iterations
  Vector theta_initial;
  Vector theta_final;
  long clip_count = 0;
  long projection_clips = 0;      // updates altered by the box
  bool init_projected = false;    // initial draw was clipped onto the box
  long singular_skips = 0;        // iterations whose system stayed singular
  double max_nash_gap = 0.0;      // with check_nash
  double final_train_loss = std::numeric_limits<double>::quiet_NaN();
  double final_test_error = std::numeric_limits<double>::quiet_NaN();
  double total_wall_ms = 0.0;
};

/// Root-mean of squared distances between the equilibria at theta and the
/// observations (full equilibrium solves, independent of training active sets).
inline double evaluate_test_error(const AffineGameForm &form,
                                  const RationalityVector &theta,
                                  const std::vector<Datapoint> &testset,
                                  double kkt_tol = 1e-8,
                                  std::vector<std::optional<WarmStart>> *warm = nullptr) {
  if (testset.empty())
    throw Error(ErrorCode::InvalidArgument, "empty test set");
  QPOptions opts;
  opts.kkt_tol = kkt_tol;
  const ActiveSetQP qp(opts);
  double total = 0.0;
  for (std::size_t k = 0; k < testset.size(); ++k) {
    const WarmStart *ws = nullptr;
    if (warm && k < warm->size() && (*warm)[k])
      ws = &*(*warm)[k];
    EquilibriumSolution sol;
    try {
      sol = qp.solve(assemble(form, theta, testset[k].mu), ws);
    } catch (const Error &e) {
      throw Error(e.code(), "test point " + std::to_string(k) + ": " + e.what());
    }
    if (warm && k < warm->size())
      (*warm)[k] = warm_start_from(sol);
    total += (sol.x - testset[k].xbar).squaredNorm();
  }
  return std::sqrt(total / static_cast<double>(testset.size()));
}

/// Mean squared distance of full equilibria to the observations.
inline double equilibrium_loss(const AffineGameForm &form,
                               const RationalityVector &theta,
                               const std::vector<Datapoint> &points,
                               double kkt_tol = 1e-8) {
  const double rms = evaluate_test_error(form, theta, points, kkt_tol);
  return rms * rms;
}

struct TrainResult {
  RationalityVector theta;
  RunLog log;
};

namespace detail {

class Trainer {
public:
  Trainer(const AffineGameForm &form, const Dataset &data, const TrainConfig &cfg)
      : form_(form), cfg_(cfg), train_(data.train_points()),
        test_(data.test_points()), rng_(cfg.seed), qp_(make_opts(cfg)),
        train_warm_(train_.size()), train_eval_warm_(train_.size()),
        test_warm_(test_.size()) {}

  TrainResult run() {
    using clock = std::chrono::steady_clock;
    const auto start = clock::now();
    RunLog log;

    RationalityVector theta = form_.make_theta(initial_theta());
    log.init_projected = projection_clips(theta);
    theta = project_theta(theta);
    log.theta_initial = theta.theta;

    for (long t = 0; t < cfg_.T; ++t) {
      const double eta = step_size(t, cfg_);
      Vector grad = Vector::Zero(form_.p);
      double batch_loss = 0.0;
      bool degenerate = false;
      for (int b = 0; b < cfg_.batch_size; ++b) {
        std::uniform_int_distribution<std::size_t> pick(0, train_.size() - 1);
        const int k = static_cast<int>(pick(rng_));
        const Sample s = sample(theta, k, t, log);
        grad += s.grad;
        batch_loss += s.loss;
        degenerate = degenerate || s.degenerate;
      }
      grad /= cfg_.batch_size;
      batch_loss /= cfg_.batch_size;

      double gnorm = grad.norm();
      bool clipped = false;
      if (gnorm > cfg_.clip_norm) {
        grad *= cfg_.clip_norm / gnorm;
        clipped = true;
        ++log.clip_count;
      }

      if (t % cfg_.eval_every == 0 || t == cfg_.T - 1) {
        LogRecord rec;
        rec.iter = t;
        rec.train_loss = mean_squared_error(theta, train_, train_eval_warm_);
        rec.sample_loss = batch_loss;
        if (!test_.empty())
          rec.test_error = evaluate_test_error(form_, theta, test_, cfg_.kkt_tol, &test_warm_);
        rec.step_size = eta;
        rec.grad_norm = gnorm;
        rec.degenerate = degenerate;
        rec.clipped = clipped;
        if (cfg_.record_wall_time)
          rec.wall_ms =
              std::chrono::duration<double, std::milli>(clock::now() - start).count();
        log.records.push_back(rec);
        log.checkpoints.emplace_back(t, theta.theta);
      }

      RationalityVector next = theta;
      next.theta = theta.theta - eta * grad;
      if (projection_clips(next))
        ++log.projection_clips;
      theta = project_theta(next);
    }

    log.theta_final = theta.theta;
    log.final_train_loss = mean_squared_error(theta, train_, train_eval_warm_);
    if (!test_.empty())
      log.final_test_error =
          evaluate_test_error(form_, theta, test_, cfg_.kkt_tol, &test_warm_);
    log.total_wall_ms =
        std::chrono::duration<double, std::milli>(clock::now() - start).count();
    return TrainResult{theta, std::move(log)};
  }

private:
  struct Sample {
    Vector grad;
    double loss = 0.0;
    bool degenerate = false;
  };

  double mean_squared_error(const RationalityVector &theta,
                            const std::vector<Datapoint> &points,
                            std::vector<std::optional<WarmStart>> &warm) const {
    const double rms = evaluate_test_error(form_, theta, points, cfg_.kkt_tol, &warm);
    return rms * rms;
  }

  static QPOptions make_opts(const TrainConfig &cfg) {
    QPOptions o;
    o.kkt_tol = cfg.kkt_tol;
    o.act_tol = cfg.act_tol;
    return o;
  }

  Vector initial_theta() {
    if (cfg_.theta_init) {
      if (cfg_.theta_init->size() != form_.p)
        throw Error(ErrorCode::DimensionMismatch, "theta_init length");
      return *cfg_.theta_init;
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector th(form_.p);
    for (int j = 0; j < form_.p; ++j)
      th[j] = normal(rng_);
    return th;
  }

  EquilibriumSolution solve_at(const RationalityVector &theta, int k, long t) {
    const WarmStart *ws = train_warm_[k] ? &*train_warm_[k] : nullptr;
    try {
      EquilibriumSolution sol = qp_.solve(assemble(form_, theta, train_[k].mu), ws);
      train_warm_[k] = warm_start_from(sol);
      return sol;
    } catch (const Error &e) {
      throw Error(e.code(), "iteration " + std::to_string(t) + ", datapoint " +
                                std::to_string(k) + ": " + e.what());
    }
  }

  Sample sample(const RationalityVector &theta, int k, long t, RunLog &log) {
    const Datapoint &dp = train_[k];
    const EquilibriumSolution sol = solve_at(theta, k, t);
    if (cfg_.check_nash) {
      const Vector gap = best_response_gap(form_, theta, dp.mu, sol.x);
      log.max_nash_gap = std::max(log.max_nash_gap, gap.maxCoeff());
    }
    Sample out;
    out.loss = (sol.x - dp.xbar).squaredNorm();

    QuadraticPotentialProblem prob = assemble(form_, theta, dp.mu);
    DegeneracySplit split = split_degenerate(prob, sol.Z, sol.Y);
    RationalityVector theta_eval = theta;
    ActivePartition part = split.partition;

    if (!split.W.empty()) {
      out.degenerate = true;
      DegeneracyEvent ev;
      ev.iteration = t;
      ev.datapoint = k;
      ev.W = split.W;
      ev.rule_used = cfg_.rule;
      if (cfg_.rule == DegeneracyRule::Rule1) {
        Rule1Result r1 = rule1_partition(part.Z, part.Y, rng_);
        part = r1.partition;
        ev.W1 = r1.W1;
        ev.W2 = r1.W2;
      } else {
        const double eps =
            cfg_.epsilon > 0.0 ? cfg_.epsilon : default_epsilon(theta.theta);
        bool resolved = false;
        for (int attempt = 1; attempt <= cfg_.max_tries; ++attempt) {
          RationalityVector tilde = theta;
          tilde.theta = rule2_perturb(theta.theta, eps, rng_);
          ev.projection_altered = ev.projection_altered || projection_clips(tilde);
          tilde = project_theta(tilde);
          const EquilibriumSolution s2 = solve_at(tilde, k, t);
          prob = assemble(form_, tilde, dp.mu);
          split = split_degenerate(prob, s2.Z, s2.Y);
          theta_eval = tilde;
          part = split.partition;
          ev.tries = attempt;
          ev.theta_tilde = tilde.theta;
          if (split.W.empty()) {
            resolved = true;
            break;
          }
        }
        if (!resolved) {
          ev.fell_back = true;
          Rule1Result r1 = rule1_partition(part.Z, part.Y, rng_);
          part = r1.partition;
          ev.W1 = r1.W1;
          ev.W2 = r1.W2;
        }
      }
      log.events.push_back(std::move(ev));
    }

    try {
      out.grad = loss_and_gradient(form_, theta_eval, part, dp).grad;
    } catch (const Error &e) {
      if (e.code() != ErrorCode::SingularSystem)
        throw;
      ++log.singular_skips;
      out.grad = Vector::Zero(form_.p);
    }
    return out;
  }

  const AffineGameForm &form_;
  TrainConfig cfg_;
  std::vector<Datapoint> train_;
  std::vector<Datapoint> test_;
  std::mt19937_64 rng_;
  ActiveSetQP qp_;
  std::vector<std::optional<WarmStart>> train_warm_;
  std::vector<std::optional<WarmStart>> train_eval_warm_;
  std::vector<std::optional<WarmStart>> test_warm_;
};

} // namespace detail

/// Runs exactly cfg.T iterations on the training split of `data`.
inline TrainResult train(const AffineGameForm &form, const Dataset &data,
                         const TrainConfig &cfg) {
  cfg.validate();
  form.validate();
  if (data.train.empty())
    throw Error(ErrorCode::InvalidArgument, "training split is empty");
  AssumptionOptions aopts;
  aopts.licq_samples = 0;
  const AssumptionReport report =
      check_assumptions(form, {data.points[data.train.front()].mu}, aopts);
  if (!report.well_posed())
    throw Error(ErrorCode::InvalidArgument,
                "game form is not well posed: " + report.summary());
  return detail::Trainer(form, data, cfg).run();
}

// ---------------------------------------------------------------------------
// Metrics CSV: iter,train_loss,test_error,step_size,grad_norm,degenerate,clip,wall_ms
// Reals use 17 significant digits; an unavailable value is an empty field.

inline void write_metrics_csv(std::ostream &os, const RunLog &log) {
  auto real = [](double v) {
    if (std::isnan(v))
      return std::string();
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
  };
  os << "iter,train_loss,test_error,step_size,grad_norm,degenerate,clip,wall_ms\n";
  for (const auto &r : log.records)
    os << r.iter << ',' << real(r.train_loss) << ',' << real(r.test_error) << ','
       << real(r.step_size) << ',' << real(r.grad_norm) << ','
       << (r.degenerate ? 1 : 0) << ',' << (r.clipped ? 1 : 0) << ','
       << real(r.wall_ms) << '\n';
}

} // namespace ratlearn
