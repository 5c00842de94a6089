// Command-line front end: generate datasets, train, evaluate, check gradients.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ratlearn.hpp"

namespace {

using namespace ratlearn;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitSolver = 2;
constexpr int kExitVerify = 3;

enum class Level { Quiet = 0, Info = 1, Debug = 2 };

Level log_level() {
  const char *env = std::getenv("RATLEARN_LOG");
  if (!env)
    return Level::Info;
  const std::string v = env;
  if (v == "quiet" || v == "0")
    return Level::Quiet;
  if (v == "debug" || v == "2")
    return Level::Debug;
  return Level::Info;
}

void log(Level lvl, const std::string &msg) {
  if (static_cast<int>(lvl) <= static_cast<int>(log_level()))
    std::cerr << "[ratlearn] " << msg << '\n';
}

struct VerificationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Vector parse_vector(const std::string &text, const char *what) {
  std::vector<double> vals;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      vals.push_back(std::stod(item, &used));
      if (used != item.size())
        throw std::invalid_argument(item);
    } catch (const std::exception &) {
      throw Error(ErrorCode::InvalidArgument,
                  std::string(what) + ": cannot parse '" + item + "'");
    }
  }
  if (vals.empty())
    throw Error(ErrorCode::InvalidArgument, std::string(what) + " is empty");
  return Eigen::Map<Vector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

std::string format_vector(const Vector &v) {
  std::ostringstream s;
  s << std::setprecision(10);
  for (int i = 0; i < v.size(); ++i)
    s << (i ? "," : "") << v[i];
  return s.str();
}

const char *kFormats = R"(File formats (JSON, format_version 1):
  form     {format_version, kind:"form", name, n, m, l, p, k, R0, R:[p matrices],
            C, c0_const, c0_mu, A, b_const, b_mu, eq_rows, theta_box:{lower,upper}|null}
           Matrices are arrays of rows. null box bounds mean unbounded.
           Variables are agent-major (n blocks of m); rows are agent-major (n blocks of l).
  dataset  {format_version, kind:"dataset", game, form_file, n, m, p, sigma, seed,
            theta_true|null, points:[{split:"train"|"test", mu:[k], x:[n*m]}]}
           form_file is resolved relative to the dataset file.
  summary  {format_version, kind:"summary", dataset, theta, theta_initial,
            final_test_error, final_train_loss, event counters, config}
  graph    text: "nodes V edges E factors p", then one "from to L_row..." line per edge.
  metrics  CSV: iter,train_loss,test_error,step_size,grad_norm,degenerate,clip,wall_ms
           train_loss is the mean squared equilibrium distance over the training split,
           test_error the RMS equilibrium distance over the test split, both at the
           iterate before its update. degenerate/clip are 0/1. Reals carry 17
           significant digits; wall_ms is empty unless --wall-time is given.
Exit codes: 0 success, 1 usage or input error, 2 solver failure, 3 verification failure.
Environment: RATLEARN_LOG=quiet|info|debug (default info) controls stderr logging.)";

// ---------------------------------------------------------------------------

struct GenerateArgs {
  std::string game = "cournot";
  int n = 10;
  int K = 100;
  double sigma = 0.1;
  std::uint64_t seed = 0;
  std::string theta;
  int nodes = 8;
  double p_edge = 0.3;
  int agents = 3;
  int factors = 2;
  double test_fraction = 0.1;
  std::string out = "dataset.json";
  std::string form_out;
};

std::string sibling_path(const std::string &path, const std::string &suffix) {
  std::filesystem::path p(path);
  std::string stem = p.stem().string();
  return (p.parent_path() / (stem + suffix)).string();
}

int cmd_generate(const GenerateArgs &a) {
  Rng inst = split_rng(a.seed, kInstanceStream);
  AffineGameForm form;
  ContextSampler sampler;
  Vector theta_true;
  std::optional<CongestionSpec> spec;
  if (a.game == "cournot") {
    if (a.n < 2)
      throw Error(ErrorCode::InvalidArgument, "--n must be >= 2");
    form = cournot_form(a.n);
    sampler = cournot_context_sampler(a.n);
    theta_true = random_cournot_theta(inst);
  } else if (a.game == "congestion") {
    spec = random_congestion_spec(a.nodes, a.p_edge, a.agents, a.factors, inst);
    form = congestion_form(*spec);
    sampler = congestion_context_sampler(spec->graph, a.agents);
    theta_true = spec->theta_true;
  } else {
    throw Error(ErrorCode::InvalidArgument, "--game must be cournot or congestion");
  }
  if (!a.theta.empty()) {
    theta_true = parse_vector(a.theta, "--theta");
    if (theta_true.size() != form.p)
      throw Error(ErrorCode::InvalidArgument,
                  "--theta needs " + std::to_string(form.p) + " entries");
    if (projection_clips(form.make_theta(theta_true)))
      throw Error(ErrorCode::InvalidArgument, "--theta lies outside the parameter box");
  }
  const Dataset ds =
      generate_dataset(form, theta_true, sampler, a.K, a.sigma, a.seed, a.test_fraction);
  const std::string form_path =
      a.form_out.empty() ? sibling_path(a.out, ".form.json") : a.form_out;
  save_form(form_path, form);
  // store the form path relative to the dataset so the pair can be moved together
  const auto rel = std::filesystem::relative(
      std::filesystem::absolute(form_path),
      std::filesystem::absolute(a.out).parent_path());
  save_dataset(a.out, ds, rel.string());
  if (spec)
    save_graph(sibling_path(a.out, ".graph.txt"), *spec);
  std::cout << "seed " << a.seed << '\n'
            << "dataset " << a.out << " (" << ds.train.size() << " train, "
            << ds.test.size() << " test)\n"
            << "form " << form_path << '\n'
            << "theta_true " << format_vector(theta_true) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  TrainConfig cfg;
  std::string schedule = "sqrt";
  std::string rule = "rule1";
  std::string theta_init;
  std::string metrics = "metrics.csv";
  std::string summary = "summary.json";
};

int cmd_train(TrainArgs a) {
  const LoadedDataset ld = load_dataset(a.data);
  if (a.schedule == "constant")
    a.cfg.schedule = StepSchedule::Constant;
  else if (a.schedule == "sqrt")
    a.cfg.schedule = StepSchedule::InvSqrt;
  else if (a.schedule == "inv")
    a.cfg.schedule = StepSchedule::Inv;
  else
    throw Error(ErrorCode::InvalidArgument, "--schedule must be constant, sqrt or inv");
  if (a.rule == "rule1")
    a.cfg.rule = DegeneracyRule::Rule1;
  else if (a.rule == "rule2")
    a.cfg.rule = DegeneracyRule::Rule2;
  else
    throw Error(ErrorCode::InvalidArgument, "--rule must be rule1 or rule2");
  if (!a.theta_init.empty())
    a.cfg.theta_init = parse_vector(a.theta_init, "--theta-init");

  log(Level::Info, "training on " + std::to_string(ld.data.train.size()) +
                       " points for " + std::to_string(a.cfg.T) + " iterations");
  const TrainResult res = train(ld.form, ld.data, a.cfg);
  for (const LogRecord &r : res.log.records) {
    std::ostringstream s;
    s << "iter " << r.iter << " train_loss " << r.train_loss << " test_error "
      << r.test_error;
    log(Level::Debug, s.str());
  }
  {
    std::ofstream out(a.metrics);
    if (!out)
      throw Error(ErrorCode::Format, "cannot write " + a.metrics);
    write_metrics_csv(out, res.log);
  }
  save_summary(a.summary, a.cfg, res.log, a.data);
  if (res.log.projection_clips > 0 || res.log.init_projected)
    log(Level::Info, "parameter box clipped " +
                         std::to_string(res.log.projection_clips) + " update(s)" +
                         (res.log.init_projected ? " and the initial draw" : ""));
  if (res.log.clip_count > 0)
    log(Level::Info, "gradient clipped " + std::to_string(res.log.clip_count) + " time(s)");
  if (!res.log.events.empty())
    log(Level::Info, std::to_string(res.log.events.size()) + " degenerate active set(s)");
  if (res.log.singular_skips > 0)
    log(Level::Info, std::to_string(res.log.singular_skips) +
                         " singular system(s) skipped");
  std::cout << "theta " << format_vector(res.theta.theta) << '\n'
            << "final_train_loss " << std::setprecision(10) << res.log.final_train_loss
            << '\n'
            << "final_test_error " << res.log.final_test_error << '\n';
  if (a.cfg.check_nash)
    std::cout << "max_nash_gap " << res.log.max_nash_gap << '\n';
  if (a.cfg.record_wall_time)
    std::cout << "wall_ms " << res.log.total_wall_ms << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string data;
  std::string summary;
  std::string theta;
  bool use_true = false;
  std::string out;
};

int cmd_eval(const EvalArgs &a) {
  const LoadedDataset ld = load_dataset(a.data);
  const int sources = !a.summary.empty() + !a.theta.empty() + a.use_true;
  if (sources != 1)
    throw Error(ErrorCode::InvalidArgument,
                "give exactly one of --summary, --theta, --true");
  Vector th;
  if (!a.summary.empty())
    th = load_summary_theta(a.summary);
  else if (!a.theta.empty())
    th = parse_vector(a.theta, "--theta");
  else if (ld.data.theta_true)
    th = *ld.data.theta_true;
  else
    throw Error(ErrorCode::InvalidArgument, "dataset has no theta_true");
  if (th.size() != ld.form.p)
    throw Error(ErrorCode::InvalidArgument, "theta has the wrong length");
  if (ld.data.test.empty())
    throw Error(ErrorCode::InvalidArgument, "test split is empty");
  const double err =
      evaluate_test_error(ld.form, ld.form.make_theta(th), ld.data.test_points());
  std::cout << "test_error " << std::setprecision(17) << err << '\n';
  if (!a.out.empty()) {
    Json j;
    j["format_version"] = kFormatVersion;
    j["kind"] = "eval";
    j["dataset"] = a.data;
    j["theta"] = io_detail::vec_to_json(th);
    j["test_points"] = ld.data.test.size();
    j["test_error"] = err;
    io_detail::write_file(a.out, j);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct GradcheckArgs {
  std::string data;
  int N = 20;
  double tol = 1e-4;
  double h = 1e-5;
  std::uint64_t seed = 0;
  std::string theta;
  int corrupt = -1;
};

int cmd_gradcheck(const GradcheckArgs &a) {
  const LoadedDataset ld = load_dataset(a.data);
  const AffineGameForm &form = ld.form;
  AffineGameForm grad_form = form;
  if (a.corrupt >= 0) {
    if (a.corrupt >= form.p)
      throw Error(ErrorCode::InvalidArgument, "--corrupt-partials index out of range");
    // negative control: the adjoint sees wrong partials, the oracle does not
    grad_form.R[a.corrupt] *= 1.5;
    grad_form.C.col(a.corrupt) = 1.5 * grad_form.C.col(a.corrupt).array() + 0.25;
  }
  Rng rng = split_rng(a.seed, 0);
  std::uniform_int_distribution<std::size_t> pick(0, ld.data.points.size() - 1);
  int checked = 0, failed = 0, skipped_pairs = 0, skipped_components = 0;
  double worst = 0.0;
  for (int s = 0; s < a.N; ++s) {
    Vector th;
    if (!a.theta.empty()) {
      th = parse_vector(a.theta, "--theta");
    } else {
      th.resize(form.p);
      for (int j = 0; j < form.p; ++j)
        th[j] = abs_normal(rng);
    }
    const RationalityVector theta = project_theta(form.make_theta(th));
    const std::size_t k = pick(rng);
    const Datapoint &dp = ld.data.points[k];

    const FiniteDiffResult fd = finite_diff_grad(form, theta, dp, a.h);
    const QuadraticPotentialProblem prob = assemble(form, theta, dp.mu);
    const EquilibriumSolution sol = solve_potential(prob, 1e-10);
    const DegeneracySplit split = split_degenerate(prob, sol.Z, sol.Y);
    int unstable = 0;
    for (bool st : fd.stable)
      unstable += !st;
    if (!split.W.empty() || unstable == form.p) {
      ++skipped_pairs;
      log(Level::Info, "pair " + std::to_string(s) + " (point " + std::to_string(k) +
                           "): degenerate active set, skipped");
      continue;
    }
    skipped_components += unstable;
    const Vector g = loss_and_gradient(grad_form, theta, split.partition, dp).grad;
    const double rel = gradient_relative_error(g, fd);
    ++checked;
    worst = std::max(worst, rel);
    const bool ok = rel <= a.tol;
    failed += !ok;
    std::ostringstream msg;
    msg << "pair " << s << " (point " << k << "): rel_err " << std::setprecision(3)
        << rel << (ok ? "" : " FAIL");
    if (unstable)
      msg << " (" << unstable << " unstable component(s) skipped)";
    log(ok ? Level::Debug : Level::Info, msg.str());
  }
  std::cout << "checked " << checked << " skipped " << skipped_pairs
            << " unstable_components " << skipped_components << " worst_rel_err "
            << std::setprecision(3) << worst << '\n';
  if (checked == 0)
    throw VerificationFailure("no pair could be checked");
  if (failed > 0) {
    std::cout << "FAIL " << failed << " of " << checked << " above " << a.tol << '\n';
    return kExitVerify;
  }
  std::cout << "PASS\n";
  return kExitOk;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Learn rationality parameters of potential games from observed equilibria"};
  app.footer(kFormats);
  app.require_subcommand(1);

  GenerateArgs gen;
  auto *g = app.add_subcommand("generate", "Synthesize a game form and a noisy dataset");
  g->footer(kFormats);
  g->add_option("--game", gen.game, "cournot or congestion")->capture_default_str();
  g->add_option("--n", gen.n, "Cournot: number of firms")->capture_default_str();
  g->add_option("--K", gen.K, "number of datapoints")->capture_default_str();
  g->add_option("--sigma", gen.sigma, "std. dev. of observation noise")->capture_default_str();
  g->add_option("--seed", gen.seed, "random seed")->capture_default_str();
  g->add_option("--theta", gen.theta,
                "true parameters, comma separated (default: |N(0,1)| draws)");
  g->add_option("--nodes", gen.nodes, "congestion: number of nodes")->capture_default_str();
  g->add_option("--p-edge", gen.p_edge, "congestion: edge probability")->capture_default_str();
  g->add_option("--agents", gen.agents, "congestion: number of agents")->capture_default_str();
  g->add_option("--factors", gen.factors, "congestion: number of cost factors p")
      ->capture_default_str();
  g->add_option("--test-fraction", gen.test_fraction, "share of points held out")
      ->capture_default_str();
  g->add_option("--out", gen.out, "dataset file")->capture_default_str();
  g->add_option("--form-out", gen.form_out, "form file (default: <out stem>.form.json)");

  TrainArgs tr;
  auto *t = app.add_subcommand("train", "Run the stochastic active-set learner");
  t->footer(kFormats);
  t->add_option("--data", tr.data, "dataset file")->required();
  t->add_option("--T", tr.cfg.T, "iterations")->capture_default_str();
  t->add_option("--eta0", tr.cfg.eta0, "initial step size")->capture_default_str();
  t->add_option("--schedule", tr.schedule, "constant, sqrt (eta0/sqrt(t+1)) or inv (eta0/(t+1))")
      ->capture_default_str();
  t->add_option("--seed", tr.cfg.seed, "random seed")->capture_default_str();
  t->add_option("--rule", tr.rule, "degeneracy rule: rule1 or rule2")->capture_default_str();
  t->add_option("--epsilon", tr.cfg.epsilon, "rule2 ball radius (0: 1e-3*(1+|theta|))")
      ->capture_default_str();
  t->add_option("--max-tries", tr.cfg.max_tries, "rule2 resamples before falling back to rule1")
      ->capture_default_str();
  t->add_option("--eval-every", tr.cfg.eval_every, "iterations between metric rows")
      ->capture_default_str();
  t->add_option("--batch", tr.cfg.batch_size, "datapoints per gradient")->capture_default_str();
  t->add_option("--clip", tr.cfg.clip_norm, "gradient norm cap")->capture_default_str();
  t->add_option("--act-tol", tr.cfg.act_tol, "tightness tolerance for active rows")
      ->capture_default_str();
  t->add_option("--kkt-tol", tr.cfg.kkt_tol, "equilibrium KKT tolerance")->capture_default_str();
  t->add_option("--theta-init", tr.theta_init,
                "initial parameters, comma separated (default: N(0,1) draw)");
  t->add_flag("--check-nash", tr.cfg.check_nash, "record the best-response gap of every iterate");
  t->add_flag("--wall-time", tr.cfg.record_wall_time,
              "fill the wall_ms column (the CSV is then no longer reproducible)");
  t->add_option("--metrics", tr.metrics, "metrics CSV output")->capture_default_str();
  t->add_option("--summary", tr.summary, "summary JSON output")->capture_default_str();

  EvalArgs ev;
  auto *e = app.add_subcommand("eval", "RMS equilibrium distance on the test split");
  e->footer(kFormats);
  e->add_option("--data", ev.data, "dataset file")->required();
  e->add_option("--summary", ev.summary, "take theta from a training summary");
  e->add_option("--theta", ev.theta, "theta, comma separated");
  e->add_flag("--true", ev.use_true, "use the dataset's theta_true");
  e->add_option("--out", ev.out, "also write the result as JSON");

  GradcheckArgs gc;
  auto *c = app.add_subcommand("gradcheck",
                               "Compare adjoint gradients with central finite differences");
  c->footer(kFormats);
  c->add_option("--data", gc.data, "dataset file")->required();
  c->add_option("--N", gc.N, "random (theta, datapoint) pairs")->capture_default_str();
  c->add_option("--tol", gc.tol, "relative error tolerance")->capture_default_str();
  c->add_option("--fd-step", gc.h, "finite difference step")->capture_default_str();
  c->add_option("--seed", gc.seed, "random seed")->capture_default_str();
  c->add_option("--theta", gc.theta, "fixed theta instead of |N(0,1)| draws");
  c->add_option("--corrupt-partials", gc.corrupt,
                "negative control: perturb the partials of parameter j in the adjoint only");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*g)
      return cmd_generate(gen);
    if (*t)
      return cmd_train(tr);
    if (*e)
      return cmd_eval(ev);
    if (*c)
      return cmd_gradcheck(gc);
  } catch (const VerificationFailure &err) {
    std::cerr << "verification failure: " << err.what() << '\n';
    return kExitVerify;
  } catch (const Error &err) {
    std::cerr << "error: " << err.what() << '\n';
    return is_solver_failure(err.code()) ? kExitSolver : kExitUsage;
  } catch (const std::exception &err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
