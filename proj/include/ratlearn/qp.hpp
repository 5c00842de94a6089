#pragma once

// Primal active-set solver for the strictly convex potential problem
//
//   minimize 1/2 x'Rx + c'x   s.t.  A_i x <= b_i (inequality rows),
//                                   A_e x  = b_e (eq_rows),
//
// returning the equilibrium x together with exact multipliers lambda
// (R x + c + A' lambda = 0, lambda >= 0 on inequality rows, free on eq_rows).
//
// Each iteration solves the equality-constrained subproblem on the working set
// through a Cholesky factor of R and the Schur complement A_W R^-1 A_W',
// takes a ratio-test step (smallest blocking index wins ties) and, at a
// stationary point of the working set, drops the most negative multiplier.
// A feasible start comes from a warm start, from x = 0 when that is feasible,
// or from a phase-1 elastic problem that minimizes total constraint violation.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "ratlearn/errors.hpp"
#include "ratlearn/linalg.hpp"
#include "ratlearn/model.hpp"

namespace ratlearn {

struct KKTResiduals {
  double stationarity = 0.0;
  double primal = 0.0;
  double dual = 0.0;
  double complementarity = 0.0;

  double max() const {
    return std::max({stationarity, primal, dual, complementarity});
  }
};

struct EquilibriumSolution {
  Vector x;
  Vector lambda;
  KKTResiduals residuals;
  IndexSet Z; // tight rows (eq_rows included)
  IndexSet Y; // inequality rows with zero dual
  IndexSet W; // Z intersect Y (degenerate inequality rows)
  IndexSet working_set;
  int iterations = 0;
};

struct ActiveSets {
  IndexSet Z;
  IndexSet Y;
  IndexSet W;
};

struct QPOptions {
  double kkt_tol = 1e-8;
  double act_tol = 1e-7;
  int max_iterations = 0; // 0: 10 * (variables + rows) + 100
};

/// Feasible point plus working set from an earlier solve of a problem with the
/// same constraints (A and b do not depend on theta).
struct WarmStart {
  Vector x;
  IndexSet working_set;
};

inline KKTResiduals kkt_residuals(const QuadraticPotentialProblem &prob,
                                  const Vector &x, const Vector &lambda) {
  KKTResiduals res;
  res.stationarity = inf_norm(prob.R * x + prob.c + prob.A.transpose() * lambda);
  const Vector slack = prob.b - prob.A * x;
  double compl_sum = 0.0;
  for (int r = 0; r < prob.num_rows(); ++r) {
    if (prob.is_eq_row(r)) {
      res.primal = std::max(res.primal, std::abs(slack[r]));
    } else {
      res.primal = std::max(res.primal, -slack[r]);
      res.dual = std::max(res.dual, -lambda[r]);
      compl_sum += lambda[r] * slack[r];
    }
  }
  res.complementarity = std::abs(compl_sum);
  return res;
}

/// Tolerance-aware test of the KKT invariants. Stationarity is measured
/// relative to the size of the gradient terms.
inline bool kkt_satisfied(const QuadraticPotentialProblem &prob,
                          const Vector &x, const Vector &lambda,
                          const KKTResiduals &res, double tol) {
  const double grad_scale =
      1.0 + inf_norm(prob.c) + inf_norm(prob.R * x) +
      inf_norm(prob.A.transpose() * lambda.cwiseAbs());
  const double b_scale = 1.0 + inf_norm(prob.b);
  return res.stationarity <= tol * grad_scale &&
         res.primal <= tol * b_scale && res.dual <= tol &&
         res.complementarity <= tol * (1.0 + lambda.norm()) * b_scale;
}

namespace detail {

struct ActiveSetResult {
  Vector x;
  Vector lambda; // full length, zero outside the working set
  IndexSet working_set;
  int iterations = 0;
};

inline Matrix rows_of(const Matrix &A, const std::vector<int> &rows) {
  Matrix out(rows.size(), A.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(i) = A.row(rows[i]);
  return out;
}

/// Multipliers and step of the working-set subproblem at x:
///   minimize 1/2 p'Rp + g'p  s.t. A_W p = 0.
struct SubproblemSolution {
  Vector p;
  Vector lambda_w;
  double newton_norm = 0.0; // |R^{-1} g|, the scale of p's roundoff
  Matrix Y;                 // L^{-1} A_w'
  Eigen::LLT<Matrix> schur; // of Y'Y
};

inline SubproblemSolution
solve_working_set(const Eigen::LLT<Matrix> &llt, const Matrix &A_w,
                  const Vector &g) {
  SubproblemSolution out;
  const Vector u = llt.solve(g);
  out.newton_norm = inf_norm(u);
  if (A_w.rows() == 0) {
    out.p = -u;
    out.lambda_w.resize(0);
    return out;
  }
  out.Y = llt.matrixL().solve(A_w.transpose());
  out.schur.compute(Matrix(out.Y.transpose() * out.Y));
  if (out.schur.info() != Eigen::Success)
    throw Error(ErrorCode::IllConditioned,
                "working-set constraints are numerically dependent");
  out.lambda_w = out.schur.solve(Vector(-A_w * u));
  out.p = -(u + llt.solve(Vector(A_w.transpose() * out.lambda_w)));
  return out;
}

/// True when row a is numerically in the span of the working-set rows, using
/// the metric of R^{-1} already factored for the subproblem.
inline bool in_working_span(const Eigen::LLT<Matrix> &llt,
                            const SubproblemSolution &sub, const Vector &a) {
  if (sub.Y.cols() == 0)
    return false;
  const Vector y = llt.matrixL().solve(a);
  const Vector rest = y - sub.Y * sub.schur.solve(Vector(sub.Y.transpose() * y));
  return rest.norm() <= 1e-8 * y.norm();
}

/// Core primal active-set loop from a feasible x and an independent working
/// set (which must contain every equality row).
inline ActiveSetResult primal_active_set(const Matrix &R, const Vector &c,
                                         const Matrix &A, const Vector &b,
                                         const std::vector<char> &is_eq,
                                         Vector x, std::vector<int> working,
                                         const QPOptions &opts) {
  const int N = static_cast<int>(c.size());
  const int M = static_cast<int>(b.size());
  Eigen::LLT<Matrix> llt(R);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorCode::IllConditioned, "R is not positive definite");

  const int max_iter =
      opts.max_iterations > 0 ? opts.max_iterations : 10 * (N + M) + 100;
  const double dual_tol = 0.1 * opts.kkt_tol;
  Vector row_norm(M);
  for (int r = 0; r < M; ++r)
    row_norm[r] = A.row(r).lpNorm<Eigen::Infinity>();

  std::vector<char> in_working(M, 0);
  for (int r : working)
    in_working[r] = 1;

  ActiveSetResult out;
  for (int iter = 0; iter < max_iter; ++iter) {
    const Matrix A_w = rows_of(A, working);
    const Vector g = R * x + c;
    SubproblemSolution sub = solve_working_set(llt, A_w, g);
    const double step_norm = inf_norm(sub.p);

    if (step_norm <= 1e-11 * (1.0 + inf_norm(x) + sub.newton_norm)) {
      int drop = -1;
      double most_negative = -dual_tol;
      for (std::size_t i = 0; i < working.size(); ++i) {
        if (is_eq[working[i]])
          continue;
        const double lam = sub.lambda_w[i];
        if (lam < most_negative ||
            (drop >= 0 && lam == most_negative && working[i] < working[drop])) {
          most_negative = lam;
          drop = static_cast<int>(i);
        }
      }
      if (drop < 0) {
        out.x = x;
        out.lambda = Vector::Zero(M);
        for (std::size_t i = 0; i < working.size(); ++i)
          out.lambda[working[i]] = sub.lambda_w[i];
        out.working_set = working;
        out.iterations = iter + 1;
        return out;
      }
      in_working[working[drop]] = 0;
      working.erase(working.begin() + drop);
      continue;
    }

    // ratio test; ties and near-ties go to the smallest index
    std::vector<std::pair<double, int>> candidates;
    for (int r = 0; r < M; ++r) {
      if (in_working[r] || is_eq[r])
        continue;
      const double ap = A.row(r).dot(sub.p);
      if (ap <= 1e-12 * row_norm[r] * step_norm)
        continue;
      const double slack = std::max(0.0, b[r] - A.row(r).dot(x));
      const double ratio = slack / ap;
      if (ratio < 1.0)
        candidates.emplace_back(ratio, r);
    }
    std::sort(candidates.begin(), candidates.end());
    double alpha = 1.0;
    int blocking = -1;
    for (const auto &[ratio, r] : candidates) {
      // a row already spanned by the working set only blocks through roundoff
      if (in_working_span(llt, sub, A.row(r).transpose()))
        continue;
      alpha = ratio;
      blocking = r;
      break;
    }
    x += alpha * sub.p;
    if (blocking >= 0) {
      in_working[blocking] = 1;
      working.push_back(blocking);
    }
  }
  throw Error(ErrorCode::IllConditioned,
              "active-set iteration limit (" + std::to_string(max_iter) +
                  ") reached");
}

inline bool is_feasible(const Matrix &A, const Vector &b,
                        const std::vector<char> &is_eq, const Vector &x,
                        double tol) {
  const Vector slack = b - A * x;
  for (int r = 0; r < slack.size(); ++r) {
    const double scale = tol * (1.0 + std::abs(b[r]));
    if (is_eq[r] ? std::abs(slack[r]) > scale : slack[r] < -scale)
      return false;
  }
  return true;
}

inline double max_violation(const Matrix &A, const Vector &b,
                            const std::vector<char> &is_eq, const Vector &x) {
  const Vector slack = b - A * x;
  double worst = 0.0;
  for (int r = 0; r < slack.size(); ++r)
    worst = std::max(worst, is_eq[r] ? std::abs(slack[r]) : -slack[r]);
  return worst;
}

/// Equality rows first, then the requested rows that are tight at x, keeping
/// only a linearly independent subset.
inline std::vector<int> initial_working_set(const Matrix &A, const Vector &b,
                                            const std::vector<char> &is_eq,
                                            const Vector &x,
                                            const IndexSet &requested,
                                            double tol) {
  std::vector<int> candidates;
  for (int r = 0; r < b.size(); ++r)
    if (is_eq[r])
      candidates.push_back(r);
  const Vector slack = b - A * x;
  for (int r : requested)
    if (r >= 0 && r < b.size() && !is_eq[r] &&
        std::abs(slack[r]) <= tol * (1.0 + std::abs(b[r])))
      candidates.push_back(r);
  return select_independent_rows(A, candidates).kept;
}

/// Phase 1: elastic problem over (x, t) with one nonnegative slack per
/// violated inequality row and per equality row,
///   minimize sum t + eps/2 (|x|^2 + |t|^2),
/// started from x = 0. The caller checks feasibility of the result.
inline Vector phase_one(const Matrix &A, const Vector &b,
                        const std::vector<char> &is_eq, const QPOptions &opts) {
  const int N = static_cast<int>(A.cols());
  const int M = static_cast<int>(b.size());
  std::vector<int> slack_of(M, -1);
  std::vector<double> sign(M, 1.0);
  int T = 0;
  for (int r = 0; r < M; ++r) {
    if (is_eq[r]) {
      sign[r] = (-b[r] >= 0.0) ? 1.0 : -1.0;
      slack_of[r] = T++;
    } else if (b[r] < 0.0) {
      slack_of[r] = T++;
    }
  }
  const int NV = N + T;
  const int MV = M + T;
  Matrix Ap = Matrix::Zero(MV, NV);
  Vector bp(MV);
  std::vector<char> eqp(MV, 0);
  for (int r = 0; r < M; ++r) {
    Ap.row(r).head(N) = A.row(r);
    if (slack_of[r] >= 0)
      Ap(r, N + slack_of[r]) = is_eq[r] ? -sign[r] : -1.0;
    bp[r] = b[r];
    eqp[r] = is_eq[r];
  }
  for (int t = 0; t < T; ++t) {
    Ap(M + t, N + t) = -1.0;
    bp[M + t] = 0.0;
  }
  const double eps = 1e-3;
  const Matrix Rp = eps * Matrix::Identity(NV, NV);
  Vector cp = Vector::Zero(NV);
  cp.tail(T).setOnes();

  Vector start = Vector::Zero(NV);
  for (int r = 0; r < M; ++r)
    if (slack_of[r] >= 0)
      start[N + slack_of[r]] = std::abs(b[r]);
  std::vector<int> working;
  for (int r = 0; r < M; ++r)
    if (eqp[r])
      working.push_back(r);

  QPOptions inner = opts;
  inner.max_iterations = 0;
  const ActiveSetResult res =
      primal_active_set(Rp, cp, Ap, bp, eqp, start, working, inner);
  return res.x.head(N);
}

} // namespace detail

inline ActiveSets extract_active_sets(const QuadraticPotentialProblem &prob,
                                      const EquilibriumSolution &sol,
                                      double act_tol) {
  ActiveSets sets;
  const Vector slack = prob.b - prob.A * sol.x;
  for (int r = 0; r < prob.num_rows(); ++r) {
    if (prob.is_eq_row(r)) {
      sets.Z.push_back(r);
      continue;
    }
    const bool tight = std::abs(slack[r]) <= act_tol * (1.0 + std::abs(prob.b[r]));
    const bool zero_dual = sol.lambda[r] <= act_tol;
    if (tight)
      sets.Z.push_back(r);
    // a row that is not tight has a zero dual by complementarity
    if (zero_dual || !tight)
      sets.Y.push_back(r);
    if (tight && zero_dual)
      sets.W.push_back(r);
  }
  return sets;
}

/// Solver object; holds no state between solves other than its options and
/// the working set of the last solve.
class ActiveSetQP {
public:
  explicit ActiveSetQP(QPOptions opts = {}) : opts_(opts) {}

  const QPOptions &options() const { return opts_; }

  EquilibriumSolution solve(const QuadraticPotentialProblem &prob,
                            const WarmStart *warm = nullptr) const {
    const int N = prob.num_vars();
    const int M = prob.num_rows();
    if (prob.R.rows() != N || prob.R.cols() != N || prob.A.rows() != M ||
        prob.A.cols() != N)
      throw Error(ErrorCode::DimensionMismatch, "potential problem shapes");
    std::vector<char> is_eq(M, 0);
    for (int r : prob.eq_rows)
      is_eq[r] = 1;

    const double feas_tol = opts_.kkt_tol;
    Vector x0;
    IndexSet requested;
    if (warm && warm->x.size() == N &&
        detail::is_feasible(prob.A, prob.b, is_eq, warm->x, feas_tol)) {
      x0 = warm->x;
      requested = warm->working_set;
    } else if (detail::is_feasible(prob.A, prob.b, is_eq, Vector::Zero(N),
                                   feas_tol)) {
      x0 = Vector::Zero(N);
    } else {
      x0 = detail::phase_one(prob.A, prob.b, is_eq, opts_);
      if (!detail::is_feasible(prob.A, prob.b, is_eq, x0, 1e3 * feas_tol))
        throw Error(ErrorCode::Infeasible,
                    "no feasible point (largest violation " +
                        std::to_string(detail::max_violation(prob.A, prob.b, is_eq, x0)) +
                        ")");
      const Vector slack = prob.b - prob.A * x0;
      for (int r = 0; r < M; ++r)
        if (!is_eq[r] && std::abs(slack[r]) <= feas_tol * (1.0 + std::abs(prob.b[r])))
          requested.push_back(r);
    }
    std::vector<int> working = detail::initial_working_set(
        prob.A, prob.b, is_eq, x0, requested, feas_tol);

    detail::ActiveSetResult res = detail::primal_active_set(
        prob.R, prob.c, prob.A, prob.b, is_eq, x0, working, opts_);

    EquilibriumSolution sol;
    sol.x = res.x;
    sol.lambda = res.lambda;
    sol.iterations = res.iterations;
    polish(prob, is_eq, res.working_set, sol);
    sol.working_set = res.working_set;
    std::sort(sol.working_set.begin(), sol.working_set.end());
    sol.residuals = kkt_residuals(prob, sol.x, sol.lambda);
    if (!kkt_satisfied(prob, sol.x, sol.lambda, sol.residuals, opts_.kkt_tol))
      throw Error(ErrorCode::IllConditioned,
                  "KKT residuals above tolerance (max " +
                      std::to_string(sol.residuals.max()) + ")");
    const ActiveSets sets = extract_active_sets(prob, sol, opts_.act_tol);
    sol.Z = sets.Z;
    sol.Y = sets.Y;
    sol.W = sets.W;
    return sol;
  }

private:
  // Re-solve the equality-constrained problem on the final working set from
  // scratch, removing drift accumulated over the iterations.
  void polish(const QuadraticPotentialProblem &prob,
              const std::vector<char> &is_eq, const std::vector<int> &working,
              EquilibriumSolution &sol) const {
    Eigen::LLT<Matrix> llt(prob.R);
    const Matrix A_w = detail::rows_of(prob.A, working);
    Vector lambda_w(working.size());
    Vector x;
    const Vector u = llt.solve(prob.c);
    if (working.empty()) {
      x = -u;
    } else {
      const Matrix Y = llt.matrixL().solve(A_w.transpose());
      Eigen::LLT<Matrix> schur(Matrix(Y.transpose() * Y));
      if (schur.info() != Eigen::Success)
        return;
      Vector b_w(working.size());
      for (std::size_t i = 0; i < working.size(); ++i)
        b_w[i] = prob.b[working[i]];
      lambda_w = -schur.solve(Vector(b_w + A_w * u));
      x = -(u + llt.solve(Vector(A_w.transpose() * lambda_w)));
    }
    if (!detail::is_feasible(prob.A, prob.b, is_eq, x, opts_.kkt_tol))
      return;
    for (std::size_t i = 0; i < working.size(); ++i)
      if (!is_eq[working[i]] && lambda_w[i] < -opts_.kkt_tol)
        return;
    sol.x = x;
    sol.lambda.setZero();
    for (std::size_t i = 0; i < working.size(); ++i)
      sol.lambda[working[i]] = lambda_w[i];
  }

  QPOptions opts_;
};

inline EquilibriumSolution solve_potential(const QuadraticPotentialProblem &prob,
                                           double tol = 1e-8,
                                           const WarmStart *warm = nullptr) {
  QPOptions opts;
  opts.kkt_tol = tol;
  return ActiveSetQP(opts).solve(prob, warm);
}

inline WarmStart warm_start_from(const EquilibriumSolution &sol) {
  return WarmStart{sol.x, sol.working_set};
}

/// Per-agent gap between the current utility and the best response with the
/// other agents fixed. Agent utilities of an exact quadratic potential game
/// differ from the potential restricted to x_i only by terms independent of
/// x_i, so the restricted potential is minimized over agent i's own rows.
inline Vector best_response_gap(const AffineGameForm &form,
                                const RationalityVector &theta,
                                const ContextVector &ctx, const Vector &x,
                                double tol = 1e-10) {
  const QuadraticPotentialProblem prob = assemble(form, theta, ctx);
  const int m = form.m, l = form.l, N = form.num_vars();
  if (x.size() != N)
    throw Error(ErrorCode::DimensionMismatch, "strategy profile length");
  Vector gaps(form.n);
  for (int i = 0; i < form.n; ++i) {
    QuadraticPotentialProblem sub;
    sub.n = 1;
    sub.m = m;
    sub.l = l;
    sub.R = prob.R.block(i * m, i * m, m, m);
    Vector others = x;
    others.segment(i * m, m).setZero();
    sub.c = prob.c.segment(i * m, m) + prob.R.middleRows(i * m, m) * others;
    sub.A = prob.A.block(i * l, i * m, l, m);
    sub.b = prob.b.segment(i * l, l) - prob.A.middleRows(i * l, l) * others;
    for (int r = 0; r < l; ++r)
      if (prob.is_eq_row(i * l + r))
        sub.eq_rows.push_back(r);
    EquilibriumSolution best;
    try {
      best = solve_potential(sub, tol);
    } catch (const Error &e) {
      throw Error(e.code(), "agent " + std::to_string(i) + " subproblem: " + e.what());
    }
    const Vector xi = x.segment(i * m, m);
    const double current = sub.potential(xi);
    gaps[i] = std::max(0.0, current - sub.potential(best.x));
  }
  return gaps;
}

} // namespace ratlearn
