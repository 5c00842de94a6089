#pragma once

// Independent oracles. Nothing here touches the adjoint gradient path; the
// only shared machinery is the equilibrium solver in qp.hpp (and the
// enumeration oracle does not even use that).

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/LU>

#include "ratlearn/errors.hpp"
#include "ratlearn/model.hpp"
#include "ratlearn/qp.hpp"

namespace ratlearn {

struct FiniteDiffResult {
  Vector grad;              // NaN on unstable components
  std::vector<bool> stable; // tight set unchanged on [theta - h e_j, theta + h e_j]
};

/// Central differences of |x(theta) - xbar|^2 with x from full equilibrium
/// solves.
inline FiniteDiffResult finite_diff_grad(const AffineGameForm &form,
                                         const RationalityVector &theta,
                                         const Datapoint &dp, double h = 1e-5,
                                         double kkt_tol = 1e-10) {
  if (!(h > 0.0))
    throw Error(ErrorCode::InvalidArgument, "h must be positive");
  auto solve = [&](const Vector &th) {
    RationalityVector t = theta;
    t.theta = th;
    return solve_potential(assemble(form, t, dp.mu), kkt_tol);
  };
  const EquilibriumSolution centre = solve(theta.theta);
  FiniteDiffResult out;
  out.grad = Vector::Constant(form.p, std::numeric_limits<double>::quiet_NaN());
  out.stable.assign(form.p, false);
  for (int j = 0; j < form.p; ++j) {
    Vector plus = theta.theta, minus = theta.theta;
    plus[j] += h;
    minus[j] -= h;
    const EquilibriumSolution sp = solve(plus);
    const EquilibriumSolution sm = solve(minus);
    if (sp.Z != centre.Z || sm.Z != centre.Z)
      continue;
    out.stable[j] = true;
    out.grad[j] = ((sp.x - dp.xbar).squaredNorm() - (sm.x - dp.xbar).squaredNorm()) /
                  (2.0 * h);
  }
  return out;
}

/// Largest componentwise discrepancy over the stable components, relative to
/// the largest stable oracle component (floored at `floor`). Returns NaN when
/// no component is stable.
inline double gradient_relative_error(const Vector &grad,
                                      const FiniteDiffResult &fd,
                                      double floor = 1e-8) {
  double diff = 0.0, scale = 0.0;
  bool any = false;
  for (int j = 0; j < grad.size(); ++j) {
    if (!fd.stable[j])
      continue;
    any = true;
    diff = std::max(diff, std::abs(grad[j] - fd.grad[j]));
    scale = std::max(scale, std::abs(fd.grad[j]));
  }
  if (!any)
    return std::numeric_limits<double>::quiet_NaN();
  return diff / std::max(scale, floor);
}

/// Exhaustive search over the active sets of the inequality rows (eq_rows are
/// always active). Every candidate KKT system is solved with a full-pivoting
/// LU; the potential-minimizing primal- and dual-feasible candidate wins.
inline EquilibriumSolution enumerate_active_sets_qp(const QuadraticPotentialProblem &prob,
                                                    double tol = 1e-9) {
  const IndexSet ineq = prob.inequality_rows();
  if (ineq.size() > 12)
    throw Error(ErrorCode::InvalidArgument,
                "enumeration limited to 12 inequality rows");
  const int N = prob.num_vars();
  const int M = prob.num_rows();
  const unsigned subsets = 1u << ineq.size();

  std::optional<EquilibriumSolution> best;
  double best_value = std::numeric_limits<double>::infinity();
  for (unsigned mask = 0; mask < subsets; ++mask) {
    std::vector<int> active(prob.eq_rows.begin(), prob.eq_rows.end());
    for (std::size_t i = 0; i < ineq.size(); ++i)
      if (mask & (1u << i))
        active.push_back(ineq[i]);
    std::sort(active.begin(), active.end());
    const int a = static_cast<int>(active.size());
    Matrix K = Matrix::Zero(N + a, N + a);
    Vector rhs(N + a);
    K.topLeftCorner(N, N) = prob.R;
    rhs.head(N) = -prob.c;
    for (int i = 0; i < a; ++i) {
      K.block(N + i, 0, 1, N) = prob.A.row(active[i]);
      K.block(0, N + i, N, 1) = prob.A.row(active[i]).transpose();
      rhs[N + i] = prob.b[active[i]];
    }
    Eigen::FullPivLU<Matrix> lu(K);
    if (!lu.isInvertible())
      continue;
    const Vector z = lu.solve(rhs);
    const Vector x = z.head(N);
    Vector lambda = Vector::Zero(M);
    for (int i = 0; i < a; ++i)
      lambda[active[i]] = z[N + i];

    bool ok = true;
    const Vector slack = prob.b - prob.A * x;
    for (int r : ineq) {
      if (slack[r] < -tol * (1.0 + std::abs(prob.b[r])) || lambda[r] < -tol) {
        ok = false;
        break;
      }
    }
    if (!ok)
      continue;
    const double value = prob.potential(x);
    if (value < best_value) {
      best_value = value;
      EquilibriumSolution sol;
      sol.x = x;
      sol.lambda = lambda;
      sol.working_set = active;
      best = sol;
    }
  }
  if (!best)
    throw Error(ErrorCode::Infeasible, "no KKT-consistent active set");
  best->residuals = kkt_residuals(prob, best->x, best->lambda);
  const ActiveSets sets = extract_active_sets(prob, *best, 1e-7);
  best->Z = sets.Z;
  best->Y = sets.Y;
  best->W = sets.W;
  return *best;
}

struct GridAxis {
  double lower = 0.0;
  double upper = 1.0;
  int count = 1;
};

struct GridSpec {
  std::vector<GridAxis> axes; // one per parameter
  int random_budget = 2000;   // used when p > 3
  std::uint64_t seed = 0;
};

struct GridResult {
  Vector theta_best;
  double loss_best = std::numeric_limits<double>::infinity();
  long evaluated = 0;
};

/// Best full-equilibrium training loss over a dense grid (p <= 3) or a
/// uniform random search over the same ranges (p > 3).
inline GridResult grid_search_theta(const AffineGameForm &form,
                                    const std::vector<Datapoint> &points,
                                    const GridSpec &grid) {
  if (static_cast<int>(grid.axes.size()) != form.p)
    throw Error(ErrorCode::DimensionMismatch, "one grid axis per parameter");
  if (points.empty())
    throw Error(ErrorCode::InvalidArgument, "no datapoints");
  std::vector<std::optional<WarmStart>> warm(points.size());
  const ActiveSetQP qp;
  auto evaluate = [&](const Vector &th) {
    const RationalityVector theta = form.make_theta(th);
    double total = 0.0;
    for (std::size_t k = 0; k < points.size(); ++k) {
      const EquilibriumSolution sol =
          qp.solve(assemble(form, theta, points[k].mu), warm[k] ? &*warm[k] : nullptr);
      warm[k] = warm_start_from(sol);
      total += (sol.x - points[k].xbar).squaredNorm();
    }
    return total / static_cast<double>(points.size());
  };
  auto coord = [](const GridAxis &ax, int i) {
    return ax.count <= 1 ? ax.lower
                         : ax.lower + (ax.upper - ax.lower) * i / (ax.count - 1);
  };

  GridResult out;
  auto consider = [&](const Vector &th) {
    const double l = evaluate(th);
    ++out.evaluated;
    if (l < out.loss_best) {
      out.loss_best = l;
      out.theta_best = th;
    }
  };
  if (form.p <= 3) {
    std::vector<int> idx(form.p, 0);
    while (true) {
      Vector th(form.p);
      for (int j = 0; j < form.p; ++j)
        th[j] = coord(grid.axes[j], idx[j]);
      consider(th);
      int j = 0;
      while (j < form.p && ++idx[j] >= std::max(1, grid.axes[j].count))
        idx[j++] = 0;
      if (j == form.p)
        break;
    }
  } else {
    std::mt19937_64 rng(grid.seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int s = 0; s < grid.random_budget; ++s) {
      Vector th(form.p);
      for (int j = 0; j < form.p; ++j)
        th[j] = grid.axes[j].lower +
                (grid.axes[j].upper - grid.axes[j].lower) * unif(rng);
      consider(th);
    }
  }
  return out;
}

} // namespace ratlearn
