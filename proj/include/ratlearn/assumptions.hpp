#pragma once

#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ratlearn/model.hpp"
#include "ratlearn/qp.hpp"

namespace ratlearn {

struct AssumptionReport {
  struct PerContext {
    double r0_min_eig = 0.0;            // of the effective base matrix
    std::vector<double> ri_min_eig;     // one per parameter
    bool licq = true;
    int dependent_row = -1;             // first dependent active row found
    std::vector<int> spanning_rows;     // rows it is a combination of
  };

  std::vector<PerContext> contexts;
  bool r0_positive_definite = true;
  bool ri_psd = true;
  bool licq = true;
  bool bounded = true;
  std::vector<int> unbounded_vars; // variables lacking a lower or upper row
  std::vector<std::string> messages;

  /// Conditions needed for a unique equilibrium and an invertible adjoint
  /// system along the whole parameter box.
  bool well_posed() const { return r0_positive_definite && ri_psd; }
  bool all_passed() const { return well_posed() && licq && bounded; }

  std::string summary() const {
    std::ostringstream os;
    os << "R0 positive definite: " << (r0_positive_definite ? "yes" : "no")
       << "; Ri PSD: " << (ri_psd ? "yes" : "no")
       << "; LICQ spot check: " << (licq ? "pass" : "fail")
       << "; bounded: " << (bounded ? "yes" : "no");
    for (const auto &msg : messages)
      os << "\n  - " << msg;
    return os.str();
  }
};

struct AssumptionOptions {
  double tol = 1e-9;
  int licq_samples = 3;
  std::uint64_t seed = 12345;
};

namespace detail {

inline double min_eigenvalue(const Matrix &S) {
  if (S.rows() == 0)
    return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (S + S.transpose()),
                                           Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

} // namespace detail

/// Positive definiteness is checked on R0 + sum_j lo_j R_j where lo is the
/// finite lower corner of the parameter box (the base matrix of R(theta) over
/// the box); without a box this is R0 itself.
inline AssumptionReport check_assumptions(const AffineGameForm &form,
                                          const std::vector<ContextVector> &mus,
                                          const AssumptionOptions &opts = {}) {
  form.validate();
  if (mus.empty())
    throw Error(ErrorCode::InvalidArgument, "check_assumptions needs at least one context");
  AssumptionReport report;
  const int N = form.num_vars();

  Matrix base = form.R0;
  for (int j = 0; j < form.p; ++j) {
    const double lo = form.theta_box ? form.theta_box->lower[j] : -kInf;
    const bool nonzero = form.R[j].lpNorm<Eigen::Infinity>() > 0.0;
    if (!nonzero)
      continue;
    if (std::isfinite(lo)) {
      base += lo * form.R[j];
      if (lo < 0.0)
        report.messages.push_back("theta_" + std::to_string(j) +
                                  " may be negative while R_" +
                                  std::to_string(j) + " is nonzero");
    }
  }

  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t ci = 0; ci < mus.size(); ++ci) {
    AssumptionReport::PerContext pc;
    pc.r0_min_eig = detail::min_eigenvalue(base);
    for (int j = 0; j < form.p; ++j)
      pc.ri_min_eig.push_back(detail::min_eigenvalue(form.R[j]));

    // LICQ spot check at projections of random points onto the feasible set.
    QuadraticPotentialProblem proj;
    proj.R = Matrix::Identity(N, N);
    proj.A = form.A;
    proj.b = form.b(mus[ci]);
    proj.eq_rows = form.eq_rows;
    proj.n = form.n;
    proj.m = form.m;
    proj.l = form.l;
    const double scale = 1.0 + inf_norm(proj.b);
    for (int s = 0; s < opts.licq_samples && pc.licq; ++s) {
      Vector target(N);
      for (int i = 0; i < N; ++i)
        target[i] = scale * normal(rng);
      proj.c = -target;
      EquilibriumSolution sol;
      try {
        sol = solve_potential(proj);
      } catch (const Error &e) {
        report.messages.push_back("context " + std::to_string(ci) +
                                  ": feasibility sample failed (" + e.what() + ")");
        pc.licq = false;
        break;
      }
      const Vector slack = proj.b - proj.A * sol.x;
      std::vector<int> active;
      for (int r = 0; r < proj.num_rows(); ++r)
        if (form.is_eq_row(r))
          active.push_back(r);
      for (int r = 0; r < proj.num_rows(); ++r)
        if (!form.is_eq_row(r) &&
            std::abs(slack[r]) <= 1e-7 * (1.0 + std::abs(proj.b[r])))
          active.push_back(r);
      const RowSelection sel = select_independent_rows(proj.A, active);
      if (!sel.dependent.empty()) {
        pc.licq = false;
        pc.dependent_row = sel.dependent.front();
        const Matrix basis = detail::rows_of(proj.A, sel.kept);
        const Vector coef = basis.transpose()
                                .colPivHouseholderQr()
                                .solve(Vector(proj.A.row(pc.dependent_row).transpose()));
        for (int i = 0; i < coef.size(); ++i)
          if (std::abs(coef[i]) > 1e-8)
            pc.spanning_rows.push_back(sel.kept[i]);
      }
    }

    if (pc.r0_min_eig <= opts.tol && report.r0_positive_definite) {
      report.r0_positive_definite = false;
      report.messages.push_back("R0 not positive definite (min eigenvalue " +
                                std::to_string(pc.r0_min_eig) + ")");
    }
    for (int j = 0; j < form.p; ++j)
      if (pc.ri_min_eig[j] < -opts.tol && report.ri_psd) {
        report.ri_psd = false;
        report.messages.push_back("R_" + std::to_string(j) +
                                  " not positive semidefinite");
      }
    if (!pc.licq && report.licq) {
      report.licq = false;
      std::string msg = "LICQ fails at context " + std::to_string(ci) +
                        ": row " + std::to_string(pc.dependent_row) +
                        " depends on rows";
      for (int r : pc.spanning_rows)
        msg += " " + std::to_string(r);
      report.messages.push_back(msg);
    }
    report.contexts.push_back(std::move(pc));
  }

  for (int v = 0; v < N; ++v) {
    bool below = false, above = false;
    for (int r = 0; r < form.num_rows(); ++r) {
      const double a = form.A(r, v);
      if (a == 0.0)
        continue;
      if (form.is_eq_row(r)) {
        below = above = true;
      } else if (a > 0.0) {
        above = true;
      } else {
        below = true;
      }
    }
    if (!(below && above))
      report.unbounded_vars.push_back(v);
  }
  if (!report.unbounded_vars.empty()) {
    report.bounded = false;
    report.messages.push_back(std::to_string(report.unbounded_vars.size()) +
                              " variable(s) lack a bounding row on one side");
  }
  return report;
}

} // namespace ratlearn
