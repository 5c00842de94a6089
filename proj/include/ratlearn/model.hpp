#pragma once

// Parametrized potential games in affine form and the concrete quadratic
// potential problem they induce for given (theta, mu).
//
//   Phi(x; theta, mu) = 1/2 x' R x + c' x
//   R(theta)     = R0 + sum_j theta_j R_j
//   c(theta, mu) = c0(mu) + C theta,        c0(mu) = c0_const + c0_mu mu
//   A x <= b(mu) (rows in eq_rows hold with equality), b(mu) = b_const + b_mu mu
//
// Variables are stored agent-major (agent i owns x[i*m, (i+1)*m)) and
// constraint rows likewise (agent i owns rows [i*l, (i+1)*l)).

#include <optional>
#include <string>
#include <vector>

#include "ratlearn/errors.hpp"
#include "ratlearn/linalg.hpp"

namespace ratlearn {

/// Per-coordinate bounds describing the parameter set. Infinite entries mean
/// "unbounded on that side".
struct Box {
  Vector lower;
  Vector upper;

  static Box unbounded(int p) {
    return Box{Vector::Constant(p, -kInf), Vector::Constant(p, kInf)};
  }
};

struct RationalityVector {
  Vector theta;
  std::optional<Box> box;

  int size() const { return static_cast<int>(theta.size()); }
};

struct ContextVector {
  Vector mu;
};

/// One observation: the observed strategy profile and its context.
struct Datapoint {
  Vector xbar;
  ContextVector mu;
};

struct AffineGameForm {
  std::string name = "custom";
  int n = 0; // agents
  int m = 0; // variables per agent
  int l = 0; // constraint rows per agent
  int p = 0; // rationality parameters
  int k = 0; // context parameters

  Matrix R0;
  std::vector<Matrix> R; // p symmetric PSD maps
  Matrix C;              // (nm x p)
  Vector c0_const;
  Matrix c0_mu; // (nm x k)
  Matrix A;     // (ln x nm)
  Vector b_const;
  Matrix b_mu; // (ln x k)
  IndexSet eq_rows;

  std::optional<Box> theta_box;

  int num_vars() const { return n * m; }
  int num_rows() const { return n * l; }

  bool is_eq_row(int r) const { return contains(eq_rows, r); }

  IndexSet inequality_rows() const {
    IndexSet out;
    for (int r = 0; r < num_rows(); ++r)
      if (!is_eq_row(r))
        out.push_back(r);
    return out;
  }

  Vector c0(const ContextVector &ctx) const { return c0_const + c0_mu * ctx.mu; }
  Vector b(const ContextVector &ctx) const { return b_const + b_mu * ctx.mu; }

  /// Throws DimensionMismatch naming the first inconsistent field.
  void validate() const {
    const int N = num_vars(), M = num_rows();
    auto fail = [](const std::string &field, long rows, long cols, long er,
                   long ec) {
      throw Error(ErrorCode::DimensionMismatch,
                  field + " is " + std::to_string(rows) + "x" +
                      std::to_string(cols) + ", expected " + std::to_string(er) +
                      "x" + std::to_string(ec));
    };
    auto check = [&](const std::string &field, const Matrix &mat, long er,
                     long ec) {
      if (mat.rows() != er || mat.cols() != ec)
        fail(field, mat.rows(), mat.cols(), er, ec);
    };
    if (n < 1 || m < 1 || l < 0 || p < 1 || k < 0)
      throw Error(ErrorCode::DimensionMismatch,
                  "n, m, p must be >= 1 and l, k >= 0");
    check("R0", R0, N, N);
    if (static_cast<int>(R.size()) != p)
      throw Error(ErrorCode::DimensionMismatch,
                  "R has " + std::to_string(R.size()) + " maps, expected p=" +
                      std::to_string(p));
    for (int j = 0; j < p; ++j)
      check("R[" + std::to_string(j) + "]", R[j], N, N);
    check("C", C, N, p);
    if (c0_const.size() != N)
      fail("c0_const", c0_const.size(), 1, N, 1);
    check("c0_mu", c0_mu, N, k);
    check("A", A, M, N);
    if (b_const.size() != M)
      fail("b_const", b_const.size(), 1, M, 1);
    check("b_mu", b_mu, M, k);
    for (std::size_t i = 0; i < eq_rows.size(); ++i) {
      if (eq_rows[i] < 0 || eq_rows[i] >= M)
        throw Error(ErrorCode::DimensionMismatch,
                    "eq_rows entry " + std::to_string(eq_rows[i]) +
                        " out of range");
      if (i > 0 && eq_rows[i] <= eq_rows[i - 1])
        throw Error(ErrorCode::DimensionMismatch,
                    "eq_rows must be strictly increasing");
    }
    if (theta_box) {
      if (theta_box->lower.size() != p)
        fail("theta_box.lower", theta_box->lower.size(), 1, p, 1);
      if (theta_box->upper.size() != p)
        fail("theta_box.upper", theta_box->upper.size(), 1, p, 1);
    }
  }

  RationalityVector make_theta(const Vector &theta) const {
    return RationalityVector{theta, theta_box};
  }
};

/// The concrete potential problem: minimize 1/2 x'Rx + c'x s.t. Ax <= b
/// (rows in eq_rows with equality).
struct QuadraticPotentialProblem {
  Matrix R;
  Vector c;
  Matrix A;
  Vector b;
  IndexSet eq_rows;
  int n = 1;
  int m = 0;
  int l = 0;

  int num_vars() const { return static_cast<int>(c.size()); }
  int num_rows() const { return static_cast<int>(b.size()); }
  bool is_eq_row(int r) const { return contains(eq_rows, r); }

  IndexSet inequality_rows() const {
    IndexSet out;
    for (int r = 0; r < num_rows(); ++r)
      if (!is_eq_row(r))
        out.push_back(r);
    return out;
  }

  double potential(const Vector &x) const { return 0.5 * x.dot(R * x) + c.dot(x); }
  Vector gradient(const Vector &x) const { return R * x + c; }
};

inline QuadraticPotentialProblem assemble(const AffineGameForm &form,
                                          const RationalityVector &theta,
                                          const ContextVector &ctx) {
  if (theta.size() != form.p)
    throw Error(ErrorCode::DimensionMismatch,
                "theta has length " + std::to_string(theta.size()) +
                    ", expected p=" + std::to_string(form.p));
  if (ctx.mu.size() != form.k)
    throw Error(ErrorCode::DimensionMismatch,
                "mu has length " + std::to_string(ctx.mu.size()) +
                    ", expected k=" + std::to_string(form.k));
  QuadraticPotentialProblem out;
  out.R = form.R0;
  for (int j = 0; j < form.p; ++j)
    if (theta.theta[j] != 0.0)
      out.R += theta.theta[j] * form.R[j];
  out.c = form.c0(ctx) + form.C * theta.theta;
  out.A = form.A;
  out.b = form.b(ctx);
  out.eq_rows = form.eq_rows;
  out.n = form.n;
  out.m = form.m;
  out.l = form.l;
  return out;
}

/// Constant partial derivatives of (R, c) with respect to theta_j.
/// A and b do not depend on theta, so their partials are zero.
struct Partials {
  Matrix dR;
  Vector dc;
};

inline Partials partials(const AffineGameForm &form, int j,
                         const ContextVector & /*ctx*/) {
  if (j < 0 || j >= form.p)
    throw Error(ErrorCode::InvalidArgument,
                "parameter index " + std::to_string(j) + " out of range [0," +
                    std::to_string(form.p) + ")");
  return Partials{form.R[j], form.C.col(j)};
}

/// Coordinate-wise clamp onto the box (identity when there is no box).
inline RationalityVector project_theta(const RationalityVector &theta) {
  if (!theta.box)
    return theta;
  RationalityVector out = theta;
  out.theta = theta.theta.cwiseMax(theta.box->lower).cwiseMin(theta.box->upper);
  return out;
}

inline bool projection_clips(const RationalityVector &theta) {
  if (!theta.box)
    return false;
  return ((theta.theta.array() < theta.box->lower.array()) ||
          (theta.theta.array() > theta.box->upper.array()))
      .any();
}

} // namespace ratlearn
