#pragma once

// Equilibria for a fixed active set and the implicit gradient of the squared
// distance to an observation with respect to theta.
//
// For a partition of the constraint rows into Z (tight; eq_rows always here)
// and Y (zero dual) the equilibrium (x, lambda) solves S z = rhs with
//
//       [  R      A'  ]        [ -c   ]
//   S = [ -A_Z    0   ],  rhs = [ -b_Z ]
//       [  0     I_Y  ]        [  0   ]
//
// The gradient of |x - xbar|^2 follows from one adjoint solve
//   w = S^-T (2 (x - xbar), 0),   g_j = -w' (dS/dtheta_j z - drhs/dtheta_j)
// where only the R block of S and the -c block of rhs depend on theta.

#include <string>
#include <vector>

#include "ratlearn/errors.hpp"
#include "ratlearn/linalg.hpp"
#include "ratlearn/model.hpp"

namespace ratlearn {

struct ActivePartition {
  IndexSet Z;
  IndexSet Y;
};

struct AdjointSystem {
  Matrix S;
  Vector rhs;
  IndexSet Z;
  IndexSet Y;
  int num_vars = 0;
};

struct KKTPoint {
  Vector x;
  Vector lambda;
};

/// Partition whose Z is `Z` (plus eq_rows) and whose Y is every other row.
inline ActivePartition complete_partition(const QuadraticPotentialProblem &prob,
                                          const IndexSet &Z) {
  ActivePartition part;
  part.Z = set_union(Z, prob.eq_rows);
  for (int r = 0; r < prob.num_rows(); ++r)
    if (!contains(part.Z, r))
      part.Y.push_back(r);
  return part;
}

inline AdjointSystem build_S(const QuadraticPotentialProblem &prob,
                             const IndexSet &Z, const IndexSet &Y) {
  const int N = prob.num_vars();
  const int M = prob.num_rows();
  std::vector<int> seen(M, 0);
  for (int r : Z) {
    if (r < 0 || r >= M)
      throw Error(ErrorCode::InvalidArgument, "Z index out of range");
    ++seen[r];
  }
  for (int r : Y) {
    if (r < 0 || r >= M)
      throw Error(ErrorCode::InvalidArgument, "Y index out of range");
    if (prob.is_eq_row(r))
      throw Error(ErrorCode::InvalidArgument,
                  "equality row " + std::to_string(r) + " placed in Y");
    ++seen[r];
  }
  for (int r = 0; r < M; ++r) {
    if (seen[r] > 1)
      throw Error(ErrorCode::InvalidArgument,
                  "row " + std::to_string(r) + " is in both Z and Y");
    if (seen[r] == 0)
      throw Error(ErrorCode::InvalidArgument,
                  "row " + std::to_string(r) + " is in neither Z nor Y");
  }

  AdjointSystem sys;
  sys.num_vars = N;
  sys.Z = Z;
  sys.Y = Y;
  std::sort(sys.Z.begin(), sys.Z.end());
  std::sort(sys.Y.begin(), sys.Y.end());
  sys.S = Matrix::Zero(N + M, N + M);
  sys.rhs = Vector::Zero(N + M);
  sys.S.topLeftCorner(N, N) = prob.R;
  sys.S.topRightCorner(N, M) = prob.A.transpose();
  sys.rhs.head(N) = -prob.c;
  int row = N;
  for (int z : sys.Z) {
    sys.S.block(row, 0, 1, N) = -prob.A.row(z);
    sys.rhs[row] = -prob.b[z];
    ++row;
  }
  for (int y : sys.Y) {
    sys.S(row, N + y) = 1.0;
    ++row;
  }
  return sys;
}

inline KKTPoint solve_given_Z(const AdjointSystem &sys) {
  const DenseLU lu(sys.S);
  if (lu.singular())
    throw Error(ErrorCode::SingularSystem,
                "active-set system is singular (rcond " +
                    std::to_string(lu.rcond()) + ")");
  const Vector z = lu.solve(sys.rhs);
  const int N = sys.num_vars;
  return KKTPoint{z.head(N), z.tail(z.size() - N)};
}

struct LossGradient {
  double loss = 0.0;
  Vector grad;
  KKTPoint point;
};

/// Squared distance of the equilibrium for the given partition to `dp.xbar`
/// and its exact gradient in theta.
inline LossGradient loss_and_gradient(const AffineGameForm &form,
                                      const RationalityVector &theta,
                                      const ActivePartition &part,
                                      const Datapoint &dp) {
  const QuadraticPotentialProblem prob = assemble(form, theta, dp.mu);
  const AdjointSystem sys = build_S(prob, part.Z, part.Y);
  const DenseLU lu(sys.S);
  if (lu.singular())
    throw Error(ErrorCode::SingularSystem,
                "active-set system is singular (rcond " +
                    std::to_string(lu.rcond()) + ")");
  const int N = sys.num_vars;
  const Vector z = lu.solve(sys.rhs);

  LossGradient out;
  out.point = KKTPoint{z.head(N), z.tail(z.size() - N)};
  const Vector diff = out.point.x - dp.xbar;
  out.loss = diff.squaredNorm();

  Vector seed = Vector::Zero(z.size());
  seed.head(N) = 2.0 * diff;
  const Vector w = lu.solve_transpose(seed);
  const Vector w_x = w.head(N);
  out.grad.resize(form.p);
  for (int j = 0; j < form.p; ++j) {
    const Partials d = partials(form, j, dp.mu);
    out.grad[j] = -w_x.dot(d.dR * out.point.x + d.dc);
  }
  return out;
}

inline Vector grad_theta(const AffineGameForm &form,
                         const RationalityVector &theta,
                         const ActivePartition &part, const Datapoint &dp) {
  return loss_and_gradient(form, theta, part, dp).grad;
}

/// Mean squared distance over the batch, each datapoint with its own
/// partition. SingularSystem errors carry the datapoint index.
inline double loss(const AffineGameForm &form, const RationalityVector &theta,
                   const std::vector<ActivePartition> &parts,
                   const std::vector<Datapoint> &batch) {
  if (parts.size() != batch.size())
    throw Error(ErrorCode::DimensionMismatch,
                "one partition per datapoint required");
  if (batch.empty())
    throw Error(ErrorCode::InvalidArgument, "empty batch");
  double total = 0.0;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const QuadraticPotentialProblem prob = assemble(form, theta, batch[k].mu);
    KKTPoint pt;
    try {
      pt = solve_given_Z(build_S(prob, parts[k].Z, parts[k].Y));
    } catch (const Error &e) {
      throw Error(e.code(), "datapoint " + std::to_string(k) + ": " + e.what());
    }
    total += (pt.x - batch[k].xbar).squaredNorm();
  }
  return total / static_cast<double>(batch.size());
}

} // namespace ratlearn
