#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "ratlearn/errors.hpp"

namespace ratlearn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Sorted list of constraint-row indices.
using IndexSet = std::vector<int>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

inline bool contains(const IndexSet &set, int idx) {
  return std::binary_search(set.begin(), set.end(), idx);
}

inline IndexSet set_intersection(const IndexSet &a, const IndexSet &b) {
  IndexSet out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                        std::back_inserter(out));
  return out;
}

inline IndexSet set_difference(const IndexSet &a, const IndexSet &b) {
  IndexSet out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(),
                      std::back_inserter(out));
  return out;
}

inline IndexSet set_union(const IndexSet &a, const IndexSet &b) {
  IndexSet out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(),
                 std::back_inserter(out));
  return out;
}

inline double inf_norm(const Vector &v) {
  return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>();
}

/// Greedy selection of linearly independent rows of `A`, visited in the order
/// given by `candidates`. A row is kept when its component orthogonal to the
/// rows kept so far exceeds `rel_tol` times its own norm. Rejected rows are
/// reported in `dependent` (in visiting order).
struct RowSelection {
  std::vector<int> kept;
  std::vector<int> dependent;
};

inline RowSelection select_independent_rows(const Matrix &A,
                                            const std::vector<int> &candidates,
                                            double rel_tol = 1e-9) {
  RowSelection out;
  std::vector<Vector> basis;
  for (int r : candidates) {
    Vector v = A.row(r).transpose();
    const double norm = v.norm();
    if (norm == 0.0) {
      out.dependent.push_back(r);
      continue;
    }
    // two passes of modified Gram-Schmidt
    for (int pass = 0; pass < 2; ++pass)
      for (const auto &q : basis)
        v -= q.dot(v) * q;
    const double rest = v.norm();
    if (rest > rel_tol * norm) {
      basis.push_back(v / rest);
      out.kept.push_back(r);
    } else {
      out.dependent.push_back(r);
    }
  }
  return out;
}

/// Dense LU with partial pivoting, a reciprocal-condition estimate and one
/// step of iterative refinement per solve.
class DenseLU {
public:
  explicit DenseLU(const Matrix &M, double rcond_threshold = 1e-12)
      : M_(M), lu_(M), lut_(M.transpose()) {
    rcond_ = M.rows() == 0 ? 1.0 : lu_.rcond();
    if (!std::isfinite(rcond_))
      rcond_ = 0.0;
    // the estimator can miss an exactly zero pivot
    if (M.rows() > 0) {
      const Vector d = lu_.matrixLU().diagonal().cwiseAbs();
      rcond_ = std::min(rcond_, d.minCoeff() / std::max(d.maxCoeff(), 1e-300));
    }
    singular_ = rcond_ < rcond_threshold;
  }

  bool singular() const { return singular_; }
  double rcond() const { return rcond_; }

  Vector solve(const Vector &rhs) const {
    Vector x = lu_.solve(rhs);
    x += lu_.solve(Vector(rhs - M_ * x));
    return x;
  }

  Vector solve_transpose(const Vector &rhs) const {
    Vector x = lut_.solve(rhs);
    x += lut_.solve(Vector(rhs - M_.transpose() * x));
    return x;
  }

private:
  Matrix M_;
  Eigen::PartialPivLU<Matrix> lu_;
  Eigen::PartialPivLU<Matrix> lut_;
  double rcond_ = 0.0;
  bool singular_ = true;
};

} // namespace ratlearn
