#pragma once

// Degenerate active sets (rows both tight and with zero dual) and the two ways
// of recovering a usable gradient from them.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "ratlearn/diffgrad.hpp"
#include "ratlearn/errors.hpp"
#include "ratlearn/linalg.hpp"
#include "ratlearn/model.hpp"

namespace ratlearn {

enum class DegeneracyRule { Rule1, Rule2 };

inline const char *to_string(DegeneracyRule rule) {
  return rule == DegeneracyRule::Rule1 ? "rule1" : "rule2";
}

struct DegeneracyEvent {
  long iteration = 0;
  int datapoint = 0;
  IndexSet W;
  DegeneracyRule rule_used = DegeneracyRule::Rule1;
  IndexSet W1; // removed from Z
  IndexSet W2; // removed from Y
  Vector theta_tilde; // Rule 2 sample (empty for Rule 1)
  int tries = 0;
  bool fell_back = false;           // Rule 2 exhausted its tries
  bool projection_altered = false;  // Rule 2 sample left the box
};

struct Rule1Result {
  ActivePartition partition;
  IndexSet W1;
  IndexSet W2;
};

/// Each element of W = Z n Y goes to W1 (leaves Z) or W2 (leaves Y) with
/// probability 1/2, independently.
template <class Rng>
Rule1Result rule1_partition(const IndexSet &Z, const IndexSet &Y, Rng &rng) {
  const IndexSet W = set_intersection(Z, Y);
  if (W.empty())
    throw Error(ErrorCode::InvalidArgument,
                "rule1_partition called without degenerate rows");
  std::uniform_int_distribution<int> coin(0, 1);
  Rule1Result out;
  for (int w : W) {
    if (coin(rng) == 0)
      out.W1.push_back(w);
    else
      out.W2.push_back(w);
  }
  out.partition.Z = set_difference(Z, out.W1);
  out.partition.Y = set_difference(Y, out.W2);
  return out;
}

/// Uniform sample from the Euclidean ball of radius epsilon around theta.
template <class Rng>
Vector rule2_perturb(const Vector &theta, double epsilon, Rng &rng) {
  if (!(epsilon > 0.0))
    throw Error(ErrorCode::InvalidArgument, "epsilon must be positive");
  const int p = static_cast<int>(theta.size());
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vector dir(p);
  double norm = 0.0;
  do {
    for (int j = 0; j < p; ++j)
      dir[j] = normal(rng);
    norm = dir.norm();
  } while (norm == 0.0);
  const double radius = epsilon * std::pow(unif(rng), 1.0 / p);
  return theta + (radius / norm) * dir;
}

inline double default_epsilon(const Vector &theta) {
  return 1e-3 * (1.0 + theta.norm());
}

/// Keeps a linearly independent subset of the Z rows (eq_rows first, then
/// inequality rows in index order) and moves the remaining inequality rows of
/// Z to Y. Dependent rows are implied by the kept ones because A and b do not
/// vary with theta, so the equilibrium x is unchanged; only the (non-unique)
/// multipliers are pinned to zero on the moved rows.
inline ActivePartition drop_dependent_rows(const QuadraticPotentialProblem &prob,
                                           const ActivePartition &part) {
  std::vector<int> order;
  for (int z : part.Z)
    if (prob.is_eq_row(z))
      order.push_back(z);
  for (int z : part.Z)
    if (!prob.is_eq_row(z))
      order.push_back(z);
  const RowSelection sel = select_independent_rows(prob.A, order);
  ActivePartition out = part;
  IndexSet moved;
  for (int r : sel.dependent)
    if (!prob.is_eq_row(r))
      moved.push_back(r);
  std::sort(moved.begin(), moved.end());
  out.Z = set_difference(part.Z, moved);
  out.Y = set_union(part.Y, moved);
  return out;
}

/// Separates rows that only look degenerate because they are linearly implied
/// by other tight rows (eq_rows, then rows with a positive dual, then the
/// remaining tight rows, in index order) from genuinely degenerate ones. Implied
/// rows go to Y; `W` is what is left of Z n Y afterwards.
struct DegeneracySplit {
  ActivePartition partition;
  IndexSet W;
  IndexSet implied;
};

inline DegeneracySplit split_degenerate(const QuadraticPotentialProblem &prob,
                                        const IndexSet &Z, const IndexSet &Y) {
  const IndexSet W = set_intersection(Z, Y);
  std::vector<int> order;
  for (int z : Z)
    if (prob.is_eq_row(z))
      order.push_back(z);
  for (int z : Z)
    if (!prob.is_eq_row(z) && !contains(W, z))
      order.push_back(z);
  for (int w : W)
    order.push_back(w);
  const RowSelection sel = select_independent_rows(prob.A, order);
  DegeneracySplit out;
  for (int r : sel.dependent)
    if (!prob.is_eq_row(r))
      out.implied.push_back(r);
  std::sort(out.implied.begin(), out.implied.end());
  out.partition.Z = set_difference(Z, out.implied);
  out.partition.Y = set_union(Y, out.implied);
  out.W = set_intersection(out.partition.Z, out.partition.Y);
  return out;
}

} // namespace ratlearn
