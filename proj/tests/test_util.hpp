#pragma once

#include "ratlearn.hpp"

namespace testutil {

using namespace ratlearn;

inline Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<int>(v.size()));
  int i = 0;
  for (double x : v)
    out[i++] = x;
  return out;
}

/// One agent, one variable: 1/2 r x^2 - theta x, optionally with x >= 0.
inline AffineGameForm scalar_game(bool nonnegative, double r = 1.0) {
  AffineGameForm f;
  f.name = "scalar";
  f.n = 1;
  f.m = 1;
  f.l = nonnegative ? 1 : 0;
  f.p = 1;
  f.k = 0;
  f.R0 = Matrix::Constant(1, 1, r);
  f.R = {Matrix::Zero(1, 1)};
  f.C = Matrix::Constant(1, 1, -1.0);
  f.c0_const = Vector::Zero(1);
  f.c0_mu = Matrix::Zero(1, 0);
  f.A = nonnegative ? Matrix::Constant(1, 1, -1.0) : Matrix::Zero(0, 1);
  f.b_const = Vector::Zero(f.l);
  f.b_mu = Matrix::Zero(f.l, 0);
  return f;
}

inline QuadraticPotentialProblem problem(const Matrix &R, const Vector &c,
                                         const Matrix &A, const Vector &b,
                                         IndexSet eq = {}) {
  QuadraticPotentialProblem p;
  p.R = R;
  p.c = c;
  p.A = A;
  p.b = b;
  p.eq_rows = std::move(eq);
  p.n = 1;
  p.m = static_cast<int>(c.size());
  p.l = static_cast<int>(b.size());
  return p;
}

inline Datapoint point(const Vector &xbar, const Vector &mu) {
  return Datapoint{xbar, ContextVector{mu}};
}

inline Matrix random_spd(int n, std::mt19937_64 &rng, double shift = 0.5) {
  std::normal_distribution<double> N(0.0, 1.0);
  Matrix G(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      G(i, j) = N(rng);
  return G * G.transpose() / n + shift * Matrix::Identity(n, n);
}

} // namespace testutil
