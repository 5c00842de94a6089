#include <gtest/gtest.h>

#include <map>

#include "test_util.hpp"

using namespace ratlearn;
using testutil::vec;

TEST(Rule1, SingleDegenerateRowGoesEitherWay) {
  std::mt19937_64 rng(1);
  const IndexSet Z{1, 3}, Y{0, 2, 3};
  int left_z = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const Rule1Result r = rule1_partition(Z, Y, rng);
    if (r.W1 == IndexSet{3}) {
      ++left_z;
      EXPECT_EQ(r.partition.Z, IndexSet{1});
      EXPECT_EQ(r.partition.Y, (IndexSet{0, 2, 3}));
    } else {
      EXPECT_EQ(r.W2, IndexSet{3});
      EXPECT_EQ(r.partition.Z, (IndexSet{1, 3}));
      EXPECT_EQ(r.partition.Y, (IndexSet{0, 2}));
    }
  }
  // binomial(10000, 1/2): sd = 50
  EXPECT_NEAR(left_z, draws / 2, 150);
}

TEST(Rule1, EmptyDegenerateSetIsAnError) {
  std::mt19937_64 rng(1);
  EXPECT_THROW(rule1_partition(IndexSet{0}, IndexSet{1}, rng), Error);
}

TEST(Rule1, TwoRowsGiveFourEquallyLikelyOutcomes) {
  std::mt19937_64 rng(2);
  std::map<IndexSet, int> counts;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i)
    ++counts[rule1_partition(IndexSet{1, 2}, IndexSet{1, 2}, rng).W1];
  ASSERT_EQ(counts.size(), 4u);
  // each count ~ binomial(10000, 1/4): sd = 43.3
  for (const auto &[w1, c] : counts)
    EXPECT_NEAR(c, draws / 4, 3 * 43.3);
}

TEST(Rule1, AlwaysYieldsDisjointCoveringPartition) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    std::mt19937_64 rng(seed);
    const IndexSet Z{0, 2, 3, 5}, Y{1, 2, 3, 4, 5};
    const Rule1Result r = rule1_partition(Z, Y, rng);
    EXPECT_TRUE(set_intersection(r.partition.Z, r.partition.Y).empty());
    EXPECT_EQ(set_union(r.partition.Z, r.partition.Y), (IndexSet{0, 1, 2, 3, 4, 5}));
  }
}

TEST(Rule1, ReproducibleWithSeed) {
  std::mt19937_64 a(77), b(77);
  for (int i = 0; i < 100; ++i)
    EXPECT_EQ(rule1_partition(IndexSet{0, 1, 2, 3}, IndexSet{0, 1, 2, 3}, a).W1,
              rule1_partition(IndexSet{0, 1, 2, 3}, IndexSet{0, 1, 2, 3}, b).W1);
}

TEST(Rule2, SmallRadiusStaysClose) {
  std::mt19937_64 rng(3);
  const Vector th = vec({1, -2, 3});
  for (int i = 0; i < 100; ++i)
    EXPECT_LE((rule2_perturb(th, 1e-9, rng) - th).norm(), 1e-9 * (1 + 1e-12));
}

TEST(Rule2, OneDimensionalMeanIsCentre) {
  std::mt19937_64 rng(4);
  const int draws = 10000;
  double sum = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double v = rule2_perturb(vec({5}), 0.5, rng)[0];
    EXPECT_LE(std::abs(v - 5.0), 0.5);
    sum += v;
  }
  // uniform on [4.5, 5.5]: sd of mean = 1/sqrt(12) / 100
  EXPECT_NEAR(sum / draws, 5.0, 3 * 0.2887 / 100);
}

TEST(Rule2, PlanarRadiusFollowsBallLaw) {
  std::mt19937_64 rng(5);
  const int draws = 10000;
  std::vector<double> r;
  for (int i = 0; i < draws; ++i)
    r.push_back((rule2_perturb(vec({0, 0}), 2.0, rng)).norm() / 2.0);
  std::sort(r.begin(), r.end());
  double d = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double cdf = r[i] * r[i];
    d = std::max({d, std::abs(cdf - double(i) / draws), std::abs(cdf - double(i + 1) / draws)});
  }
  // Kolmogorov-Smirnov critical value at 1%: 1.628 / sqrt(n)
  EXPECT_LT(d, 1.628 / std::sqrt(double(draws)));
}

TEST(Rule2, RejectsNonPositiveRadius) {
  std::mt19937_64 rng(6);
  EXPECT_THROW(rule2_perturb(vec({0}), 0.0, rng), Error);
}

TEST(Rule2, DefaultRadiusScalesWithTheta) {
  EXPECT_DOUBLE_EQ(default_epsilon(vec({3, 4})), 6e-3);
}

TEST(SplitDegenerate, ImpliedRowsMoveToY) {
  // x0 = x1 (eq row 0), x0 >= 0 (row 1), x1 >= 0 (row 2): at x = 0 rows 1 and
  // 2 are tight and one of them is implied by the other and the eq row
  Matrix A(3, 2);
  A << 1, -1,
      -1, 0,
       0, -1;
  const auto prob = testutil::problem(Matrix::Identity(2, 2), vec({1, 1}), A, vec({0, 0, 0}), {0});
  const EquilibriumSolution s = solve_potential(prob);
  ASSERT_LT(s.x.norm(), 1e-12);
  const DegeneracySplit split = split_degenerate(prob, s.Z, s.Y);
  EXPECT_EQ(split.implied.size(), 1u);
  EXPECT_TRUE(split.W.empty());
  EXPECT_NO_THROW(solve_given_Z(build_S(prob, split.partition.Z, split.partition.Y)));
}

TEST(SplitDegenerate, GenuineDegeneracyRemains) {
  const auto prob = testutil::problem(Matrix::Identity(1, 1), vec({0}),
                                      Matrix::Constant(1, 1, -1.0), vec({0}));
  const EquilibriumSolution s = solve_potential(prob);
  const DegeneracySplit split = split_degenerate(prob, s.Z, s.Y);
  EXPECT_EQ(split.W, IndexSet{0});
  EXPECT_TRUE(split.implied.empty());
}
