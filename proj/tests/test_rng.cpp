#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "gdcn/rng.hpp"

using namespace gdcn;

TEST(Rng, SameKeySameSequence) {
  Rng a(5, 2, 9);
  Rng b(5, 2, 9);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a(), b());
}

TEST(Rng, DifferentStreamsDiffer) {
  Rng a(5, 2, 9);
  Rng b(5, 2, 10);
  Rng c(5, 3, 9);
  int same_b = 0, same_c = 0;
  for (int i = 0; i < 100; ++i) {
    const auto x = a();
    same_b += x == b();
    same_c += x == c();
  }
  EXPECT_EQ(same_b, 0);
  EXPECT_EQ(same_c, 0);
}

TEST(Rng, UniformStaysInsideOpenInterval) {
  Rng r(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Rng, NormalMoments) {
  Rng r(3);
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Rng, BelowIsUniformAndInRange) {
  Rng r(4);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const auto v = r.below(7);
    ASSERT_LT(v, 7u);
    ++counts[v];
  }
  for (int c : counts) EXPECT_NEAR(c, 10000, 500);
}

TEST(Rng, DrivesStdShuffleDeterministically) {
  std::vector<int> a(20), b(20);
  std::iota(a.begin(), a.end(), 0);
  std::iota(b.begin(), b.end(), 0);
  Rng ra(8), rb(8);
  std::shuffle(a.begin(), a.end(), ra);
  std::shuffle(b.begin(), b.end(), rb);
  EXPECT_EQ(a, b);
}
