#include "nebp/hungarian.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

namespace nebp {
namespace {

// Minimum over every injective map from the smaller side to the larger.
double brute_force(const MatrixXd& c) {
  const bool flip = c.rows() > c.cols();
  const MatrixXd m = flip ? MatrixXd(c.transpose()) : c;
  std::vector<Index> cols(static_cast<std::size_t>(m.cols()));
  std::iota(cols.begin(), cols.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (Index r = 0; r < m.rows(); ++r) s += m(r, cols[static_cast<std::size_t>(r)]);
    best = std::min(best, s);
  } while (std::next_permutation(cols.begin(), cols.end()));
  return best;
}

TEST(Hungarian, Scalar) {
  MatrixXd c(1, 1);
  c << 5;
  const auto a = hungarian<double>(c);
  EXPECT_EQ(a.row_to_col[0], 0);
  EXPECT_EQ(a.cost, 5.0);
}

TEST(Hungarian, TwoByTwo) {
  MatrixXd c(2, 2);
  c << 1, 2, 2, 4;
  const auto a = hungarian<double>(c);
  EXPECT_EQ(a.row_to_col[0], 1);
  EXPECT_EQ(a.row_to_col[1], 0);
  EXPECT_EQ(a.cost, 4.0);
}

TEST(Hungarian, Empty) {
  EXPECT_TRUE(hungarian<double>(MatrixXd(0, 3)).row_to_col.empty());
  const auto a = hungarian<double>(MatrixXd(2, 0));
  EXPECT_EQ(a.row_to_col, (std::vector<Index>{-1, -1}));
}

TEST(Hungarian, NonFiniteRejected) {
  MatrixXd c = MatrixXd::Ones(2, 2);
  c(0, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(hungarian<double>(c), ValidationError);
}

TEST(Hungarian, RectangularAssignsSmallerSide) {
  MatrixXd c(3, 2);
  c << 5, 9, 1, 8, 7, 2;
  const auto a = hungarian<double>(c);
  EXPECT_EQ(a.row_to_col, (std::vector<Index>{-1, 0, 1}));
  EXPECT_EQ(a.cost, 3.0);
}

TEST(Hungarian, MatchesBruteForce) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-5.0, 10.0);
  std::uniform_int_distribution<int> small(0, 3);
  for (int t = 0; t < 1000; ++t) {
    const Index n = 1 + t % 6;
    const Index m = 1 + (t / 6) % 6;
    MatrixXd c(n, m);
    for (Index k = 0; k < c.size(); ++k) c(k) = t % 3 == 0 ? small(rng) : u(rng);
    const auto a = hungarian<double>(c);
    EXPECT_NEAR(a.cost, brute_force(c), 1e-9);
    std::vector<Index> used;
    for (Index col : a.row_to_col) {
      if (col >= 0) used.push_back(col);
    }
    EXPECT_EQ(static_cast<Index>(used.size()), std::min(n, m));
    std::sort(used.begin(), used.end());
    EXPECT_EQ(std::adjacent_find(used.begin(), used.end()), used.end());
  }
}

TEST(Hungarian, DeterministicTies) {
  const MatrixXd c = MatrixXd::Ones(4, 4);
  EXPECT_EQ(hungarian<double>(c).row_to_col, hungarian<double>(c).row_to_col);
}

}  // namespace
}  // namespace nebp
