#include <algorithm>
#include <numeric>

#include <gtest/gtest.h>

#include "cnnrecover/matching.hpp"
#include "cnnrecover/random.hpp"

using namespace cnnrecover;

TEST(Assignment, MatchesExhaustiveSearch) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const int n = 1 + static_cast<int>(seed % 7);
    Rng rng = Rng::substream(seed, Stream::init);
    Eigen::MatrixXd cost(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) cost(i, j) = rng.uniform() * 10.0;
    const auto assign = solve_assignment(cost);
    double got = 0.0;
    for (int i = 0; i < n; ++i) got += cost(i, assign[i]);
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = INFINITY;
    do {
      double c = 0.0;
      for (int i = 0; i < n; ++i) c += cost(i, perm[i]);
      best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));
    EXPECT_NEAR(got, best, 1e-12) << "n = " << n;
    std::vector<int> sorted = assign;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < n; ++i) EXPECT_EQ(sorted[i], i);
  }
}

TEST(Matching, RecoversPermutedColumns) {
  Rng rng = Rng::substream(1, Stream::init);
  const Eigen::MatrixXd truth = rng.normal_matrix(5, 4);
  Eigen::MatrixXd est(5, 4);
  const int perm[4] = {2, 0, 3, 1};
  for (int j = 0; j < 4; ++j) est.col(perm[j]) = truth.col(j);
  const Matching m = min_matching(est, truth);
  EXPECT_NEAR(m.error, 0.0, 1e-15);
  for (int j = 0; j < 4; ++j) EXPECT_EQ(m.permutation[j], perm[j]);
  EXPECT_EQ(m.aligned, truth);
}

TEST(Matching, RelativeFrobeniusError) {
  Eigen::MatrixXd truth = Eigen::MatrixXd::Identity(2, 2);
  Eigen::MatrixXd est(2, 2);
  est << 0, 1.1, 1, 0;
  EXPECT_NEAR(min_matching_error(est, truth), 0.1 / std::sqrt(2.0), 1e-15);
  EXPECT_THROW(min_matching(Eigen::MatrixXd::Zero(2, 3), truth), ConfigError);
}
