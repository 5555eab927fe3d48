#include <cmath>
#include <set>
#include <thread>
#include <vector>

#include <gtest/gtest.h>

#include "cnnrecover/parallel.hpp"
#include "cnnrecover/random.hpp"

using cnnrecover::Rng;
using cnnrecover::Stream;

TEST(Rng, SubstreamsAreReproducible) {
  Rng a = Rng::substream(42, Stream::data, 7);
  Rng b = Rng::substream(42, Stream::data, 7);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, DistinctKeysGiveDistinctStreams) {
  std::set<std::uint64_t> firsts;
  for (std::uint64_t seed : {0, 1, 2})
    for (Stream s : {Stream::ground_truth, Stream::data, Stream::init, Stream::decomposition, Stream::partition,
                     Stream::population, Stream::perturbation})
      for (std::uint64_t idx : {0, 1, 2}) firsts.insert(Rng::substream(seed, s, idx).next_u64());
  EXPECT_EQ(firsts.size(), 3u * 7u * 3u);
}

TEST(Rng, UniformInOpenUnitInterval) {
  Rng r = Rng::substream(1, Stream::init);
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Rng, NormalMoments) {
  Rng r = Rng::substream(3, Stream::population);
  const int n = 200000;
  double s1 = 0, s2 = 0, s4 = 0;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s1 += z;
    s2 += z * z;
    s4 += z * z * z * z;
  }
  EXPECT_NEAR(s1 / n, 0.0, 5 * std::sqrt(1.0 / n));
  EXPECT_NEAR(s2 / n, 1.0, 5 * std::sqrt(2.0 / n));
  EXPECT_NEAR(s4 / n, 3.0, 5 * std::sqrt(96.0 / n));
}

TEST(Rng, BelowIsUniformOnRange) {
  Rng r = Rng::substream(5, Stream::partition);
  std::vector<int> counts(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) {
    const auto v = r.below(7);
    ASSERT_LT(v, 7u);
    ++counts[v];
  }
  for (int c : counts) EXPECT_NEAR(c, n / 7.0, 5 * std::sqrt(n / 7.0));
}

TEST(ChunkedReduce, IndependentOfThreadCount) {
  auto run = [](int threads) {
    cnnrecover::set_worker_threads(threads);
    struct Sum {
      double v = 0.0;
      Sum& operator+=(const Sum& o) {
        v += o.v;
        return *this;
      }
    };
    return cnnrecover::chunked_reduce(
               100003, [] { return Sum{}; },
               [](std::size_t b, std::size_t e, Sum& acc) {
                 for (std::size_t i = b; i < e; ++i) acc.v += 1.0 / (1.0 + static_cast<double>(i) * 0.37);
               })
        .v;
  };
  const double one = run(1);
  EXPECT_EQ(one, run(2));
  EXPECT_EQ(one, run(5));
  cnnrecover::set_worker_threads(1);
}
