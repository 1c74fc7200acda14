#include "ploff/parallel.hpp"
#include "ploff/stats.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <vector>

using namespace ploff;

TEST(Stats, MeanAndPopulationStd) {
  std::vector<double> xs{2, 4, 4, 4, 5, 5, 7, 9};
  EXPECT_DOUBLE_EQ(mean(xs), 5.0);
  EXPECT_DOUBLE_EQ(stddev(xs), 2.0);
}

TEST(Stats, AverageRanksWithTies) {
  std::vector<double> xs{10, 20, 20, 5, 30};
  EXPECT_EQ(average_ranks(xs), (std::vector<double>{2, 3.5, 3.5, 1, 5}));
}

TEST(Stats, SpearmanOfMonotoneMapIsOne) {
  std::vector<double> xs, ys, zs;
  for (int i = 0; i < 50; ++i) {
    xs.push_back(i * 0.37 - 4);
    ys.push_back(std::exp(xs.back()));
    zs.push_back(-ys.back());
  }
  EXPECT_NEAR(spearman(xs, ys), 1.0, 1e-12);
  EXPECT_NEAR(spearman(xs, zs), -1.0, 1e-12);
  EXPECT_LT(pearson(xs, ys), 0.99);
}

TEST(Stats, SpearmanMatchesRankDifferenceFormula) {
  // Without ties: rho = 1 - 6 sum d^2 / (n (n^2 - 1)).
  std::vector<double> xs{1.2, 3.4, 0.5, 8.8, 2.2, 7.1, 4.0};
  std::vector<double> ys{2.0, 1.0, 0.3, 9.0, 5.5, 4.4, 6.1};
  auto rx = average_ranks(xs), ry = average_ranks(ys);
  double d2 = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) d2 += (rx[i] - ry[i]) * (rx[i] - ry[i]);
  double n = static_cast<double>(xs.size());
  EXPECT_NEAR(spearman(xs, ys), 1.0 - 6.0 * d2 / (n * (n * n - 1)), 1e-12);
}

TEST(Stats, PearsonKnownValue) {
  std::vector<double> xs{1, 2, 3, 4, 5}, ys{2, 4, 5, 4, 5};
  EXPECT_NEAR(pearson(xs, ys), 0.7745966692414834, 1e-12);
}

TEST(Stats, LinearQuantile) {
  std::vector<double> xs{4, 1, 3, 2, 5};
  EXPECT_DOUBLE_EQ(quantile(xs, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile(xs, 0.5), 3.0);
  EXPECT_DOUBLE_EQ(quantile(xs, 1.0), 5.0);
  EXPECT_DOUBLE_EQ(quantile(xs, 0.1), 1.4);
}

TEST(Parallel, VisitsEveryIndexOnce) {
  for (std::size_t n : {0u, 1u, 7u, 1000u}) {
    std::vector<std::atomic<int>> hits(n);
    parallel_for(n, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) hits[i]++;
    });
    for (auto& h : hits) EXPECT_EQ(h.load(), 1);
  }
}

TEST(Parallel, ThreadCapFromEnvironment) {
  setenv("PLOFF_THREADS", "1", 1);
  EXPECT_EQ(worker_count(), 1u);
  setenv("PLOFF_THREADS", "3", 1);
  EXPECT_EQ(worker_count(), 3u);
  unsetenv("PLOFF_THREADS");
  EXPECT_GE(worker_count(), 1u);
}

TEST(Parallel, PropagatesExceptions) {
  EXPECT_THROW(parallel_for(100, [](std::size_t begin, std::size_t) {
                 if (begin == 0) throw std::runtime_error("boom");
               }),
               std::runtime_error);
}
