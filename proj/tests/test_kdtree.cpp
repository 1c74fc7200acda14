#include "ploff/errors.hpp"
#include "ploff/kdtree.hpp"
#include "ploff/rng.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <utility>

using namespace ploff;
using namespace ploff::knn;

namespace {

// Full scan and sort by (distance, index).
std::vector<std::pair<double, std::uint32_t>> scan(const Eigen::MatrixXd& pts, const Eigen::VectorXd& q, std::size_t k) {
  std::vector<std::pair<double, std::uint32_t>> all;
  for (Eigen::Index j = 0; j < pts.cols(); ++j) all.emplace_back(squared_distance(pts.col(j), q), static_cast<std::uint32_t>(j));
  std::sort(all.begin(), all.end());
  all.resize(std::min(k, all.size()));
  return all;
}

Eigen::MatrixXd random_points(Rng& rng, int dim, int n, bool lattice) {
  Eigen::MatrixXd pts(dim, n);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> grid(0, 3);
  for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = lattice ? grid(rng) : u(rng);
  return pts;
}

void expect_same(const std::vector<Neighbor>& got, const std::vector<std::pair<double, std::uint32_t>>& want) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    EXPECT_EQ(got[i].index, want[i].second) << "rank " << i;
    EXPECT_EQ(got[i].dist2, want[i].first) << "rank " << i;
  }
}

}  // namespace

TEST(KdTree, SquaredDistance) {
  Eigen::Vector3d a(1, 2, 3), b(4, 6, 3);
  EXPECT_EQ(squared_distance(a, b), 25.0);
}

TEST(KdTree, MatchesScanOnRandomInstances) {
  Rng rng(123);
  std::uniform_int_distribution<int> size(1, 2000);
  for (int trial = 0; trial < 60; ++trial) {
    const int dim = std::array{2, 8, 32}[trial % 3];
    const bool lattice = trial % 2 == 0;
    const int n = size(rng);
    auto pts = random_points(rng, dim, n, lattice);
    KdTree tree(pts, 1 + trial % 20);
    for (int qi = 0; qi < 5; ++qi) {
      Eigen::VectorXd q = qi == 0 ? Eigen::VectorXd(pts.col(n / 2)) : Eigen::VectorXd(random_points(rng, dim, 1, lattice).col(0));
      std::size_t k = std::array<std::size_t, 4>{1, 5, 50, 3000}[static_cast<std::size_t>(qi % 4)];
      expect_same(tree.query(q, k), scan(pts, q, k));
      expect_same(brute_force(pts, q, k), scan(pts, q, k));
    }
  }
}

TEST(KdTree, DuplicatesResolveToLowestIndex) {
  Eigen::MatrixXd pts(2, 6);
  pts << 0, 1, 0, 1, 0, 5,
         0, 1, 0, 1, 0, 5;
  KdTree tree(pts, 1);
  auto r = tree.query(Eigen::Vector2d(0, 0), 4);
  ASSERT_EQ(r.size(), 4u);
  EXPECT_EQ(r[0].index, 0u);
  EXPECT_EQ(r[1].index, 2u);
  EXPECT_EQ(r[2].index, 4u);
  EXPECT_EQ(r[3].index, 1u);
  EXPECT_EQ(r[0].dist2, 0.0);
}

TEST(KdTree, KLargerThanSizeReturnsAll) {
  Rng rng(1);
  auto pts = random_points(rng, 3, 10, false);
  KdTree tree(pts);
  EXPECT_EQ(tree.query(pts.col(0), 100).size(), 10u);
  EXPECT_TRUE(tree.query(pts.col(0), 0).empty());
}

TEST(KdTree, RejectsEmpty) { EXPECT_THROW(KdTree(Eigen::MatrixXd(3, 0)), ValidationError); }
