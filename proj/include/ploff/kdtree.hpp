#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace ploff::knn {

struct Neighbor {
  double dist2 = 0.0;  // squared Euclidean distance
  std::uint32_t index = 0;
};

// Ordering used everywhere for exact results: distance, then lowest index.
inline bool closer(const Neighbor& a, const Neighbor& b) {
  return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index);
}

// Squared distance accumulated in coordinate order. The tree and the
// brute-force scan share it so ties resolve identically.
double squared_distance(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b);

// Exact k-nearest-neighbor search over the columns of a point matrix.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(Eigen::MatrixXd points, int leaf_size = 16);

  std::size_t size() const { return static_cast<std::size_t>(points_.cols()); }
  int dim() const { return static_cast<int>(points_.rows()); }
  const Eigen::MatrixXd& points() const { return points_; }

  // min(k, size()) neighbors sorted by `closer`.
  std::vector<Neighbor> query(const Eigen::Ref<const Eigen::VectorXd>& q, std::size_t k) const;

 private:
  struct Node {
    int split_dim = -1;  // -1 for leaves
    double split = 0.0;
    std::uint32_t begin = 0;  // range into order_ (leaves)
    std::uint32_t end = 0;
    std::int32_t left = -1;
    std::int32_t right = -1;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end);
  void search(std::int32_t node, const Eigen::Ref<const Eigen::VectorXd>& q, std::size_t k,
              std::vector<Neighbor>& heap) const;

  Eigen::MatrixXd points_;
  int leaf_size_ = 16;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

std::vector<Neighbor> brute_force(const Eigen::MatrixXd& points, const Eigen::Ref<const Eigen::VectorXd>& q,
                                  std::size_t k);

}  // namespace ploff::knn
