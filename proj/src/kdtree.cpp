#include "ploff/kdtree.hpp"

#include "ploff/errors.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace ploff::knn {

double squared_distance(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    sum += diff * diff;
  }
  return sum;
}

KdTree::KdTree(Eigen::MatrixXd points, int leaf_size) : points_(std::move(points)), leaf_size_(leaf_size) {
  if (points_.cols() == 0) throw ValidationError("cannot build a kd-tree over zero points");
  if (points_.cols() > std::numeric_limits<std::uint32_t>::max()) throw ValidationError("too many points");
  if (leaf_size_ < 1) throw ValidationError("leaf size must be >= 1");
  if (!points_.allFinite()) throw NumericalError("kd-tree points contain non-finite values");
  order_.resize(static_cast<std::size_t>(points_.cols()));
  std::iota(order_.begin(), order_.end(), 0U);
  build(0, static_cast<std::uint32_t>(order_.size()));
}

std::int32_t KdTree::build(std::uint32_t begin, std::uint32_t end) {
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back({});
  Node node;
  node.begin = begin;
  node.end = end;
  if (end - begin > static_cast<std::uint32_t>(leaf_size_)) {
    int best_dim = 0;
    double best_spread = -1.0;
    for (int d = 0; d < dim(); ++d) {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (auto i = begin; i < end; ++i) {
        lo = std::min(lo, points_(d, order_[i]));
        hi = std::max(hi, points_(d, order_[i]));
      }
      if (hi - lo > best_spread) {
        best_spread = hi - lo;
        best_dim = d;
      }
    }
    if (best_spread > 0.0) {
      const auto mid = begin + (end - begin) / 2;
      std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                       [&](std::uint32_t a, std::uint32_t b) { return points_(best_dim, a) < points_(best_dim, b); });
      node.split_dim = best_dim;
      node.split = points_(best_dim, order_[mid]);
      node.left = build(begin, mid);
      node.right = build(mid, end);
    }
  }
  nodes_[static_cast<std::size_t>(id)] = node;
  return id;
}

namespace {

void offer(std::vector<Neighbor>& heap, std::size_t k, Neighbor candidate) {
  // max-heap under `closer`: the front is the current worst
  if (heap.size() < k) {
    heap.push_back(candidate);
    std::push_heap(heap.begin(), heap.end(), closer);
  } else if (closer(candidate, heap.front())) {
    std::pop_heap(heap.begin(), heap.end(), closer);
    heap.back() = candidate;
    std::push_heap(heap.begin(), heap.end(), closer);
  }
}

}  // namespace

void KdTree::search(std::int32_t id, const Eigen::Ref<const Eigen::VectorXd>& q, std::size_t k,
                    std::vector<Neighbor>& heap) const {
  const Node& node = nodes_[static_cast<std::size_t>(id)];
  if (node.split_dim < 0) {
    for (auto i = node.begin; i < node.end; ++i)
      offer(heap, k, {squared_distance(q, points_.col(order_[i])), order_[i]});
    return;
  }
  const double diff = q[node.split_dim] - node.split;
  const auto near = diff < 0.0 ? node.left : node.right;
  const auto far = diff < 0.0 ? node.right : node.left;
  search(near, q, k, heap);
  // Points beyond the plane are at least diff^2 away; equality is still
  // visited since a lower index may win the tie.
  if (heap.size() < k || diff * diff <= heap.front().dist2) search(far, q, k, heap);
}

std::vector<Neighbor> KdTree::query(const Eigen::Ref<const Eigen::VectorXd>& q, std::size_t k) const {
  if (q.size() != points_.rows()) throw ValidationError("query dimension does not match the kd-tree");
  k = std::min(k, size());
  std::vector<Neighbor> heap;
  heap.reserve(k);
  if (k > 0) search(0, q, k, heap);
  std::sort_heap(heap.begin(), heap.end(), closer);
  return heap;
}

std::vector<Neighbor> brute_force(const Eigen::MatrixXd& points, const Eigen::Ref<const Eigen::VectorXd>& q,
                                  std::size_t k) {
  if (q.size() != points.rows()) throw ValidationError("query dimension does not match the points");
  std::vector<Neighbor> all(static_cast<std::size_t>(points.cols()));
  for (Eigen::Index i = 0; i < points.cols(); ++i)
    all[static_cast<std::size_t>(i)] = {squared_distance(q, points.col(i)), static_cast<std::uint32_t>(i)};
  k = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), closer);
  all.resize(k);
  return all;
}

}  // namespace ploff::knn
