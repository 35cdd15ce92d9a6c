#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cstddef>
#include <limits>
#include <vector>

namespace affkp {

// Minimal 3-d kd-tree over an external point array. Supports exact k-NN and
// nearest queries; enough for normal estimation and metric distance fields.
class KdTree3 {
 public:
  KdTree3() = default;

  explicit KdTree3(const std::vector<Eigen::Vector3d>& points) { build(points); }

  void build(const std::vector<Eigen::Vector3d>& points) {
    pts_ = &points;
    order_.resize(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) order_[i] = i;
    nodes_.clear();
    nodes_.reserve(points.size());
    if (!points.empty()) root_ = build_range(0, points.size(), 0);
  }

  std::size_t size() const { return pts_ ? pts_->size() : 0; }

  //  Indices of the k nearest points (including exact duplicates of the
  //  query), ordered nearest first.
  std::vector<std::size_t> knn(const Eigen::Vector3d& q, std::size_t k) const {
    Heap heap(k);
    if (root_ >= 0) search(root_, q, heap);
    return heap.sorted_indices();
  }

  std::size_t nearest(const Eigen::Vector3d& q) const {
    auto r = knn(q, 1);
    return r.empty() ? std::size_t(-1) : r[0];
  }

  double nearest_distance(const Eigen::Vector3d& q) const {
    Heap heap(1);
    if (root_ >= 0) search(root_, q, heap);
    return heap.entries.empty() ? std::numeric_limits<double>::infinity()
                                : std::sqrt(heap.entries[0].d2);
  }

 private:
  struct Node {
    std::size_t begin, end;  // leaf range in order_
    int left = -1, right = -1;
    int axis = 0;
    double split = 0.0;
  };

  struct Entry {
    double d2;
    std::size_t index;
  };

  // Fixed-capacity max-heap on squared distance.
  struct Heap {
    explicit Heap(std::size_t cap) : capacity(cap) { entries.reserve(cap); }
    std::size_t capacity;
    std::vector<Entry> entries;

    double worst() const {
      return entries.size() < capacity ? std::numeric_limits<double>::infinity()
                                       : entries.front().d2;
    }
    void push(double d2, std::size_t idx) {
      if (entries.size() < capacity) {
        entries.push_back({d2, idx});
        std::push_heap(entries.begin(), entries.end(), cmp);
      } else if (d2 < entries.front().d2) {
        std::pop_heap(entries.begin(), entries.end(), cmp);
        entries.back() = {d2, idx};
        std::push_heap(entries.begin(), entries.end(), cmp);
      }
    }
    std::vector<std::size_t> sorted_indices() {
      std::vector<Entry> tmp = entries;
      std::sort(tmp.begin(), tmp.end(), [](const Entry& a, const Entry& b) {
        return a.d2 < b.d2 || (a.d2 == b.d2 && a.index < b.index);
      });
      std::vector<std::size_t> out(tmp.size());
      for (std::size_t i = 0; i < tmp.size(); ++i) out[i] = tmp[i].index;
      return out;
    }
    static bool cmp(const Entry& a, const Entry& b) { return a.d2 < b.d2; }
  };

  static constexpr std::size_t kLeafSize = 16;

  int build_range(std::size_t begin, std::size_t end, int depth) {
    Node node;
    node.begin = begin;
    node.end = end;
    int id = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    if (end - begin <= kLeafSize) return id;

    int axis = depth % 3;
    std::size_t mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::size_t a, std::size_t b) {
                       return (*pts_)[a][axis] < (*pts_)[b][axis];
                     });
    double split = (*pts_)[order_[mid]][axis];
    int left = build_range(begin, mid, depth + 1);
    int right = build_range(mid, end, depth + 1);
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  void search(int id, const Eigen::Vector3d& q, Heap& heap) const {
    const Node& node = nodes_[id];
    if (node.left < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        std::size_t p = order_[i];
        heap.push(((*pts_)[p] - q).squaredNorm(), p);
      }
      return;
    }
    double diff = q[node.axis] - node.split;
    int near = diff < 0 ? node.left : node.right;
    int far = diff < 0 ? node.right : node.left;
    search(near, q, heap);
    if (diff * diff < heap.worst()) search(far, q, heap);
  }

  const std::vector<Eigen::Vector3d>* pts_ = nullptr;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace affkp
