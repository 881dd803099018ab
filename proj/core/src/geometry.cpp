#include "aptlab/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

namespace aptlab {
namespace {

constexpr int kLeafSize = 16;

// Heap ordering: the "worst" candidate (largest squared distance, ties by
// largest index) sits at the front so it can be evicted first.
struct WorseFirst {
  bool operator()(const Neighbor& a, const Neighbor& b) const {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.index < b.index;
  }
};

bool better_than(double d2, int index, const Neighbor& worst) {
  if (d2 != worst.distance) return d2 < worst.distance;
  return index < worst.index;
}

}  // namespace

PointSet::PointSet(int dim) : dim_(dim) {
  if (dim < 1) throw std::invalid_argument("PointSet: dim must be >= 1");
}

PointSet::PointSet(int dim, std::vector<double> values)
    : dim_(dim), values_(std::move(values)) {
  if (dim < 1) throw std::invalid_argument("PointSet: dim must be >= 1");
  if (values_.size() % static_cast<std::size_t>(dim) != 0)
    throw std::invalid_argument("PointSet: value count not a multiple of dim");
}

void PointSet::push_back(std::span<const double> p) {
  if (static_cast<int>(p.size()) != dim_)
    throw std::invalid_argument("PointSet::push_back: dimension mismatch");
  values_.insert(values_.end(), p.begin(), p.end());
}

bool PointSet::all_finite() const {
  for (double v : values_)
    if (!std::isfinite(v)) return false;
  return true;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw std::invalid_argument("squared_distance: dimension mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

double euclidean_distance(std::span<const double> a,
                          std::span<const double> b) {
  return std::sqrt(squared_distance(a, b));
}

SpatialIndex::SpatialIndex(PointSet points, IndexBackend backend)
    : points_(std::move(points)), backend_(backend) {
  if (points_.empty())
    throw std::invalid_argument("SpatialIndex: point set must be nonempty");
  if (!points_.all_finite())
    throw std::invalid_argument("SpatialIndex: points must be finite");
  if (backend_ == IndexBackend::kd_tree) build_tree();
}

void SpatialIndex::build_tree() {
  const int n = points_.size();
  order_.resize(n);
  for (int i = 0; i < n; ++i) order_[i] = i;
  nodes_.reserve(static_cast<std::size_t>(2 * n / kLeafSize + 4));
  root_ = build_node(0, n);
}

int SpatialIndex::build_node(int begin, int end) {
  const int node_id = static_cast<int>(nodes_.size());
  nodes_.push_back({});
  if (end - begin <= kLeafSize) {
    nodes_[node_id].begin = begin;
    nodes_[node_id].end = end;
    return node_id;
  }

  // Split on the dimension of maximum spread; lowest dimension wins ties.
  const int dim = points_.dim();
  int split_dim = 0;
  double best_spread = -1.0;
  for (int d = 0; d < dim; ++d) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (int i = begin; i < end; ++i) {
      const double v = points_.point(order_[i])[d];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double spread = hi - lo;
    if (spread > best_spread) {
      best_spread = spread;
      split_dim = d;
    }
  }

  const int mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid,
                   order_.begin() + end, [&](int a, int b) {
                     const double va = points_.point(a)[split_dim];
                     const double vb = points_.point(b)[split_dim];
                     if (va != vb) return va < vb;
                     return a < b;  // total order keeps the build deterministic
                   });

  nodes_[node_id].split_dim = split_dim;
  nodes_[node_id].split_value = points_.point(order_[mid])[split_dim];
  const int left = build_node(begin, mid);
  const int right = build_node(mid, end);
  nodes_[node_id].left = left;
  nodes_[node_id].right = right;
  return node_id;
}

void SpatialIndex::scan_range(int begin, int end, std::span<const double> q,
                              int k, int skip,
                              std::vector<Neighbor>& heap) const {
  for (int i = begin; i < end; ++i) {
    const int ref = order_.empty() ? i : order_[i];
    if (ref == skip) continue;
    const double d2 = squared_distance(q, points_.point(ref));
    if (static_cast<int>(heap.size()) < k) {
      heap.push_back({ref, d2});
      std::push_heap(heap.begin(), heap.end(), WorseFirst{});
    } else if (better_than(d2, ref, heap.front())) {
      std::pop_heap(heap.begin(), heap.end(), WorseFirst{});
      heap.back() = {ref, d2};
      std::push_heap(heap.begin(), heap.end(), WorseFirst{});
    }
  }
}

void SpatialIndex::query_node(int node, std::span<const double> q, int k,
                              int skip, std::vector<Neighbor>& heap) const {
  const KdNode& nd = nodes_[node];
  if (nd.split_dim < 0) {
    scan_range(nd.begin, nd.end, q, k, skip, heap);
    return;
  }
  const double delta = q[nd.split_dim] - nd.split_value;
  const int near = delta < 0.0 ? nd.left : nd.right;
  const int far = delta < 0.0 ? nd.right : nd.left;
  query_node(near, q, k, skip, heap);
  // The far side may still hold an equal-distance, lower-index candidate, so
  // the plane test must not prune on equality.
  if (static_cast<int>(heap.size()) < k ||
      delta * delta <= heap.front().distance) {
    query_node(far, q, k, skip, heap);
  }
}

void SpatialIndex::query_point(std::span<const double> q, int k, int skip,
                               std::vector<Neighbor>& heap) const {
  heap.clear();
  if (backend_ == IndexBackend::brute_force) {
    scan_range(0, points_.size(), q, k, skip, heap);
  } else {
    query_node(root_, q, k, skip, heap);
  }
}

NeighborList SpatialIndex::query(const PointSet& queries, int k,
                                 bool exclude_self) const {
  if (queries.dim() != points_.dim())
    throw std::invalid_argument("knn_query: dimension mismatch");
  const int available = size() - (exclude_self ? 1 : 0);
  if (k < 1 || k > available)
    throw std::invalid_argument("knn_query: k out of range");

  NeighborList result(queries.size());
  std::vector<Neighbor> heap;
  heap.reserve(k + 1);
  for (int i = 0; i < queries.size(); ++i) {
    query_point(queries.point(i), k, exclude_self ? i : -1, heap);
    std::vector<Neighbor>& out = result[i];
    out.assign(heap.begin(), heap.end());
    std::sort(out.begin(), out.end(), [](const Neighbor& a, const Neighbor& b) {
      if (a.distance != b.distance) return a.distance < b.distance;
      return a.index < b.index;
    });
    for (Neighbor& nb : out) nb.distance = std::sqrt(nb.distance);
  }
  return result;
}

SpatialIndex build_index(PointSet points, IndexBackend backend) {
  return SpatialIndex(std::move(points), backend);
}

NeighborList knn_query(const SpatialIndex& index, const PointSet& queries,
                       int k, bool exclude_self) {
  return index.query(queries, k, exclude_self);
}

std::vector<double> weighted_knn_distances(
    const PointSet& references, std::span<const std::int64_t> multiplicities,
    std::span<const double> query, int k, int exclude_one_at) {
  if (references.size() != static_cast<int>(multiplicities.size()))
    throw std::invalid_argument(
        "weighted_knn_distances: one multiplicity per reference required");
  if (static_cast<int>(query.size()) != references.dim())
    throw std::invalid_argument("weighted_knn_distances: dimension mismatch");
  if (k < 1) throw std::invalid_argument("weighted_knn_distances: k must be >= 1");

  std::vector<std::pair<double, int>> order;  // (squared distance, index)
  order.reserve(references.size());
  std::int64_t total = 0;
  for (int i = 0; i < references.size(); ++i) {
    std::int64_t count = multiplicities[i];
    if (count < 0)
      throw std::invalid_argument("weighted_knn_distances: negative multiplicity");
    if (i == exclude_one_at) {
      if (count == 0)
        throw std::invalid_argument(
            "weighted_knn_distances: cannot exclude from empty group");
      --count;
    }
    if (count == 0) continue;
    total += count;
    order.emplace_back(squared_distance(query, references.point(i)), i);
  }
  if (total < k)
    throw std::invalid_argument("weighted_knn_distances: k exceeds multiset size");

  std::sort(order.begin(), order.end());
  std::vector<double> result;
  result.reserve(k);
  for (const auto& [d2, idx] : order) {
    std::int64_t count = multiplicities[idx] - (idx == exclude_one_at ? 1 : 0);
    const double d = std::sqrt(d2);
    while (count-- > 0 && static_cast<int>(result.size()) < k) result.push_back(d);
    if (static_cast<int>(result.size()) == k) break;
  }
  return result;
}

}  // namespace aptlab
