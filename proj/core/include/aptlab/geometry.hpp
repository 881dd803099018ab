#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace aptlab {

// Ordered set of latent particles; row-major storage, one point per row.
// The row index identifies a particle and is stable for the lifetime of the
// set.
class PointSet {
 public:
  PointSet() = default;
  explicit PointSet(int dim);
  PointSet(int dim, std::vector<double> values);  // values.size() % dim == 0

  int dim() const { return dim_; }
  int size() const {
    return dim_ == 0 ? 0 : static_cast<int>(values_.size()) / dim_;
  }
  bool empty() const { return values_.empty(); }

  std::span<const double> point(int i) const {
    return {values_.data() + static_cast<std::size_t>(i) * dim_,
            static_cast<std::size_t>(dim_)};
  }
  std::span<double> point(int i) {
    return {values_.data() + static_cast<std::size_t>(i) * dim_,
            static_cast<std::size_t>(dim_)};
  }

  void push_back(std::span<const double> p);
  void reserve(int n) { values_.reserve(static_cast<std::size_t>(n) * dim_); }

  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  bool all_finite() const;

 private:
  int dim_ = 0;
  std::vector<double> values_;
};

double euclidean_distance(std::span<const double> a, std::span<const double> b);
double squared_distance(std::span<const double> a, std::span<const double> b);

struct Neighbor {
  int index = 0;
  double distance = 0.0;
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

// Per query: exactly k (index, distance) pairs sorted by (distance, index).
using NeighborList = std::vector<std::vector<Neighbor>>;

enum class IndexBackend { brute_force, kd_tree };

// Immutable snapshot of a reference point set answering exact Euclidean
// k-nearest-neighbor queries. Both backends return identical results,
// including tie resolution: neighbors are ordered by squared distance, then
// by ascending reference index.
class SpatialIndex {
 public:
  SpatialIndex(PointSet points, IndexBackend backend);

  const PointSet& points() const { return points_; }
  IndexBackend backend() const { return backend_; }
  int size() const { return points_.size(); }
  int dim() const { return points_.dim(); }

  // exclude_self skips the reference point whose index equals the query row;
  // it is meaningful when the queries are the reference points in the same
  // order. Duplicate points at other indices stay eligible.
  NeighborList query(const PointSet& queries, int k, bool exclude_self) const;

 private:
  struct KdNode {
    int split_dim = -1;     // -1 marks a leaf
    double split_value = 0.0;
    int left = -1, right = -1;
    int begin = 0, end = 0;  // leaf range into order_
  };

  void build_tree();
  int build_node(int begin, int end);
  void query_point(std::span<const double> q, int k, int skip,
                   std::vector<Neighbor>& heap) const;
  void query_node(int node, std::span<const double> q, int k, int skip,
                  std::vector<Neighbor>& heap) const;
  void scan_range(int begin, int end, std::span<const double> q, int k,
                  int skip, std::vector<Neighbor>& heap) const;

  PointSet points_;
  IndexBackend backend_;
  std::vector<int> order_;
  std::vector<KdNode> nodes_;
  int root_ = -1;
};

SpatialIndex build_index(PointSet points, IndexBackend backend);

NeighborList knn_query(const SpatialIndex& index, const PointSet& queries,
                       int k, bool exclude_self);

// Distances from `query` to its k nearest members of the multiset described
// by distinct reference points with positive multiplicities. A nonnegative
// exclude_one_at removes one copy of that reference before searching (the
// query's own buffer entry). Returned distances are ascending.
std::vector<double> weighted_knn_distances(
    const PointSet& references, std::span<const std::int64_t> multiplicities,
    std::span<const double> query, int k, int exclude_one_at = -1);

}  // namespace aptlab
