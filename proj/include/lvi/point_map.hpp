#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "lvi/manifold.hpp"

namespace lvi {

struct MapPoint {
  Vec3 p;
  float intensity = 0.0f;
  std::uint32_t id = 0;  // insertion order, breaks distance ties
};

/// Voxel-hashed world point store. Each voxel keeps the first `voxel_cap`
/// points inserted into it and ignores the rest.
class PointMap {
 public:
  explicit PointMap(double voxel_size = 0.5, size_t voxel_cap = 32);

  /// Returns false when the voxel was already full.
  bool insert(const Vec3& p, float intensity = 0.0f);
  void clear();

  size_t size() const { return count_; }
  bool empty() const { return count_ == 0; }
  double voxel_size() const { return voxel_; }

  /// True when some stored point lies within radius of the query.
  bool any_within(const Vec3& query, double radius) const;
  /// Up to k nearest stored points within radius, ordered by (distance, id).
  std::vector<MapPoint> knn(const Vec3& query, size_t k, double radius) const;
  /// Calls fn on every stored point, in unspecified order.
  template <typename Fn>
  void visit(Fn&& fn) const {
    for (const auto& [key, cell] : voxels_) {
      for (const MapPoint& m : cell) fn(m);
    }
  }
  /// All stored points in insertion order.
  std::vector<MapPoint> points() const;

 private:
  struct Key {
    std::int32_t x, y, z;
    bool operator==(const Key& o) const { return x == o.x && y == o.y && z == o.z; }
  };
  struct KeyHash {
    size_t operator()(const Key& k) const {
      return (static_cast<size_t>(k.x) * 73856093u) ^ (static_cast<size_t>(k.y) * 19349663u) ^
             (static_cast<size_t>(k.z) * 83492791u);
    }
  };
  Key key_of(const Vec3& p) const;

  double voxel_;
  size_t cap_;
  size_t count_ = 0;
  std::unordered_map<Key, std::vector<MapPoint>, KeyHash> voxels_;
};

}  // namespace lvi
