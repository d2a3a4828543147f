#include "lvi/point_map.hpp"

#include <algorithm>
#include <cmath>

namespace lvi {

PointMap::PointMap(double voxel_size, size_t voxel_cap) : voxel_(voxel_size), cap_(voxel_cap) {}

PointMap::Key PointMap::key_of(const Vec3& p) const {
  return {static_cast<std::int32_t>(std::floor(p.x() / voxel_)), static_cast<std::int32_t>(std::floor(p.y() / voxel_)),
          static_cast<std::int32_t>(std::floor(p.z() / voxel_))};
}

bool PointMap::insert(const Vec3& p, float intensity) {
  auto& cell = voxels_[key_of(p)];
  if (cell.size() >= cap_) return false;
  cell.push_back(MapPoint{p, intensity, static_cast<std::uint32_t>(count_++)});
  return true;
}

void PointMap::clear() {
  voxels_.clear();
  count_ = 0;
}

bool PointMap::any_within(const Vec3& query, double radius) const {
  const Key c = key_of(query);
  const int reach = static_cast<int>(std::ceil(radius / voxel_));
  const double r2 = radius * radius;
  for (int dx = -reach; dx <= reach; ++dx) {
    for (int dy = -reach; dy <= reach; ++dy) {
      for (int dz = -reach; dz <= reach; ++dz) {
        const auto it = voxels_.find(Key{c.x + dx, c.y + dy, c.z + dz});
        if (it == voxels_.end()) continue;
        for (const MapPoint& m : it->second) {
          if ((m.p - query).squaredNorm() <= r2) return true;
        }
      }
    }
  }
  return false;
}

std::vector<MapPoint> PointMap::knn(const Vec3& query, size_t k, double radius) const {
  std::vector<std::pair<double, const MapPoint*>> found;
  const Key c = key_of(query);
  const int reach = static_cast<int>(std::ceil(radius / voxel_));
  const double r2 = radius * radius;
  for (int dx = -reach; dx <= reach; ++dx) {
    for (int dy = -reach; dy <= reach; ++dy) {
      for (int dz = -reach; dz <= reach; ++dz) {
        const auto it = voxels_.find(Key{c.x + dx, c.y + dy, c.z + dz});
        if (it == voxels_.end()) continue;
        for (const MapPoint& m : it->second) {
          const double d2 = (m.p - query).squaredNorm();
          if (d2 <= r2) found.emplace_back(d2, &m);
        }
      }
    }
  }
  const auto less = [](const auto& a, const auto& b) {
    return a.first < b.first || (a.first == b.first && a.second->id < b.second->id);
  };
  const size_t n = std::min(k, found.size());
  std::partial_sort(found.begin(), found.begin() + static_cast<std::ptrdiff_t>(n), found.end(), less);
  std::vector<MapPoint> out;
  out.reserve(n);
  for (size_t i = 0; i < n; ++i) out.push_back(*found[i].second);
  return out;
}

std::vector<MapPoint> PointMap::points() const {
  std::vector<MapPoint> out;
  out.reserve(count_);
  for (const auto& [key, cell] : voxels_) out.insert(out.end(), cell.begin(), cell.end());
  std::sort(out.begin(), out.end(), [](const MapPoint& a, const MapPoint& b) { return a.id < b.id; });
  return out;
}

}  // namespace lvi
