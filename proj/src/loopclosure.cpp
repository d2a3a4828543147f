#include "lvi/loopclosure.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include "lvi/errors.hpp"
#include "lvi/point_map.hpp"

namespace lvi::loop {

ScanDescriptor describe(const LidarScan& scan, const DescriptorParams& params) {
  if (scan.points.empty()) throw EmptyScan("scan " + std::to_string(scan.id) + " has no points");
  ScanDescriptor d;
  d.rings = params.rings;
  d.sectors = params.sectors;
  d.cells = Eigen::MatrixXd::Zero(params.rings, params.sectors);
  const double ring_width = params.max_range / params.rings;
  const double sector_width = 2.0 * M_PI / params.sectors;
  for (const LidarPoint& pt : scan.points) {
    const double range = std::hypot(pt.p.x(), pt.p.y());
    if (range >= params.max_range) continue;
    const int r = static_cast<int>(range / ring_width);
    int a = static_cast<int>(std::floor((std::atan2(pt.p.y(), pt.p.x()) + M_PI) / sector_width));
    a = ((a % params.sectors) + params.sectors) % params.sectors;
    const double value = std::max(pt.p.z() + params.height_offset, 1e-3);
    d.cells(r, a) = std::max(d.cells(r, a), value);
  }
  d.ring_key = (d.cells.array() > 0.0).cast<double>().rowwise().sum() / params.sectors;
  return d;
}

Eigen::MatrixXd shift_columns(const Eigen::MatrixXd& cells, int k) {
  const int a = static_cast<int>(cells.cols());
  Eigen::MatrixXd out(cells.rows(), a);
  for (int c = 0; c < a; ++c) out.col(c) = cells.col(((c + k) % a + a) % a);
  return out;
}

MatchResult match(const ScanDescriptor& d1, const ScanDescriptor& d2) {
  if (d1.rings != d2.rings || d1.sectors != d2.sectors) throw std::invalid_argument("descriptor shapes differ");
  const double n1 = d1.cells.norm(), n2 = d2.cells.norm();
  MatchResult best;
  if (n1 == 0.0 || n2 == 0.0) return best;
  const int a = d1.sectors;
  double best_score = -1.0;
  for (int k = 0; k < a; ++k) {
    double dot = 0.0;
    for (int c = 0; c < a; ++c) dot += d1.cells.col(c).dot(d2.cells.col((c + k) % a));
    const double score = dot / (n1 * n2);
    double yaw = -k * 2.0 * M_PI / a;
    if (yaw <= -M_PI) yaw += 2.0 * M_PI;
    const bool better = score > best_score + 1e-12 ||
                        (std::abs(score - best_score) <= 1e-12 && std::abs(yaw) < std::abs(best.yaw));
    if (better) {
      best_score = score;
      best.yaw = yaw;
    }
  }
  best.overlap = std::clamp(best_score, 0.0, 1.0);
  return best;
}

void DescriptorStore::add(int scan_id, ScanDescriptor d) { entries_.push_back({scan_id, std::move(d)}); }

const ScanDescriptor* DescriptorStore::find(int scan_id) const {
  for (const Entry& e : entries_) {
    if (e.id == scan_id) return &e.descriptor;
  }
  return nullptr;
}

std::vector<LoopCandidate> retrieve(const DescriptorStore& history, int query_id, const ScanDescriptor& query,
                                    const RetrieveParams& params) {
  const auto& entries = history.entries();
  if (entries.size() <= params.exclusion) return {};
  std::vector<std::pair<double, size_t>> pool;
  for (size_t i = 0; i + params.exclusion < entries.size(); ++i) {
    if (entries[i].id == query_id) continue;
    pool.emplace_back((entries[i].descriptor.ring_key - query.ring_key).squaredNorm(), i);
  }
  std::sort(pool.begin(), pool.end());
  pool.resize(std::min(pool.size(), params.ring_key_pool));

  std::vector<LoopCandidate> out;
  for (const auto& [dist, i] : pool) {
    const MatchResult m = match(query, entries[i].descriptor);
    out.push_back({query_id, entries[i].id, m.overlap, m.yaw, std::nullopt, 0.0});
  }
  std::stable_sort(out.begin(), out.end(), [](const LoopCandidate& a, const LoopCandidate& b) {
    return a.overlap > b.overlap || (a.overlap == b.overlap && a.match < b.match);
  });
  out.resize(std::min(out.size(), params.k));
  return out;
}

FeatureCloud extract_features(const LidarScan& scan, double beta, int n, double planar_voxel) {
  const auto labels = lio::classify_features(scan, beta, n);
  FeatureCloud f;
  std::map<std::tuple<int, int, int>, bool> taken;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (!labels[i]) continue;
    const Vec3& p = scan.points[i].p;
    if (labels[i]->kind == lio::FeatureKind::Edge) {
      f.edges.push_back(p);
      continue;
    }
    const auto key = std::make_tuple(static_cast<int>(std::floor(p.x() / planar_voxel)),
                                     static_cast<int>(std::floor(p.y() / planar_voxel)),
                                     static_cast<int>(std::floor(p.z() / planar_voxel)));
    if (taken.emplace(key, true).second) f.planes.push_back(p);
  }
  return f;
}

namespace {

struct Line {
  Vec3 center;
  Vec3 direction;
};

std::optional<Line> fit_line(const std::vector<MapPoint>& pts) {
  if (pts.size() < 3) return std::nullopt;
  Vec3 c = Vec3::Zero();
  for (const MapPoint& m : pts) c += m.p;
  c /= static_cast<double>(pts.size());
  Mat3 cov = Mat3::Zero();
  for (const MapPoint& m : pts) cov += (m.p - c) * (m.p - c).transpose();
  const Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  if (es.eigenvalues()(2) < 3.0 * es.eigenvalues()(1)) return std::nullopt;
  const Line line{c, es.eigenvectors().col(2).normalized()};
  for (const MapPoint& m : pts) {
    const Vec3 d = m.p - c;
    if ((d - line.direction * line.direction.dot(d)).norm() > 0.1) return std::nullopt;
  }
  return line;
}

struct Correspondences {
  Mat6 h = Mat6::Zero();
  Vec6 g = Vec6::Zero();
  int inliers = 0;
  double inlier_sum = 0.0;
};

Correspondences linearize(const FeatureCloud& query, const PointMap& edges, const PointMap& planes, const Pose& t,
                          double radius, const RefineParams& params) {
  Correspondences out;
  const Mat3 r = t.rotation.matrix();
  const auto accumulate = [&](const Eigen::MatrixXd& j, const Eigen::VectorXd& res, double weight) {
    const double d = res.norm();
    // Huber at the inlier distance keeps far correspondences from dominating.
    const double w = weight * (d <= params.inlier_distance ? 1.0 : params.inlier_distance / d);
    out.h += w * j.transpose() * j;
    out.g += w * j.transpose() * res;
    if (d < params.inlier_distance) {
      ++out.inliers;
      out.inlier_sum += d;
    }
  };
  for (const Vec3& q : query.edges) {
    const Vec3 p = t * q;
    const auto nn = edges.knn(p, 5, radius);
    auto line = fit_line(nn);
    if (!line) continue;
    // Anchor at the nearest correspondence so coincident clouds give zero residual.
    line->center = nn.front().p;
    const Mat3 proj = Mat3::Identity() - line->direction * line->direction.transpose();
    Eigen::Matrix<double, 3, 6> dp;
    dp.leftCols<3>() = -r * skew(q);
    dp.rightCols<3>() = r;
    accumulate(proj * dp, proj * (p - line->center), params.edge_weight);
  }
  for (const Vec3& q : query.planes) {
    const Vec3 p = t * q;
    const auto nn = planes.knn(p, 5, radius);
    if (nn.size() < 5) continue;
    std::vector<Vec3> pts;
    for (const MapPoint& m : nn) pts.push_back(m.p);
    const auto plane = lio::fit_plane(pts);
    if (!plane) continue;
    bool flat = true;
    for (const Vec3& m : pts) flat = flat && std::abs(plane->normal.dot(m - plane->center)) < 0.1;
    if (!flat) continue;
    Eigen::Matrix<double, 1, 6> j;
    j.leftCols<3>() = -plane->normal.transpose() * r * skew(q);
    j.rightCols<3>() = plane->normal.transpose() * r;
    accumulate(j, Eigen::VectorXd::Constant(1, plane->normal.dot(p - nn.front().p)), params.plane_weight);
  }
  return out;
}

}  // namespace

std::optional<RefineResult> refine(const FeatureCloud& query, const FeatureCloud& match, double yaw_init,
                                   const RefineParams& params) {
  const size_t total = query.edges.size() + query.planes.size();
  if (total == 0 || match.planes.empty()) return std::nullopt;
  PointMap edges(1.0, 1000), planes(1.0, 1000);
  for (const Vec3& p : match.edges) edges.insert(p);
  for (const Vec3& p : match.planes) planes.insert(p);

  RefineResult res;
  Pose t(Rotation::exp(Vec3(0, 0, yaw_init)), Vec3::Zero());
  double radius = params.initial_radius;
  for (int it = 0; it < params.max_iter; ++it) {
    const Correspondences c = linearize(query, edges, planes, t, radius, params);
    ++res.iterations;
    if (c.inliers == 0 && c.h.trace() == 0.0) return std::nullopt;
    const Vec6 delta = (c.h + 1e-9 * Mat6::Identity()).ldlt().solve(-c.g);
    t = boxplus(t, Twist(delta));
    const bool shrinking = radius > params.final_radius;
    radius = std::max(params.final_radius, radius * 0.7);
    if (!shrinking && delta.norm() < 1e-9) break;
  }
  const Correspondences c = linearize(query, edges, planes, t, params.final_radius, params);
  res.match_from_query = t;
  res.inlier_fraction = static_cast<double>(c.inliers) / static_cast<double>(total);
  res.mean_residual = c.inliers > 0 ? c.inlier_sum / c.inliers : INFINITY;
  if (res.mean_residual >= params.max_mean_residual || res.inlier_fraction <= params.min_inlier_fraction) {
    return std::nullopt;
  }
  return res;
}

graph::BinaryFactor emit_factor(int node_i, int node_j, const Pose& z, double inlier_fraction, double scale) {
  return {node_i, node_j, z, Mat6::Identity() * (scale * inlier_fraction), graph::FactorKind::LoopClosure};
}

}  // namespace lvi::loop
