#include "lvi/lio.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace lvi::lio {

std::optional<PlaneLandmark> fit_plane(std::span<const Vec3> points, const PlaneFitParams& params) {
  if (points.size() < 5) return std::nullopt;
  Vec3 centroid = Vec3::Zero();
  for (const Vec3& p : points) centroid += p;
  centroid /= static_cast<double>(points.size());
  Mat3 cov = Mat3::Zero();
  for (const Vec3& p : points) cov += (p - centroid) * (p - centroid).transpose();
  cov /= static_cast<double>(points.size());

  const Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  const Vec3 ev = es.eigenvalues();  // ascending
  const double scale = std::max(ev(2), 1e-300);
  // Two comparable small eigenvalues: points on a line or a blob.
  if (ev(1) <= 1e-12 * scale || ev(1) < params.eigenvalue_ratio * std::max(ev(0), 0.0)) return std::nullopt;
  // Nearly collinear support (one scan ring) leaves the normal free to spin about the line.
  if (ev(1) < params.min_aspect * scale) return std::nullopt;

  PlaneLandmark plane;
  plane.normal = es.eigenvectors().col(0).normalized();
  plane.center = centroid;
  plane.inliers = static_cast<int>(points.size());
  for (const Vec3& p : points) {
    if (std::abs(plane.normal.dot(p - centroid)) > params.max_residual) return std::nullopt;
    plane.support_radius = std::max(plane.support_radius, (p - centroid).norm());
  }
  return plane;
}

std::optional<PlaneLandmark> associate(const PointMap& map, const Vec3& world_point, const AssociationParams& params) {
  const std::vector<MapPoint> nn = map.knn(world_point, params.k, params.radius);
  if (nn.size() < params.k) return std::nullopt;
  std::vector<Vec3> pts;
  pts.reserve(nn.size());
  for (const MapPoint& m : nn) pts.push_back(m.p);
  return fit_plane(pts, params.plane);
}

PlaneResidual point_to_plane_residual(const NavState& state, const Extrinsics& extr, const Vec3& lidar_point,
                                      const PlaneLandmark& plane) {
  const Vec3 body = extr.imu_from_lidar * lidar_point;
  const Vec3 world = state.pose * body;
  const Mat3 r = state.pose.rotation.matrix();
  PlaneResidual out;
  out.r = plane.normal.dot(world - plane.center);
  out.jacobian.head<3>() = -plane.normal.transpose() * r * skew(body);
  out.jacobian.tail<3>() = plane.normal.transpose() * r;
  return out;
}

LidarScan deskew_scan(const LidarScan& scan, std::span<const ImuSample> imu, const NavState& anchor,
                      const Extrinsics& extr, const Vec3& gravity) {
  check_imu_coverage(imu, scan.start, scan.end);
  // Walk backwards from the anchor, keeping the state at each node.
  const std::vector<double> nodes = integration_nodes(imu, std::min(scan.start, scan.end), scan.end);
  std::vector<NavState> states(nodes.size());
  std::vector<ImuMeasurement> seg(nodes.size());
  NavState x = anchor;
  x.t = scan.end;
  states.back() = x;
  for (size_t i = nodes.size() - 1; i > 0; --i) {
    seg[i] = interpolate_imu(imu, 0.5 * (nodes[i - 1] + nodes[i]));
    x = integrate_backward(x, seg[i], nodes[i] - nodes[i - 1], gravity);
    x.t = nodes[i - 1];
    states[i - 1] = x;
  }

  const Pose end_inv = (anchor.pose * extr.imu_from_lidar).inverse();
  LidarScan out = scan;
  for (LidarPoint& pt : out.points) {
    const double t = std::clamp(pt.t, nodes.front(), nodes.back());
    // Segment (nodes[i-1], nodes[i]] containing t; integrate back from its right end.
    size_t i = static_cast<size_t>(std::lower_bound(nodes.begin(), nodes.end(), t) - nodes.begin());
    Pose at;
    if (i == 0 || nodes[i] == t) {
      at = states[i].pose;
    } else {
      at = integrate_backward(states[i], seg[i], nodes[i] - t, gravity).pose;
    }
    pt.p = end_inv * (at * (extr.imu_from_lidar * pt.p));
    pt.t = scan.end;
  }
  return out;
}

double compute_roughness(std::span<const Vec3> scanline, size_t i, int n) {
  const size_t half = static_cast<size_t>(n / 2);
  if (i < half || i + half >= scanline.size()) throw std::out_of_range("roughness neighbourhood leaves scanline");
  const Vec3& qi = scanline[i];
  const double norm = qi.norm();
  if (norm <= 1e-6) throw TooCloseToOrigin("point norm " + std::to_string(norm));
  Vec3 sum = Vec3::Zero();
  for (size_t j = i - half; j <= i + half; ++j) {
    if (j != i) sum += qi - scanline[j];
  }
  return sum.norm() / (n * norm);
}

std::vector<std::optional<FeatureLabel>> classify_features(const LidarScan& scan, double beta, int n) {
  std::vector<std::optional<FeatureLabel>> labels(scan.points.size());
  std::map<int, std::vector<size_t>> rings;
  for (size_t i = 0; i < scan.points.size(); ++i) rings[scan.points[i].ring].push_back(i);
  const size_t half = static_cast<size_t>(n / 2);
  for (const auto& [ring, idx] : rings) {
    // A scanline ends where returns are missing: consecutive points more than
    // 1.5 firing periods apart.
    std::vector<double> dts;
    for (size_t k = 1; k < idx.size(); ++k) dts.push_back(scan.points[idx[k]].t - scan.points[idx[k - 1]].t);
    double period = 0.0;
    if (!dts.empty()) {
      std::nth_element(dts.begin(), dts.begin() + dts.size() / 2, dts.end());
      period = dts[dts.size() / 2];
    }
    size_t begin = 0;
    while (begin < idx.size()) {
      size_t end = begin + 1;
      while (end < idx.size() &&
             scan.points[idx[end]].t - scan.points[idx[end - 1]].t <= 1.5 * period + 1e-12) {
        ++end;
      }
      std::vector<Vec3> line;
      line.reserve(end - begin);
      for (size_t k = begin; k < end; ++k) line.push_back(scan.points[idx[k]].p);
      for (size_t k = half; k + half < line.size(); ++k) {
        if (line[k].norm() <= 1e-6) continue;
        const double r = compute_roughness(line, k, n);
        labels[idx[begin + k]] = FeatureLabel{r > beta ? FeatureKind::Edge : FeatureKind::Planar, r};
      }
      begin = end;
    }
  }
  return labels;
}

}  // namespace lvi::lio
