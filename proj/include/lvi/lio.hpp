#pragma once

#include <optional>
#include <span>
#include <vector>

#include "lvi/nav_state.hpp"
#include "lvi/point_map.hpp"
#include "lvi/sensors.hpp"

namespace lvi::lio {

struct PlaneLandmark {
  Vec3 normal;  // unit
  Vec3 center;  // q_c
  int inliers = 0;
  double support_radius = 0.0;
};

struct PlaneFitParams {
  double max_residual = 0.1;     // m
  double eigenvalue_ratio = 3.0;  // second-smallest / smallest must exceed this
  double min_aspect = 0.01;       // second-largest / largest eigenvalue
};

/// Least-squares plane through >= 5 points; nullopt when degenerate.
std::optional<PlaneLandmark> fit_plane(std::span<const Vec3> points, const PlaneFitParams& params = {});

struct AssociationParams {
  size_t k = 5;
  double radius = 1.0;
  PlaneFitParams plane;
};

/// Plane through the k nearest map points within radius, or nullopt (no match).
std::optional<PlaneLandmark> associate(const PointMap& map, const Vec3& world_point,
                                       const AssociationParams& params = {});

struct PlaneResidual {
  double r = 0.0;
  Eigen::Matrix<double, 1, 6> jacobian;  // wrt right perturbation of the IMU pose
};

/// r = n . (T_WI T_L p - q_c).
PlaneResidual point_to_plane_residual(const NavState& state, const Extrinsics& extr, const Vec3& lidar_point,
                                      const PlaneLandmark& plane);

/// Re-expresses every point in the LiDAR frame at scan.end by integrating the IMU
/// backwards from `anchor` (the IMU state at scan.end). Throws ImuGap.
LidarScan deskew_scan(const LidarScan& scan, std::span<const ImuSample> imu, const NavState& anchor,
                      const Extrinsics& extr, const Vec3& gravity = Vec3(0, 0, -9.81));

enum class FeatureKind { Edge, Planar };

struct FeatureLabel {
  FeatureKind kind = FeatureKind::Planar;
  double roughness = 0.0;
};

/// R = |sum_{j != i} (q_i - q_j)| / (n |q_i|) over n/2 neighbours on each side.
/// Throws TooCloseToOrigin when |q_i| <= 1e-6, std::out_of_range when the
/// neighbourhood leaves the scanline.
double compute_roughness(std::span<const Vec3> scanline, size_t i, int n = 10);

inline constexpr double kDefaultBeta = 0.005;

/// Per-point labels in scan order; points without a full neighbourhood (or at
/// the origin) get nullopt. Scanlines are the rings, in the order points appear.
std::vector<std::optional<FeatureLabel>> classify_features(const LidarScan& scan, double beta = kDefaultBeta,
                                                           int n = 10);

}  // namespace lvi::lio
