#pragma once

#include <optional>
#include <span>
#include <vector>

#include "lvi/nav_state.hpp"
#include "lvi/point_map.hpp"
#include "lvi/sensors.hpp"

namespace lvi::vio {

struct Frame {
  double t = 0.0;
  Image image;
  PinholeModel model;
};

using Pixel = Eigen::Vector2d;

/// Pinhole projection; nullopt when z <= z_min (behind the camera).
std::optional<Pixel> project(const PinholeModel& model, const Vec3& camera_point, double z_min = 0.05);

/// Bilinear sample and its exact gradient (d/du, d/dv) at a subpixel location.
struct BilinearSample {
  double value = 0.0;
  Eigen::Vector2d gradient = Eigen::Vector2d::Zero();
};
/// nullopt outside [0, width-1] x [0, height-1].
std::optional<BilinearSample> sample(const Image& image, double u, double v);

/// w x w samples (row-major, w odd) on the integer grid around `center`;
/// nullopt if any sample leaves the image.
std::optional<Eigen::VectorXd> sample_patch(const Image& image, const Pixel& center, int w);

/// One sighting of a visual point, kept as a candidate reference.
struct Observation {
  Eigen::VectorXd patch;
  Pose world_from_camera;
  double t = 0.0;
};

struct VisualPoint {
  Vec3 p = Vec3::Zero();
  int patch_size = 9;
  std::vector<Observation> observations;
  size_t reference = 0;

  const Observation& ref() const { return observations[reference]; }
  /// Unit direction from the reference camera center to p.
  Vec3 reference_direction() const { return (p - ref().world_from_camera.translation).normalized(); }
};

/// Observation whose viewing direction is closest to the one from
/// `camera_center`; ties go to the most recent.
size_t select_reference(const Vec3& point, std::span<const Observation> observations, const Vec3& camera_center);

struct PhotometricResidual {
  Eigen::VectorXd r;
  Eigen::Matrix<double, Eigen::Dynamic, 6> jacobian;  // wrt right perturbation of the IMU pose
};

inline Pose camera_pose(const NavState& state, const Extrinsics& extr) { return state.pose * extr.imu_from_camera; }

/// Current patch at the projection of p minus the reference patch.
/// nullopt when the point is behind the camera or the patch leaves the image.
std::optional<PhotometricResidual> photometric_residual(const NavState& state, const Extrinsics& extr,
                                                        const VisualPoint& vp, const Frame& frame);

struct HarvestParams {
  size_t budget = 200;
  double min_gradient = 0.01;  // intensity / pixel
  int grid = 8;                // pixels
  int patch_size = 9;
  double max_depth = 30.0;
};

/// Projects map points into the frame and keeps well-textured ones at least
/// `grid` pixels apart (nearest first). Pixels in `occupied` count as taken.
std::vector<VisualPoint> harvest_points(const PointMap& map, const Frame& frame, const NavState& state,
                                        const Extrinsics& extr, const HarvestParams& params = {},
                                        std::span<const Pixel> occupied = {});

}  // namespace lvi::vio
