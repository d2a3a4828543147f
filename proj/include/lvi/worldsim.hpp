#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lvi/manifold.hpp"
#include "lvi/sensors.hpp"

namespace lvi::sim {

/// Smooth procedural albedo: base + sum of two plane waves over patch coordinates (meters).
struct Texture {
  double base = 0.5;
  double amp1 = 0.0, ku1 = 0.0, kv1 = 0.0, phase1 = 0.0;
  double amp2 = 0.0, ku2 = 0.0, kv2 = 0.0, phase2 = 0.0;

  static Texture uniform(double value) { return Texture{value}; }
  /// Deterministic pseudo-random smooth texture with wavelengths in [0.6, 1.8] m.
  static Texture smooth(std::uint64_t seed);

  double operator()(double s, double t) const;
};

/// Rectangle spanned by two orthogonal edge vectors from a corner.
struct Patch {
  Vec3 corner;
  Vec3 edge_u;
  Vec3 edge_v;
  Vec3 normal;  // normalized edge_u x edge_v
  Texture texture;

  Patch(const Vec3& corner, const Vec3& edge_u, const Vec3& edge_v, const Texture& texture);
  double signed_distance(const Vec3& p) const { return normal.dot(p - corner); }
};

struct RayHit {
  double range = 0.0;
  int patch = -1;
  double s = 0.0;  // patch coordinates in meters along edge_u / edge_v
  double t = 0.0;
};

class World {
 public:
  void add(const Patch& p) { patches_.push_back(p); }
  /// Vertical wall over the 2D segment a -> b between heights z0 and z1.
  void add_wall(const Eigen::Vector2d& a, const Eigen::Vector2d& b, double z0, double z1, const Texture& tex);
  /// Axis-aligned box (all six faces).
  void add_box(const Vec3& min, const Vec3& max, std::uint64_t texture_seed);

  const std::vector<Patch>& patches() const { return patches_; }

  std::optional<RayHit> cast(const Vec3& origin, const Vec3& dir, double max_range) const;
  double albedo(const RayHit& hit) const { return patches_[hit.patch].texture(hit.s, hit.t); }
  /// Smallest |signed distance| of p to any patch plane whose rectangle, grown
  /// by `margin`, contains p's projection.
  double distance_to_surface(const Vec3& p, double margin = 1e-6) const;

 private:
  std::vector<Patch> patches_;
};

/// Closed cube room centered at origin (inward-facing walls, floor, ceiling).
World cube_room(double side, bool textured = true, std::uint64_t texture_seed = 1);
/// Two perpendicular walls meeting at a vertical corner at the origin (walls along +x and +y), plus floor.
World corner_world(double length = 20.0);
/// Straight corridor along x from 0 to length, width w, height h, textured walls and floor.
World corridor_world(double length, double width, double height, bool close_ends, std::uint64_t texture_seed);
/// Ring of irregular rooms around the loop path used by loop_trajectory().
World multi_room_world(std::uint64_t layout_seed);

/// Everything the sensors need at one instant. Velocity and acceleration are
/// world-frame; angular velocity is body-frame.
struct KinematicState {
  Pose pose;
  Vec3 velocity = Vec3::Zero();
  Vec3 acceleration = Vec3::Zero();
  Vec3 angular_velocity = Vec3::Zero();
};

class TrajectorySpec {
 public:
  using Fn = std::function<KinematicState(double)>;

  TrajectorySpec(Fn fn, double duration) : fn_(std::move(fn)), duration_(duration) {}
  KinematicState at(double t) const { return fn_(t); }
  double duration() const { return duration_; }

  double imu_rate = 400.0;
  double lidar_rate = 10.0;
  double camera_rate = 10.0;

 private:
  Fn fn_;
  double duration_;
};

TrajectorySpec stationary(const Pose& pose, double duration);
/// Constant world velocity, fixed orientation.
TrajectorySpec constant_velocity(const Pose& start, const Vec3& velocity, double duration);
/// Fixed position, constant body yaw rate about world z.
TrajectorySpec constant_yaw_rate(const Pose& start, double yaw_rate, double duration);
/// Level circle of given radius around center, constant speed, heading along the tangent.
TrajectorySpec circle(const Vec3& center, double radius, double speed, double duration);
/// Planar path through a curve p(theta) with heading along the tangent; theta(t)
/// ramps smoothly from rest, theta'(t) = omega (1 - exp(-t / tau)).
struct PlanarCurve {
  std::function<Eigen::Vector2d(double)> p, dp, ddp;
};
TrajectorySpec planar_path(const PlanarCurve& curve, double height, double omega, double tau, double duration);
/// Squircle-like closed loop of ~120 m circumference starting at rest.
TrajectorySpec loop_trajectory(double duration = 64.0);
PlanarCurve loop_curve();
/// Straight-line motion along +x starting from rest, cruising at `speed`.
TrajectorySpec straight_run(const Vec3& start, double speed, double duration, double tau = 0.5);
/// Circle entered from rest, speed approaching `speed` with time constant tau.
TrajectorySpec circle_run(const Vec3& center, double radius, double speed, double duration, double tau = 1.0);

struct LidarParams {
  int beams = 16;
  double min_elevation_deg = -15.0;
  double max_elevation_deg = 15.0;
  double azimuth_resolution_deg = 0.25;
  double max_range = 50.0;
  double min_range = 0.3;
  double noise_sigma = 0.0;

  double elevation(int ring) const;
  int columns() const;
};

struct ImuParams {
  double gyro_noise = 0.0;   // rad/s/sqrt(Hz)
  double accel_noise = 0.0;  // m/s^2/sqrt(Hz)
  Vec3 gyro_bias = Vec3::Zero();
  Vec3 accel_bias = Vec3::Zero();
  Vec3 gravity = Vec3(0, 0, -9.81);
};

/// Rolling-shutter scan: column c fires at start + c * duration / columns.
/// Throws EmptyScan if nothing is hit.
LidarScan raycast_scan(const World& world, const TrajectorySpec& traj, const Pose& imu_from_lidar, int scan_id,
                       double scan_start, const LidarParams& params, std::uint64_t seed);

std::vector<ImuSample> synthesize_imu(const TrajectorySpec& traj, const ImuParams& params, std::uint64_t seed,
                                      double t0 = 0.0, std::optional<double> t1 = std::nullopt);

/// Pixel (x, y) looks along ((x - cx) / fx, (y - cy) / fy, 1) in the camera frame.
Image render_image(const World& world, const Pose& world_from_camera, const PinholeModel& model, double noise_sigma,
                   std::uint64_t seed);

/// Stream-specific generator so that frames can be produced in any order.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

}  // namespace lvi::sim
