#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lvi/fusion.hpp"
#include "lvi/sensors.hpp"
#include "lvi/worldsim.hpp"

namespace lvi {

/// One `key = value` line with its origin, for error messages.
struct ConfigEntry {
  std::string key;
  std::string value;
  int line = 0;
};

/// Flat `key = value` text with `#` comments. Throws ConfigError on malformed lines.
std::vector<ConfigEntry> parse_key_values(const std::string& text, const std::string& source);

enum class RunMode { LioOnly, VioOnly, FullNoBackend, FullNoLoop, Full };

std::string to_string(RunMode m);
RunMode parse_run_mode(const std::string& s);

inline bool uses_lidar_residuals(RunMode m) { return m != RunMode::VioOnly; }
inline bool uses_visual_residuals(RunMode m) { return m != RunMode::LioOnly; }
inline bool uses_backend(RunMode m) { return m != RunMode::FullNoBackend; }
inline bool uses_loop_closure(RunMode m) { return m == RunMode::Full; }

struct LioConfig {
  double beta = 0.03;
  int n = 10;
  double sigma = 0.05;          // m
  double downsample = 0.5;      // residual point grid, m
  size_t max_points = 1500;
  size_t knn = 10;
  double radius = 1.0;          // association search, m
  double plane_threshold = 0.05;
};

struct MapConfig {
  double voxel = 0.5;
  size_t voxel_cap = 32;
  double insert_grid = 0.15;  // frame cloud thinning, m
  double min_spacing = 0.2;   // skip points this close to a stored one, m
};

struct VioConfig {
  int patch_size = 9;
  double sigma = 1.0;  // intensity, per patch pixel
  size_t budget = 100;
  double min_gradient = 0.01;
  int grid = 16;
  double max_depth = 15.0;
  size_t max_observations = 8;
  double max_rms = 0.15;  // drop a point whose patch no longer matches
  double min_view_angle_deg = 5.0;  // new observation only past this angle from the stored ones
};

struct IekfConfig {
  int max_iter = 6;
  double tol = 1e-6;
  double kappa = 1.345;
};

struct KeyframeConfig {
  double translation = 0.5;   // m
  double rotation_deg = 10.0;
};

struct BackendConfig {
  int interval = 10;  // keyframes
  double odometry_sigma_t = 0.01;
  double odometry_sigma_r = 0.002;
  int max_iter = 50;
};

struct LoopConfig {
  double threshold = 0.6;
  int k = 3;
  int exclusion = 30;  // keyframes
  int rings = 40;
  int sectors = 60;
  double max_range = 40.0;
  double information_scale = 1e4;
  double max_mean_residual = 0.1;
  double min_inlier_fraction = 0.5;
  double max_correction = 3.0;  // m, loop vs current graph estimate
};

struct RunConfig {
  RunMode mode = RunMode::Full;
  std::uint64_t seed = 0;
  LioConfig lio;
  MapConfig map;
  VioConfig vio;
  IekfConfig iekf;
  fusion::ImuNoise imu;
  KeyframeConfig keyframe;
  BackendConfig backend;
  LoopConfig loop;
  std::optional<Pose> imu_from_lidar;   // overrides the dataset calibration
  std::optional<Pose> imu_from_camera;
};

/// Unknown keys and out-of-range values throw ConfigError naming source:line.
RunConfig parse_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_config(const std::string& path);
void apply_config(RunConfig& config, const ConfigEntry& entry, const std::string& source);

/// Sensor calibration shipped with a dataset.
struct Calibration {
  Extrinsics extrinsics;
  PinholeModel camera;
  int lidar_beams = 16;
  double lidar_min_elevation_deg = -15.0;
  double lidar_max_elevation_deg = 15.0;
  double lidar_rate = 10.0;
  Vec3 gravity = Vec3(0, 0, -9.81);
};

Calibration parse_calibration(const std::string& text, const std::string& source = "<calib>");
std::string format_calibration(const Calibration& calib);

/// "tx ty tz qw qx qy qz"
Pose parse_pose(const std::string& s);
std::string format_pose(const Pose& p);

}  // namespace lvi
