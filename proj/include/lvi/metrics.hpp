#pragma once

#include <string>
#include <vector>

#include "lvi/point_map.hpp"
#include "lvi/sensors.hpp"

namespace lvi {

struct AteResult {
  double rmse = 0.0;
  std::vector<double> errors;  // per associated pose, m
  std::vector<double> times;
  Pose alignment;  // applied to the estimate
};

/// Closed-form SE(3) alignment of the estimate onto the reference, then RMSE
/// of translation residuals. Poses associate when timestamps are within
/// `max_dt`. Throws NoOverlap with fewer than 2 pairs.
AteResult evaluate_ate(const Trajectory& estimated, const Trajectory& reference, double max_dt = 0.01);

struct RpeResult {
  double translation_rmse = 0.0;  // m
  double rotation_rmse_deg = 0.0;
};

/// Relative error between consecutive associated poses.
RpeResult evaluate_rpe(const Trajectory& estimated, const Trajectory& reference, double max_dt = 0.01);

/// Least-squares rigid transform taking `from` onto `to` (Umeyama, no scale).
Pose align_points(const std::vector<Vec3>& from, const std::vector<Vec3>& to);

/// `timestamp tx ty tz qx qy qz qw`, 9 significant digits.
std::string format_tum(const Trajectory& traj);
Trajectory parse_tum(const std::string& text, const std::string& source = "<tum>");
void write_tum(const Trajectory& traj, const std::string& path);
Trajectory read_tum(const std::string& path);

/// ASCII PLY with x y z intensity. Throws IoError on an empty map without touching the file.
void export_map(const PointMap& map, const std::string& path);
std::string format_ply(const PointMap& map);

}  // namespace lvi
