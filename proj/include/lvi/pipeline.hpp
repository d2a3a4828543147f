#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lvi/config.hpp"
#include "lvi/dataset.hpp"
#include "lvi/point_map.hpp"
#include "lvi/posegraph.hpp"

namespace lvi {

/// Wall-clock milliseconds spent per stage on one LiDAR frame, including the
/// image events since the previous frame.
struct FrameTiming {
  double t = 0.0;
  double total_ms = 0.0;
  double propagate_ms = 0.0;
  double deskew_ms = 0.0;
  double lidar_update_ms = 0.0;
  double visual_update_ms = 0.0;
  double map_ms = 0.0;
  double loop_ms = 0.0;
  double backend_ms = 0.0;

  double stage_sum() const {
    return propagate_ms + deskew_ms + lidar_update_ms + visual_update_ms + map_ms + loop_ms + backend_ms;
  }
};

struct RunReport {
  std::string mode;
  std::vector<FrameTiming> frames;
  std::optional<double> ate_rmse;  // m, when the dataset has ground truth
  std::optional<double> rpe_m;
  std::optional<double> rpe_deg;
  std::vector<double> ate_errors;
  int loops_attempted = 0;
  int loops_accepted = 0;
  size_t map_points = 0;
  size_t lidar_residuals = 0;   // accumulated rows consumed by updates
  size_t visual_residuals = 0;
  int keyframes = 0;
  int backend_runs = 0;
  int imu_only_fallbacks = 0;
  std::vector<std::string> warnings;

  double mean_frame_ms() const;
};

struct RunResult {
  Trajectory trajectory;
  PointMap map;
  graph::PoseGraph graph;
  RunReport report;
};

/// Optional per-frame callback (frame index, frame count) for progress output.
using ProgressFn = std::function<void(size_t, size_t)>;

/// Runs the estimator over every event of the dataset. Module errors are
/// rethrown with the frame index attached.
RunResult run(const RunConfig& config, const Dataset& data, const ProgressFn& progress = {});

/// Report as JSON, including the trajectory and per-pose errors for plotting.
std::string report_json(const RunReport& report, const Trajectory& trajectory);

}  // namespace lvi
