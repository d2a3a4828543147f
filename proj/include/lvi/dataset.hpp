#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lvi/config.hpp"
#include "lvi/sensors.hpp"
#include "lvi/worldsim.hpp"

namespace lvi {

struct ScanStamp {
  int id = 0;
  double start = 0.0;
  double end = 0.0;
};

struct ImageStamp {
  int id = 0;
  double t = 0.0;
};

/// Sensor streams of one recording. Scans and images are fetched on demand so
/// that simulated sequences never need to be held in memory at once.
struct Dataset {
  Calibration calib;
  std::vector<ImuSample> imu;
  std::vector<ScanStamp> scans;
  std::vector<ImageStamp> images;
  std::function<LidarScan(size_t)> load_scan;
  std::function<Image(size_t)> load_image;
  std::optional<Trajectory> groundtruth;
};

struct Event {
  enum class Kind { Imu, Image, Scan };
  Kind kind;
  size_t index;
  double t;  // scan events fire at the scan end
};

/// All streams merged by time; at equal times IMU precedes images precedes scans.
std::vector<Event> merge_events(const Dataset& data);

/// Reads the directory layout described in the README. Throws FormatError
/// (file:line), ClockSkew and IoError.
Dataset load_dataset(const std::string& path);
void write_dataset(const Dataset& data, const std::string& path);

/// Ring index from the beam elevation of a sensor-frame point.
int ring_of(const Vec3& p, const Calibration& calib);

/// Simulation scenarios: "loop" (multi-room ~120 m loop), "corridor" (20 m
/// straight corridor), "room" (circle inside a cube room).
struct SimOptions {
  std::string scenario = "loop";
  std::uint64_t seed = 1;
  double duration = 0.0;  // <= 0: scenario default
  sim::LidarParams lidar;
  sim::ImuParams imu;
  PinholeModel camera;
  double image_noise = 0.01;
  bool images = true;
  double camera_rate = 10.0;
  double groundtruth_rate = 100.0;
  /// Seconds held still before the scenario starts, for IMU attitude initialization.
  double static_start = 1.0;

  /// Consumer-grade defaults: 2 cm range noise, IMU noise densities and constant biases.
  static SimOptions realistic(const std::string& scenario, std::uint64_t seed);
  static SimOptions noise_free(const std::string& scenario, std::uint64_t seed);
};

Extrinsics default_extrinsics();

/// Lazily rendered dataset; identical options give bit-identical streams.
Dataset simulate(const SimOptions& options);

}  // namespace lvi
