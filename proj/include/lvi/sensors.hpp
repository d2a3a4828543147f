#pragma once

#include <cstdint>
#include <vector>

#include "lvi/manifold.hpp"

namespace lvi {

struct ImuSample {
  double t = 0.0;
  Vec3 gyro = Vec3::Zero();   // rad/s, body frame
  Vec3 accel = Vec3::Zero();  // m/s^2, body frame, specific force (includes gravity)
};

struct LidarPoint {
  Vec3 p = Vec3::Zero();  // sensor frame, meters
  double intensity = 0.0;
  double t = 0.0;  // absolute timestamp
  int ring = 0;
};

struct LidarScan {
  int id = 0;
  double start = 0.0;
  double end = 0.0;
  std::vector<LidarPoint> points;
};

/// Row-major grayscale image with intensities nominally in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int w, int h, float fill = 0.0f) : width(w), height(h), pixels(static_cast<size_t>(w) * h, fill) {}
  float at(int x, int y) const { return pixels[static_cast<size_t>(y) * width + x]; }
  float& at(int x, int y) { return pixels[static_cast<size_t>(y) * width + x]; }
};

struct PinholeModel {
  double fx = 500.0;
  double fy = 500.0;
  double cx = 320.0;
  double cy = 240.0;
  int width = 640;
  int height = 480;

  /// fx, fy > 0 and the principal point inside the image.
  bool valid() const { return fx > 0 && fy > 0 && cx >= 0 && cy >= 0 && cx < width && cy < height; }
};

/// Fixed sensor-to-IMU transforms.
struct Extrinsics {
  Pose imu_from_lidar;   // T_L
  Pose imu_from_camera;  // T_C
};

struct StampedPose {
  double t = 0.0;
  Pose pose;
};

using Trajectory = std::vector<StampedPose>;

}  // namespace lvi
