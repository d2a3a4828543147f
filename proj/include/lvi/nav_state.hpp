#pragma once

#include <span>
#include <vector>

#include "lvi/manifold.hpp"
#include "lvi/sensors.hpp"

namespace lvi {

/// IMU body pose in the world plus velocity and sensor biases.
struct NavState {
  Pose pose;
  Vec3 velocity = Vec3::Zero();  // world frame
  Vec3 gyro_bias = Vec3::Zero();
  Vec3 accel_bias = Vec3::Zero();
  double t = 0.0;
};

inline constexpr int kStateDim = 15;
/// [d_angle(3), d_translation(3), d_velocity(3), d_gyro_bias(3), d_accel_bias(3)];
/// the first six are the right-perturbation twist of the pose.
using ErrorState = Eigen::Matrix<double, kStateDim, 1>;
using StateMatrix = Eigen::Matrix<double, kStateDim, kStateDim>;

NavState boxplus(const NavState& x, const ErrorState& dx);
/// Error state e with boxplus(b, e) == a.
ErrorState boxminus(const NavState& a, const NavState& b);

struct ImuMeasurement {
  Vec3 gyro = Vec3::Zero();
  Vec3 accel = Vec3::Zero();
};

/// One constant-input step of length dt:
/// R <- R exp((w - bg) dt), v <- v + a dt, p <- p + v dt + a dt^2 / 2 with a = R (f - ba) + g.
NavState integrate_forward(const NavState& x, const ImuMeasurement& m, double dt, const Vec3& gravity);
/// Exact inverse of integrate_forward over the same step.
NavState integrate_backward(const NavState& x, const ImuMeasurement& m, double dt, const Vec3& gravity);

/// IMU reading linearly interpolated at time t (clamped to the stream ends).
ImuMeasurement interpolate_imu(std::span<const ImuSample> imu, double t);

/// Throws ImuGap if samples leave a hole longer than two nominal periods anywhere in [t0, t1].
void check_imu_coverage(std::span<const ImuSample> imu, double t0, double t1);

/// Sample times strictly inside (t0, t1), bracketed by t0 and t1.
std::vector<double> integration_nodes(std::span<const ImuSample> imu, double t0, double t1);

}  // namespace lvi
