#pragma once

#include <cmath>
#include <random>

#include "lvi/manifold.hpp"

namespace lvi::test {

inline Vec3 random_vec3(std::mt19937& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, 1.0);
  return Vec3(n(rng), n(rng), n(rng)) * scale;
}

inline Vec3 random_unit(std::mt19937& rng) { return random_vec3(rng).normalized(); }

/// Rotation with uniformly random axis and angle drawn from [0, max_angle].
inline Rotation random_rotation(std::mt19937& rng, double max_angle = M_PI - 0.01) {
  std::uniform_real_distribution<double> u(0.0, max_angle);
  return Rotation::exp(random_unit(rng) * u(rng));
}

inline Pose random_pose(std::mt19937& rng, double t_scale = 5.0) {
  return {random_rotation(rng), random_vec3(rng, t_scale)};
}

inline Twist random_twist(std::mt19937& rng, double angular_norm, double linear_scale = 1.0) {
  return {random_unit(rng) * angular_norm, random_vec3(rng, linear_scale)};
}

inline double rotation_distance(const Pose& a, const Pose& b) {
  return (a.rotation.inverse() * b.rotation).angle();
}

inline double translation_distance(const Pose& a, const Pose& b) {
  return (a.translation - b.translation).norm();
}

inline double relative_error(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& numeric) {
  const double denom = std::max(numeric.norm(), 1e-12);
  return (analytic - numeric).norm() / denom;
}

}  // namespace lvi::test
