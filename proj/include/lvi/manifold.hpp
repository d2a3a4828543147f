#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "lvi/errors.hpp"

namespace lvi {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

/// Below this rotation angle exp/log switch to their Taylor expansions.
inline constexpr double kSmallAngle = 1e-8;
/// Pose::log refuses rotations whose angle is within this margin of pi.
inline constexpr double kLogPiMargin = 1e-6;

Mat3 skew(const Vec3& v);

/// Unit quaternion rotation, canonicalized to w >= 0.
class Rotation {
 public:
  Rotation() = default;
  /// Normalizes and canonicalizes the given quaternion.
  Rotation(double w, double x, double y, double z);
  explicit Rotation(const Eigen::Quaterniond& q);
  static Rotation from_matrix(const Mat3& m);

  static Rotation exp(const Vec3& phi);
  /// Rotation vector with angle in [0, pi].
  Vec3 log() const;
  double angle() const;

  Rotation operator*(const Rotation& other) const;
  Vec3 operator*(const Vec3& v) const { return q_ * v; }
  Rotation inverse() const { return Rotation(q_.conjugate()); }

  Mat3 matrix() const { return q_.toRotationMatrix(); }
  const Eigen::Quaterniond& quaternion() const { return q_; }

 private:
  Eigen::Quaterniond q_ = Eigen::Quaterniond::Identity();
};

/// Six-dof local coordinate, ordered [angular; linear].
struct Twist {
  Vec3 angular = Vec3::Zero();
  Vec3 linear = Vec3::Zero();

  Twist() = default;
  Twist(const Vec3& w, const Vec3& v) : angular(w), linear(v) {}
  explicit Twist(const Vec6& s) : angular(s.head<3>()), linear(s.tail<3>()) {}

  Vec6 vector() const {
    Vec6 s;
    s << angular, linear;
    return s;
  }
  Twist operator*(double k) const { return {angular * k, linear * k}; }
  Twist operator-() const { return {-angular, -linear}; }
};

/// Rigid transform x -> R x + t.
class Pose {
 public:
  Rotation rotation;
  Vec3 translation = Vec3::Zero();

  Pose() = default;
  Pose(const Rotation& r, const Vec3& t) : rotation(r), translation(t) {}
  static Pose identity() { return {}; }

  Pose operator*(const Pose& other) const {
    return {rotation * other.rotation, translation + rotation * other.translation};
  }
  Vec3 operator*(const Vec3& p) const { return rotation * p + translation; }
  Pose inverse() const {
    const Rotation inv = rotation.inverse();
    return {inv, -(inv * translation)};
  }
  Eigen::Matrix4d matrix() const;
};

/// SE(3) exponential of sigma = [omega; v] flowed for unit time.
Pose exp(const Twist& sigma);
/// Inverse of exp. Throws AngleNearPi when the rotation angle reaches pi - 1e-6.
Twist log(const Pose& p);

/// Right (body-frame) perturbation: p * exp(sigma).
inline Pose boxplus(const Pose& p, const Twist& sigma) { return p * exp(sigma); }
/// Local coordinates of a around b: log(b^-1 * a).
inline Twist boxminus(const Pose& a, const Pose& b) { return log(b.inverse() * a); }

/// Adjoint of a pose acting on [angular; linear] twists.
Mat6 adjoint(const Pose& p);

Mat3 so3_right_jacobian(const Vec3& phi);
Mat3 so3_right_jacobian_inverse(const Vec3& phi);
/// d log(A * exp(d)) / d d at d = 0, where log(A) = xi.
Mat6 se3_right_jacobian_inverse(const Twist& xi);

/// Central-difference Jacobian of h over the six boxplus directions of p0.
/// Column k = (h(p0 [+] step e_k) - h(p0 [+] -step e_k)) / (2 step).
template <typename Fn>
Eigen::MatrixXd numeric_jacobian(Fn&& h, const Pose& p0, double step = 1e-6) {
  Eigen::MatrixXd jac;
  for (int k = 0; k < 6; ++k) {
    Vec6 d = Vec6::Zero();
    d[k] = step;
    const Eigen::VectorXd plus = h(boxplus(p0, Twist(d)));
    const Eigen::VectorXd minus = h(boxplus(p0, Twist(Vec6(-d))));
    if (k == 0) jac.resize(plus.size(), 6);
    jac.col(k) = (plus - minus) / (2.0 * step);
  }
  return jac;
}

}  // namespace lvi
