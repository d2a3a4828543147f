#include "lvi/manifold.hpp"

#include <cmath>
#include <sstream>

namespace lvi {

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

Rotation::Rotation(double w, double x, double y, double z) : Rotation(Eigen::Quaterniond(w, x, y, z)) {}

Rotation::Rotation(const Eigen::Quaterniond& q) : q_(q.normalized()) {
  if (q_.w() < 0.0) q_.coeffs() = -q_.coeffs();
}

Rotation Rotation::from_matrix(const Mat3& m) { return Rotation(Eigen::Quaterniond(m)); }

Rotation Rotation::exp(const Vec3& phi) {
  const double theta = phi.norm();
  if (theta < kSmallAngle) {
    const double t2 = theta * theta;
    const Vec3 v = 0.5 * (1.0 - t2 / 24.0) * phi;
    return Rotation(1.0 - t2 / 8.0, v.x(), v.y(), v.z());
  }
  const double half = 0.5 * theta;
  const Vec3 v = std::sin(half) / theta * phi;
  return Rotation(std::cos(half), v.x(), v.y(), v.z());
}

Vec3 Rotation::log() const {
  const Vec3 v = q_.vec();
  const double s = v.norm();
  const double w = q_.w();
  if (s < 0.5 * kSmallAngle) {
    // sin(theta/2) ~ theta/2; second order correction through w.
    return 2.0 * v / w * (1.0 - s * s / (3.0 * w * w));
  }
  const double theta = 2.0 * std::atan2(s, w);
  return theta / s * v;
}

double Rotation::angle() const { return 2.0 * std::atan2(q_.vec().norm(), q_.w()); }

Rotation Rotation::operator*(const Rotation& other) const { return Rotation(q_ * other.q_); }

Eigen::Matrix4d Pose::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation.matrix();
  m.topRightCorner<3, 1>() = translation;
  return m;
}

namespace {

// Rodrigues-type coefficients. Below 1e-3 rad the closed forms lose most of
// their digits to cancellation, so the series are used instead.
double coeff_one_minus_cos(double theta) {  // (1 - cos t) / t^2
  const double t2 = theta * theta;
  if (theta < 1e-3) return 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
  return (1.0 - std::cos(theta)) / t2;
}

double coeff_t_minus_sin(double theta) {  // (t - sin t) / t^3
  const double t2 = theta * theta;
  if (theta < 1e-3) return 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0;
  return (theta - std::sin(theta)) / (t2 * theta);
}

double coeff_inverse(double theta) {  // (1 - t sin t / (2 (1 - cos t))) / t^2
  const double t2 = theta * theta;
  if (theta < 1e-3) return 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0;
  return (1.0 - theta * std::sin(theta) / (2.0 * (1.0 - std::cos(theta)))) / t2;
}

// V(omega) such that t = V v in the SE(3) exponential.
Mat3 left_jacobian(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 w = skew(omega);
  if (theta < kSmallAngle) return Mat3::Identity() + 0.5 * w + w * w / 6.0;
  return Mat3::Identity() + coeff_one_minus_cos(theta) * w + coeff_t_minus_sin(theta) * w * w;
}

Mat3 left_jacobian_inverse(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 w = skew(omega);
  if (theta < kSmallAngle) return Mat3::Identity() - 0.5 * w + w * w / 12.0;
  return Mat3::Identity() - 0.5 * w + coeff_inverse(theta) * w * w;
}

// Off-diagonal block of the SE(3) left Jacobian (translation part rho, rotation part phi).
Mat3 se3_q_block(const Vec3& rho, const Vec3& phi) {
  const double theta = phi.norm();
  const double t2 = theta * theta;
  double c1, c2, c3;
  if (theta < 0.1) {
    const double t4 = t2 * t2;
    c1 = 1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0;
    c2 = 1.0 / 24.0 - t2 / 720.0 + t4 / 40320.0;
    c3 = 1.0 / 120.0 - t2 / 2520.0 + t4 / 120960.0;
  } else {
    const double s = std::sin(theta), c = std::cos(theta);
    c1 = (theta - s) / (t2 * theta);
    c2 = (t2 + 2.0 * c - 2.0) / (2.0 * t2 * t2);
    c3 = (2.0 * theta - 3.0 * s + theta * c) / (2.0 * t2 * t2 * theta);
  }
  const Mat3 P = skew(phi);
  const Mat3 R = skew(rho);
  const Mat3 PR = P * R;
  const Mat3 RP = R * P;
  const Mat3 PRP = PR * P;
  const Mat3 PP = P * P;
  return 0.5 * R + c1 * (PR + RP + PRP) + c2 * (PP * R + R * PP - 3.0 * PRP) + c3 * (PRP * P + PP * R * P);
}

}  // namespace

Pose exp(const Twist& sigma) {
  return {Rotation::exp(sigma.angular), left_jacobian(sigma.angular) * sigma.linear};
}

Twist log(const Pose& p) {
  const double angle = p.rotation.angle();
  if (angle >= M_PI - kLogPiMargin) {
    std::ostringstream os;
    os << "rotation angle " << angle << " too close to pi";
    throw AngleNearPi(os.str());
  }
  const Vec3 omega = p.rotation.log();
  return {omega, left_jacobian_inverse(omega) * p.translation};
}

Mat6 adjoint(const Pose& p) {
  const Mat3 r = p.rotation.matrix();
  Mat6 ad = Mat6::Zero();
  ad.topLeftCorner<3, 3>() = r;
  ad.bottomRightCorner<3, 3>() = r;
  ad.bottomLeftCorner<3, 3>() = skew(p.translation) * r;
  return ad;
}

Mat3 so3_right_jacobian(const Vec3& phi) { return left_jacobian(-phi); }

Mat3 so3_right_jacobian_inverse(const Vec3& phi) { return left_jacobian_inverse(-phi); }

Mat6 se3_right_jacobian_inverse(const Twist& xi) {
  // J_r(xi) = J_l(-xi); with [angular; linear] ordering the left Jacobian is
  // [[J, 0], [Q, J]] and its inverse [[J^-1, 0], [-J^-1 Q J^-1, J^-1]].
  const Vec3 phi = -xi.angular;
  const Vec3 rho = -xi.linear;
  const Mat3 j_inv = left_jacobian_inverse(phi);
  const Mat3 q = se3_q_block(rho, phi);
  Mat6 out = Mat6::Zero();
  out.topLeftCorner<3, 3>() = j_inv;
  out.bottomRightCorner<3, 3>() = j_inv;
  out.bottomLeftCorner<3, 3>() = -j_inv * q * j_inv;
  return out;
}

}  // namespace lvi
