#include "lvi/nav_state.hpp"

#include <algorithm>
#include <sstream>

namespace lvi {

NavState boxplus(const NavState& x, const ErrorState& dx) {
  NavState out = x;
  out.pose = boxplus(x.pose, Twist(Vec6(dx.head<6>())));
  out.velocity += dx.segment<3>(6);
  out.gyro_bias += dx.segment<3>(9);
  out.accel_bias += dx.segment<3>(12);
  return out;
}

ErrorState boxminus(const NavState& a, const NavState& b) {
  ErrorState e;
  e.head<6>() = boxminus(a.pose, b.pose).vector();
  e.segment<3>(6) = a.velocity - b.velocity;
  e.segment<3>(9) = a.gyro_bias - b.gyro_bias;
  e.segment<3>(12) = a.accel_bias - b.accel_bias;
  return e;
}

NavState integrate_forward(const NavState& x, const ImuMeasurement& m, double dt, const Vec3& gravity) {
  NavState out = x;
  const Vec3 acc = x.pose.rotation * (m.accel - x.accel_bias) + gravity;
  out.pose.translation = x.pose.translation + x.velocity * dt + 0.5 * acc * dt * dt;
  out.velocity = x.velocity + acc * dt;
  out.pose.rotation = x.pose.rotation * Rotation::exp((m.gyro - x.gyro_bias) * dt);
  out.t = x.t + dt;
  return out;
}

NavState integrate_backward(const NavState& x, const ImuMeasurement& m, double dt, const Vec3& gravity) {
  NavState out = x;
  out.pose.rotation = x.pose.rotation * Rotation::exp(-(m.gyro - x.gyro_bias) * dt);
  const Vec3 acc = out.pose.rotation * (m.accel - x.accel_bias) + gravity;
  out.velocity = x.velocity - acc * dt;
  out.pose.translation = x.pose.translation - x.velocity * dt + 0.5 * acc * dt * dt;
  out.t = x.t - dt;
  return out;
}

ImuMeasurement interpolate_imu(std::span<const ImuSample> imu, double t) {
  if (imu.empty()) return {};
  if (t <= imu.front().t) return {imu.front().gyro, imu.front().accel};
  if (t >= imu.back().t) return {imu.back().gyro, imu.back().accel};
  const auto it = std::upper_bound(imu.begin(), imu.end(), t, [](double v, const ImuSample& s) { return v < s.t; });
  const ImuSample& b = *it;
  const ImuSample& a = *(it - 1);
  const double f = (t - a.t) / (b.t - a.t);
  return {(1 - f) * a.gyro + f * b.gyro, (1 - f) * a.accel + f * b.accel};
}

void check_imu_coverage(std::span<const ImuSample> imu, double t0, double t1) {
  if (imu.size() < 2) throw ImuGap("fewer than two IMU samples");
  std::vector<double> dts;
  dts.reserve(imu.size() - 1);
  for (size_t i = 1; i < imu.size(); ++i) dts.push_back(imu[i].t - imu[i - 1].t);
  std::nth_element(dts.begin(), dts.begin() + dts.size() / 2, dts.end());
  const double limit = 2.0 * dts[dts.size() / 2] + 1e-9;

  std::ostringstream os;
  if (imu.front().t > t0 + limit || imu.back().t < t1 - limit) {
    os << "stream [" << imu.front().t << ", " << imu.back().t << "] does not cover [" << t0 << ", " << t1 << "]";
    throw ImuGap(os.str());
  }
  for (size_t i = 1; i < imu.size(); ++i) {
    if (imu[i].t < t0 || imu[i - 1].t > t1) continue;
    if (imu[i].t - imu[i - 1].t > limit) {
      os << "hole of " << imu[i].t - imu[i - 1].t << " s at t=" << imu[i - 1].t;
      throw ImuGap(os.str());
    }
  }
}

std::vector<double> integration_nodes(std::span<const ImuSample> imu, double t0, double t1) {
  std::vector<double> nodes{t0};
  const auto first = std::upper_bound(imu.begin(), imu.end(), t0, [](double v, const ImuSample& s) { return v < s.t; });
  for (auto it = first; it != imu.end() && it->t < t1; ++it) nodes.push_back(it->t);
  if (t1 > t0) nodes.push_back(t1);
  return nodes;
}

}  // namespace lvi
