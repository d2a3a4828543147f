#include <gtest/gtest.h>

#include <random>

#include "lvi/errors.hpp"
#include "lvi/nav_state.hpp"
#include "lvi/worldsim.hpp"
#include "test_support.hpp"

using namespace lvi;

namespace {

const Vec3 kGravity(0, 0, -9.81);

NavState random_state(std::mt19937& rng) {
  NavState x;
  x.pose = test::random_pose(rng);
  x.velocity = test::random_vec3(rng, 2.0);
  x.gyro_bias = test::random_vec3(rng, 0.01);
  x.accel_bias = test::random_vec3(rng, 0.1);
  x.t = 3.0;
  return x;
}

}  // namespace

TEST(NavState, BoxplusBoxminusRoundTrip) {
  std::mt19937 rng(3);
  for (int i = 0; i < 200; ++i) {
    const NavState x = random_state(rng);
    ErrorState e;
    for (int k = 0; k < kStateDim; ++k) e(k) = std::normal_distribution<double>(0, 0.3)(rng);
    const ErrorState back = boxminus(boxplus(x, e), x);
    EXPECT_LT((back - e).norm(), 1e-9);
  }
}

TEST(NavState, BackwardUndoesForward) {
  std::mt19937 rng(4);
  for (int i = 0; i < 200; ++i) {
    const NavState x = random_state(rng);
    const ImuMeasurement m{test::random_vec3(rng, 1.0), test::random_vec3(rng, 5.0)};
    const NavState y = integrate_backward(integrate_forward(x, m, 0.01, kGravity), m, 0.01, kGravity);
    EXPECT_LT(boxminus(y, x).norm(), 1e-12);
    EXPECT_NEAR(y.t, x.t, 1e-15);
  }
}

TEST(NavState, FreeFallAndRest) {
  NavState x;
  // Zero specific force: free fall.
  NavState y = integrate_forward(x, {}, 0.5, kGravity);
  EXPECT_NEAR(y.pose.translation.z(), -0.5 * 9.81 * 0.25, 1e-12);
  EXPECT_NEAR(y.velocity.z(), -9.81 * 0.5, 1e-12);
  // Specific force cancelling gravity: at rest.
  y = integrate_forward(x, {Vec3::Zero(), Vec3(0, 0, 9.81)}, 0.5, kGravity);
  EXPECT_LT(y.pose.translation.norm(), 1e-12);
  EXPECT_LT(y.velocity.norm(), 1e-12);
}

TEST(NavState, IntegrationFollowsCircle) {
  const auto traj = sim::circle(Vec3::Zero(), 3.0, 1.5, 4.0);
  const auto imu = sim::synthesize_imu(traj, {}, 1);
  const auto s0 = traj.at(0.5);
  NavState x{s0.pose, s0.velocity};
  x.t = 0.5;
  const auto nodes = integration_nodes(imu, 0.5, 2.5);
  for (size_t i = 1; i < nodes.size(); ++i) {
    x = integrate_forward(x, interpolate_imu(imu, 0.5 * (nodes[i - 1] + nodes[i])), nodes[i] - nodes[i - 1],
                          kGravity);
  }
  const auto s1 = traj.at(2.5);
  EXPECT_NEAR(x.t, 2.5, 1e-12);
  EXPECT_LT(test::translation_distance(x.pose, s1.pose), 2e-3);
  EXPECT_LT(test::rotation_distance(x.pose, s1.pose), 1e-4);
}

TEST(NavState, InterpolateImu) {
  std::vector<ImuSample> imu{{0.0, Vec3(1, 0, 0), Vec3(0, 0, 2)}, {1.0, Vec3(3, 0, 0), Vec3(0, 0, 4)}};
  const ImuMeasurement m = interpolate_imu(imu, 0.25);
  EXPECT_DOUBLE_EQ(m.gyro.x(), 1.5);
  EXPECT_DOUBLE_EQ(m.accel.z(), 2.5);
  EXPECT_DOUBLE_EQ(interpolate_imu(imu, -1.0).gyro.x(), 1.0);
  EXPECT_DOUBLE_EQ(interpolate_imu(imu, 5.0).gyro.x(), 3.0);
}

TEST(NavState, CoverageGapsThrow) {
  std::vector<ImuSample> imu;
  for (int i = 0; i <= 400; ++i) imu.push_back({i * 0.0025, Vec3::Zero(), Vec3::Zero()});
  EXPECT_NO_THROW(check_imu_coverage(imu, 0.1, 0.9));
  EXPECT_THROW(check_imu_coverage(imu, 0.1, 1.5), ImuGap);
  EXPECT_THROW(check_imu_coverage(imu, -0.5, 0.5), ImuGap);
  std::vector<ImuSample> holed;
  for (const auto& s : imu) {
    if (s.t < 0.4 || s.t > 0.42) holed.push_back(s);
  }
  EXPECT_THROW(check_imu_coverage(holed, 0.1, 0.9), ImuGap);
  // A hole outside the interval is fine.
  EXPECT_NO_THROW(check_imu_coverage(holed, 0.5, 0.9));
}

TEST(NavState, IntegrationNodesBracket) {
  std::vector<ImuSample> imu;
  for (int i = 0; i <= 10; ++i) imu.push_back({i * 0.1, Vec3::Zero(), Vec3::Zero()});
  const auto nodes = integration_nodes(imu, 0.25, 0.55);
  ASSERT_EQ(nodes.size(), 5u);
  EXPECT_DOUBLE_EQ(nodes.front(), 0.25);
  EXPECT_DOUBLE_EQ(nodes[1], 0.3);
  EXPECT_DOUBLE_EQ(nodes.back(), 0.55);
}
