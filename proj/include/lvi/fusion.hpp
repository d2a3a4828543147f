#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "lvi/nav_state.hpp"

namespace lvi::fusion {

/// Continuous-time IMU noise: white-noise densities and bias random walks.
struct ImuNoise {
  double gyro_noise = 1.7e-4;       // rad/s/sqrt(Hz)
  double accel_noise = 2.0e-3;      // m/s^2/sqrt(Hz)
  double gyro_bias_walk = 2.0e-5;   // rad/s^2/sqrt(Hz)
  double accel_bias_walk = 3.0e-4;  // m/s^3/sqrt(Hz)
};

struct Belief {
  NavState state;
  StateMatrix cov = StateMatrix::Identity() * 1e-6;
};

/// First-order error-state transition of one integrate_forward step.
StateMatrix transition(const NavState& x, const ImuMeasurement& m, double dt);

/// Integrates the IMU from belief.state.t to t_end (midpoint-interpolated
/// readings between samples). Throws ImuGap.
Belief propagate(const Belief& belief, std::span<const ImuSample> imu, double t_end, const ImuNoise& noise,
                 const Vec3& gravity = Vec3(0, 0, -9.81));

/// Huber weight: 1 inside the knee (|r| / sigma <= kappa), kappa sigma / |r| outside.
double robustify(double r, double sigma, double kappa = 1.345);
/// Matching Huber cost of the normalized residual s = r / sigma.
double huber_cost(double s, double kappa);

/// Stacked residual with its Jacobian wrt the 15-dim error state.
struct ResidualBlock {
  Eigen::VectorXd r;
  Eigen::MatrixXd jacobian;  // r.size() x 15
};

/// Re-evaluated at every iterate; nullopt means the residual is skipped there.
struct Residual {
  std::function<std::optional<ResidualBlock>(const NavState&)> eval;
  double sigma = 1.0;
};

struct UpdateParams {
  int max_iter = 10;
  double tol = 1e-6;
  double kappa = 1.345;  // Huber knee in sigmas; <= 0 disables robustification
  int max_halvings = 5;
  /// Multiplies the prior information. Zero turns the update into a plain
  /// Gauss-Newton solve over the pose alone.
  double prior_weight = 1.0;
  double max_condition = 1e12;
};

struct UpdateReport {
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  std::vector<double> costs;  // after each iteration
  size_t residuals_used = 0;
  size_t rows_used = 0;
};

/// Iterated error-state update. Throws AllResidualsRejected and SolverSingular.
Belief iekf_update(const Belief& prior, std::span<const Residual> residuals, const UpdateParams& params,
                   UpdateReport* report = nullptr);

/// Pose-columns helper for residuals that only see the pose.
ResidualBlock pose_block(Eigen::VectorXd r, const Eigen::Matrix<double, Eigen::Dynamic, 6>& j);

}  // namespace lvi::fusion
