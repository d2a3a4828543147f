#include "lvi/fusion.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>

#include "lvi/errors.hpp"

namespace lvi::fusion {

StateMatrix transition(const NavState& x, const ImuMeasurement& m, double dt) {
  const Vec3 w = (m.gyro - x.gyro_bias) * dt;
  const Vec3 f = m.accel - x.accel_bias;
  const Mat3 r = x.pose.rotation.matrix();
  const Mat3 et = Rotation::exp(w).matrix().transpose();
  const Mat3 fx = skew(f);

  StateMatrix F = StateMatrix::Identity();
  F.block<3, 3>(0, 0) = et;
  F.block<3, 3>(0, 9) = -so3_right_jacobian(w) * dt;
  F.block<3, 3>(3, 0) = -0.5 * dt * dt * et * fx;
  F.block<3, 3>(3, 3) = et;
  F.block<3, 3>(3, 6) = dt * et * r.transpose();
  F.block<3, 3>(3, 12) = -0.5 * dt * dt * et;
  F.block<3, 3>(6, 0) = -dt * r * fx;
  F.block<3, 3>(6, 12) = -dt * r;
  return F;
}

Belief propagate(const Belief& belief, std::span<const ImuSample> imu, double t_end, const ImuNoise& noise,
                 const Vec3& gravity) {
  const double t0 = belief.state.t;
  if (t_end <= t0) return belief;
  check_imu_coverage(imu, t0, t_end);
  const std::vector<double> nodes = integration_nodes(imu, t0, t_end);
  Belief out = belief;
  for (size_t i = 1; i < nodes.size(); ++i) {
    const double dt = nodes[i] - nodes[i - 1];
    if (dt <= 0.0) continue;
    const ImuMeasurement m = interpolate_imu(imu, 0.5 * (nodes[i - 1] + nodes[i]));
    const StateMatrix F = transition(out.state, m, dt);
    out.state = integrate_forward(out.state, m, dt, gravity);
    out.cov = F * out.cov * F.transpose();
    const auto add = [&](int row, double density) { out.cov.block<3, 3>(row, row).diagonal().array() += density * density * dt; };
    add(0, noise.gyro_noise);
    add(6, noise.accel_noise);
    add(9, noise.gyro_bias_walk);
    add(12, noise.accel_bias_walk);
  }
  out.state.t = t_end;
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  return out;
}

double robustify(double r, double sigma, double kappa) {
  const double s = std::abs(r) / sigma;
  return s <= kappa ? 1.0 : kappa / s;
}

double huber_cost(double s, double kappa) {
  const double a = std::abs(s);
  return a <= kappa ? a * a : 2.0 * kappa * a - kappa * kappa;
}

ResidualBlock pose_block(Eigen::VectorXd r, const Eigen::Matrix<double, Eigen::Dynamic, 6>& j) {
  ResidualBlock b;
  b.jacobian = Eigen::MatrixXd::Zero(r.size(), kStateDim);
  b.jacobian.leftCols<6>() = j;
  b.r = std::move(r);
  return b;
}

namespace {

struct Evaluation {
  std::vector<std::optional<ResidualBlock>> blocks;
  double cost = 0.0;
  bool complete = true;  // no active residual turned into a skip
};

Evaluation evaluate(std::span<const Residual> residuals, const std::vector<char>& active, const NavState& x,
                    double kappa, bool with_blocks) {
  Evaluation ev;
  ev.blocks.resize(residuals.size());
  for (size_t i = 0; i < residuals.size(); ++i) {
    if (!active[i]) continue;
    auto b = residuals[i].eval(x);
    if (!b) {
      ev.complete = false;
      continue;
    }
    for (Eigen::Index k = 0; k < b->r.size(); ++k) {
      const double s = b->r(k) / residuals[i].sigma;
      ev.cost += kappa > 0 ? huber_cost(s, kappa) : s * s;
    }
    if (with_blocks) ev.blocks[i] = std::move(b);
  }
  return ev;
}

Mat6 prior_chart(const ErrorState& e) { return se3_right_jacobian_inverse(Twist(Vec6(e.head<6>()))); }

double prior_cost(const ErrorState& e, const StateMatrix& info) { return e.dot(info * e); }

}  // namespace

Belief iekf_update(const Belief& prior, std::span<const Residual> residuals, const UpdateParams& params,
                   UpdateReport* report) {
  const bool pose_only = params.prior_weight == 0.0;
  const int dim = pose_only ? 6 : kStateDim;
  StateMatrix info = StateMatrix::Zero();
  if (!pose_only) {
    info = params.prior_weight * prior.cov.ldlt().solve(StateMatrix::Identity());
    info = 0.5 * (info + info.transpose()).eval();
  }

  std::vector<char> active(residuals.size(), 0);
  size_t n_active = 0;
  for (size_t i = 0; i < residuals.size(); ++i) {
    if (residuals[i].eval(prior.state)) {
      active[i] = 1;
      ++n_active;
    }
  }
  if (n_active == 0) throw AllResidualsRejected(std::to_string(residuals.size()) + " residuals, none usable");

  const auto total_cost = [&](const NavState& x, Evaluation& ev) {
    return ev.cost + (pose_only ? 0.0 : prior_cost(boxminus(x, prior.state), info));
  };

  NavState x = prior.state;
  Evaluation ev = evaluate(residuals, active, x, params.kappa, true);
  double cost = total_cost(x, ev);
  UpdateReport rep;
  rep.initial_cost = cost;
  Eigen::MatrixXd normal;

  const auto assemble = [&](const NavState& at, const Evaluation& e, Eigen::VectorXd& g) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(dim, dim);
    g = Eigen::VectorXd::Zero(dim);
    for (size_t i = 0; i < residuals.size(); ++i) {
      if (!e.blocks[i]) continue;
      const ResidualBlock& b = *e.blocks[i];
      const double sigma = residuals[i].sigma;
      Eigen::VectorXd w(b.r.size());
      for (Eigen::Index k = 0; k < b.r.size(); ++k) {
        w(k) = (params.kappa > 0 ? robustify(b.r(k), sigma, params.kappa) : 1.0) / (sigma * sigma);
      }
      const auto j = b.jacobian.leftCols(dim);
      a.noalias() += j.transpose() * w.asDiagonal() * j;
      g.noalias() += j.transpose() * w.cwiseProduct(b.r);
    }
    if (!pose_only) {
      const ErrorState d = boxminus(at, prior.state);
      StateMatrix jc = StateMatrix::Identity();
      jc.topLeftCorner<6, 6>() = prior_chart(d);
      a += jc.transpose() * info * jc;
      g += jc.transpose() * info * d;
    }
    return a;
  };

  for (int it = 0; it < params.max_iter; ++it) {
    Eigen::VectorXd g;
    normal = assemble(x, ev, g);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(normal, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || hi / lo > params.max_condition) {
      throw SolverSingular("normal matrix condition " + std::to_string(lo > 0 ? hi / lo : INFINITY));
    }
    const Eigen::VectorXd delta = normal.ldlt().solve(-g);
    ++rep.iterations;

    // Step halving while the cost goes up.
    double scale = 1.0;
    bool accepted = false;
    for (int h = 0; h <= params.max_halvings; ++h, scale *= 0.5) {
      ErrorState step = ErrorState::Zero();
      step.head(dim) = scale * delta;
      const NavState trial = boxplus(x, step);
      Evaluation tev = evaluate(residuals, active, trial, params.kappa, true);
      if (!tev.complete) {
        // Residuals that lost their association drop out; compare on the common set.
        size_t dropped = 0;
        for (size_t i = 0; i < residuals.size(); ++i) {
          if (active[i] && !tev.blocks[i]) {
            active[i] = 0;
            ++dropped;
          }
        }
        if (dropped == n_active) break;
        n_active -= dropped;
        ev = evaluate(residuals, active, x, params.kappa, true);
        if (!ev.complete) {
          for (size_t i = 0; i < residuals.size(); ++i) {
            if (active[i] && !ev.blocks[i]) {
              active[i] = 0;
              --n_active;
            }
          }
        }
        cost = total_cost(x, ev);
        tev = evaluate(residuals, active, trial, params.kappa, true);
        if (!tev.complete) continue;
      }
      const double tcost = total_cost(trial, tev);
      if (tcost <= cost) {
        x = trial;
        ev = std::move(tev);
        cost = tcost;
        accepted = true;
        break;
      }
    }
    rep.costs.push_back(cost);
    if (!accepted || delta.norm() * scale < params.tol) break;
  }

  Eigen::VectorXd g;
  normal = assemble(x, ev, g);
  Belief out;
  out.state = x;
  if (pose_only) {
    out.cov = prior.cov;
    out.cov.topLeftCorner<6, 6>() = normal.inverse();
  } else {
    out.cov = normal.ldlt().solve(Eigen::MatrixXd::Identity(kStateDim, kStateDim));
  }
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  const Eigen::SelfAdjointEigenSolver<StateMatrix> check(out.cov, Eigen::EigenvaluesOnly);
  if (check.eigenvalues().minCoeff() <= 1e-15) {
    out.cov.diagonal().array() += 1e-15 - std::min(0.0, check.eigenvalues().minCoeff());
  }

  rep.final_cost = cost;
  for (size_t i = 0; i < residuals.size(); ++i) {
    if (!ev.blocks[i]) continue;
    ++rep.residuals_used;
    rep.rows_used += static_cast<size_t>(ev.blocks[i]->r.size());
  }
  if (report) *report = rep;
  return out;
}

}  // namespace lvi::fusion
