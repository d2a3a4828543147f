#include "lvi/pipeline.hpp"

#include <chrono>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <tuple>

#include <nlohmann/json.hpp>

#include "lvi/errors.hpp"
#include "lvi/fusion.hpp"
#include "lvi/lio.hpp"
#include "lvi/loopclosure.hpp"
#include "lvi/metrics.hpp"
#include "lvi/vio.hpp"

namespace lvi {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

/// Accumulates elapsed time into a stage slot on scope exit.
class StageTimer {
 public:
  explicit StageTimer(double& slot) : slot_(slot), t0_(Clock::now()) {}
  ~StageTimer() { slot_ += ms_since(t0_); }
  StageTimer(const StageTimer&) = delete;
  StageTimer& operator=(const StageTimer&) = delete;

 private:
  double& slot_;
  Clock::time_point t0_;
};

// Yaw-free part of a rotation: R = Rz(yaw) * level.
Rotation level_part(const Rotation& r) {
  const Mat3 m = r.matrix();
  const double yaw = std::atan2(m(1, 0), m(0, 0));
  return Rotation::exp(Vec3(0, 0, -yaw)) * r;
}

// First point per grid cell, in input order.
template <typename Get>
std::vector<size_t> grid_subsample(size_t n, Get&& get, double cell) {
  std::vector<size_t> keep;
  if (cell <= 0.0) {
    keep.resize(n);
    std::iota(keep.begin(), keep.end(), 0);
    return keep;
  }
  std::map<std::tuple<long, long, long>, bool> seen;
  for (size_t i = 0; i < n; ++i) {
    const Vec3 p = get(i);
    const auto key = std::make_tuple(std::lround(std::floor(p.x() / cell)), std::lround(std::floor(p.y() / cell)),
                                     std::lround(std::floor(p.z() / cell)));
    if (seen.emplace(key, true).second) keep.push_back(i);
  }
  return keep;
}

constexpr double kReassociate = 0.05;  // m

struct Keyframe {
  int node = 0;
  int scan_id = 0;
  Pose pose;
  Rotation level;
  loop::FeatureCloud features;  // level frame
};

// Every frame hangs off the latest keyframe so back-end corrections carry over.
struct FrameAnchor {
  double t;
  size_t keyframe;
  Pose relative;
  std::vector<Vec3> cloud;  // IMU frame, thinned
  std::vector<float> intensity;
};

class Runner {
 public:
  Runner(const RunConfig& cfg, const Dataset& data)
      : cfg_(cfg), data_(data), map_(cfg.map.voxel, cfg.map.voxel_cap) {
    extr_ = data.calib.extrinsics;
    if (cfg.imu_from_lidar) extr_.imu_from_lidar = *cfg.imu_from_lidar;
    if (cfg.imu_from_camera) extr_.imu_from_camera = *cfg.imu_from_camera;
    gravity_ = data.calib.gravity;
    report_.mode = to_string(cfg.mode);
  }

  RunResult run(const ProgressFn& progress) {
    const auto events = merge_events(data_);
    FrameTiming pending;
    auto frame_start = Clock::now();
    bool frame_open = false;
    size_t frame_index = 0;
    for (const Event& ev : events) {
      if (ev.kind == Event::Kind::Imu) continue;
      if (ev.kind == Event::Kind::Image && !uses_visual_residuals(cfg_.mode)) continue;
      if (!frame_open) {
        frame_start = Clock::now();
        pending = FrameTiming{};
        load_ms_ = 0.0;
        frame_open = true;
      }
      try {
        if (ev.kind == Event::Kind::Image) {
          process_image(ev.index, pending);
        } else {
          process_scan(ev.index, pending);
          pending.t = data_.scans[ev.index].end;
          // Sensor data loading (disk or simulator) is not estimator time.
          pending.total_ms = ms_since(frame_start) - load_ms_;
          report_.frames.push_back(pending);
          frame_open = false;
          if (progress) progress(++frame_index, data_.scans.size());
        }
      } catch (const Error& e) {
        throw Error("frame " + std::to_string(report_.frames.size()) + ": " + e.what());
      }
    }
    return finish();
  }

 private:
  void initialize(double t) {
    // Gravity direction from the mean specific force over the first 0.2 s; yaw = 0.
    Vec3 f = Vec3::Zero();
    int count = 0;
    for (const ImuSample& s : data_.imu) {
      if (s.t > t + 0.2 && count > 0) break;
      f += s.accel;
      ++count;
    }
    if (count == 0) throw ImuGap("no IMU samples");
    const Eigen::Quaterniond q = Eigen::Quaterniond::FromTwoVectors(f.normalized(), -gravity_.normalized());
    belief_.state = NavState{};
    belief_.state.pose = Pose(Rotation(q), Vec3::Zero());
    belief_.state.t = t;
    belief_.cov = StateMatrix::Zero();
    belief_.cov.block<3, 3>(0, 0).setIdentity() *= 1e-4;
    belief_.cov.block<3, 3>(3, 3).setIdentity() *= 1e-6;
    belief_.cov.block<3, 3>(6, 6).setIdentity() *= 1e-2;
    belief_.cov.block<3, 3>(9, 9).setIdentity() *= 1e-5;
    belief_.cov.block<3, 3>(12, 12).setIdentity() *= 1e-2;
    initialized_ = true;
  }

  void propagate_to(double t) {
    if (t > belief_.state.t) belief_ = fusion::propagate(belief_, data_.imu, t, cfg_.imu, gravity_);
  }

  fusion::UpdateParams update_params() const {
    fusion::UpdateParams p;
    p.max_iter = cfg_.iekf.max_iter;
    p.tol = cfg_.iekf.tol;
    p.kappa = cfg_.iekf.kappa;
    return p;
  }

  // Returns rows consumed; rejected updates fall back to the propagated prior.
  size_t update(const std::vector<fusion::Residual>& residuals, const char* what) {
    if (residuals.empty()) return 0;
    fusion::UpdateReport rep;
    try {
      belief_ = fusion::iekf_update(belief_, residuals, update_params(), &rep);
    } catch (const AllResidualsRejected&) {
      ++report_.imu_only_fallbacks;
      report_.warnings.push_back("t=" + std::to_string(belief_.state.t) + ": all " + what +
                                 " residuals rejected, IMU-only propagation");
      return 0;
    }
    return rep.rows_used;
  }

  void process_scan(size_t index, FrameTiming& timing) {
    LidarScan scan;
    {
      StageTimer st(load_ms_);
      scan = data_.load_scan(index);
    }
    if (!initialized_) initialize(scan.end);
    {
      StageTimer st(timing.propagate_ms);
      propagate_to(scan.end);
    }
    LidarScan deskewed;
    {
      StageTimer st(timing.deskew_ms);
      deskewed = lio::deskew_scan(scan, data_.imu, belief_.state, extr_, gravity_);
    }
    if (uses_lidar_residuals(cfg_.mode) && !map_.empty()) {
      StageTimer st(timing.lidar_update_ms);
      lidar_update(deskewed);
    }
    bool loop_closed = false;
    bool new_keyframe = false;
    {
      StageTimer st(timing.map_ms);
      new_keyframe = maybe_add_keyframe(deskewed);
    }
    if (new_keyframe && uses_loop_closure(cfg_.mode)) {
      StageTimer st(timing.loop_ms);
      loop_closed = detect_loop();
    }
    if (new_keyframe && uses_backend(cfg_.mode)) {
      const int node = keyframes_.back().node;
      if (loop_closed || (node > 0 && node % cfg_.backend.interval == 0)) {
        StageTimer st(timing.backend_ms);
        run_backend(loop_closed);
      }
    }
    StageTimer st(timing.map_ms);
    const Keyframe& kf = keyframes_.back();
    FrameAnchor a{scan.end, keyframes_.size() - 1, kf.pose.inverse() * belief_.state.pose, {}, {}};
    std::vector<Vec3> body(deskewed.points.size());
    for (size_t i = 0; i < body.size(); ++i) body[i] = extr_.imu_from_lidar * deskewed.points[i].p;
    for (size_t i : grid_subsample(body.size(), [&](size_t i) { return body[i]; }, cfg_.map.insert_grid)) {
      a.cloud.push_back(body[i]);
      a.intensity.push_back(static_cast<float>(deskewed.points[i].intensity));
    }
    insert_frame(a, belief_.state.pose);
    anchors_.push_back(std::move(a));
  }

  void insert_frame(const FrameAnchor& a, const Pose& pose) {
    for (size_t i = 0; i < a.cloud.size(); ++i) {
      const Vec3 w = pose * a.cloud[i];
      if (cfg_.map.min_spacing > 0.0 && map_.any_within(w, cfg_.map.min_spacing)) continue;
      map_.insert(w, a.intensity[i]);
    }
  }

  void lidar_update(const LidarScan& scan) {
    std::vector<Vec3> candidates;
    candidates.reserve(scan.points.size());
    for (const LidarPoint& p : scan.points) candidates.push_back(p.p);
    auto keep = grid_subsample(candidates.size(), [&](size_t i) { return candidates[i]; }, cfg_.lio.downsample);
    if (keep.size() > cfg_.lio.max_points) {
      std::vector<size_t> strided;
      const double step = static_cast<double>(keep.size()) / static_cast<double>(cfg_.lio.max_points);
      for (size_t k = 0; k < cfg_.lio.max_points; ++k) strided.push_back(keep[static_cast<size_t>(k * step)]);
      keep.swap(strided);
    }
    lio::AssociationParams assoc;
    assoc.k = cfg_.lio.knn;
    assoc.radius = cfg_.lio.radius;
    assoc.plane.max_residual = cfg_.lio.plane_threshold;
    std::vector<fusion::Residual> residuals;
    residuals.reserve(keep.size());
    // Neighbour search is redone only once the point has moved a few centimetres.
    struct Cached {
      Vec3 at = Vec3::Constant(std::numeric_limits<double>::infinity());
      std::optional<lio::PlaneLandmark> plane;
    };
    for (size_t i : keep) {
      const Vec3 p = candidates[i];
      auto cache = std::make_shared<Cached>();
      residuals.push_back({[this, p, assoc, cache](const NavState& x) -> std::optional<fusion::ResidualBlock> {
                             const Vec3 w = x.pose * (extr_.imu_from_lidar * p);
                             if ((w - cache->at).squaredNorm() > kReassociate * kReassociate) {
                               cache->at = w;
                               cache->plane = lio::associate(map_, w, assoc);
                             }
                             const auto& plane = cache->plane;
                             if (!plane) return std::nullopt;
                             const auto r = lio::point_to_plane_residual(x, extr_, p, *plane);
                             return fusion::pose_block(Eigen::VectorXd::Constant(1, r.r), r.jacobian);
                           },
                           cfg_.lio.sigma});
    }
    report_.lidar_residuals += update(residuals, "lidar");
  }

  bool maybe_add_keyframe(const LidarScan& scan) {
    const Pose& pose = belief_.state.pose;
    if (!keyframes_.empty()) {
      const Pose d = keyframes_.back().pose.inverse() * pose;
      if (d.translation.norm() < cfg_.keyframe.translation &&
          d.rotation.angle() < cfg_.keyframe.rotation_deg * M_PI / 180.0) {
        return false;
      }
    }
    Keyframe kf;
    kf.node = static_cast<int>(keyframes_.size());
    kf.scan_id = scan.id;
    kf.pose = pose;
    kf.level = level_part(pose.rotation);
    if (uses_loop_closure(cfg_.mode)) {
      LidarScan level = scan;
      for (LidarPoint& p : level.points) p.p = kf.level * (extr_.imu_from_lidar * p.p);
      kf.features = loop::extract_features(level, cfg_.lio.beta, cfg_.lio.n);
      loop::DescriptorParams dp;
      dp.rings = cfg_.loop.rings;
      dp.sectors = cfg_.loop.sectors;
      dp.max_range = cfg_.loop.max_range;
      pending_descriptor_ = loop::describe(level, dp);
    }
    graph_.add_node(kf.node, pose, scan.end);
    if (kf.node == 0) {
      graph_.add_unary({0, pose, Mat6::Identity() * 1e6});
    } else {
      const Keyframe& prev = keyframes_.back();
      Mat6 info = Mat6::Zero();
      info.diagonal().head<3>().setConstant(1.0 / std::pow(cfg_.backend.odometry_sigma_r, 2));
      info.diagonal().tail<3>().setConstant(1.0 / std::pow(cfg_.backend.odometry_sigma_t, 2));
      graph_.add_binary({prev.node, kf.node, prev.pose.inverse() * pose, info, graph::FactorKind::Odometry});
    }
    keyframes_.push_back(std::move(kf));
    ++report_.keyframes;
    return true;
  }

  bool detect_loop() {
    Keyframe& q = keyframes_.back();
    loop::RetrieveParams rp;
    rp.k = static_cast<size_t>(cfg_.loop.k);
    rp.exclusion = static_cast<size_t>(cfg_.loop.exclusion);
    const auto candidates = loop::retrieve(store_, q.node, pending_descriptor_, rp);
    store_.add(q.node, pending_descriptor_);
    loop::RefineParams refine;
    refine.max_mean_residual = cfg_.loop.max_mean_residual;
    refine.min_inlier_fraction = cfg_.loop.min_inlier_fraction;
    for (const loop::LoopCandidate& c : candidates) {
      if (c.overlap < cfg_.loop.threshold) break;
      ++report_.loops_attempted;
      const Keyframe& m = keyframes_[static_cast<size_t>(c.match)];
      const auto r = loop::refine(q.features, m.features, -c.yaw, refine);
      if (!r) continue;
      const Pose z = Pose(m.level.inverse(), Vec3::Zero()) * r->match_from_query * Pose(q.level, Vec3::Zero());
      const Pose predicted = m.pose.inverse() * q.pose;
      if ((predicted.translation - z.translation).norm() > cfg_.loop.max_correction) continue;
      graph_.add_binary(loop::emit_factor(m.node, q.node, z, r->inlier_fraction, cfg_.loop.information_scale));
      ++report_.loops_accepted;
      return true;
    }
    return false;
  }

  void run_backend(bool rebuild) {
    graph::OptimizeParams op;
    op.max_iter = cfg_.backend.max_iter;
    graph::optimize(graph_, op);
    ++report_.backend_runs;
    const Pose before = keyframes_.back().pose;
    for (Keyframe& kf : keyframes_) kf.pose = graph_.node(kf.node).estimate;
    const Pose correction = keyframes_.back().pose * before.inverse();
    if (log(correction).vector().norm() < 1e-12) return;
    belief_.state.pose = correction * belief_.state.pose;
    belief_.state.velocity = correction.rotation * belief_.state.velocity;
    if (rebuild) {
      map_.clear();
      for (const FrameAnchor& a : anchors_) insert_frame(a, keyframes_[a.keyframe].pose * a.relative);
      visual_points_.clear();
    }
  }

  void process_image(size_t index, FrameTiming& timing) {
    const double t = data_.images[index].t;
    if (!initialized_) initialize(t);
    {
      StageTimer st(timing.propagate_ms);
      propagate_to(t);
    }
    vio::Frame frame{t, {}, data_.calib.camera};
    {
      StageTimer st(load_ms_);
      frame.image = data_.load_image(index);
    }
    StageTimer st(timing.visual_update_ms);
    if (!visual_points_.empty()) {
      std::vector<fusion::Residual> residuals;
      residuals.reserve(visual_points_.size());
      for (const vio::VisualPoint& vp : visual_points_) {
        residuals.push_back({[this, &vp, &frame](const NavState& x) -> std::optional<fusion::ResidualBlock> {
                               const auto r = vio::photometric_residual(x, extr_, vp, frame);
                               if (!r) return std::nullopt;
                               return fusion::pose_block(r->r, r->jacobian);
                             },
                             cfg_.vio.sigma});
      }
      report_.visual_residuals += update(residuals, "visual");
    }
    // Track survivors into this frame, then top up from the map.
    const Pose cam = vio::camera_pose(belief_.state, extr_);
    const Pose cam_inv = cam.inverse();
    std::vector<vio::Pixel> occupied;
    std::vector<vio::VisualPoint> kept;
    for (vio::VisualPoint& vp : visual_points_) {
      const auto r = vio::photometric_residual(belief_.state, extr_, vp, frame);
      if (!r || std::sqrt(r->r.squaredNorm() / static_cast<double>(r->r.size())) > cfg_.vio.max_rms) continue;
      const auto uv = vio::project(frame.model, cam_inv * vp.p);
      if (!uv) continue;
      const Vec3 dir = (vp.p - cam.translation).normalized();
      double closest = M_PI;
      for (const vio::Observation& o : vp.observations) {
        closest = std::min(closest, std::acos(std::clamp(dir.dot((vp.p - o.world_from_camera.translation).normalized()), -1.0, 1.0)));
      }
      if (closest > cfg_.vio.min_view_angle_deg * M_PI / 180.0) {
        auto patch = vio::sample_patch(frame.image, *uv, vp.patch_size);
        if (!patch) continue;
        vp.observations.push_back({std::move(*patch), cam, t});
        if (vp.observations.size() > cfg_.vio.max_observations) vp.observations.erase(vp.observations.begin());
      }
      vp.reference = vio::select_reference(vp.p, vp.observations, cam.translation);
      occupied.push_back(*uv);
      kept.push_back(std::move(vp));
    }
    visual_points_ = std::move(kept);
    if (visual_points_.size() < cfg_.vio.budget && !map_.empty()) {
      vio::HarvestParams hp;
      hp.budget = cfg_.vio.budget - visual_points_.size();
      hp.min_gradient = cfg_.vio.min_gradient;
      hp.grid = cfg_.vio.grid;
      hp.patch_size = cfg_.vio.patch_size;
      hp.max_depth = cfg_.vio.max_depth;
      for (auto& vp : vio::harvest_points(map_, frame, belief_.state, extr_, hp, occupied)) {
        visual_points_.push_back(std::move(vp));
      }
    }
  }

  RunResult finish() {
    RunResult out;
    for (const FrameAnchor& a : anchors_) {
      out.trajectory.push_back({a.t, keyframes_[a.keyframe].pose * a.relative});
    }
    report_.map_points = map_.size();
    if (data_.groundtruth && out.trajectory.size() >= 2) {
      try {
        const AteResult ate = evaluate_ate(out.trajectory, *data_.groundtruth);
        report_.ate_rmse = ate.rmse;
        report_.ate_errors = ate.errors;
        const RpeResult rpe = evaluate_rpe(out.trajectory, *data_.groundtruth);
        report_.rpe_m = rpe.translation_rmse;
        report_.rpe_deg = rpe.rotation_rmse_deg;
      } catch (const NoOverlap& e) {
        report_.warnings.push_back(std::string("ground truth not evaluated: ") + e.what());
      }
    }
    out.map = std::move(map_);
    out.graph = std::move(graph_);
    out.report = std::move(report_);
    return out;
  }

  const RunConfig& cfg_;
  const Dataset& data_;
  Extrinsics extr_;
  Vec3 gravity_;
  bool initialized_ = false;
  double load_ms_ = 0.0;
  fusion::Belief belief_;
  PointMap map_;
  graph::PoseGraph graph_;
  loop::DescriptorStore store_;
  loop::ScanDescriptor pending_descriptor_;
  std::vector<Keyframe> keyframes_;
  std::vector<FrameAnchor> anchors_;
  std::vector<vio::VisualPoint> visual_points_;
  RunReport report_;
};

}  // namespace

double RunReport::mean_frame_ms() const {
  if (frames.empty()) return 0.0;
  double s = 0.0;
  for (const FrameTiming& f : frames) s += f.total_ms;
  return s / static_cast<double>(frames.size());
}

RunResult run(const RunConfig& config, const Dataset& data, const ProgressFn& progress) {
  if (data.scans.empty()) throw FormatError("dataset has no scans");
  if (data.imu.size() < 2) throw FormatError("dataset has fewer than 2 IMU samples");
  return Runner(config, data).run(progress);
}

std::string report_json(const RunReport& r, const Trajectory& trajectory) {
  using nlohmann::json;
  json j;
  j["mode"] = r.mode;
  j["frame_count"] = r.frames.size();
  j["mean_frame_ms"] = r.mean_frame_ms();
  j["ate_rmse_m"] = r.ate_rmse ? json(*r.ate_rmse) : json(nullptr);
  j["rpe_m"] = r.rpe_m ? json(*r.rpe_m) : json(nullptr);
  j["rpe_deg"] = r.rpe_deg ? json(*r.rpe_deg) : json(nullptr);
  j["loops_attempted"] = r.loops_attempted;
  j["loops_accepted"] = r.loops_accepted;
  j["map_points"] = r.map_points;
  j["lidar_residuals"] = r.lidar_residuals;
  j["visual_residuals"] = r.visual_residuals;
  j["keyframes"] = r.keyframes;
  j["backend_runs"] = r.backend_runs;
  j["imu_only_fallbacks"] = r.imu_only_fallbacks;
  j["warnings"] = r.warnings;
  json frames = json::array();
  for (const FrameTiming& f : r.frames) {
    frames.push_back({{"t", f.t},
                      {"total_ms", f.total_ms},
                      {"propagate_ms", f.propagate_ms},
                      {"deskew_ms", f.deskew_ms},
                      {"lidar_update_ms", f.lidar_update_ms},
                      {"visual_update_ms", f.visual_update_ms},
                      {"map_ms", f.map_ms},
                      {"loop_ms", f.loop_ms},
                      {"backend_ms", f.backend_ms}});
  }
  j["frames"] = std::move(frames);
  json traj = json::array();
  for (size_t i = 0; i < trajectory.size(); ++i) {
    const Vec3& p = trajectory[i].pose.translation;
    json row = {{"t", trajectory[i].t}, {"x", p.x()}, {"y", p.y()}, {"z", p.z()}};
    if (i < r.ate_errors.size() && r.ate_errors.size() == trajectory.size()) row["ate_error_m"] = r.ate_errors[i];
    traj.push_back(std::move(row));
  }
  j["trajectory"] = std::move(traj);
  return j.dump(2);
}

}  // namespace lvi
