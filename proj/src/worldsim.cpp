#include "lvi/worldsim.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace lvi::sim {

namespace {

constexpr double kTwoPi = 2.0 * M_PI;

Rotation yaw_rotation(double yaw) { return Rotation::exp(Vec3(0, 0, yaw)); }

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return splitmix(splitmix(splitmix(seed) ^ stream) ^ index);
}

Texture Texture::smooth(std::uint64_t seed) {
  std::mt19937_64 rng(splitmix(seed));
  std::uniform_real_distribution<double> wavelength(0.35, 1.2);
  std::uniform_real_distribution<double> angle(0.0, kTwoPi);
  Texture t;
  t.base = 0.5;
  t.amp1 = std::uniform_real_distribution<double>(0.15, 0.22)(rng);
  t.amp2 = std::uniform_real_distribution<double>(0.08, 0.14)(rng);
  const double k1 = kTwoPi / wavelength(rng), a1 = angle(rng);
  const double k2 = kTwoPi / wavelength(rng), a2 = angle(rng);
  t.ku1 = k1 * std::cos(a1);
  t.kv1 = k1 * std::sin(a1);
  t.ku2 = k2 * std::cos(a2);
  t.kv2 = k2 * std::sin(a2);
  t.phase1 = angle(rng);
  t.phase2 = angle(rng);
  return t;
}

double Texture::operator()(double s, double t) const {
  return base + amp1 * std::sin(ku1 * s + kv1 * t + phase1) + amp2 * std::sin(ku2 * s + kv2 * t + phase2);
}

Patch::Patch(const Vec3& c, const Vec3& u, const Vec3& v, const Texture& tex)
    : corner(c), edge_u(u), edge_v(v), normal(u.cross(v).normalized()), texture(tex) {}

void World::add_wall(const Eigen::Vector2d& a, const Eigen::Vector2d& b, double z0, double z1, const Texture& tex) {
  const Vec3 corner(a.x(), a.y(), z0);
  const Vec3 u(b.x() - a.x(), b.y() - a.y(), 0.0);
  add(Patch(corner, u, Vec3(0, 0, z1 - z0), tex));
}

void World::add_box(const Vec3& lo, const Vec3& hi, std::uint64_t texture_seed) {
  const Vec3 d = hi - lo;
  const Vec3 ex(d.x(), 0, 0), ey(0, d.y(), 0), ez(0, 0, d.z());
  std::uint64_t k = texture_seed;
  add(Patch(lo, ey, ex, Texture::smooth(k++)));                   // bottom
  add(Patch(lo + ez, ex, ey, Texture::smooth(k++)));              // top
  add(Patch(lo, ex, ez, Texture::smooth(k++)));                   // -y face
  add(Patch(lo + ey, ez, ex, Texture::smooth(k++)));              // +y face
  add(Patch(lo, ez, ey, Texture::smooth(k++)));                   // -x face
  add(Patch(lo + ex, ey, ez, Texture::smooth(k++)));              // +x face
}

std::optional<RayHit> World::cast(const Vec3& origin, const Vec3& dir, double max_range) const {
  std::optional<RayHit> best;
  double best_range = max_range;
  for (size_t i = 0; i < patches_.size(); ++i) {
    const Patch& pa = patches_[i];
    const double denom = pa.normal.dot(dir);
    if (std::abs(denom) < 1e-12) continue;
    const double r = pa.normal.dot(pa.corner - origin) / denom;
    if (r <= 1e-9 || r >= best_range) continue;
    const Vec3 rel = origin + r * dir - pa.corner;
    const double lu = pa.edge_u.norm(), lv = pa.edge_v.norm();
    const double s = rel.dot(pa.edge_u) / lu;
    const double t = rel.dot(pa.edge_v) / lv;
    if (s < -1e-9 || s > lu + 1e-9 || t < -1e-9 || t > lv + 1e-9) continue;
    best_range = r;
    best = RayHit{r, static_cast<int>(i), s, t};
  }
  return best;
}

double World::distance_to_surface(const Vec3& p, double margin) const {
  double best = std::numeric_limits<double>::infinity();
  for (const Patch& pa : patches_) {
    const Vec3 rel = p - pa.corner;
    const double lu = pa.edge_u.norm(), lv = pa.edge_v.norm();
    const double s = rel.dot(pa.edge_u) / lu, t = rel.dot(pa.edge_v) / lv;
    if (s < -margin || s > lu + margin || t < -margin || t > lv + margin) continue;
    best = std::min(best, std::abs(pa.signed_distance(p)));
  }
  return best;
}

World cube_room(double side, bool textured, std::uint64_t texture_seed) {
  World w;
  const double h = side / 2.0;
  const auto tex = [&](int k) { return textured ? Texture::smooth(texture_seed + k) : Texture::uniform(0.5); };
  const Vec3 lo(-h, -h, -h);
  const Vec3 ex(side, 0, 0), ey(0, side, 0), ez(0, 0, side);
  w.add(Patch(lo, ex, ey, tex(0)));       // floor, normal +z
  w.add(Patch(lo + ez, ey, ex, tex(1)));  // ceiling, normal -z
  w.add(Patch(lo, ez, ex, tex(2)));       // y = -h, normal +y
  w.add(Patch(lo + ey, ex, ez, tex(3)));  // y = +h, normal -y
  w.add(Patch(lo, ey, ez, tex(4)));       // x = -h, normal +x
  w.add(Patch(lo + ex, ez, ey, tex(5)));  // x = +h, normal -x
  return w;
}

World corner_world(double length) {
  World w;
  w.add_wall({0, 0}, {length, 0}, -5.0, 5.0, Texture::smooth(11));
  w.add_wall({0, 0}, {0, length}, -5.0, 5.0, Texture::smooth(12));
  return w;
}

World corridor_world(double length, double width, double height, bool close_ends, std::uint64_t texture_seed) {
  World w;
  const double hw = width / 2.0;
  std::uint64_t k = texture_seed;
  // Walls in 5 m panels so that each panel carries its own texture.
  const int panels = std::max(1, static_cast<int>(std::ceil(length / 5.0)));
  const double step = length / panels;
  for (int i = 0; i < panels; ++i) {
    const double x0 = i * step, x1 = (i + 1) * step;
    w.add_wall({x0, -hw}, {x1, -hw}, 0.0, height, Texture::smooth(k++));
    w.add_wall({x1, hw}, {x0, hw}, 0.0, height, Texture::smooth(k++));
    w.add(Patch(Vec3(x0, -hw, 0.0), Vec3(step, 0, 0), Vec3(0, width, 0), Texture::smooth(k++)));
  }
  if (close_ends) {
    w.add_wall({0, hw}, {0, -hw}, 0.0, height, Texture::smooth(k++));
    w.add_wall({length, -hw}, {length, hw}, 0.0, height, Texture::smooth(k++));
  }
  return w;
}

PlanarCurve loop_curve() {
  constexpr double a = 23.5, b = 14.0, c3 = 0.07;
  PlanarCurve c;
  c.p = [](double th) {
    return Eigen::Vector2d(a * (std::cos(th) - c3 * std::cos(3 * th)), b * (std::sin(th) + c3 * std::sin(3 * th)));
  };
  c.dp = [](double th) {
    return Eigen::Vector2d(a * (-std::sin(th) + 3 * c3 * std::sin(3 * th)),
                           b * (std::cos(th) + 3 * c3 * std::cos(3 * th)));
  };
  c.ddp = [](double th) {
    return Eigen::Vector2d(a * (-std::cos(th) + 9 * c3 * std::cos(3 * th)),
                           b * (-std::sin(th) - 9 * c3 * std::sin(3 * th)));
  };
  return c;
}

World multi_room_world(std::uint64_t layout_seed) {
  World w;
  const PlanarCurve curve = loop_curve();
  std::mt19937_64 rng(splitmix(layout_seed));
  std::uniform_real_distribution<double> offset(2.6, 5.5);
  std::uint64_t tex = splitmix(layout_seed + 101);
  constexpr int kVertices = 16;
  constexpr double kHeight = 3.0;

  std::vector<Eigen::Vector2d> inner, outer, center, normal;
  for (int i = 0; i < kVertices; ++i) {
    const double th = kTwoPi * i / kVertices;
    const Eigen::Vector2d p = curve.p(th);
    const Eigen::Vector2d d = curve.dp(th).normalized();
    const Eigen::Vector2d n(d.y(), -d.x());  // right of a counter-clockwise loop = outward
    center.push_back(p);
    normal.push_back(n);
    outer.push_back(p + n * offset(rng));
    inner.push_back(p - n * offset(rng));
  }
  for (int i = 0; i < kVertices; ++i) {
    const int j = (i + 1) % kVertices;
    w.add_wall(outer[i], outer[j], 0.0, kHeight, Texture::smooth(tex++));
    w.add_wall(inner[j], inner[i], 0.0, kHeight, Texture::smooth(tex++));
  }
  // Partitions with a 2 m doorway centred on the path.
  for (int i = 0; i < kVertices; i += 3) {
    const Eigen::Vector2d& c = center[i];
    const Eigen::Vector2d& n = normal[i];
    w.add_wall(inner[i], c - n * 1.0, 0.0, kHeight, Texture::smooth(tex++));
    w.add_wall(c + n * 1.0, outer[i], 0.0, kHeight, Texture::smooth(tex++));
  }
  // Pillars, kept clear of the path.
  std::vector<Eigen::Vector2d> path_samples;
  for (int k = 0; k < 2000; ++k) path_samples.push_back(curve.p(kTwoPi * k / 2000.0));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  int placed = 0;
  for (int attempt = 0; attempt < 200 && placed < 10; ++attempt) {
    const double th = kTwoPi * u01(rng);
    const double side = u01(rng) < 0.5 ? -1.0 : 1.0;
    const Eigen::Vector2d d = curve.dp(th).normalized();
    const Eigen::Vector2d n(d.y(), -d.x());
    const Eigen::Vector2d c = curve.p(th) + side * n * (1.9 + 1.2 * u01(rng));
    const double half = 0.25 + 0.2 * u01(rng);
    double clearance = std::numeric_limits<double>::infinity();
    for (const auto& s : path_samples) clearance = std::min(clearance, (s - c).norm());
    if (clearance < 1.4 + half * std::sqrt(2.0)) continue;
    w.add_box(Vec3(c.x() - half, c.y() - half, 0.0), Vec3(c.x() + half, c.y() + half, kHeight * (0.5 + 0.5 * u01(rng))),
              tex);
    tex += 6;
    ++placed;
  }
  w.add(Patch(Vec3(-40, -30, 0), Vec3(80, 0, 0), Vec3(0, 60, 0), Texture::smooth(tex++)));
  return w;
}

TrajectorySpec stationary(const Pose& pose, double duration) {
  return TrajectorySpec([pose](double) { return KinematicState{pose}; }, duration);
}

TrajectorySpec constant_velocity(const Pose& start, const Vec3& velocity, double duration) {
  return TrajectorySpec(
      [start, velocity](double t) {
        KinematicState k;
        k.pose = Pose(start.rotation, start.translation + velocity * t);
        k.velocity = velocity;
        return k;
      },
      duration);
}

TrajectorySpec constant_yaw_rate(const Pose& start, double yaw_rate, double duration) {
  return TrajectorySpec(
      [start, yaw_rate](double t) {
        KinematicState k;
        k.pose = Pose(yaw_rotation(yaw_rate * t) * start.rotation, start.translation);
        k.angular_velocity = start.rotation.inverse() * Vec3(0, 0, yaw_rate);
        return k;
      },
      duration);
}

TrajectorySpec circle(const Vec3& center, double radius, double speed, double duration) {
  const double rate = speed / radius;
  return TrajectorySpec(
      [=](double t) {
        const double th = rate * t;
        const Vec3 radial(std::cos(th), std::sin(th), 0.0);
        const Vec3 tangent(-std::sin(th), std::cos(th), 0.0);
        KinematicState k;
        k.pose = Pose(yaw_rotation(th + M_PI / 2), center + radius * radial);
        k.velocity = speed * tangent;
        k.acceleration = -radius * rate * rate * radial;
        k.angular_velocity = Vec3(0, 0, rate);
        return k;
      },
      duration);
}

TrajectorySpec planar_path(const PlanarCurve& curve, double height, double omega, double tau, double duration) {
  return TrajectorySpec(
      [=](double t) {
        const double e = std::exp(-t / tau);
        const double th = omega * (t - tau * (1.0 - e));
        const double th_d = omega * (1.0 - e);
        const double th_dd = omega * e / tau;
        const Eigen::Vector2d p = curve.p(th), dp = curve.dp(th), ddp = curve.ddp(th);
        const Eigen::Vector2d vel = dp * th_d;
        const Eigen::Vector2d acc = ddp * th_d * th_d + dp * th_dd;
        const double yaw = std::atan2(dp.y(), dp.x());
        const double yaw_rate = (dp.x() * ddp.y() - dp.y() * ddp.x()) / dp.squaredNorm() * th_d;
        KinematicState k;
        k.pose = Pose(yaw_rotation(yaw), Vec3(p.x(), p.y(), height));
        k.velocity = Vec3(vel.x(), vel.y(), 0.0);
        k.acceleration = Vec3(acc.x(), acc.y(), 0.0);
        k.angular_velocity = Vec3(0, 0, yaw_rate);
        return k;
      },
      duration);
}

TrajectorySpec loop_trajectory(double duration) {
  return planar_path(loop_curve(), 1.0, kTwoPi / 60.0, 1.0, duration);
}

TrajectorySpec straight_run(const Vec3& start, double speed, double duration, double tau) {
  PlanarCurve line;
  line.p = [start](double s) { return Eigen::Vector2d(start.x() + s, start.y()); };
  line.dp = [](double) { return Eigen::Vector2d(1.0, 0.0); };
  line.ddp = [](double) { return Eigen::Vector2d(0.0, 0.0); };
  return planar_path(line, start.z(), speed, tau, duration);
}

TrajectorySpec circle_run(const Vec3& center, double radius, double speed, double duration, double tau) {
  PlanarCurve c;
  c.p = [center, radius](double th) { return Eigen::Vector2d(center.x() + radius * std::cos(th), center.y() + radius * std::sin(th)); };
  c.dp = [radius](double th) { return Eigen::Vector2d(-radius * std::sin(th), radius * std::cos(th)); };
  c.ddp = [radius](double th) { return Eigen::Vector2d(-radius * std::cos(th), -radius * std::sin(th)); };
  return planar_path(c, center.z(), speed / radius, tau, duration);
}

double LidarParams::elevation(int ring) const {
  if (beams == 1) return min_elevation_deg * M_PI / 180.0;
  const double deg = min_elevation_deg + (max_elevation_deg - min_elevation_deg) * ring / (beams - 1);
  return deg * M_PI / 180.0;
}

int LidarParams::columns() const { return static_cast<int>(std::lround(360.0 / azimuth_resolution_deg)); }

LidarScan raycast_scan(const World& world, const TrajectorySpec& traj, const Pose& imu_from_lidar, int scan_id,
                       double scan_start, const LidarParams& params, std::uint64_t seed) {
  LidarScan scan;
  scan.id = scan_id;
  scan.start = scan_start;
  const double duration = 1.0 / traj.lidar_rate;
  scan.end = scan_start + duration;
  const int cols = params.columns();
  std::mt19937_64 rng(stream_seed(seed, 1, static_cast<std::uint64_t>(scan_id)));
  std::normal_distribution<double> noise(0.0, 1.0);

  std::vector<Vec3> ring_dirs(params.beams);
  std::vector<double> cos_el(params.beams), sin_el(params.beams);
  for (int r = 0; r < params.beams; ++r) {
    cos_el[r] = std::cos(params.elevation(r));
    sin_el[r] = std::sin(params.elevation(r));
  }
  scan.points.reserve(static_cast<size_t>(cols) * params.beams);
  for (int c = 0; c < cols; ++c) {
    const double t = scan_start + duration * c / cols;
    const double az = -M_PI + kTwoPi * c / cols;
    const Pose world_from_lidar = traj.at(t).pose * imu_from_lidar;
    for (int r = 0; r < params.beams; ++r) {
      const Vec3 dir_l(cos_el[r] * std::cos(az), cos_el[r] * std::sin(az), sin_el[r]);
      const auto hit = world.cast(world_from_lidar.translation, world_from_lidar.rotation * dir_l, params.max_range);
      if (!hit || hit->range < params.min_range) continue;
      double range = hit->range;
      if (params.noise_sigma > 0.0) range += params.noise_sigma * noise(rng);
      scan.points.push_back(LidarPoint{dir_l * range, world.albedo(*hit), t, r});
    }
  }
  if (scan.points.empty()) throw EmptyScan("scan " + std::to_string(scan_id) + " hit no surface");
  return scan;
}

std::vector<ImuSample> synthesize_imu(const TrajectorySpec& traj, const ImuParams& params, std::uint64_t seed,
                                      double t0, std::optional<double> t1) {
  const double end = t1.value_or(traj.duration());
  const double dt = 1.0 / traj.imu_rate;
  const auto count = static_cast<long>(std::floor((end - t0) * traj.imu_rate + 1e-9)) + 1;
  std::mt19937_64 rng(stream_seed(seed, 2, 0));
  std::normal_distribution<double> n(0.0, 1.0);
  const double gyro_sd = params.gyro_noise / std::sqrt(dt);
  const double accel_sd = params.accel_noise / std::sqrt(dt);
  std::vector<ImuSample> out;
  out.reserve(static_cast<size_t>(count));
  for (long k = 0; k < count; ++k) {
    const double t = t0 + k * dt;
    const KinematicState s = traj.at(t);
    ImuSample m;
    m.t = t;
    m.gyro = s.angular_velocity + params.gyro_bias;
    m.accel = s.pose.rotation.inverse() * (s.acceleration - params.gravity) + params.accel_bias;
    if (gyro_sd > 0.0) m.gyro += Vec3(n(rng), n(rng), n(rng)) * gyro_sd;
    if (accel_sd > 0.0) m.accel += Vec3(n(rng), n(rng), n(rng)) * accel_sd;
    out.push_back(m);
  }
  return out;
}

Image render_image(const World& world, const Pose& world_from_camera, const PinholeModel& model, double noise_sigma,
                   std::uint64_t seed) {
  Image img(model.width, model.height);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const Mat3 r = world_from_camera.rotation.matrix();
  const Vec3 origin = world_from_camera.translation;
  for (int y = 0; y < model.height; ++y) {
    for (int x = 0; x < model.width; ++x) {
      const Vec3 ray_c((x - model.cx) / model.fx, (y - model.cy) / model.fy, 1.0);
      const auto hit = world.cast(origin, (r * ray_c).normalized(), 1e3);
      double value = hit ? world.albedo(*hit) : 0.0;
      if (noise_sigma > 0.0) value += noise_sigma * noise(rng);
      img.at(x, y) = static_cast<float>(std::clamp(value, 0.0, 1.0));
    }
  }
  return img;
}

}  // namespace lvi::sim
