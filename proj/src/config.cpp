#include "lvi/config.hpp"

#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "lvi/errors.hpp"

namespace lvi {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(const std::string& source, int line, const std::string& why) {
  throw ConfigError(source + ":" + std::to_string(line) + ": " + why);
}

double to_double(const ConfigEntry& e, const std::string& source) {
  try {
    size_t used = 0;
    const double v = std::stod(e.value, &used);
    if (used != e.value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    fail(source, e.line, "'" + e.key + "' expects a number, got '" + e.value + "'");
  }
}

long long to_integer(const ConfigEntry& e, const std::string& source) {
  try {
    size_t used = 0;
    const long long v = std::stoll(e.value, &used);
    if (used != e.value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    fail(source, e.line, "'" + e.key + "' expects an integer, got '" + e.value + "'");
  }
}

std::vector<double> to_numbers(const std::string& s) {
  std::istringstream in(s);
  std::vector<double> out;
  double v;
  while (in >> v) out.push_back(v);
  if (!in.eof()) throw std::invalid_argument("not a number list");
  return out;
}

using Setter = std::function<void(RunConfig&, const ConfigEntry&, const std::string&)>;

template <typename Get>
Setter real_in(Get get, double lo, double hi, bool open_lo = false) {
  return [=](RunConfig& c, const ConfigEntry& e, const std::string& src) {
    const double v = to_double(e, src);
    if (!(open_lo ? v > lo : v >= lo) || !(v <= hi)) {
      std::ostringstream why;
      why << "'" << e.key << "' = " << v << " outside " << (open_lo ? "(" : "[") << lo << ", " << hi << "]";
      fail(src, e.line, why.str());
    }
    get(c) = v;
  };
}

template <typename T, typename Get>
Setter integer_in(Get get, long long lo, long long hi) {
  return [=](RunConfig& c, const ConfigEntry& e, const std::string& src) {
    const long long v = to_integer(e, src);
    if (v < lo || v > hi) {
      fail(src, e.line, "'" + e.key + "' = " + std::to_string(v) + " outside [" + std::to_string(lo) + ", " +
                            std::to_string(hi) + "]");
    }
    get(c) = static_cast<T>(v);
  };
}

#define FIELD(expr) [](RunConfig& c) -> auto& { return c.expr; }

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"mode",
       [](RunConfig& c, const ConfigEntry& e, const std::string& src) {
         try {
           c.mode = parse_run_mode(e.value);
         } catch (const ConfigError&) {
           fail(src, e.line, "unknown mode '" + e.value + "'");
         }
       }},
      {"seed", integer_in<std::uint64_t>(FIELD(seed), 0, std::numeric_limits<long long>::max())},

      {"lio.beta", real_in(FIELD(lio.beta), 0.0, 10.0, true)},
      {"lio.n", integer_in<int>(FIELD(lio.n), 2, 64)},
      {"lio.sigma", real_in(FIELD(lio.sigma), 0.0, 1.0, true)},
      {"lio.downsample", real_in(FIELD(lio.downsample), 0.0, 5.0)},
      {"lio.max_points", integer_in<size_t>(FIELD(lio.max_points), 1, 1000000)},
      {"lio.knn", integer_in<size_t>(FIELD(lio.knn), 5, 64)},
      {"lio.radius", real_in(FIELD(lio.radius), 0.0, 10.0, true)},
      {"lio.plane_threshold", real_in(FIELD(lio.plane_threshold), 0.0, 1.0, true)},

      {"map.voxel", real_in(FIELD(map.voxel), 0.0, 10.0, true)},
      {"map.voxel_cap", integer_in<size_t>(FIELD(map.voxel_cap), 1, 10000)},
      {"map.insert_grid", real_in(FIELD(map.insert_grid), 0.0, 5.0)},
      {"map.min_spacing", real_in(FIELD(map.min_spacing), 0.0, 5.0)},

      {"vio.patch_size", integer_in<int>(FIELD(vio.patch_size), 3, 31)},
      {"vio.sigma", real_in(FIELD(vio.sigma), 0.0, 10.0, true)},
      {"vio.budget", integer_in<size_t>(FIELD(vio.budget), 0, 100000)},
      {"vio.min_gradient", real_in(FIELD(vio.min_gradient), 0.0, 1.0)},
      {"vio.grid", integer_in<int>(FIELD(vio.grid), 1, 512)},
      {"vio.max_depth", real_in(FIELD(vio.max_depth), 0.0, 1000.0, true)},
      {"vio.max_observations", integer_in<size_t>(FIELD(vio.max_observations), 1, 1000)},
      {"vio.max_rms", real_in(FIELD(vio.max_rms), 0.0, 1.0, true)},
      {"vio.min_view_angle_deg", real_in(FIELD(vio.min_view_angle_deg), 0.0, 180.0)},

      {"iekf.max_iter", integer_in<int>(FIELD(iekf.max_iter), 1, 100)},
      {"iekf.tol", real_in(FIELD(iekf.tol), 0.0, 1.0, true)},
      {"iekf.kappa", real_in(FIELD(iekf.kappa), -1.0, 100.0)},

      {"imu.gyro_noise", real_in(FIELD(imu.gyro_noise), 0.0, 1.0)},
      {"imu.accel_noise", real_in(FIELD(imu.accel_noise), 0.0, 10.0)},
      {"imu.gyro_bias_walk", real_in(FIELD(imu.gyro_bias_walk), 0.0, 1.0)},
      {"imu.accel_bias_walk", real_in(FIELD(imu.accel_bias_walk), 0.0, 10.0)},

      {"keyframe.translation", real_in(FIELD(keyframe.translation), 0.0, 100.0, true)},
      {"keyframe.rotation_deg", real_in(FIELD(keyframe.rotation_deg), 0.0, 180.0, true)},

      {"backend.interval", integer_in<int>(FIELD(backend.interval), 1, 100000)},
      {"backend.odometry_sigma_t", real_in(FIELD(backend.odometry_sigma_t), 0.0, 10.0, true)},
      {"backend.odometry_sigma_r", real_in(FIELD(backend.odometry_sigma_r), 0.0, 1.0, true)},
      {"backend.max_iter", integer_in<int>(FIELD(backend.max_iter), 1, 1000)},

      {"loop.threshold", real_in(FIELD(loop.threshold), 0.0, 1.0)},
      {"loop.k", integer_in<int>(FIELD(loop.k), 1, 100)},
      {"loop.exclusion", integer_in<int>(FIELD(loop.exclusion), 1, 100000)},
      {"loop.rings", integer_in<int>(FIELD(loop.rings), 1, 1000)},
      {"loop.sectors", integer_in<int>(FIELD(loop.sectors), 2, 3600)},
      {"loop.max_range", real_in(FIELD(loop.max_range), 0.0, 1000.0, true)},
      {"loop.information_scale", real_in(FIELD(loop.information_scale), 0.0, 1e12, true)},
      {"loop.max_mean_residual", real_in(FIELD(loop.max_mean_residual), 0.0, 10.0, true)},
      {"loop.min_inlier_fraction", real_in(FIELD(loop.min_inlier_fraction), 0.0, 1.0)},
      {"loop.max_correction", real_in(FIELD(loop.max_correction), 0.0, 1000.0, true)},

      {"extrinsics.imu_from_lidar",
       [](RunConfig& c, const ConfigEntry& e, const std::string& src) {
         try {
           c.imu_from_lidar = parse_pose(e.value);
         } catch (const std::exception&) {
           fail(src, e.line, "'" + e.key + "' expects 'tx ty tz qw qx qy qz'");
         }
       }},
      {"extrinsics.imu_from_camera",
       [](RunConfig& c, const ConfigEntry& e, const std::string& src) {
         try {
           c.imu_from_camera = parse_pose(e.value);
         } catch (const std::exception&) {
           fail(src, e.line, "'" + e.key + "' expects 'tx ty tz qw qx qy qz'");
         }
       }},
  };
  return table;
}

#undef FIELD

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::vector<ConfigEntry> parse_key_values(const std::string& text, const std::string& source) {
  std::vector<ConfigEntry> out;
  std::map<std::string, int> seen;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) fail(source, line, "expected 'key = value'");
    ConfigEntry e{trim(s.substr(0, eq)), trim(s.substr(eq + 1)), line};
    if (e.key.empty()) fail(source, line, "empty key");
    if (e.value.empty()) fail(source, line, "empty value for '" + e.key + "'");
    if (auto [it, fresh] = seen.emplace(e.key, line); !fresh) {
      fail(source, line, "'" + e.key + "' already set on line " + std::to_string(it->second));
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::string to_string(RunMode m) {
  switch (m) {
    case RunMode::LioOnly: return "lio_only";
    case RunMode::VioOnly: return "vio_only";
    case RunMode::FullNoBackend: return "full_no_backend";
    case RunMode::FullNoLoop: return "full_no_loop";
    case RunMode::Full: return "full";
  }
  return "full";
}

RunMode parse_run_mode(const std::string& s) {
  for (RunMode m : {RunMode::LioOnly, RunMode::VioOnly, RunMode::FullNoBackend, RunMode::FullNoLoop, RunMode::Full}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("unknown mode '" + s + "'");
}

void apply_config(RunConfig& config, const ConfigEntry& entry, const std::string& source) {
  const auto& table = setters();
  const auto it = table.find(entry.key);
  if (it == table.end()) fail(source, entry.line, "unknown key '" + entry.key + "'");
  it->second(config, entry, source);
}

RunConfig parse_config(const std::string& text, const std::string& source) {
  RunConfig c;
  for (const ConfigEntry& e : parse_key_values(text, source)) apply_config(c, e, source);
  if (c.lio.knn < 5) throw ConfigError(source + ": lio.knn must be >= 5");
  if (c.vio.patch_size % 2 == 0) throw ConfigError(source + ": vio.patch_size must be odd");
  return c;
}

RunConfig load_config(const std::string& path) { return parse_config(read_file(path), path); }

Pose parse_pose(const std::string& s) {
  const auto v = to_numbers(s);
  if (v.size() != 7) throw std::invalid_argument("pose needs 7 numbers");
  const Eigen::Quaterniond q(v[3], v[4], v[5], v[6]);
  if (q.norm() < 1e-9) throw std::invalid_argument("zero quaternion");
  return Pose(Rotation(q.normalized()), Vec3(v[0], v[1], v[2]));
}

std::string format_pose(const Pose& p) {
  std::ostringstream out;
  out << std::setprecision(17);
  const auto& q = p.rotation.quaternion();
  out << p.translation.x() << ' ' << p.translation.y() << ' ' << p.translation.z() << ' ' << q.w() << ' ' << q.x()
      << ' ' << q.y() << ' ' << q.z();
  return out.str();
}

Calibration parse_calibration(const std::string& text, const std::string& source) {
  Calibration c;
  for (const ConfigEntry& e : parse_key_values(text, source)) {
    try {
      if (e.key == "camera.fx") c.camera.fx = std::stod(e.value);
      else if (e.key == "camera.fy") c.camera.fy = std::stod(e.value);
      else if (e.key == "camera.cx") c.camera.cx = std::stod(e.value);
      else if (e.key == "camera.cy") c.camera.cy = std::stod(e.value);
      else if (e.key == "camera.width") c.camera.width = std::stoi(e.value);
      else if (e.key == "camera.height") c.camera.height = std::stoi(e.value);
      else if (e.key == "lidar.beams") c.lidar_beams = std::stoi(e.value);
      else if (e.key == "lidar.min_elevation_deg") c.lidar_min_elevation_deg = std::stod(e.value);
      else if (e.key == "lidar.max_elevation_deg") c.lidar_max_elevation_deg = std::stod(e.value);
      else if (e.key == "lidar.rate") c.lidar_rate = std::stod(e.value);
      else if (e.key == "extrinsics.imu_from_lidar") c.extrinsics.imu_from_lidar = parse_pose(e.value);
      else if (e.key == "extrinsics.imu_from_camera") c.extrinsics.imu_from_camera = parse_pose(e.value);
      else if (e.key == "gravity") {
        const auto g = to_numbers(e.value);
        if (g.size() != 3) throw std::invalid_argument("gravity");
        c.gravity = Vec3(g[0], g[1], g[2]);
      } else {
        fail(source, e.line, "unknown key '" + e.key + "'");
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      fail(source, e.line, "bad value for '" + e.key + "'");
    }
  }
  if (!c.camera.valid()) throw ConfigError(source + ": invalid camera intrinsics");
  if (c.lidar_beams < 1 || c.lidar_rate <= 0) throw ConfigError(source + ": invalid lidar parameters");
  return c;
}

std::string format_calibration(const Calibration& c) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "camera.fx = " << c.camera.fx << "\ncamera.fy = " << c.camera.fy << "\ncamera.cx = " << c.camera.cx
      << "\ncamera.cy = " << c.camera.cy << "\ncamera.width = " << c.camera.width
      << "\ncamera.height = " << c.camera.height << "\nlidar.beams = " << c.lidar_beams
      << "\nlidar.min_elevation_deg = " << c.lidar_min_elevation_deg
      << "\nlidar.max_elevation_deg = " << c.lidar_max_elevation_deg << "\nlidar.rate = " << c.lidar_rate
      << "\nextrinsics.imu_from_lidar = " << format_pose(c.extrinsics.imu_from_lidar)
      << "\nextrinsics.imu_from_camera = " << format_pose(c.extrinsics.imu_from_camera) << "\ngravity = "
      << c.gravity.x() << ' ' << c.gravity.y() << ' ' << c.gravity.z() << '\n';
  return out.str();
}

}  // namespace lvi
