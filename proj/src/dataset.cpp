#include "lvi/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lvi/errors.hpp"
#include "lvi/metrics.hpp"

namespace fs = std::filesystem;

namespace lvi {

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

[[noreturn]] void format_error(const fs::path& file, int line, const std::string& why) {
  throw FormatError(file.string() + ":" + std::to_string(line) + ": " + why);
}

// Comma- or whitespace-separated numeric rows. A non-numeric first line is a header.
std::vector<std::pair<int, std::vector<double>>> read_rows(const fs::path& file, size_t columns) {
  std::vector<std::pair<int, std::vector<double>>> rows;
  std::istringstream in(read_text(file));
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    if (raw.find_first_not_of(" \t") == std::string::npos) continue;
    std::replace(raw.begin(), raw.end(), ',', ' ');
    std::istringstream ls(raw);
    std::vector<double> v;
    std::string tok;
    bool numeric = true;
    while (ls >> tok) {
      char* end = nullptr;
      const double x = std::strtod(tok.c_str(), &end);
      if (end != tok.c_str() + tok.size()) {
        numeric = false;
        break;
      }
      v.push_back(x);
    }
    if (!numeric) {
      if (line == 1) continue;
      format_error(file, line, "non-numeric field");
    }
    if (v.size() != columns) {
      format_error(file, line, "expected " + std::to_string(columns) + " columns, got " + std::to_string(v.size()));
    }
    rows.emplace_back(line, std::move(v));
  }
  return rows;
}

std::string scan_name(int id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d", id);
  return buf;
}

LidarScan read_scan(const fs::path& file, const ScanStamp& stamp, const Calibration& calib) {
  LidarScan scan;
  scan.id = stamp.id;
  scan.start = stamp.start;
  scan.end = stamp.end;
  double prev = -INFINITY;
  for (const auto& [line, v] : read_rows(file, 5)) {
    LidarPoint p;
    p.p = Vec3(v[0], v[1], v[2]);
    p.intensity = v[3];
    if (v[4] < prev) throw ClockSkew(file.string() + ":" + std::to_string(line) + ": point time offset regresses");
    if (v[4] < -1e-9 || stamp.start + v[4] > stamp.end + 1e-9) {
      format_error(file, line, "time offset outside the scan interval");
    }
    prev = v[4];
    p.t = stamp.start + v[4];
    p.ring = ring_of(p.p, calib);
    scan.points.push_back(p);
  }
  return scan;
}

Image read_pgm(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P5" || w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) format_error(file, 1, "not a binary PGM");
  in.get();
  Image img(w, h);
  const bool wide = maxval > 255;
  std::vector<unsigned char> buf(static_cast<size_t>(w) * h * (wide ? 2 : 1));
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) format_error(file, 1, "truncated pixel data");
  for (size_t i = 0; i < img.pixels.size(); ++i) {
    const int v = wide ? (buf[2 * i] << 8) | buf[2 * i + 1] : buf[i];
    img.pixels[i] = static_cast<float>(v) / static_cast<float>(maxval);
  }
  return img;
}

void write_pgm(const Image& img, const fs::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<unsigned char> buf(img.pixels.size());
  for (size_t i = 0; i < img.pixels.size(); ++i) {
    buf[i] = static_cast<unsigned char>(std::lround(std::clamp(img.pixels[i], 0.0f, 1.0f) * 255.0f));
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw IoError("cannot write " + p.string());
  return out;
}

}  // namespace

int ring_of(const Vec3& p, const Calibration& calib) {
  if (calib.lidar_beams <= 1) return 0;
  const double elev = std::atan2(p.z(), std::hypot(p.x(), p.y())) * 180.0 / M_PI;
  const double step = (calib.lidar_max_elevation_deg - calib.lidar_min_elevation_deg) / (calib.lidar_beams - 1);
  const long r = std::lround((elev - calib.lidar_min_elevation_deg) / step);
  return static_cast<int>(std::clamp<long>(r, 0, calib.lidar_beams - 1));
}

std::vector<Event> merge_events(const Dataset& data) {
  std::vector<Event> ev;
  ev.reserve(data.imu.size() + data.scans.size() + data.images.size());
  for (size_t i = 0; i < data.imu.size(); ++i) ev.push_back({Event::Kind::Imu, i, data.imu[i].t});
  for (size_t i = 0; i < data.images.size(); ++i) ev.push_back({Event::Kind::Image, i, data.images[i].t});
  for (size_t i = 0; i < data.scans.size(); ++i) ev.push_back({Event::Kind::Scan, i, data.scans[i].end});
  std::stable_sort(ev.begin(), ev.end(), [](const Event& a, const Event& b) {
    if (a.t != b.t) return a.t < b.t;
    return static_cast<int>(a.kind) < static_cast<int>(b.kind);
  });
  return ev;
}

Dataset load_dataset(const std::string& path) {
  const fs::path root(path);
  if (!fs::is_directory(root)) throw IoError("no dataset directory at " + path);
  Dataset d;
  const fs::path calib_file = root / "calib.cfg";
  try {
    d.calib = parse_calibration(read_text(calib_file), calib_file.string());
  } catch (const ConfigError& e) {
    throw FormatError(e.what());
  }

  const fs::path imu_file = root / "imu.csv";
  for (const auto& [line, v] : read_rows(imu_file, 7)) {
    if (!d.imu.empty() && v[0] <= d.imu.back().t) {
      throw ClockSkew(imu_file.string() + ":" + std::to_string(line) + ": timestamp " + std::to_string(v[0]) +
                      " does not increase");
    }
    d.imu.push_back({v[0], Vec3(v[1], v[2], v[3]), Vec3(v[4], v[5], v[6])});
  }

  const fs::path scan_index = root / "scans" / "index.csv";
  for (const auto& [line, v] : read_rows(scan_index, 3)) {
    const ScanStamp s{static_cast<int>(v[0]), v[1], v[2]};
    if (s.end <= s.start) format_error(scan_index, line, "end_time must exceed start_time");
    if (!d.scans.empty() && s.start <= d.scans.back().start) {
      throw ClockSkew(scan_index.string() + ":" + std::to_string(line) + ": scan start does not increase");
    }
    d.scans.push_back(s);
  }
  // Validate every scan up front; scans are re-read on demand during the run.
  for (const ScanStamp& s : d.scans) read_scan(root / "scans" / (scan_name(s.id) + ".csv"), s, d.calib);

  const fs::path image_index = root / "images" / "index.csv";
  if (fs::exists(image_index)) {
    for (const auto& [line, v] : read_rows(image_index, 2)) {
      const ImageStamp s{static_cast<int>(v[0]), v[1]};
      if (!d.images.empty() && s.t <= d.images.back().t) {
        throw ClockSkew(image_index.string() + ":" + std::to_string(line) + ": image time does not increase");
      }
      if (!fs::exists(root / "images" / (scan_name(s.id) + ".pgm"))) {
        format_error(image_index, line, "missing image " + scan_name(s.id) + ".pgm");
      }
      d.images.push_back(s);
    }
  }

  const fs::path gt = root / "groundtruth.tum";
  if (fs::exists(gt)) d.groundtruth = read_tum(gt.string());

  const auto scans = d.scans;
  const Calibration calib = d.calib;
  d.load_scan = [root, scans, calib](size_t i) {
    return read_scan(root / "scans" / (scan_name(scans[i].id) + ".csv"), scans[i], calib);
  };
  const auto images = d.images;
  d.load_image = [root, images](size_t i) { return read_pgm(root / "images" / (scan_name(images[i].id) + ".pgm")); };
  return d;
}

void write_dataset(const Dataset& data, const std::string& path) {
  const fs::path root(path);
  fs::create_directories(root / "scans");
  {
    auto out = open_out(root / "calib.cfg");
    out << format_calibration(data.calib);
  }
  char line[512];
  {
    auto out = open_out(root / "imu.csv");
    out << "t,wx,wy,wz,ax,ay,az\n";
    for (const ImuSample& s : data.imu) {
      std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", s.t, s.gyro.x(), s.gyro.y(),
                    s.gyro.z(), s.accel.x(), s.accel.y(), s.accel.z());
      out << line;
    }
  }
  {
    auto index = open_out(root / "scans" / "index.csv");
    index << "id,start_time,end_time\n";
    for (size_t i = 0; i < data.scans.size(); ++i) {
      const ScanStamp& s = data.scans[i];
      std::snprintf(line, sizeof line, "%d,%.17g,%.17g\n", s.id, s.start, s.end);
      index << line;
      const LidarScan scan = data.load_scan(i);
      auto out = open_out(root / "scans" / (scan_name(s.id) + ".csv"));
      out << "x,y,z,intensity,t_offset_s\n";
      for (const LidarPoint& p : scan.points) {
        std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.9g,%.17g\n", p.p.x(), p.p.y(), p.p.z(), p.intensity,
                      p.t - s.start);
        out << line;
      }
    }
  }
  if (!data.images.empty()) {
    fs::create_directories(root / "images");
    auto index = open_out(root / "images" / "index.csv");
    index << "id,t\n";
    for (size_t i = 0; i < data.images.size(); ++i) {
      std::snprintf(line, sizeof line, "%d,%.17g\n", data.images[i].id, data.images[i].t);
      index << line;
      write_pgm(data.load_image(i), root / "images" / (scan_name(data.images[i].id) + ".pgm"));
    }
  }
  if (data.groundtruth) write_tum(*data.groundtruth, (root / "groundtruth.tum").string());
}

SimOptions SimOptions::realistic(const std::string& scenario, std::uint64_t seed) {
  SimOptions o;
  o.scenario = scenario;
  o.seed = seed;
  o.lidar.noise_sigma = 0.02;
  o.imu.gyro_noise = 1.7e-4;
  o.imu.accel_noise = 2.0e-3;
  o.imu.gyro_bias = Vec3(0.002, -0.0015, 0.001);
  o.imu.accel_bias = Vec3(0.03, -0.02, 0.04);
  o.image_noise = 0.01;
  return o;
}

SimOptions SimOptions::noise_free(const std::string& scenario, std::uint64_t seed) {
  SimOptions o;
  o.scenario = scenario;
  o.seed = seed;
  o.image_noise = 0.0;
  return o;
}

Extrinsics default_extrinsics() {
  Mat3 r;  // camera z forward along body x, camera x along -body y
  r.col(0) = Vec3(0, -1, 0);
  r.col(1) = Vec3(0, 0, -1);
  r.col(2) = Vec3(1, 0, 0);
  Extrinsics e;
  e.imu_from_lidar = Pose(Rotation(), Vec3(0.0, 0.0, 0.1));
  e.imu_from_camera = Pose(Rotation::from_matrix(r), Vec3(0.05, 0.0, 0.02));
  return e;
}

Dataset simulate(const SimOptions& o) {
  std::shared_ptr<const sim::World> world;
  std::shared_ptr<sim::TrajectorySpec> traj;
  if (o.scenario == "loop") {
    world = std::make_shared<sim::World>(sim::multi_room_world(o.seed));
    traj = std::make_shared<sim::TrajectorySpec>(sim::loop_trajectory(o.duration > 0 ? o.duration : 64.0));
  } else if (o.scenario == "corridor") {
    world = std::make_shared<sim::World>(sim::corridor_world(26.0, 3.0, 3.0, true, o.seed));
    traj = std::make_shared<sim::TrajectorySpec>(
        sim::straight_run(Vec3(3.0, 0.0, 1.2), 1.0, o.duration > 0 ? o.duration : 20.5));
  } else if (o.scenario == "room") {
    world = std::make_shared<sim::World>(sim::cube_room(12.0, true, o.seed));
    traj = std::make_shared<sim::TrajectorySpec>(
        sim::circle_run(Vec3(0, 0, -4.5), 2.0, 1.0, o.duration > 0 ? o.duration : 15.0));
  } else {
    throw ConfigError("unknown scenario '" + o.scenario + "' (loop, corridor, room)");
  }
  if (o.static_start > 0.0) {
    const auto moving = traj;
    const double hold = o.static_start;
    traj = std::make_shared<sim::TrajectorySpec>(
        [moving, hold](double t) {
          if (t >= hold) return moving->at(t - hold);
          sim::KinematicState s;
          s.pose = moving->at(0.0).pose;
          return s;
        },
        moving->duration() + hold);
  }
  traj->camera_rate = o.camera_rate;

  Dataset d;
  d.calib.extrinsics = default_extrinsics();
  d.calib.camera = o.camera;
  d.calib.lidar_beams = o.lidar.beams;
  d.calib.lidar_min_elevation_deg = o.lidar.min_elevation_deg;
  d.calib.lidar_max_elevation_deg = o.lidar.max_elevation_deg;
  d.calib.lidar_rate = traj->lidar_rate;
  d.calib.gravity = o.imu.gravity;

  const double duration = traj->duration();
  d.imu = sim::synthesize_imu(*traj, o.imu, o.seed, 0.0, duration);
  const double last_imu = d.imu.back().t;
  const double period = 1.0 / traj->lidar_rate;
  for (int k = 0;; ++k) {
    const ScanStamp s{k, k * period, (k + 1) * period};
    if (s.end > last_imu) break;
    d.scans.push_back(s);
  }
  if (o.images) {
    for (int k = 1;; ++k) {
      const double t = k / o.camera_rate;
      if (t > last_imu) break;
      d.images.push_back({k - 1, t});
    }
  }
  Trajectory gt;
  for (int k = 0;; ++k) {
    const double t = k / o.groundtruth_rate;
    if (t > duration + 1e-12) break;
    gt.push_back({t, traj->at(t).pose});
  }
  d.groundtruth = std::move(gt);

  const Extrinsics extr = d.calib.extrinsics;
  const auto scans = d.scans;
  d.load_scan = [world, traj, extr, scans, o](size_t i) {
    return sim::raycast_scan(*world, *traj, extr.imu_from_lidar, scans[i].id, scans[i].start, o.lidar, o.seed);
  };
  const auto images = d.images;
  d.load_image = [world, traj, extr, images, o](size_t i) {
    const Pose cam = traj->at(images[i].t).pose * extr.imu_from_camera;
    return sim::render_image(*world, cam, o.camera, o.image_noise,
                             sim::stream_seed(o.seed, 2, static_cast<std::uint64_t>(images[i].id)));
  };
  return d;
}

}  // namespace lvi
