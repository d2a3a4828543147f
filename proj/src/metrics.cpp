#include "lvi/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lvi/errors.hpp"

namespace lvi {

namespace {

struct Pair {
  size_t est;
  size_t ref;
};

// Nearest reference stamp per estimate; reference assumed sorted by time.
std::vector<Pair> associate(const Trajectory& est, const Trajectory& ref, double max_dt) {
  std::vector<Pair> out;
  for (size_t i = 0; i < est.size(); ++i) {
    const double t = est[i].t;
    const auto it = std::lower_bound(ref.begin(), ref.end(), t,
                                     [](const StampedPose& p, double v) { return p.t < v; });
    size_t best = ref.size();
    double best_dt = max_dt;
    for (auto c : {it, it == ref.begin() ? it : std::prev(it)}) {
      if (c == ref.end()) continue;
      const double dt = std::abs(c->t - t);
      if (dt <= best_dt) {
        best_dt = dt;
        best = static_cast<size_t>(c - ref.begin());
      }
    }
    if (best < ref.size()) out.push_back({i, best});
  }
  return out;
}

Trajectory sorted(Trajectory t) {
  std::stable_sort(t.begin(), t.end(), [](const StampedPose& a, const StampedPose& b) { return a.t < b.t; });
  return t;
}

}  // namespace

Pose align_points(const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
  const size_t n = from.size();
  Vec3 mf = Vec3::Zero(), mt = Vec3::Zero();
  for (size_t i = 0; i < n; ++i) {
    mf += from[i];
    mt += to[i];
  }
  mf /= static_cast<double>(n);
  mt /= static_cast<double>(n);
  Mat3 cov = Mat3::Zero();
  for (size_t i = 0; i < n; ++i) cov += (to[i] - mt) * (from[i] - mf).transpose();
  const Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 s = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) s(2, 2) = -1.0;
  const Mat3 r = svd.matrixU() * s * svd.matrixV().transpose();
  return Pose(Rotation::from_matrix(r), mt - r * mf);
}

AteResult evaluate_ate(const Trajectory& estimated, const Trajectory& reference, double max_dt) {
  const Trajectory ref = sorted(reference);
  const auto pairs = associate(estimated, ref, max_dt);
  if (pairs.size() < 2) throw NoOverlap(std::to_string(pairs.size()) + " associable pose pairs");
  std::vector<Vec3> from, to;
  for (const Pair& p : pairs) {
    from.push_back(estimated[p.est].pose.translation);
    to.push_back(ref[p.ref].pose.translation);
  }
  AteResult res;
  res.alignment = align_points(from, to);
  double sum = 0.0;
  for (size_t i = 0; i < pairs.size(); ++i) {
    const double e = (res.alignment * from[i] - to[i]).norm();
    res.errors.push_back(e);
    res.times.push_back(estimated[pairs[i].est].t);
    sum += e * e;
  }
  res.rmse = std::sqrt(sum / static_cast<double>(pairs.size()));
  return res;
}

RpeResult evaluate_rpe(const Trajectory& estimated, const Trajectory& reference, double max_dt) {
  const Trajectory ref = sorted(reference);
  const auto pairs = associate(estimated, ref, max_dt);
  if (pairs.size() < 2) throw NoOverlap(std::to_string(pairs.size()) + " associable pose pairs");
  double st = 0.0, sr = 0.0;
  for (size_t k = 1; k < pairs.size(); ++k) {
    const Pose de = estimated[pairs[k - 1].est].pose.inverse() * estimated[pairs[k].est].pose;
    const Pose dr = ref[pairs[k - 1].ref].pose.inverse() * ref[pairs[k].ref].pose;
    const Pose err = dr.inverse() * de;
    st += err.translation.squaredNorm();
    sr += std::pow(err.rotation.angle() * 180.0 / M_PI, 2);
  }
  const double n = static_cast<double>(pairs.size() - 1);
  return {std::sqrt(st / n), std::sqrt(sr / n)};
}

std::string format_tum(const Trajectory& traj) {
  std::string out;
  char line[256];
  for (const StampedPose& s : traj) {
    const auto& q = s.pose.rotation.quaternion();
    const Vec3& t = s.pose.translation;
    std::snprintf(line, sizeof line, "%.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g\n", s.t, t.x(), t.y(), t.z(), q.x(),
                  q.y(), q.z(), q.w());
    out += line;
  }
  return out;
}

Trajectory parse_tum(const std::string& text, const std::string& source) {
  Trajectory out;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (raw.empty() || raw[0] == '#') continue;
    std::istringstream ls(raw);
    double v[8];
    for (double& x : v) {
      if (!(ls >> x)) throw FormatError(source + ":" + std::to_string(line) + ": expected 8 numbers");
    }
    std::string extra;
    if (ls >> extra) throw FormatError(source + ":" + std::to_string(line) + ": trailing data");
    const Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
    if (q.norm() < 1e-9) throw FormatError(source + ":" + std::to_string(line) + ": zero quaternion");
    out.push_back({v[0], Pose(Rotation(q.normalized()), Vec3(v[1], v[2], v[3]))});
  }
  return out;
}

void write_tum(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << format_tum(traj);
  if (!out) throw IoError("write failed: " + path);
}

Trajectory read_tum(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_tum(ss.str(), path);
}

std::string format_ply(const PointMap& map) {
  const auto pts = map.points();
  std::string out = "ply\nformat ascii 1.0\nelement vertex " + std::to_string(pts.size()) +
                    "\nproperty float x\nproperty float y\nproperty float z\nproperty float intensity\nend_header\n";
  char line[128];
  for (const MapPoint& m : pts) {
    std::snprintf(line, sizeof line, "%.7g %.7g %.7g %.7g\n", m.p.x(), m.p.y(), m.p.z(), m.intensity);
    out += line;
  }
  return out;
}

void export_map(const PointMap& map, const std::string& path) {
  if (map.empty()) throw IoError("refusing to write an empty map to " + path);
  const std::string body = format_ply(map);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << body;
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace lvi
