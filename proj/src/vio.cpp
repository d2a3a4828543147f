#include "lvi/vio.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace lvi::vio {

std::optional<Pixel> project(const PinholeModel& model, const Vec3& pc, double z_min) {
  if (pc.z() <= z_min) return std::nullopt;
  return Pixel(model.fx * pc.x() / pc.z() + model.cx, model.fy * pc.y() / pc.z() + model.cy);
}

std::optional<BilinearSample> sample(const Image& image, double u, double v) {
  if (!(u >= 0.0 && v >= 0.0 && u <= image.width - 1 && v <= image.height - 1)) return std::nullopt;
  // The cell's lower corner, kept one short of the last row/column so that the
  // right-hand neighbour always exists.
  const int x0 = std::min(static_cast<int>(std::floor(u)), image.width - 2);
  const int y0 = std::min(static_cast<int>(std::floor(v)), image.height - 2);
  const double a = u - x0, b = v - y0;
  const double i00 = image.at(x0, y0), i10 = image.at(x0 + 1, y0);
  const double i01 = image.at(x0, y0 + 1), i11 = image.at(x0 + 1, y0 + 1);
  BilinearSample s;
  s.value = (1 - a) * (1 - b) * i00 + a * (1 - b) * i10 + (1 - a) * b * i01 + a * b * i11;
  s.gradient.x() = (1 - b) * (i10 - i00) + b * (i11 - i01);
  s.gradient.y() = (1 - a) * (i01 - i00) + a * (i11 - i10);
  return s;
}

std::optional<Eigen::VectorXd> sample_patch(const Image& image, const Pixel& center, int w) {
  const int h = w / 2;
  Eigen::VectorXd out(w * w);
  for (int dy = -h; dy <= h; ++dy) {
    for (int dx = -h; dx <= h; ++dx) {
      const auto s = sample(image, center.x() + dx, center.y() + dy);
      if (!s) return std::nullopt;
      out((dy + h) * w + dx + h) = s->value;
    }
  }
  return out;
}

size_t select_reference(const Vec3& point, std::span<const Observation> observations, const Vec3& camera_center) {
  const Vec3 current = (point - camera_center).normalized();
  size_t best = 0;
  double best_cos = -2.0;
  for (size_t i = 0; i < observations.size(); ++i) {
    const double c = current.dot((point - observations[i].world_from_camera.translation).normalized());
    if (c > best_cos || (c == best_cos && observations[i].t > observations[best].t)) {
      best = i;
      best_cos = c;
    }
  }
  return best;
}

std::optional<PhotometricResidual> photometric_residual(const NavState& state, const Extrinsics& extr,
                                                        const VisualPoint& vp, const Frame& frame) {
  const Vec3 pb = state.pose.inverse() * vp.p;
  const Pose& tc = extr.imu_from_camera;
  const Vec3 pc = tc.inverse() * pb;
  const auto uv = project(frame.model, pc);
  if (!uv) return std::nullopt;

  const int w = vp.patch_size, h = w / 2;
  const Eigen::VectorXd& ref = vp.ref().patch;
  Eigen::Matrix<double, 2, 3> dproj;
  const double iz = 1.0 / pc.z();
  dproj << frame.model.fx * iz, 0, -frame.model.fx * pc.x() * iz * iz, 0, frame.model.fy * iz,
      -frame.model.fy * pc.y() * iz * iz;
  Eigen::Matrix<double, 3, 6> dpc;
  const Mat3 rct = tc.rotation.inverse().matrix();
  dpc.leftCols<3>() = rct * skew(pb);
  dpc.rightCols<3>() = -rct;
  const Eigen::Matrix<double, 2, 6> duv = dproj * dpc;

  PhotometricResidual out;
  out.r.resize(w * w);
  out.jacobian.resize(w * w, 6);
  for (int dy = -h; dy <= h; ++dy) {
    for (int dx = -h; dx <= h; ++dx) {
      const auto s = sample(frame.image, uv->x() + dx, uv->y() + dy);
      if (!s) return std::nullopt;
      const int k = (dy + h) * w + dx + h;
      out.r(k) = s->value - ref(k);
      out.jacobian.row(k) = s->gradient.transpose() * duv;
    }
  }
  return out;
}

std::vector<VisualPoint> harvest_points(const PointMap& map, const Frame& frame, const NavState& state,
                                        const Extrinsics& extr, const HarvestParams& params,
                                        std::span<const Pixel> occupied) {
  struct Candidate {
    double depth;
    std::uint32_t id;
    Vec3 p;
    Pixel uv;
  };
  const Pose world_from_camera = camera_pose(state, extr);
  const Pose camera_from_world = world_from_camera.inverse();
  const int h = params.patch_size / 2;
  std::vector<Candidate> cands;
  map.visit([&](const MapPoint& m) {
    const Vec3 pc = camera_from_world * m.p;
    if (pc.z() > params.max_depth) return;
    const auto uv = project(frame.model, pc);
    if (!uv || uv->x() < h + 1 || uv->y() < h + 1 || uv->x() > frame.model.width - h - 2 ||
        uv->y() > frame.model.height - h - 2) {
      return;
    }
    cands.push_back({pc.z(), m.id, m.p, *uv});
  });
  std::sort(cands.begin(), cands.end(),
            [](const Candidate& a, const Candidate& b) { return a.depth < b.depth || (a.depth == b.depth && a.id < b.id); });

  // Every candidate, accepted or not, claims its neighbourhood; nearest first,
  // so points behind a surface are not taken.
  std::map<std::pair<int, int>, std::vector<Pixel>> claimed;
  const auto cell_of = [&](const Pixel& uv) {
    return std::make_pair(static_cast<int>(std::floor(uv.x() / params.grid)),
                          static_cast<int>(std::floor(uv.y() / params.grid)));
  };
  const auto claim = [&](const Pixel& uv) {
    const auto [cx, cy] = cell_of(uv);
    for (int dx = -1; dx <= 1; ++dx) {
      for (int dy = -1; dy <= 1; ++dy) {
        const auto it = claimed.find({cx + dx, cy + dy});
        if (it == claimed.end()) continue;
        for (const Pixel& o : it->second) {
          if (std::abs(o.x() - uv.x()) < params.grid && std::abs(o.y() - uv.y()) < params.grid) return false;
        }
      }
    }
    claimed[{cx, cy}].push_back(uv);
    return true;
  };
  for (const Pixel& uv : occupied) claim(uv);
  std::vector<VisualPoint> out;
  for (const Candidate& c : cands) {
    if (out.size() >= params.budget) break;
    if (!claim(c.uv)) continue;
    const auto s = sample(frame.image, c.uv.x(), c.uv.y());
    if (!s || s->gradient.norm() < params.min_gradient) continue;
    auto patch = sample_patch(frame.image, c.uv, params.patch_size);
    if (!patch) continue;
    VisualPoint vp;
    vp.p = c.p;
    vp.patch_size = params.patch_size;
    vp.observations.push_back({std::move(*patch), world_from_camera, frame.t});
    out.push_back(std::move(vp));
  }
  return out;
}

}  // namespace lvi::vio
