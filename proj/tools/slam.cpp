#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lvi/config.hpp"
#include "lvi/dataset.hpp"
#include "lvi/errors.hpp"
#include "lvi/loopclosure.hpp"
#include "lvi/metrics.hpp"
#include "lvi/pipeline.hpp"

namespace fs = std::filesystem;
using namespace lvi;

namespace {

constexpr int kOk = 0;
constexpr int kModuleError = 1;
constexpr int kUsageError = 2;

struct RunArgs {
  std::string config, dataset, out, mode;
  bool quiet = false;
};

struct SimArgs {
  std::string scenario = "loop", out;
  std::uint64_t seed = 1;
  double duration = 0.0;
  bool noise_free = false;
  bool no_images = false;
  double azimuth = 0.25;
  int width = 640, height = 480;
};

struct EvalArgs {
  std::string est, ref;
  double max_dt = 0.01;
  bool json = false;
};

struct PlotArgs {
  std::string report, out;
};

struct BenchArgs {
  std::string dataset;
  int stride = 5;
  double min_gap = 10.0;        // s between the two scans of a pair
  double revisit_radius = 1.0;  // m, positives
  double distinct_radius = 5.0; // m, negatives
};

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

int cmd_run(const RunArgs& a) {
  RunConfig cfg = a.config.empty() ? RunConfig{} : load_config(a.config);
  if (!a.mode.empty()) cfg.mode = parse_run_mode(a.mode);
  const Dataset data = load_dataset(a.dataset);
  ensure_dir(a.out);

  ProgressFn progress;
  if (!a.quiet) {
    progress = [](size_t i, size_t n) {
      if (i % 50 == 0 || i == n) std::fprintf(stderr, "\rframe %zu/%zu", i, n);
      if (i == n) std::fputc('\n', stderr);
    };
  }
  const RunResult r = run(cfg, data, progress);

  const fs::path out(a.out);
  write_tum(r.trajectory, (out / "trajectory.tum").string());
  if (r.map.size() > 0) export_map(r.map, (out / "map.ply").string());
  graph::write_g2o(r.graph, (out / "graph.g2o").string());
  write_text(out / "report.json", report_json(r.report, r.trajectory) + "\n");

  std::printf("mode %s, %zu frames, mean %.1f ms/frame\n", r.report.mode.c_str(), r.report.frames.size(),
              r.report.mean_frame_ms());
  if (r.report.ate_rmse) std::printf("ATE RMSE %.4f m\n", *r.report.ate_rmse);
  if (r.report.rpe_m) std::printf("RPE %.4f m, %.3f deg\n", *r.report.rpe_m, r.report.rpe_deg.value_or(0.0));
  std::printf("loops %d/%d, keyframes %d, map points %zu\n", r.report.loops_accepted, r.report.loops_attempted,
              r.report.keyframes, r.report.map_points);
  for (const std::string& w : r.report.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  return kOk;
}

int cmd_simulate(const SimArgs& a) {
  SimOptions o = a.noise_free ? SimOptions::noise_free(a.scenario, a.seed) : SimOptions::realistic(a.scenario, a.seed);
  o.duration = a.duration;
  o.images = !a.no_images;
  o.lidar.azimuth_resolution_deg = a.azimuth;
  // Keep the field of view when the resolution changes.
  const double zoom = static_cast<double>(a.width) / o.camera.width;
  o.camera.fx *= zoom;
  o.camera.fy *= zoom;
  o.camera.cx = 0.5 * a.width;
  o.camera.cy = 0.5 * a.height;
  o.camera.width = a.width;
  o.camera.height = a.height;
  const Dataset d = simulate(o);
  write_dataset(d, a.out);
  std::printf("%s: %zu scans, %zu images, %zu IMU samples\n", a.out.c_str(), d.scans.size(), d.images.size(),
              d.imu.size());
  return kOk;
}

int cmd_eval(const EvalArgs& a) {
  const Trajectory est = read_tum(a.est);
  const Trajectory ref = read_tum(a.ref);
  const AteResult ate = evaluate_ate(est, ref, a.max_dt);
  const RpeResult rpe = evaluate_rpe(est, ref, a.max_dt);
  if (a.json) {
    nlohmann::json j = {{"ate_rmse_m", ate.rmse},
                        {"pairs", ate.errors.size()},
                        {"rpe_m", rpe.translation_rmse},
                        {"rpe_deg", rpe.rotation_rmse_deg}};
    std::printf("%s\n", j.dump(2).c_str());
  } else {
    std::printf("pairs     %zu\n", ate.errors.size());
    std::printf("ATE RMSE  %.6f m\n", ate.rmse);
    std::printf("ATE max   %.6f m\n", *std::max_element(ate.errors.begin(), ate.errors.end()));
    std::printf("RPE       %.6f m  %.4f deg\n", rpe.translation_rmse, rpe.rotation_rmse_deg);
  }
  return kOk;
}

double number_or_nan(const nlohmann::json& j, const char* key) {
  const auto it = j.find(key);
  return it != j.end() && it->is_number() ? it->get<double>() : std::nan("");
}

int cmd_export_plots(const PlotArgs& a) {
  std::ifstream in(a.report);
  if (!in) throw IoError("cannot open " + a.report);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(a.report + ": " + e.what());
  }
  if (!j.contains("trajectory") || !j.contains("frames")) throw FormatError(a.report + ": not a run report");
  ensure_dir(a.out);
  const fs::path out(a.out);

  std::ostringstream traj, err, timing;
  traj << "t,x,y,z\n";
  err << "t,ate_error_m\n";
  traj.precision(9);
  err.precision(9);
  timing.precision(6);
  size_t n_err = 0;
  for (const auto& row : j["trajectory"]) {
    const double t = number_or_nan(row, "t");
    traj << t << ',' << number_or_nan(row, "x") << ',' << number_or_nan(row, "y") << ',' << number_or_nan(row, "z")
         << '\n';
    if (row.contains("ate_error_m")) {
      err << t << ',' << row["ate_error_m"].get<double>() << '\n';
      ++n_err;
    }
  }
  static const char* kStages[] = {"total_ms", "propagate_ms", "deskew_ms", "lidar_update_ms",
                                  "visual_update_ms", "map_ms", "loop_ms", "backend_ms"};
  timing << "t";
  for (const char* s : kStages) timing << ',' << s;
  timing << '\n';
  for (const auto& f : j["frames"]) {
    timing << number_or_nan(f, "t");
    for (const char* s : kStages) timing << ',' << number_or_nan(f, s);
    timing << '\n';
  }
  write_text(out / "trajectory.csv", traj.str());
  write_text(out / "error.csv", err.str());
  write_text(out / "timing.csv", timing.str());
  std::printf("%zu poses, %zu errors, %zu frames -> %s\n", j["trajectory"].size(), n_err, j["frames"].size(),
              a.out.c_str());
  return kOk;
}

Pose pose_near(const Trajectory& gt, double t) {
  const auto it = std::lower_bound(gt.begin(), gt.end(), t, [](const StampedPose& s, double v) { return s.t < v; });
  if (it == gt.begin()) return it->pose;
  if (it == gt.end()) return gt.back().pose;
  return (t - std::prev(it)->t < it->t - t) ? std::prev(it)->pose : it->pose;
}

int cmd_loop_bench(const BenchArgs& a) {
  const Dataset d = load_dataset(a.dataset);
  if (!d.groundtruth || d.groundtruth->empty()) throw FormatError(a.dataset + ": loop-bench needs groundtruth.tum");

  struct Sample {
    double t;
    Pose sensor;  // world_from_lidar
    loop::ScanDescriptor desc;
  };
  std::vector<Sample> samples;
  for (size_t i = 0; i < d.scans.size(); i += static_cast<size_t>(a.stride)) {
    const LidarScan scan = d.load_scan(i);
    if (scan.points.empty()) continue;
    const Pose sensor = pose_near(*d.groundtruth, scan.end) * d.calib.extrinsics.imu_from_lidar;
    samples.push_back({scan.end, sensor, loop::describe(scan)});
  }

  struct Scored {
    double overlap;
    bool revisit;
    double yaw_error_deg;
  };
  std::vector<Scored> pairs;
  for (size_t i = 0; i < samples.size(); ++i) {
    for (size_t j = i + 1; j < samples.size(); ++j) {
      if (samples[j].t - samples[i].t < a.min_gap) continue;
      const double dist = (samples[i].sensor.translation - samples[j].sensor.translation).norm();
      if (dist > a.revisit_radius && dist < a.distinct_radius) continue;  // ambiguous band
      const loop::MatchResult m = loop::match(samples[i].desc, samples[j].desc);
      // Yaw of scan j relative to scan i.
      const Pose rel = samples[i].sensor.inverse() * samples[j].sensor;
      const Mat3 r = rel.rotation.matrix();
      const double true_yaw = std::atan2(r(1, 0), r(0, 0));
      const double e = std::remainder(m.yaw - true_yaw, 2.0 * M_PI);
      pairs.push_back({m.overlap, dist <= a.revisit_radius, std::abs(e) * 180.0 / M_PI});
    }
  }
  const auto positives = std::count_if(pairs.begin(), pairs.end(), [](const Scored& s) { return s.revisit; });
  std::printf("%zu scans, %zu pairs (%ld revisits within %.1f m, %ld beyond %.1f m)\n", samples.size(), pairs.size(),
              static_cast<long>(positives), a.revisit_radius, static_cast<long>(pairs.size() - positives),
              a.distinct_radius);
  std::printf("%9s %6s %6s %6s %9s %9s %12s\n", "threshold", "TP", "FP", "FN", "precision", "recall", "yaw_err_deg");
  for (double th = 0.30; th <= 0.901; th += 0.05) {
    long tp = 0, fp = 0, fn = 0;
    double yaw_sum = 0.0;
    for (const Scored& s : pairs) {
      const bool hit = s.overlap >= th;
      if (hit && s.revisit) {
        ++tp;
        yaw_sum += s.yaw_error_deg;
      } else if (hit) {
        ++fp;
      } else if (s.revisit) {
        ++fn;
      }
    }
    const double precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 1.0;
    const double recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    std::printf("%9.2f %6ld %6ld %6ld %9.3f %9.3f %12.2f\n", th, tp, fp, fn, precision, recall,
                tp > 0 ? yaw_sum / static_cast<double>(tp) : 0.0);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LiDAR-visual-inertial SLAM"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run_cmd = app.add_subcommand("run", "Run the estimator over a dataset");
  run_cmd->add_option("--config", run_args.config, "key = value configuration file")->check(CLI::ExistingFile);
  run_cmd->add_option("--dataset", run_args.dataset, "Dataset directory")->required();
  run_cmd->add_option("--out", run_args.out, "Output directory")->required();
  run_cmd->add_option("--mode", run_args.mode, "Override the configured mode");
  run_cmd->add_flag("--quiet", run_args.quiet, "No progress output");

  SimArgs sim_args;
  auto* sim_cmd = app.add_subcommand("simulate", "Write a synthetic dataset");
  sim_cmd->add_option("--scenario", sim_args.scenario, "loop, corridor or room")->required();
  sim_cmd->add_option("--out", sim_args.out, "Dataset directory")->required();
  sim_cmd->add_option("--seed", sim_args.seed, "World and noise seed")->required();
  sim_cmd->add_option("--duration", sim_args.duration, "Seconds of motion, 0 for the scenario default");
  sim_cmd->add_flag("--noise-free", sim_args.noise_free, "No sensor noise or IMU bias");
  sim_cmd->add_flag("--no-images", sim_args.no_images, "LiDAR and IMU only");
  sim_cmd->add_option("--azimuth", sim_args.azimuth, "LiDAR azimuth step, deg")->check(CLI::Range(0.05, 10.0));
  sim_cmd->add_option("--width", sim_args.width, "Image width")->check(CLI::Range(16, 4096));
  sim_cmd->add_option("--height", sim_args.height, "Image height")->check(CLI::Range(16, 4096));

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "ATE and RPE of a TUM trajectory");
  eval_cmd->add_option("--est", eval_args.est, "Estimated trajectory (TUM)")->required();
  eval_cmd->add_option("--ref", eval_args.ref, "Reference trajectory (TUM)")->required();
  eval_cmd->add_option("--max-dt", eval_args.max_dt, "Association window, s")->check(CLI::PositiveNumber);
  eval_cmd->add_flag("--json", eval_args.json, "JSON output");

  PlotArgs plot_args;
  auto* plot_cmd = app.add_subcommand("export-plots", "CSV series from a run report");
  plot_cmd->add_option("--report", plot_args.report, "report.json from `slam run`")->required();
  plot_cmd->add_option("--out", plot_args.out, "Output directory")->required();

  BenchArgs bench_args;
  auto* bench_cmd = app.add_subcommand("loop-bench", "Place recognition precision/recall over a dataset");
  bench_cmd->add_option("--dataset", bench_args.dataset, "Dataset directory with ground truth")->required();
  bench_cmd->add_option("--stride", bench_args.stride, "Use every n-th scan")->check(CLI::Range(1, 1000));
  bench_cmd->add_option("--min-gap", bench_args.min_gap, "Minimum time between paired scans, s");
  bench_cmd->add_option("--revisit-radius", bench_args.revisit_radius, "Revisit distance, m");
  bench_cmd->add_option("--distinct-radius", bench_args.distinct_radius, "Distinct place distance, m");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (*run_cmd) return cmd_run(run_args);
    if (*sim_cmd) return cmd_simulate(sim_args);
    if (*eval_cmd) return cmd_eval(eval_args);
    if (*plot_cmd) return cmd_export_plots(plot_args);
    if (*bench_cmd) return cmd_loop_bench(bench_args);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsageError;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kModuleError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kModuleError;
  }
  return kUsageError;
}
