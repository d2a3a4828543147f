#pragma once

#include <optional>
#include <vector>

#include "lvi/posegraph.hpp"
#include "lvi/lio.hpp"
#include "lvi/sensors.hpp"

namespace lvi::loop {

struct DescriptorParams {
  int rings = 40;  // 1 m rings: indoor rooms need the radial resolution
  int sectors = 60;
  double max_range = 40.0;
  /// Added to max z so that occupied cells stay positive; empty cells are 0.
  double height_offset = 2.0;
};

struct ScanDescriptor {
  int rings = 0;
  int sectors = 0;
  Eigen::MatrixXd cells;    // rings x sectors
  Eigen::VectorXd ring_key;  // occupied fraction per ring
};

/// Bins points by horizontal range and azimuth (sensor frame). Throws EmptyScan.
ScanDescriptor describe(const LidarScan& scan, const DescriptorParams& params = {});

/// Columns moved so that out(:, a) = d(:, (a + k) mod A).
Eigen::MatrixXd shift_columns(const Eigen::MatrixXd& cells, int k);

struct MatchResult {
  double overlap = 0.0;  // in [0, 1]
  double yaw = 0.0;      // rotation taking scan 2 onto scan 1, in (-pi, pi]
};
MatchResult match(const ScanDescriptor& d1, const ScanDescriptor& d2);

struct LoopCandidate {
  int query = 0;
  int match = 0;
  double overlap = 0.0;
  double yaw = 0.0;
  std::optional<Pose> relative;  // match_from_query in the LiDAR frame, once refined
  double inlier_fraction = 0.0;
};

/// Descriptors in insertion order.
class DescriptorStore {
 public:
  void add(int scan_id, ScanDescriptor d);
  size_t size() const { return entries_.size(); }
  const ScanDescriptor* find(int scan_id) const;

  struct Entry {
    int id;
    ScanDescriptor descriptor;
  };
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::vector<Entry> entries_;
};

struct RetrieveParams {
  size_t k = 3;
  size_t exclusion = 30;       // most recent entries never returned
  size_t ring_key_pool = 10;  // nearest by ring-key that get a full match()
};

/// Top-k candidates by overlap; the query id itself is never returned.
std::vector<LoopCandidate> retrieve(const DescriptorStore& history, int query_id, const ScanDescriptor& query,
                                    const RetrieveParams& params = {});

/// Edge and planar feature points of one scan, sensor frame.
struct FeatureCloud {
  std::vector<Vec3> edges;
  std::vector<Vec3> planes;
};
/// Classifies with the roughness rule and thins planar points on a voxel grid.
FeatureCloud extract_features(const LidarScan& scan, double beta = lio::kDefaultBeta, int n = 10,
                              double planar_voxel = 0.3);

struct RefineParams {
  int max_iter = 30;
  double edge_weight = 1.0;   // y1
  double plane_weight = 1.0;  // y2
  double initial_radius = 3.0;
  double final_radius = 0.6;
  double inlier_distance = 0.2;
  double max_mean_residual = 0.1;
  double min_inlier_fraction = 0.5;
};

struct RefineResult {
  Pose match_from_query;
  double mean_residual = 0.0;
  double inlier_fraction = 0.0;
  int iterations = 0;
};

/// Gauss-Newton on point-to-line (edges) and point-to-plane (planar)
/// distances, correspondences re-sought every iteration, starting from a pure
/// yaw of `yaw_init` (query -> match). nullopt when the fit is rejected.
std::optional<RefineResult> refine(const FeatureCloud& query, const FeatureCloud& match, double yaw_init,
                                   const RefineParams& params = {});

/// Loop factor between graph nodes i (match) and j (query) with
/// information = scale * inlier_fraction * I.
graph::BinaryFactor emit_factor(int node_i, int node_j, const Pose& z, double inlier_fraction, double scale);

}  // namespace lvi::loop
