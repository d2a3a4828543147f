#pragma once

#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "lvi/manifold.hpp"

namespace lvi::graph {

struct GraphNode {
  int id = 0;
  Pose estimate;
  double t = 0.0;
};

struct UnaryFactor {
  int node = 0;
  Pose z;
  Mat6 information = Mat6::Identity();
};

enum class FactorKind { Odometry, LoopClosure };

struct BinaryFactor {
  int i = 0;
  int j = 0;
  Pose z;  // measured x_i^-1 x_j
  Mat6 information = Mat6::Identity();
  FactorKind kind = FactorKind::Odometry;
};

class PoseGraph {
 public:
  /// Throws std::invalid_argument on a duplicate id.
  void add_node(int id, const Pose& estimate, double t = 0.0);
  /// Throws std::invalid_argument for unknown ids.
  void add_unary(const UnaryFactor& f);
  void add_binary(const BinaryFactor& f);

  bool has_node(int id) const { return index_.count(id) > 0; }
  size_t index_of(int id) const { return index_.at(id); }
  const GraphNode& node(int id) const { return nodes_[index_.at(id)]; }
  GraphNode& node(int id) { return nodes_[index_.at(id)]; }

  std::vector<GraphNode>& nodes() { return nodes_; }
  const std::vector<GraphNode>& nodes() const { return nodes_; }
  const std::vector<UnaryFactor>& unary() const { return unary_; }
  const std::vector<BinaryFactor>& binary() const { return binary_; }
  size_t loop_factor_count() const;

 private:
  std::vector<GraphNode> nodes_;
  std::unordered_map<int, size_t> index_;
  std::vector<UnaryFactor> unary_;
  std::vector<BinaryFactor> binary_;
};

struct UnaryError {
  Vec6 e;
  Mat6 jacobian;
};
/// e = log(z^-1 x); Jacobian wrt right perturbation of x.
UnaryError unary_error(const UnaryFactor& f, const Pose& x);

struct BinaryError {
  Vec6 e;
  Mat6 jacobian_i;
  Mat6 jacobian_j;
};
/// e = log(z^-1 x_i^-1 x_j).
BinaryError binary_error(const BinaryFactor& f, const Pose& xi, const Pose& xj);

/// Sum of e^T information e over all factors.
double marginal_cost(const PoseGraph& graph);

struct OptimizeParams {
  int max_iter = 50;
  double tol = 1e-8;  // on the largest step component
  int max_halvings = 5;
  bool levenberg_marquardt = false;
  double lambda = 1e-4;  // initial LM damping
  bool dense = false;    // dense normal equations instead of sparse LDLT
  double max_condition = 1e12;
};

struct OptimizeReport {
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  std::vector<double> costs;  // after each iteration
};

/// Gauss-Newton over all node poses. Throws GaugeUnfixed and SolverSingular.
OptimizeReport optimize(PoseGraph& graph, const OptimizeParams& params = {});

/// g2o text: VERTEX_SE3:QUAT, EDGE_SE3:QUAT and EDGE_SE3_PRIOR (unary) lines.
/// A "#LOOP" comment line marks the next edge as a loop closure.
void write_g2o(const PoseGraph& graph, std::ostream& out);
void write_g2o(const PoseGraph& graph, const std::string& path);
/// Throws FormatError naming the line.
PoseGraph read_g2o(std::istream& in, const std::string& name = "<stream>");
PoseGraph read_g2o(const std::string& path);

}  // namespace lvi::graph
