#include "lvi/posegraph.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "lvi/errors.hpp"

namespace lvi::graph {

void PoseGraph::add_node(int id, const Pose& estimate, double t) {
  if (index_.count(id)) throw std::invalid_argument("duplicate node id " + std::to_string(id));
  index_[id] = nodes_.size();
  nodes_.push_back({id, estimate, t});
}

void PoseGraph::add_unary(const UnaryFactor& f) {
  if (!has_node(f.node)) throw std::invalid_argument("unary factor on unknown node " + std::to_string(f.node));
  unary_.push_back(f);
}

void PoseGraph::add_binary(const BinaryFactor& f) {
  if (f.i == f.j || !has_node(f.i) || !has_node(f.j)) {
    throw std::invalid_argument("bad binary factor " + std::to_string(f.i) + "-" + std::to_string(f.j));
  }
  binary_.push_back(f);
}

size_t PoseGraph::loop_factor_count() const {
  return static_cast<size_t>(std::count_if(binary_.begin(), binary_.end(),
                                           [](const BinaryFactor& f) { return f.kind == FactorKind::LoopClosure; }));
}

UnaryError unary_error(const UnaryFactor& f, const Pose& x) {
  const Twist e = log(f.z.inverse() * x);
  return {e.vector(), se3_right_jacobian_inverse(e)};
}

BinaryError binary_error(const BinaryFactor& f, const Pose& xi, const Pose& xj) {
  const Twist e = log(f.z.inverse() * (xi.inverse() * xj));
  const Mat6 jr_inv = se3_right_jacobian_inverse(e);
  return {e.vector(), -jr_inv * adjoint(xj.inverse() * xi), jr_inv};
}

double marginal_cost(const PoseGraph& graph) {
  double c = 0.0;
  for (const UnaryFactor& f : graph.unary()) {
    const Vec6 e = log(f.z.inverse() * graph.node(f.node).estimate).vector();
    c += e.dot(f.information * e);
  }
  for (const BinaryFactor& f : graph.binary()) {
    const Vec6 e = log(f.z.inverse() * (graph.node(f.i).estimate.inverse() * graph.node(f.j).estimate)).vector();
    c += e.dot(f.information * e);
  }
  return c;
}

namespace {

void check_gauge(const PoseGraph& graph) {
  const size_t n = graph.nodes().size();
  std::vector<size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  const auto find = [&](size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (const BinaryFactor& f : graph.binary()) parent[find(graph.index_of(f.i))] = find(graph.index_of(f.j));
  std::vector<char> anchored(n, 0);
  for (const UnaryFactor& f : graph.unary()) anchored[find(graph.index_of(f.node))] = 1;
  for (size_t i = 0; i < n; ++i) {
    if (!anchored[find(i)]) {
      throw GaugeUnfixed("node " + std::to_string(graph.nodes()[i].id) + " has no path to a unary factor");
    }
  }
}

struct Linearization {
  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::VectorXd g;
};

void add_block(std::vector<Eigen::Triplet<double>>& t, size_t r, size_t c, const Mat6& m) {
  for (int a = 0; a < 6; ++a)
    for (int b = 0; b < 6; ++b) t.emplace_back(static_cast<int>(6 * r + a), static_cast<int>(6 * c + b), m(a, b));
}

Linearization linearize(const PoseGraph& graph) {
  Linearization lin;
  lin.g = Eigen::VectorXd::Zero(6 * static_cast<Eigen::Index>(graph.nodes().size()));
  for (const UnaryFactor& f : graph.unary()) {
    const size_t k = graph.index_of(f.node);
    const UnaryError u = unary_error(f, graph.nodes()[k].estimate);
    add_block(lin.triplets, k, k, u.jacobian.transpose() * f.information * u.jacobian);
    lin.g.segment<6>(6 * k) += u.jacobian.transpose() * f.information * u.e;
  }
  for (const BinaryFactor& f : graph.binary()) {
    const size_t a = graph.index_of(f.i), b = graph.index_of(f.j);
    const BinaryError be = binary_error(f, graph.nodes()[a].estimate, graph.nodes()[b].estimate);
    const Mat6 wi = f.information * be.jacobian_i, wj = f.information * be.jacobian_j;
    add_block(lin.triplets, a, a, be.jacobian_i.transpose() * wi);
    add_block(lin.triplets, a, b, be.jacobian_i.transpose() * wj);
    add_block(lin.triplets, b, a, be.jacobian_j.transpose() * wi);
    add_block(lin.triplets, b, b, be.jacobian_j.transpose() * wj);
    lin.g.segment<6>(6 * a) += be.jacobian_i.transpose() * f.information * be.e;
    lin.g.segment<6>(6 * b) += be.jacobian_j.transpose() * f.information * be.e;
  }
  return lin;
}

Eigen::VectorXd solve(const Linearization& lin, size_t dim, double lambda, const OptimizeParams& params) {
  Eigen::SparseMatrix<double> a(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  a.setFromTriplets(lin.triplets.begin(), lin.triplets.end());
  if (lambda > 0) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) a.coeffRef(i, i) *= 1.0 + lambda;
  }
  if (params.dense || dim <= 6 * 50) {
    // Small systems: a full eigen check is cheap and catches near-singularity.
    const Eigen::MatrixXd d(a);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(d, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
    if (!(lo > 0) || hi / lo > params.max_condition) {
      throw SolverSingular("pose graph normal matrix condition " + std::to_string(lo > 0 ? hi / lo : INFINITY));
    }
    if (params.dense) return d.ldlt().solve(-lin.g);
  }
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(a);
  if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 0) throw SolverSingular("sparse factorization");
  const double dmax = ldlt.vectorD().maxCoeff(), dmin = ldlt.vectorD().minCoeff();
  if (dmax / dmin > params.max_condition) throw SolverSingular("pivot ratio " + std::to_string(dmax / dmin));
  return ldlt.solve(-lin.g);
}

}  // namespace

OptimizeReport optimize(PoseGraph& graph, const OptimizeParams& params) {
  check_gauge(graph);
  OptimizeReport rep;
  double cost = marginal_cost(graph);
  rep.initial_cost = cost;
  const size_t dim = 6 * graph.nodes().size();
  double lambda = params.levenberg_marquardt ? params.lambda : 0.0;

  for (int it = 0; it < params.max_iter; ++it) {
    const Linearization lin = linearize(graph);
    const Eigen::VectorXd delta = solve(lin, dim, lambda, params);
    ++rep.iterations;
    const std::vector<GraphNode> before = graph.nodes();
    // Once the predicted decrease is down at rounding level the cost can no
    // longer rank steps, so the Gauss-Newton step is taken as is.
    const bool at_rounding = -0.5 * lin.g.dot(delta) < 1e-12 * cost;
    double scale = 1.0;
    bool accepted = false;
    for (int h = 0; h <= params.max_halvings; ++h, scale *= 0.5) {
      for (size_t k = 0; k < before.size(); ++k) {
        graph.nodes()[k].estimate = boxplus(before[k].estimate, Twist(Vec6(scale * delta.segment<6>(6 * k))));
      }
      const double c = marginal_cost(graph);
      if (c <= cost || at_rounding) {
        cost = c;
        accepted = true;
        break;
      }
    }
    if (!accepted) graph.nodes() = before;
    if (params.levenberg_marquardt) lambda = accepted ? lambda * 0.3 : lambda * 10.0;
    rep.costs.push_back(cost);
    if (!accepted || scale * delta.cwiseAbs().maxCoeff() < params.tol) break;
  }
  rep.final_cost = cost;
  return rep;
}

namespace {

// g2o orders information as (translation, rotation).
Mat6 swap_blocks(const Mat6& m) {
  Mat6 p = Mat6::Zero();
  p.topRightCorner<3, 3>().setIdentity();
  p.bottomLeftCorner<3, 3>().setIdentity();
  return p * m * p;
}

void write_pose(std::ostream& out, const Pose& p) {
  const auto q = p.rotation.quaternion();
  out << p.translation.x() << ' ' << p.translation.y() << ' ' << p.translation.z() << ' ' << q.x() << ' ' << q.y()
      << ' ' << q.z() << ' ' << q.w();
}

void write_information(std::ostream& out, const Mat6& info) {
  const Mat6 m = swap_blocks(info);
  for (int r = 0; r < 6; ++r)
    for (int c = r; c < 6; ++c) out << ' ' << m(r, c);
}

}  // namespace

void write_g2o(const PoseGraph& graph, std::ostream& out) {
  out << std::setprecision(17);
  for (const GraphNode& n : graph.nodes()) {
    out << "VERTEX_SE3:QUAT " << n.id << ' ';
    write_pose(out, n.estimate);
    out << '\n';
  }
  for (const UnaryFactor& f : graph.unary()) {
    out << "EDGE_SE3_PRIOR " << f.node << " 0 ";
    write_pose(out, f.z);
    write_information(out, f.information);
    out << '\n';
  }
  for (const BinaryFactor& f : graph.binary()) {
    if (f.kind == FactorKind::LoopClosure) out << "#LOOP\n";
    out << "EDGE_SE3:QUAT " << f.i << ' ' << f.j << ' ';
    write_pose(out, f.z);
    write_information(out, f.information);
    out << '\n';
  }
}

void write_g2o(const PoseGraph& graph, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  write_g2o(graph, out);
  if (!out) throw IoError("write failed: " + path);
}

PoseGraph read_g2o(std::istream& in, const std::string& name) {
  PoseGraph g;
  std::string line;
  int lineno = 0;
  bool next_is_loop = false;
  const auto fail = [&](const std::string& why) {
    throw FormatError(name + ":" + std::to_string(lineno) + ": " + why);
  };
  const auto read_pose = [&](std::istringstream& ss) {
    double x, y, z, qx, qy, qz, qw;
    if (!(ss >> x >> y >> z >> qx >> qy >> qz >> qw)) fail("expected x y z qx qy qz qw");
    return Pose(Rotation(qw, qx, qy, qz), Vec3(x, y, z));
  };
  const auto read_info = [&](std::istringstream& ss) {
    Mat6 m;
    for (int r = 0; r < 6; ++r) {
      for (int c = r; c < 6; ++c) {
        if (!(ss >> m(r, c))) fail("expected 21 information values");
        m(c, r) = m(r, c);
      }
    }
    return swap_blocks(m);
  };
  try {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.rfind("#LOOP", 0) == 0) {
        next_is_loop = true;
        continue;
      }
      std::istringstream ss(line);
      std::string tag;
      if (!(ss >> tag) || tag[0] == '#') continue;
      if (tag == "VERTEX_SE3:QUAT") {
        int id;
        if (!(ss >> id)) fail("expected vertex id");
        g.add_node(id, read_pose(ss));
      } else if (tag == "EDGE_SE3:QUAT") {
        BinaryFactor f;
        if (!(ss >> f.i >> f.j)) fail("expected edge ids");
        f.z = read_pose(ss);
        f.information = read_info(ss);
        f.kind = next_is_loop ? FactorKind::LoopClosure : FactorKind::Odometry;
        next_is_loop = false;
        g.add_binary(f);
      } else if (tag == "EDGE_SE3_PRIOR") {
        UnaryFactor f;
        int param;
        if (!(ss >> f.node >> param)) fail("expected prior node and parameter id");
        f.z = read_pose(ss);
        f.information = read_info(ss);
        g.add_unary(f);
      } else {
        fail("unknown record " + tag);
      }
    }
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  return g;
}

PoseGraph read_g2o(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  return read_g2o(in, path);
}

}  // namespace lvi::graph
