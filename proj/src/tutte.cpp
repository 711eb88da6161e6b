#include "tuttenet/tutte.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/SparseCholesky>

#include "tuttenet/errors.hpp"

namespace tuttenet {

namespace {

double vertex_angle(const Mesh2D& mesh, int v) {
  return std::atan2(mesh.vertices(1, v), mesh.vertices(0, v));
}

Eigen::Matrix2Xd boundary_rhs_positions(const Mesh2D& mesh, const Eigen::Matrix2Xd& boundary_points) {
  Eigen::Matrix2Xd positions = Eigen::Matrix2Xd::Zero(2, mesh.num_vertices());
  for (int k = 0; k < mesh.num_boundary(); ++k)
    positions.col(mesh.boundary_loop[static_cast<std::size_t>(k)]) = boundary_points.col(k);
  return positions;
}

} // namespace

TutteLayerParams TutteLayerParams::zeros(const Mesh2D& mesh) {
  return {Eigen::VectorXd::Zero(mesh.num_edges()), Eigen::VectorXd::Zero(mesh.num_boundary())};
}

void TutteLayerParams::validate(const Mesh2D& mesh) const {
  if (edge_weights.size() != mesh.num_edges())
    throw InvalidArgument("expected " + std::to_string(mesh.num_edges()) + " edge parameters, got " +
                          std::to_string(edge_weights.size()));
  if (boundary_increments.size() != mesh.num_boundary())
    throw InvalidArgument("expected " + std::to_string(mesh.num_boundary()) +
                          " boundary parameters, got " + std::to_string(boundary_increments.size()));
  if (!edge_weights.allFinite() || !boundary_increments.allFinite())
    throw InvalidArgument("layer parameters must be finite");
}

Eigen::VectorXd rest_boundary_increments(const Mesh2D& mesh) {
  const int k = mesh.num_boundary();
  Eigen::VectorXd inc(k);
  for (int i = 0; i < k; ++i) {
    const double a = vertex_angle(mesh, mesh.boundary_loop[static_cast<std::size_t>(i)]);
    const double b = vertex_angle(mesh, mesh.boundary_loop[static_cast<std::size_t>((i + 1) % k)]);
    double d = b - a;
    while (d <= 0.0) d += 2.0 * std::numbers::pi;
    while (d > 2.0 * std::numbers::pi) d -= 2.0 * std::numbers::pi;
    inc[i] = d;
  }
  return inc;
}

double rest_boundary_phase(const Mesh2D& mesh) { return vertex_angle(mesh, mesh.boundary_loop.front()); }

Eigen::Vector2d ray_square_intersection(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  const double m = std::max(std::abs(c), std::abs(s));
  return {c / m, s / m};
}

Eigen::Vector2d ray_square_intersection_derivative(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  if (std::abs(c) >= std::abs(s)) return {0.0, std::copysign(1.0, c) / (c * c)};
  return {-std::copysign(1.0, s) / (s * s), 0.0};
}

ConvexBoundary build_boundary(const Mesh2D& mesh, const TutteLayerParams& params) {
  params.validate(mesh);
  const int k = mesh.num_boundary();
  const Eigen::VectorXd rest = rest_boundary_increments(mesh);
  const double phase = rest_boundary_phase(mesh);

  ConvexBoundary b;
  b.squashed.resize(k);
  for (int i = 0; i < k; ++i) b.squashed[i] = squash(params.boundary_increments[i], kBoundaryMargin);
  b.normalizer = b.squashed.dot(rest);
  b.increments = (2.0 * std::numbers::pi / b.normalizer) * b.squashed.cwiseProduct(rest);
  b.cumulative.resize(k);
  b.angles.resize(k);
  b.points.resize(2, k);
  double acc = 0.0;
  for (int i = 0; i < k; ++i) {
    b.angles[i] = phase + acc;
    acc += b.increments[i];
    b.cumulative[i] = acc;
    b.points.col(i) = ray_square_intersection(b.angles[i]);
  }
  return b;
}

LaplacianSystem assemble_laplacian_from_weights(const Mesh2D& mesh, const Eigen::VectorXd& weights) {
  if (weights.size() != mesh.num_edges()) throw InvalidArgument("edge weight count mismatch");
  const int ni = mesh.num_interior();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(mesh.num_edges()) * 4);
  for (int e = 0; e < mesh.num_edges(); ++e) {
    const auto& edge = mesh.edges[static_cast<std::size_t>(e)];
    const int ia = mesh.interior_slot[static_cast<std::size_t>(edge[0])];
    const int ib = mesh.interior_slot[static_cast<std::size_t>(edge[1])];
    const double w = weights[e];
    if (ia >= 0) trip.emplace_back(ia, ia, w);
    if (ib >= 0) trip.emplace_back(ib, ib, w);
    if (ia >= 0 && ib >= 0) {
      trip.emplace_back(ia, ib, -w);
      trip.emplace_back(ib, ia, -w);
    }
  }
  LaplacianSystem sys;
  sys.weights = weights;
  sys.interior.resize(ni, ni);
  sys.interior.setFromTriplets(trip.begin(), trip.end());
  return sys;
}

LaplacianSystem assemble_laplacian(const Mesh2D& mesh, const TutteLayerParams& params) {
  params.validate(mesh);
  Eigen::VectorXd w(mesh.num_edges());
  for (int e = 0; e < mesh.num_edges(); ++e) w[e] = squash(params.edge_weights[e], kEdgeWeightMargin);
  return assemble_laplacian_from_weights(mesh, w);
}

struct InteriorSolver::Impl {
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt;
};

InteriorSolver::InteriorSolver(const Eigen::SparseMatrix<double>& matrix) : impl_(std::make_unique<Impl>()) {
  impl_->llt.compute(matrix);
  if (impl_->llt.info() != Eigen::Success) throw InternalError("Tutte system factorization failed");
}

InteriorSolver::~InteriorSolver() = default;

Eigen::MatrixXd InteriorSolver::solve(const Eigen::MatrixXd& rhs) const {
  Eigen::MatrixXd x = impl_->llt.solve(rhs);
  if (impl_->llt.info() != Eigen::Success) throw InternalError("Tutte system solve failed");
  return x;
}

TutteEmbedding solve_tutte_with_boundary(const MeshPtr& mesh_ptr, const Eigen::VectorXd& weights,
                                         const Eigen::Matrix2Xd& boundary_points) {
  const Mesh2D& mesh = *mesh_ptr;
  if (boundary_points.cols() != mesh.num_boundary()) throw InvalidArgument("boundary point count mismatch");
  LaplacianSystem sys = assemble_laplacian_from_weights(mesh, weights);
  const Eigen::Matrix2Xd fixed = boundary_rhs_positions(mesh, boundary_points);

  const int ni = mesh.num_interior();
  Eigen::Matrix2Xd U = fixed;
  TutteEmbedding out;
  if (ni > 0) {
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(ni, 2);
    for (int e = 0; e < mesh.num_edges(); ++e) {
      const auto& edge = mesh.edges[static_cast<std::size_t>(e)];
      const int ia = mesh.interior_slot[static_cast<std::size_t>(edge[0])];
      const int ib = mesh.interior_slot[static_cast<std::size_t>(edge[1])];
      if (ia >= 0 && ib < 0) rhs.row(ia) += weights[e] * fixed.col(edge[1]).transpose();
      if (ib >= 0 && ia < 0) rhs.row(ib) += weights[e] * fixed.col(edge[0]).transpose();
    }
    auto solver = std::make_shared<const InteriorSolver>(sys.interior);
    const Eigen::MatrixXd x = solver->solve(rhs);
    if (!x.allFinite()) throw InternalError("Tutte solve produced non-finite positions");
    for (int i = 0; i < ni; ++i) U.col(mesh.interior_ids[static_cast<std::size_t>(i)]) = x.row(i).transpose();
    out.solver = std::move(solver);
  }
  out.map = PLMap2D(mesh_ptr, std::move(U));
  out.weights = std::move(sys.weights);
  out.boundary.points = boundary_points;
  return out;
}

TutteEmbedding solve_tutte(const MeshPtr& mesh_ptr, const TutteLayerParams& params) {
  const Mesh2D& mesh = *mesh_ptr;
  ConvexBoundary boundary = build_boundary(mesh, params);
  Eigen::VectorXd w(mesh.num_edges());
  for (int e = 0; e < mesh.num_edges(); ++e) w[e] = squash(params.edge_weights[e], kEdgeWeightMargin);
  TutteEmbedding emb = solve_tutte_with_boundary(mesh_ptr, w, boundary.points);
  emb.boundary = std::move(boundary);
  const double d = emb.map.min_det();
  if (!(d > 0.0)) {
    throw InternalError("Tutte embedding produced a non-positive triangle (min det " + std::to_string(d) + ")");
  }
  return emb;
}

double tutte_residual(const Mesh2D& mesh, const Eigen::VectorXd& weights, const Eigen::Matrix2Xd& U) {
  Eigen::Matrix2Xd r = Eigen::Matrix2Xd::Zero(2, mesh.num_vertices());
  double scale = 0.0;
  for (int e = 0; e < mesh.num_edges(); ++e) {
    const auto& edge = mesh.edges[static_cast<std::size_t>(e)];
    const Eigen::Vector2d d = weights[e] * (U.col(edge[1]) - U.col(edge[0]));
    r.col(edge[0]) += d;
    r.col(edge[1]) -= d;
    scale = std::max(scale, d.norm());
  }
  double worst = 0.0;
  for (int v : mesh.interior_ids) worst = std::max(worst, r.col(v).norm());
  return scale > 0.0 ? worst / scale : worst;
}

} // namespace tuttenet
