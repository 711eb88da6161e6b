#pragma once

#include <cmath>
#include <memory>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "tuttenet/mesh2d.hpp"

namespace tuttenet {

/// Squashing margins: edge weights land in (0.2, 0.8), boundary increments
/// in (0.1, 0.9).
inline constexpr double kEdgeWeightMargin = 0.2;
inline constexpr double kBoundaryMargin = 0.1;

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  using std::exp;
  return x >= Scalar(0) ? Scalar(1) / (Scalar(1) + exp(-x)) : exp(x) / (Scalar(1) + exp(x));
}

/// sigmoid(x) * (1 - 2 eps) + eps
template <typename Scalar>
Scalar squash(Scalar x, Scalar eps) {
  return sigmoid(x) * (Scalar(1) - Scalar(2) * eps) + eps;
}

template <typename Scalar>
Scalar squash_derivative(Scalar x, Scalar eps) {
  const Scalar s = sigmoid(x);
  return s * (Scalar(1) - s) * (Scalar(1) - Scalar(2) * eps);
}

/// Unconstrained parameters of one Tutte layer: one raw value per mesh edge
/// and one per boundary vertex (in boundary_loop order).
struct TutteLayerParams {
  Eigen::VectorXd edge_weights;
  Eigen::VectorXd boundary_increments;

  static TutteLayerParams zeros(const Mesh2D& mesh);
  void validate(const Mesh2D& mesh) const;
};

/// Convex boundary polygon on the square's boundary.
///
/// `increments` are the positive angle increments alpha (summing to 2 pi),
/// `cumulative` their inclusive prefix sums (strictly increasing, ending at
/// 2 pi), and `angles` the ray directions actually used: boundary vertex j sits
/// at phase + (cumulative_j - increments_j), phase being the rest direction of
/// the first boundary vertex.
struct ConvexBoundary {
  Eigen::VectorXd increments;
  Eigen::VectorXd cumulative;
  Eigen::VectorXd angles;
  Eigen::Matrix2Xd points;
  Eigen::VectorXd squashed;    // squash(raw, 0.1)
  double normalizer = 0.0;     // sum_j squashed_j * rest_j
};

/// Angle increments between consecutive rest boundary vertices (sum 2 pi).
Eigen::VectorXd rest_boundary_increments(const Mesh2D& mesh);
double rest_boundary_phase(const Mesh2D& mesh);

/// Intersection of the ray from the origin at `angle` with the boundary of
/// [-1,1]^2, and its derivative with respect to the angle.
Eigen::Vector2d ray_square_intersection(double angle);
Eigen::Vector2d ray_square_intersection_derivative(double angle);

ConvexBoundary build_boundary(const Mesh2D& mesh, const TutteLayerParams& params);

/// Per-edge weights and the interior system matrix of the Tutte equations.
struct LaplacianSystem {
  Eigen::VectorXd weights; // per edge, in (0.2, 0.8)
  Eigen::SparseMatrix<double> interior; // SPD, num_interior x num_interior
};

LaplacianSystem assemble_laplacian(const Mesh2D& mesh, const TutteLayerParams& params);
LaplacianSystem assemble_laplacian_from_weights(const Mesh2D& mesh, const Eigen::VectorXd& weights);

/// Factorized interior system; symmetric, so it also serves the adjoint.
class InteriorSolver {
public:
  explicit InteriorSolver(const Eigen::SparseMatrix<double>& matrix);
  ~InteriorSolver();
  InteriorSolver(const InteriorSolver&) = delete;
  InteriorSolver& operator=(const InteriorSolver&) = delete;

  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const;

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct TutteEmbedding {
  PLMap2D map;
  ConvexBoundary boundary;
  Eigen::VectorXd weights;
  std::shared_ptr<const InteriorSolver> solver; // null when there are no interior vertices
};

/// Solve the Tutte system for the layer. Throws InternalError if any triangle
/// comes out with a non-positive determinant.
TutteEmbedding solve_tutte(const MeshPtr& mesh, const TutteLayerParams& params);

/// Tutte solve with explicit edge weights and boundary positions. No
/// injectivity assertion: the caller owns the boundary.
TutteEmbedding solve_tutte_with_boundary(const MeshPtr& mesh, const Eigen::VectorXd& weights,
                                         const Eigen::Matrix2Xd& boundary_points);

/// Max over interior vertices of |sum_j w_ij (u_j - u_i)|, relative to the
/// largest weighted edge term.
double tutte_residual(const Mesh2D& mesh, const Eigen::VectorXd& weights, const Eigen::Matrix2Xd& U);

} // namespace tuttenet
