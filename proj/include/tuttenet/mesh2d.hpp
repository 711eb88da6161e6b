#pragma once

#include <array>
#include <memory>
#include <vector>

#include <Eigen/Core>

namespace tuttenet {

/// Regular triangulation of the square [-1,1]^2 with n x n vertices.
///
/// Vertices are row-major: vertex (i, j) has index j*n + i and sits at
/// (-1 + 2i/(n-1), -1 + 2j/(n-1)). Cell (i, j) holds triangles 2c and 2c+1
/// with c = j*(n-1) + i. Diagonals alternate with the parity of i+j
/// (union-jack pattern) so that for odd n every diagonal touching a corner of
/// the square passes through that corner and no triangle has all three
/// vertices on the boundary.
struct Mesh2D {
  int resolution = 0;
  double spacing = 0.0;
  Eigen::Matrix2Xd vertices;
  std::vector<std::array<int, 3>> triangles; // counter-clockwise
  std::vector<std::array<int, 2>> edges;     // (a, b) with a < b, sorted
  std::vector<int> boundary_loop;            // ccw, starting at (-1,-1)
  std::vector<int> interior_ids;

  // Derived lookups.
  std::vector<int> interior_slot; // vertex -> index into interior_ids, or -1
  std::vector<int> boundary_slot; // vertex -> index into boundary_loop, or -1
  std::vector<Eigen::Matrix2d> edge_inverse; // inverse of [v1-v0, v2-v0] per triangle
  std::vector<double> triangle_area;

  int num_vertices() const { return static_cast<int>(vertices.cols()); }
  int num_triangles() const { return static_cast<int>(triangles.size()); }
  int num_edges() const { return static_cast<int>(edges.size()); }
  int num_boundary() const { return static_cast<int>(boundary_loop.size()); }
  int num_interior() const { return static_cast<int>(interior_ids.size()); }
};

using MeshPtr = std::shared_ptr<const Mesh2D>;

/// Points outside the closed square by at most this much are clamped onto it.
inline constexpr double kDomainTolerance = 1e-9;

Mesh2D build_mesh(int resolution);
MeshPtr make_mesh(int resolution);

/// Containing triangle of q; the lowest index wins on shared edges/vertices.
/// Throws OutOfDomain when q is outside the square by more than
/// kDomainTolerance.
int locate_triangle(const Mesh2D& mesh, const Eigen::Vector2d& q);

/// Clamp q into the square, throwing OutOfDomain beyond tolerance.
Eigen::Vector2d clamp_to_domain(const Eigen::Vector2d& q);

struct TriangleAffine {
  Eigen::Matrix2d A;
  Eigen::Vector2d delta;
  Eigen::Matrix2d A_inv;
  double det = 0.0;
};

/// Piecewise-linear map of a Mesh2D given by deformed vertex positions.
/// Immutable; carries a bucket index over the deformed triangles for inverse
/// point location.
class PLMap2D {
public:
  PLMap2D() = default;
  PLMap2D(MeshPtr mesh, Eigen::Matrix2Xd deformed);

  const Mesh2D& mesh() const { return *mesh_; }
  const MeshPtr& mesh_ptr() const { return mesh_; }
  const Eigen::Matrix2Xd& deformed() const { return deformed_; }
  const TriangleAffine& affine(int t) const { return affine_[static_cast<std::size_t>(t)]; }
  const std::vector<TriangleAffine>& affines() const { return affine_; }

  double min_det() const;

  /// Triangle whose deformed copy contains r (lowest index on ties), or -1.
  int find_in_image(const Eigen::Vector2d& r) const;

  /// Barycentric coordinates of r with respect to deformed triangle t.
  Eigen::Vector3d image_barycentric(int t, const Eigen::Vector2d& r) const;

private:
  MeshPtr mesh_;
  Eigen::Matrix2Xd deformed_;
  std::vector<TriangleAffine> affine_;

  Eigen::Vector2d bucket_origin_ = Eigen::Vector2d::Zero();
  double bucket_size_ = 1.0;
  int bucket_dim_ = 1;
  std::vector<int> bucket_start_;
  std::vector<int> bucket_items_;
};

PLMap2D realize_plmap(MeshPtr mesh, Eigen::Matrix2Xd deformed);

/// Throws NotInImage when r is outside the deformed mesh.
int locate_triangle_in_image(const PLMap2D& map, const Eigen::Vector2d& r);

Eigen::Vector2d apply_plmap(const PLMap2D& map, const Eigen::Vector2d& q);

/// Barycentric coordinates of q with respect to source triangle t.
Eigen::Vector3d source_barycentric(const Mesh2D& mesh, int t, const Eigen::Vector2d& q);

} // namespace tuttenet
