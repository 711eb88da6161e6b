#pragma once

#include <vector>

#include <Eigen/Core>

#include "tuttenet/mesh2d.hpp"

namespace tuttenet {

/// Local coordinate frame of a layer. Columns of R are the local x, y, z axes
/// expressed in world coordinates; the layer deforms the local xy plane.
struct Frame {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();

  /// Throws InvalidArgument unless R is a proper rotation (to 1e-10).
  static Frame from_matrix(const Eigen::Matrix3d& R);
  Eigen::Vector3d normal() const { return R.col(2); }
};

/// Frames cycling through local z = world x, y, z.
std::vector<Frame> triplane_frames(int count);

struct PrismLayer {
  int index = 0;
  Frame frame;
  PLMap2D map;
};

/// Where a point lands in a layer: the triangle and its local 2D coordinates.
struct PrismHit {
  int triangle = -1;
  Eigen::Vector2d local = Eigen::Vector2d::Zero();
  double normal = 0.0;
};

/// Steps 1-3 of the prismatic map: rotate into the frame, drop z, locate.
PrismHit prism_locate(const PrismLayer& layer, const Eigen::Vector3d& p);

Eigen::Vector3d apply_prism(const PrismLayer& layer, const Eigen::Vector3d& p);

/// R * blockdiag(A_t, 1) * R^T at the triangle containing p.
Eigen::Matrix3d prism_jacobian(const PrismLayer& layer, const Eigen::Vector3d& p);

/// Lifted per-triangle Jacobian without point location.
Eigen::Matrix3d prism_triangle_jacobian(const PrismLayer& layer, int triangle);
Eigen::Matrix3d prism_triangle_inverse_jacobian(const PrismLayer& layer, int triangle);

Eigen::Vector3d invert_prism(const PrismLayer& layer, const Eigen::Vector3d& r);

/// Inverse map together with the image triangle used.
Eigen::Vector3d invert_prism(const PrismLayer& layer, const Eigen::Vector3d& r, int& triangle);

} // namespace tuttenet
