#pragma once

#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "tuttenet/mesh2d.hpp"
#include "tuttenet/prism.hpp"
#include "tuttenet/tutte.hpp"

namespace tuttenet {

/// Points (one per column) with optional nonnegative per-point weights.
struct PointSet {
  Eigen::Matrix3Xd points;
  std::optional<Eigen::VectorXd> weights;

  Eigen::Index size() const { return points.cols(); }
  void validate() const;
  /// weights or all-ones
  Eigen::VectorXd weights_or_ones() const;
};

/// Solver-side data kept per layer for differentiation.
struct LayerSystem {
  ConvexBoundary boundary;
  Eigen::VectorXd weights;
  std::shared_ptr<const InteriorSolver> solver;
};

/// Composite map f = layer_{k} o ... o layer_0. Immutable once realized; the
/// prism layers are a cache of (params, frames).
class DeformationNet {
public:
  DeformationNet(MeshPtr mesh, std::vector<TutteLayerParams> params, std::vector<Frame> frames);

  const Mesh2D& mesh() const { return *mesh_; }
  const MeshPtr& mesh_ptr() const { return mesh_; }
  int num_layers() const { return static_cast<int>(layers_.size()); }
  const std::vector<PrismLayer>& layers() const { return layers_; }
  const PrismLayer& layer(int i) const { return layers_[static_cast<std::size_t>(i)]; }
  const std::vector<TutteLayerParams>& params() const { return params_; }
  const std::vector<Frame>& frames() const { return frames_; }
  const LayerSystem& system(int i) const { return systems_[static_cast<std::size_t>(i)]; }

  /// Layers [begin, end) as a standalone net (no re-solve).
  DeformationNet slice(int begin, int end) const;

  double min_det() const;

private:
  DeformationNet() = default;

  MeshPtr mesh_;
  std::vector<TutteLayerParams> params_;
  std::vector<Frame> frames_;
  std::vector<PrismLayer> layers_;
  std::vector<LayerSystem> systems_;
};

DeformationNet realize(MeshPtr mesh, std::vector<TutteLayerParams> params, std::vector<Frame> frames);

/// All-zero raw parameters over the given frames (the identity map).
DeformationNet zero_net(const MeshPtr& mesh, std::vector<Frame> frames);

Eigen::Vector3d forward(const DeformationNet& net, const Eigen::Vector3d& p);
Eigen::Vector3d inverse(const DeformationNet& net, const Eigen::Vector3d& p);

/// Batched evaluation; weights pass through. Domain errors carry the failing
/// layer and point index.
PointSet forward(const DeformationNet& net, const PointSet& ps);
PointSet inverse(const DeformationNet& net, const PointSet& ps);
Eigen::Matrix3Xd forward(const DeformationNet& net, const Eigen::Matrix3Xd& points);
Eigen::Matrix3Xd inverse(const DeformationNet& net, const Eigen::Matrix3Xd& points);

/// Chain-rule product of the per-layer Jacobians along the orbit of p.
Eigen::Matrix3d jacobian(const DeformationNet& net, const Eigen::Vector3d& p);
std::vector<Eigen::Matrix3d> jacobians(const DeformationNet& net, const Eigen::Matrix3Xd& points);

/// Jacobian of f^-1 at a deformed point, accumulated from the per-layer
/// inverse affine maps.
Eigen::Matrix3d inverse_jacobian(const DeformationNet& net, const Eigen::Vector3d& p_deformed);

/// Triangle index visited in each layer by the orbit of p.
std::vector<int> orbit_triangles(const DeformationNet& net, const Eigen::Vector3d& p);

} // namespace tuttenet
