#pragma once

#include <vector>

#include <Eigen/Core>

#include "tuttenet/deform.hpp"
#include "tuttenet/energy.hpp"

namespace tuttenet {

/// dL/d(raw parameters), shaped like the net's parameters.
struct ParamGradient {
  std::vector<TutteLayerParams> layers;

  static ParamGradient zeros_like(const DeformationNet& net);
  ParamGradient& operator+=(const ParamGradient& other);
  ParamGradient& add_scaled(double a, const ParamGradient& other);
  double squared_norm() const;
};

/// Flatten per-layer parameters as [edges_0, boundary_0, edges_1, ...].
Eigen::VectorXd flatten(const std::vector<TutteLayerParams>& params);
std::vector<TutteLayerParams> unflatten(const Eigen::VectorXd& flat, const Mesh2D& mesh, int layers);

/// dL/dU per layer (2 x num_vertices each).
struct VertexCotangents {
  std::vector<Eigen::Matrix2Xd> layers;

  static VertexCotangents zeros_like(const DeformationNet& net);
};

/// Per-point, per-layer triangle hits recorded during a forward pass.
struct ForwardTape {
  int num_layers = 0;
  Eigen::Matrix3Xd outputs;
  std::vector<PrismHit> hits; // point-major

  const PrismHit& hit(Eigen::Index point, int layer) const {
    return hits[static_cast<std::size_t>(point) * static_cast<std::size_t>(num_layers) + static_cast<std::size_t>(layer)];
  }
};

ForwardTape record_forward(const DeformationNet& net, const Eigen::Matrix3Xd& points);

/// Composite Jacobians along the recorded orbits.
std::vector<Eigen::Matrix3d> tape_jacobians(const DeformationNet& net, const ForwardTape& tape);

/// Accumulate dL/dU given dL/d(output point) per recorded point.
void backprop_points(const DeformationNet& net, const ForwardTape& tape, const Eigen::Matrix3Xd& output_cotangents,
                     VertexCotangents& dU);

/// Accumulate dL/dU given dL/d(composite Jacobian) per recorded point. Triangle
/// locations are piecewise constant, so only the per-triangle A_t carry
/// gradient.
void backprop_jacobians(const DeformationNet& net, const ForwardTape& tape,
                        const std::vector<Eigen::Matrix3d>& jacobian_cotangents, VertexCotangents& dU);

/// A_t = [u1-u0, u2-u0] * Einv: push dL/dA_t onto the triangle's vertices.
void backprop_triangle_jacobian(const Mesh2D& mesh, int triangle, const Eigen::Matrix2d& dA, Eigen::Matrix2Xd& dU);

/// Cotangents on the Tutte inputs of one layer.
struct TutteCotangent {
  Eigen::VectorXd weights;  // dL/dw per edge
  Eigen::Matrix2Xd boundary; // dL/db per boundary vertex
};

/// Adjoint of the Tutte solve: one extra solve with the (symmetric) interior
/// matrix against the interior rows of dU.
TutteCotangent tutte_adjoint(const Mesh2D& mesh, const LayerSystem& system, const Eigen::Matrix2Xd& U,
                             const Eigen::Matrix2Xd& dU);

/// Chain weight/boundary cotangents down to the raw (pre-squash) parameters.
TutteLayerParams chain_to_raw(const Mesh2D& mesh, const TutteLayerParams& raw, const LayerSystem& system,
                              const TutteCotangent& cot);

/// dL/dU for every layer -> dL/d(raw params). Throws NumericalFailure on
/// non-finite entries, naming the layer and parameter.
ParamGradient backprop_tutte(const DeformationNet& net, const VertexCotangents& dU);

struct LossGradient {
  double value = 0.0;
  ParamGradient gradient;
};

LossGradient handle_loss_gradient(const DeformationNet& net, const std::vector<HandleConstraint>& constraints);

/// Distortion multipliers are held fixed at their current values.
LossGradient elastic_loss_gradient(const DeformationNet& net, const PointSet& samples,
                                   const DistortionReweighting& reweighting = {});

LossGradient regularization_gradient(const DeformationNet& net);

struct FitGradient {
  FittingTerms terms;
  ParamGradient gradient; // of terms.total()
};

FitGradient fitting_loss_gradient(const DeformationNet& net, const FittingData& data);

/// Elastic workflow objective: w_elastic(step) L_elastic + w_handle L_handle + w_reg L_reg.
struct ElasticObjective {
  const std::vector<HandleConstraint>& constraints;
  const PointSet& samples;
  const LossWeights& weights;
  int step = 0;
};

/// Fitting objective: vertex + 0.1 gradient.
struct FitObjective {
  const FittingData& data;
};

struct TotalGradient {
  double value = 0.0;
  LossBreakdown breakdown; // elastic objective
  FittingTerms fit;        // fit objective
  ParamGradient gradient;
};

TotalGradient grad_total(const DeformationNet& net, const ElasticObjective& objective);
TotalGradient grad_total(const DeformationNet& net, const FitObjective& objective);

} // namespace tuttenet
