#pragma once

#include <array>
#include <vector>

#include <Eigen/Core>

#include "tuttenet/deform.hpp"

namespace tuttenet {

/// ||J^T J - I||_F^2, the deviation of the Cauchy-Green tensor from identity.
template <typename Derived>
typename Derived::Scalar strain_energy_density(const Eigen::MatrixBase<Derived>& J) {
  using Scalar = typename Derived::Scalar;
  using Square = Eigen::Matrix<Scalar, Derived::ColsAtCompileTime, Derived::ColsAtCompileTime>;
  Square C = J.transpose() * J;
  C -= Square::Identity(J.cols(), J.cols());
  return C.squaredNorm();
}

/// d/dJ of strain_energy_density: 4 J (J^T J - I).
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Derived::RowsAtCompileTime, Derived::ColsAtCompileTime>
strain_energy_gradient(const Eigen::MatrixBase<Derived>& J) {
  using Scalar = typename Derived::Scalar;
  using Square = Eigen::Matrix<Scalar, Derived::ColsAtCompileTime, Derived::ColsAtCompileTime>;
  Square C = J.transpose() * J;
  C -= Square::Identity(J.cols(), J.cols());
  return Scalar(4) * J * C;
}

enum class HandleKind { Moving, Static };

/// Region P with a prescribed rigid motion p -> R p + t.
struct HandleConstraint {
  PointSet handle_points;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  HandleKind kind = HandleKind::Moving;

  void validate() const;
  Eigen::Matrix3Xd targets() const;
};

/// lambda_elastic(step) = max(floor, initial - decrement * floor(step / interval))
struct ElasticSchedule {
  double initial = 0.004;
  double decrement = 0.001;
  int interval = 600;
  double floor = 0.001;

  double at(int step) const;
};

/// Per-sample multipliers on the elastic term for high-distortion samples.
struct DistortionReweighting {
  bool enabled = true;
  double threshold_low = 0.02;
  double factor_low = 2.0;
  double threshold_high = 0.05;
  double factor_high = 5.0;

  double multiplier(double distortion) const;
};

struct LossWeights {
  double handle = 1.0;
  double reg = 0.005;
  ElasticSchedule elastic;
  DistortionReweighting reweighting;

  void validate() const;
};

struct ElasticTerm {
  double value = 0.0;
  double max_distortion = 0.0;
};

/// mean_p w(p) m(E(p)) E(p) over the samples, E(p) the strain energy of the
/// composite Jacobian and m the distortion multiplier. Requires weights.
ElasticTerm elastic_loss(const DeformationNet& net, const PointSet& samples,
                         const DistortionReweighting& reweighting = {});

/// Sum over constraints of the mean squared distance to the rigid target.
double handle_loss(const DeformationNet& net, const std::vector<HandleConstraint>& constraints);

/// Exact integral of the 2D strain energy over the square: sum_t |t| E(A_t).
double layer_regularization(const PLMap2D& map);
double layer_regularization(const PrismLayer& layer);
/// Sum over all layers.
double regularization(const DeformationNet& net);

/// Per-triangle surface gradient operator: the deformation gradient of a
/// triangle is [y1-y0, y2-y0] * pinv, pinv = (E^T E)^-1 E^T with E the source
/// edge vectors. Degenerate source triangles get a zero operator.
struct SurfaceGradientOperator {
  std::vector<std::array<int, 3>> faces;
  std::vector<Eigen::Matrix<double, 2, 3>> pinv;

  static SurfaceGradientOperator build(const Eigen::Matrix3Xd& source, const std::vector<std::array<int, 3>>& faces);
  std::vector<Eigen::Matrix3d> apply(const Eigen::Matrix3Xd& positions) const;
};

inline constexpr double kFitGradientWeight = 0.1;

/// Source/target pair for the fitting loss; target gradients come from the
/// source mesh's operator applied to the target vertices.
struct FittingData {
  Eigen::Matrix3Xd source;
  Eigen::Matrix3Xd target;
  SurfaceGradientOperator op;
  std::vector<Eigen::Matrix3d> target_gradients;

  static FittingData make(Eigen::Matrix3Xd source, Eigen::Matrix3Xd target,
                          const std::vector<std::array<int, 3>>& faces);
  void validate() const;
};

struct FittingTerms {
  double vertex = 0.0;
  double gradient = 0.0;
  double total() const { return vertex + kFitGradientWeight * gradient; }
};

FittingTerms fitting_terms(const Eigen::Matrix3Xd& deformed, const FittingData& data);
FittingTerms fitting_loss(const DeformationNet& net, const FittingData& data);

struct LossBreakdown {
  double total = 0.0;
  double elastic = 0.0;
  double handle = 0.0;
  double reg = 0.0;
  double w_elastic = 0.0;
  double max_distortion = 0.0;
};

LossBreakdown total_loss(const DeformationNet& net, const std::vector<HandleConstraint>& constraints,
                         const PointSet& samples, const LossWeights& weights, int step);

} // namespace tuttenet
