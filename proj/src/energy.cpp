#include "tuttenet/energy.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/LU>

#include "tuttenet/errors.hpp"

namespace tuttenet {

void HandleConstraint::validate() const {
  handle_points.validate();
  if ((rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).norm() > 1e-9 ||
      std::abs(rotation.determinant() - 1.0) > 1e-9)
    throw InvalidArgument("handle rotation must be orthonormal with det +1");
  if (kind == HandleKind::Static && ((rotation - Eigen::Matrix3d::Identity()).norm() > 0.0 || translation.norm() > 0.0))
    throw InvalidArgument("static handles must have identity motion");
}

Eigen::Matrix3Xd HandleConstraint::targets() const {
  return (rotation * handle_points.points).colwise() + translation;
}

double ElasticSchedule::at(int step) const {
  const int k = interval > 0 ? std::max(step, 0) / interval : 0;
  const double v = initial - decrement * k;
  // Snap values within rounding of the floor.
  if (v <= floor + 1e-12 * std::max(1.0, std::abs(floor))) return floor;
  return v;
}

double DistortionReweighting::multiplier(double distortion) const {
  if (!enabled) return 1.0;
  if (distortion > threshold_high) return factor_high;
  if (distortion > threshold_low) return factor_low;
  return 1.0;
}

void LossWeights::validate() const {
  if (handle < 0 || reg < 0 || elastic.initial < 0 || elastic.decrement < 0 || elastic.floor < 0)
    throw InvalidArgument("loss weights must be nonnegative");
  if (elastic.floor > elastic.initial) throw InvalidArgument("elastic weight floor exceeds its initial value");
  if (elastic.interval <= 0) throw InvalidArgument("elastic schedule interval must be positive");
}

ElasticTerm elastic_loss(const DeformationNet& net, const PointSet& samples, const DistortionReweighting& reweighting) {
  if (!samples.weights) throw InvalidArgument("elastic loss needs weighted samples");
  samples.validate();
  ElasticTerm out;
  if (samples.size() == 0) return out;
  const auto J = jacobians(net, samples.points);
  const Eigen::VectorXd& w = *samples.weights;
  double acc = 0.0;
  for (std::size_t k = 0; k < J.size(); ++k) {
    const double e = strain_energy_density(J[k]);
    out.max_distortion = std::max(out.max_distortion, e);
    acc += w[static_cast<Eigen::Index>(k)] * reweighting.multiplier(e) * e;
  }
  out.value = acc / static_cast<double>(samples.size());
  return out;
}

double handle_loss(const DeformationNet& net, const std::vector<HandleConstraint>& constraints) {
  double total = 0.0;
  for (const auto& c : constraints) {
    c.validate();
    if (c.handle_points.size() == 0) continue;
    const Eigen::Matrix3Xd mapped = forward(net, c.handle_points.points);
    total += (mapped - c.targets()).colwise().squaredNorm().mean();
  }
  return total;
}

double layer_regularization(const PLMap2D& map) {
  const Mesh2D& mesh = map.mesh();
  double acc = 0.0;
  for (int t = 0; t < mesh.num_triangles(); ++t)
    acc += mesh.triangle_area[static_cast<std::size_t>(t)] * strain_energy_density(map.affine(t).A);
  return acc;
}

double layer_regularization(const PrismLayer& layer) { return layer_regularization(layer.map); }

double regularization(const DeformationNet& net) {
  double acc = 0.0;
  for (const auto& layer : net.layers()) acc += layer_regularization(layer);
  return acc;
}

SurfaceGradientOperator SurfaceGradientOperator::build(const Eigen::Matrix3Xd& source,
                                                       const std::vector<std::array<int, 3>>& faces) {
  SurfaceGradientOperator op;
  op.faces = faces;
  op.pinv.reserve(faces.size());
  for (const auto& f : faces) {
    for (int v : f)
      if (v < 0 || v >= source.cols()) throw InvalidArgument("face references a vertex out of range");
    Eigen::Matrix<double, 3, 2> E;
    E.col(0) = source.col(f[1]) - source.col(f[0]);
    E.col(1) = source.col(f[2]) - source.col(f[0]);
    const Eigen::Matrix2d G = E.transpose() * E;
    const double det = G.determinant();
    if (!(det > 1e-24 * std::max(1.0, G.squaredNorm()))) {
      op.pinv.push_back(Eigen::Matrix<double, 2, 3>::Zero());
    } else {
      op.pinv.push_back(G.inverse() * E.transpose());
    }
  }
  return op;
}

std::vector<Eigen::Matrix3d> SurfaceGradientOperator::apply(const Eigen::Matrix3Xd& positions) const {
  std::vector<Eigen::Matrix3d> out(faces.size());
  for (std::size_t t = 0; t < faces.size(); ++t) {
    const auto& f = faces[t];
    Eigen::Matrix<double, 3, 2> Y;
    Y.col(0) = positions.col(f[1]) - positions.col(f[0]);
    Y.col(1) = positions.col(f[2]) - positions.col(f[0]);
    out[t] = Y * pinv[t];
  }
  return out;
}

FittingData FittingData::make(Eigen::Matrix3Xd source, Eigen::Matrix3Xd target,
                              const std::vector<std::array<int, 3>>& faces) {
  if (source.cols() != target.cols())
    throw InvalidArgument("source has " + std::to_string(source.cols()) + " vertices but target has " +
                          std::to_string(target.cols()));
  FittingData d;
  d.op = SurfaceGradientOperator::build(source, faces);
  d.target_gradients = d.op.apply(target);
  d.source = std::move(source);
  d.target = std::move(target);
  return d;
}

void FittingData::validate() const {
  if (source.cols() != target.cols()) throw InvalidArgument("source/target vertex count mismatch");
  if (source.cols() == 0) throw InvalidArgument("fitting data is empty");
  if (op.faces.size() != target_gradients.size() || op.faces.size() != op.pinv.size())
    throw InvalidArgument("target gradient count does not match face count");
}

FittingTerms fitting_terms(const Eigen::Matrix3Xd& deformed, const FittingData& data) {
  if (deformed.cols() != data.target.cols()) throw InvalidArgument("deformed vertex count mismatch");
  FittingTerms out;
  out.vertex = (deformed - data.target).colwise().squaredNorm().mean();
  if (!data.op.faces.empty()) {
    const auto J = data.op.apply(deformed);
    double acc = 0.0;
    for (std::size_t t = 0; t < J.size(); ++t) acc += (J[t] - data.target_gradients[t]).squaredNorm();
    out.gradient = acc / static_cast<double>(J.size());
  }
  return out;
}

FittingTerms fitting_loss(const DeformationNet& net, const FittingData& data) {
  data.validate();
  return fitting_terms(forward(net, data.source), data);
}

LossBreakdown total_loss(const DeformationNet& net, const std::vector<HandleConstraint>& constraints,
                         const PointSet& samples, const LossWeights& weights, int step) {
  weights.validate();
  LossBreakdown b;
  const ElasticTerm el = elastic_loss(net, samples, weights.reweighting);
  b.elastic = el.value;
  b.max_distortion = el.max_distortion;
  b.handle = handle_loss(net, constraints);
  b.reg = regularization(net);
  b.w_elastic = weights.elastic.at(step);
  b.total = b.w_elastic * b.elastic + weights.handle * b.handle + weights.reg * b.reg;
  return b;
}

} // namespace tuttenet
