#include "tuttenet/grad.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "tuttenet/errors.hpp"
#include "tuttenet/parallel.hpp"

namespace tuttenet {

ParamGradient ParamGradient::zeros_like(const DeformationNet& net) {
  ParamGradient g;
  g.layers.assign(static_cast<std::size_t>(net.num_layers()), TutteLayerParams::zeros(net.mesh()));
  return g;
}

ParamGradient& ParamGradient::operator+=(const ParamGradient& other) { return add_scaled(1.0, other); }

ParamGradient& ParamGradient::add_scaled(double a, const ParamGradient& other) {
  if (other.layers.size() != layers.size()) throw InvalidArgument("gradient shape mismatch");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].edge_weights += a * other.layers[i].edge_weights;
    layers[i].boundary_increments += a * other.layers[i].boundary_increments;
  }
  return *this;
}

double ParamGradient::squared_norm() const {
  double s = 0.0;
  for (const auto& l : layers) s += l.edge_weights.squaredNorm() + l.boundary_increments.squaredNorm();
  return s;
}

Eigen::VectorXd flatten(const std::vector<TutteLayerParams>& params) {
  Eigen::Index n = 0;
  for (const auto& p : params) n += p.edge_weights.size() + p.boundary_increments.size();
  Eigen::VectorXd flat(n);
  Eigen::Index at = 0;
  for (const auto& p : params) {
    flat.segment(at, p.edge_weights.size()) = p.edge_weights;
    at += p.edge_weights.size();
    flat.segment(at, p.boundary_increments.size()) = p.boundary_increments;
    at += p.boundary_increments.size();
  }
  return flat;
}

std::vector<TutteLayerParams> unflatten(const Eigen::VectorXd& flat, const Mesh2D& mesh, int layers) {
  const Eigen::Index ne = mesh.num_edges(), nb = mesh.num_boundary();
  if (flat.size() != layers * (ne + nb)) throw InvalidArgument("flat parameter vector has the wrong size");
  std::vector<TutteLayerParams> out(static_cast<std::size_t>(layers));
  Eigen::Index at = 0;
  for (auto& p : out) {
    p.edge_weights = flat.segment(at, ne);
    at += ne;
    p.boundary_increments = flat.segment(at, nb);
    at += nb;
  }
  return out;
}

VertexCotangents VertexCotangents::zeros_like(const DeformationNet& net) {
  VertexCotangents c;
  c.layers.assign(static_cast<std::size_t>(net.num_layers()), Eigen::Matrix2Xd::Zero(2, net.mesh().num_vertices()));
  return c;
}

ForwardTape record_forward(const DeformationNet& net, const Eigen::Matrix3Xd& points) {
  ForwardTape tape;
  tape.num_layers = net.num_layers();
  tape.outputs.resize(3, points.cols());
  tape.hits.resize(static_cast<std::size_t>(points.cols()) * static_cast<std::size_t>(tape.num_layers));
  parallel_for(static_cast<std::size_t>(points.cols()), [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      Eigen::Vector3d x = points.col(static_cast<Eigen::Index>(k));
      for (int i = 0; i < tape.num_layers; ++i) {
        const PrismLayer& layer = net.layer(i);
        PrismHit hit;
        try {
          hit = prism_locate(layer, x);
        } catch (const OutOfDomain& e) {
          throw OutOfDomain(std::string(e.what()) + " (point index " + std::to_string(k) + ")", e.layer(),
                            static_cast<long>(k), e.point());
        }
        const auto& aff = layer.map.affine(hit.triangle);
        Eigen::Vector3d r;
        r << aff.A * hit.local + aff.delta, hit.normal;
        x = layer.frame.R * r;
        tape.hits[k * static_cast<std::size_t>(tape.num_layers) + static_cast<std::size_t>(i)] = hit;
      }
      tape.outputs.col(static_cast<Eigen::Index>(k)) = x;
    }
  });
  return tape;
}

std::vector<Eigen::Matrix3d> tape_jacobians(const DeformationNet& net, const ForwardTape& tape) {
  std::vector<Eigen::Matrix3d> out(static_cast<std::size_t>(tape.outputs.cols()));
  parallel_for(out.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      Eigen::Matrix3d J = Eigen::Matrix3d::Identity();
      for (int i = 0; i < tape.num_layers; ++i)
        J = prism_triangle_jacobian(net.layer(i), tape.hit(static_cast<Eigen::Index>(k), i).triangle) * J;
      out[k] = J;
    }
  });
  return out;
}

void backprop_points(const DeformationNet& net, const ForwardTape& tape, const Eigen::Matrix3Xd& output_cotangents,
                     VertexCotangents& dU) {
  const Eigen::Index np = tape.outputs.cols();
  if (output_cotangents.cols() != np) throw InvalidArgument("cotangent count does not match tape");
  const int L = tape.num_layers;
  // Per-visit cotangent on the 2D image point; scattered serially below so the
  // accumulation order is fixed.
  std::vector<Eigen::Vector2d> visit(static_cast<std::size_t>(np) * static_cast<std::size_t>(L));
  parallel_for(static_cast<std::size_t>(np), [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      Eigen::Vector3d g = output_cotangents.col(static_cast<Eigen::Index>(k));
      for (int i = L - 1; i >= 0; --i) {
        const PrismLayer& layer = net.layer(i);
        const int t = tape.hit(static_cast<Eigen::Index>(k), i).triangle;
        visit[k * static_cast<std::size_t>(L) + static_cast<std::size_t>(i)] = (layer.frame.R.transpose() * g).head<2>();
        g = prism_triangle_jacobian(layer, t).transpose() * g;
      }
    }
  });
  const Mesh2D& mesh = net.mesh();
  for (Eigen::Index k = 0; k < np; ++k) {
    for (int i = 0; i < L; ++i) {
      const PrismHit& hit = tape.hit(k, i);
      const Eigen::Vector2d& g2 = visit[static_cast<std::size_t>(k) * static_cast<std::size_t>(L) + static_cast<std::size_t>(i)];
      const Eigen::Vector3d bary = source_barycentric(mesh, hit.triangle, hit.local);
      const auto& tri = mesh.triangles[static_cast<std::size_t>(hit.triangle)];
      auto& d = dU.layers[static_cast<std::size_t>(i)];
      for (int a = 0; a < 3; ++a) d.col(tri[static_cast<std::size_t>(a)]) += bary[a] * g2;
    }
  }
}

void backprop_triangle_jacobian(const Mesh2D& mesh, int triangle, const Eigen::Matrix2d& dA, Eigen::Matrix2Xd& dU) {
  const Eigen::Matrix2d dE = dA * mesh.edge_inverse[static_cast<std::size_t>(triangle)].transpose();
  const auto& tri = mesh.triangles[static_cast<std::size_t>(triangle)];
  dU.col(tri[1]) += dE.col(0);
  dU.col(tri[2]) += dE.col(1);
  dU.col(tri[0]) -= dE.col(0) + dE.col(1);
}

void backprop_jacobians(const DeformationNet& net, const ForwardTape& tape,
                        const std::vector<Eigen::Matrix3d>& jacobian_cotangents, VertexCotangents& dU) {
  const Eigen::Index np = tape.outputs.cols();
  if (static_cast<Eigen::Index>(jacobian_cotangents.size()) != np)
    throw InvalidArgument("Jacobian cotangent count does not match tape");
  const int L = tape.num_layers;
  std::vector<Eigen::Matrix2d> visit(static_cast<std::size_t>(np) * static_cast<std::size_t>(L));
  parallel_for(static_cast<std::size_t>(np), [&](std::size_t begin, std::size_t end) {
    std::vector<Eigen::Matrix3d> layerJ(static_cast<std::size_t>(L));
    std::vector<Eigen::Matrix3d> before(static_cast<std::size_t>(L));
    for (std::size_t k = begin; k < end; ++k) {
      Eigen::Matrix3d P = Eigen::Matrix3d::Identity();
      for (int i = 0; i < L; ++i) {
        before[static_cast<std::size_t>(i)] = P;
        layerJ[static_cast<std::size_t>(i)] =
            prism_triangle_jacobian(net.layer(i), tape.hit(static_cast<Eigen::Index>(k), i).triangle);
        P = layerJ[static_cast<std::size_t>(i)] * P;
      }
      // J = S_i J_i P_i  =>  dL/dJ_i = S_i^T G P_i^T, with H = S_i^T G.
      Eigen::Matrix3d H = jacobian_cotangents[k];
      for (int i = L - 1; i >= 0; --i) {
        const Eigen::Matrix3d& R = net.layer(i).frame.R;
        const Eigen::Matrix3d dJ = H * before[static_cast<std::size_t>(i)].transpose();
        visit[k * static_cast<std::size_t>(L) + static_cast<std::size_t>(i)] =
            (R.transpose() * dJ * R).topLeftCorner<2, 2>();
        H = layerJ[static_cast<std::size_t>(i)].transpose() * H;
      }
    }
  });
  const Mesh2D& mesh = net.mesh();
  for (Eigen::Index k = 0; k < np; ++k)
    for (int i = 0; i < L; ++i)
      backprop_triangle_jacobian(mesh, tape.hit(k, i).triangle,
                                 visit[static_cast<std::size_t>(k) * static_cast<std::size_t>(L) + static_cast<std::size_t>(i)],
                                 dU.layers[static_cast<std::size_t>(i)]);
}

TutteCotangent tutte_adjoint(const Mesh2D& mesh, const LayerSystem& system, const Eigen::Matrix2Xd& U,
                             const Eigen::Matrix2Xd& dU) {
  const int ni = mesh.num_interior();
  Eigen::Matrix2Xd lambda = Eigen::Matrix2Xd::Zero(2, mesh.num_vertices());
  if (ni > 0) {
    Eigen::MatrixXd rhs(ni, 2);
    for (int i = 0; i < ni; ++i) rhs.row(i) = dU.col(mesh.interior_ids[static_cast<std::size_t>(i)]).transpose();
    const Eigen::MatrixXd sol = system.solver->solve(rhs);
    for (int i = 0; i < ni; ++i) lambda.col(mesh.interior_ids[static_cast<std::size_t>(i)]) = sol.row(i).transpose();
  }

  TutteCotangent cot;
  cot.weights.resize(mesh.num_edges());
  cot.boundary.resize(2, mesh.num_boundary());
  for (int k = 0; k < mesh.num_boundary(); ++k) cot.boundary.col(k) = dU.col(mesh.boundary_loop[static_cast<std::size_t>(k)]);
  for (int e = 0; e < mesh.num_edges(); ++e) {
    const int a = mesh.edges[static_cast<std::size_t>(e)][0], b = mesh.edges[static_cast<std::size_t>(e)][1];
    cot.weights[e] = -(lambda.col(a) - lambda.col(b)).dot(U.col(a) - U.col(b));
    const int sa = mesh.boundary_slot[static_cast<std::size_t>(a)], sb = mesh.boundary_slot[static_cast<std::size_t>(b)];
    const double w = system.weights[e];
    if (sa >= 0 && sb < 0) cot.boundary.col(sa) += w * lambda.col(b);
    if (sb >= 0 && sa < 0) cot.boundary.col(sb) += w * lambda.col(a);
  }
  return cot;
}

TutteLayerParams chain_to_raw(const Mesh2D& mesh, const TutteLayerParams& raw, const LayerSystem& system,
                              const TutteCotangent& cot) {
  TutteLayerParams g;
  g.edge_weights.resize(mesh.num_edges());
  for (int e = 0; e < mesh.num_edges(); ++e)
    g.edge_weights[e] = cot.weights[e] * squash_derivative(raw.edge_weights[e], kEdgeWeightMargin);

  const ConvexBoundary& b = system.boundary;
  const int K = mesh.num_boundary();
  const Eigen::VectorXd rest = rest_boundary_increments(mesh);

  // angle_j = phase + sum_{i<j} alpha_i
  Eigen::VectorXd d_alpha(K);
  double suffix = 0.0;
  for (int j = K - 1; j >= 0; --j) {
    d_alpha[j] = suffix;
    suffix += cot.boundary.col(j).dot(ray_square_intersection_derivative(b.angles[j]));
  }
  // alpha_i = 2 pi s_i c_i / sum_j s_j c_j
  const double mean_term = d_alpha.dot(b.increments) / (2.0 * std::numbers::pi);
  g.boundary_increments.resize(K);
  for (int k = 0; k < K; ++k) {
    const double d_s = (2.0 * std::numbers::pi * rest[k] / b.normalizer) * (d_alpha[k] - mean_term);
    g.boundary_increments[k] = d_s * squash_derivative(raw.boundary_increments[k], kBoundaryMargin);
  }
  return g;
}

ParamGradient backprop_tutte(const DeformationNet& net, const VertexCotangents& dU) {
  if (static_cast<int>(dU.layers.size()) != net.num_layers()) throw InvalidArgument("cotangent layer count mismatch");
  ParamGradient out;
  out.layers.resize(static_cast<std::size_t>(net.num_layers()));
  parallel_for(
      out.layers.size(),
      [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
          const int li = static_cast<int>(i);
          const TutteCotangent cot =
              tutte_adjoint(net.mesh(), net.system(li), net.layer(li).map.deformed(), dU.layers[i]);
          out.layers[i] = chain_to_raw(net.mesh(), net.params()[i], net.system(li), cot);
        }
      },
      1);
  for (std::size_t i = 0; i < out.layers.size(); ++i) {
    const auto& l = out.layers[i];
    for (Eigen::Index e = 0; e < l.edge_weights.size(); ++e)
      if (!std::isfinite(l.edge_weights[e]))
        throw NumericalFailure("non-finite gradient for edge weight " + std::to_string(e) + " of layer " + std::to_string(i));
    for (Eigen::Index k = 0; k < l.boundary_increments.size(); ++k)
      if (!std::isfinite(l.boundary_increments[k]))
        throw NumericalFailure("non-finite gradient for boundary increment " + std::to_string(k) + " of layer " +
                               std::to_string(i));
  }
  return out;
}

namespace {

double accumulate_handle(const DeformationNet& net, const std::vector<HandleConstraint>& constraints, double scale,
                         VertexCotangents& dU) {
  double total = 0.0;
  for (const auto& c : constraints) {
    c.validate();
    const Eigen::Index n = c.handle_points.size();
    if (n == 0) continue;
    const ForwardTape tape = record_forward(net, c.handle_points.points);
    const Eigen::Matrix3Xd diff = tape.outputs - c.targets();
    total += diff.colwise().squaredNorm().mean();
    backprop_points(net, tape, (2.0 * scale / static_cast<double>(n)) * diff, dU);
  }
  return total;
}

ElasticTerm accumulate_elastic(const DeformationNet& net, const PointSet& samples,
                               const DistortionReweighting& reweighting, double scale, VertexCotangents& dU) {
  if (!samples.weights) throw InvalidArgument("elastic loss needs weighted samples");
  samples.validate();
  ElasticTerm out;
  const Eigen::Index n = samples.size();
  if (n == 0) return out;
  const ForwardTape tape = record_forward(net, samples.points);
  const auto J = tape_jacobians(net, tape);
  std::vector<Eigen::Matrix3d> cot(J.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < J.size(); ++k) {
    const double e = strain_energy_density(J[k]);
    const double w = (*samples.weights)[static_cast<Eigen::Index>(k)] * reweighting.multiplier(e);
    out.max_distortion = std::max(out.max_distortion, e);
    acc += w * e;
    cot[k] = (scale * w / static_cast<double>(n)) * strain_energy_gradient(J[k]);
  }
  out.value = acc / static_cast<double>(n);
  backprop_jacobians(net, tape, cot, dU);
  return out;
}

double accumulate_regularization(const DeformationNet& net, double scale, VertexCotangents& dU) {
  const Mesh2D& mesh = net.mesh();
  double total = 0.0;
  for (int i = 0; i < net.num_layers(); ++i) {
    const PLMap2D& map = net.layer(i).map;
    for (int t = 0; t < mesh.num_triangles(); ++t) {
      const double area = mesh.triangle_area[static_cast<std::size_t>(t)];
      const Eigen::Matrix2d& A = map.affine(t).A;
      total += area * strain_energy_density(A);
      backprop_triangle_jacobian(mesh, t, (scale * area) * strain_energy_gradient(A), dU.layers[static_cast<std::size_t>(i)]);
    }
  }
  return total;
}

FittingTerms accumulate_fit(const DeformationNet& net, const FittingData& data, VertexCotangents& dU) {
  data.validate();
  const ForwardTape tape = record_forward(net, data.source);
  const FittingTerms terms = fitting_terms(tape.outputs, data);
  const double nv = static_cast<double>(data.source.cols());
  Eigen::Matrix3Xd cot = (2.0 / nv) * (tape.outputs - data.target);
  if (!data.op.faces.empty()) {
    const auto J = data.op.apply(tape.outputs);
    const double scale = kFitGradientWeight * 2.0 / static_cast<double>(J.size());
    for (std::size_t t = 0; t < J.size(); ++t) {
      const Eigen::Matrix<double, 3, 2> dY = scale * (J[t] - data.target_gradients[t]) * data.op.pinv[t].transpose();
      const auto& f = data.op.faces[t];
      cot.col(f[1]) += dY.col(0);
      cot.col(f[2]) += dY.col(1);
      cot.col(f[0]) -= dY.col(0) + dY.col(1);
    }
  }
  backprop_points(net, tape, cot, dU);
  return terms;
}

} // namespace

LossGradient handle_loss_gradient(const DeformationNet& net, const std::vector<HandleConstraint>& constraints) {
  VertexCotangents dU = VertexCotangents::zeros_like(net);
  LossGradient out;
  out.value = accumulate_handle(net, constraints, 1.0, dU);
  out.gradient = backprop_tutte(net, dU);
  return out;
}

LossGradient elastic_loss_gradient(const DeformationNet& net, const PointSet& samples,
                                   const DistortionReweighting& reweighting) {
  VertexCotangents dU = VertexCotangents::zeros_like(net);
  LossGradient out;
  out.value = accumulate_elastic(net, samples, reweighting, 1.0, dU).value;
  out.gradient = backprop_tutte(net, dU);
  return out;
}

LossGradient regularization_gradient(const DeformationNet& net) {
  VertexCotangents dU = VertexCotangents::zeros_like(net);
  LossGradient out;
  out.value = accumulate_regularization(net, 1.0, dU);
  out.gradient = backprop_tutte(net, dU);
  return out;
}

FitGradient fitting_loss_gradient(const DeformationNet& net, const FittingData& data) {
  VertexCotangents dU = VertexCotangents::zeros_like(net);
  FitGradient out;
  out.terms = accumulate_fit(net, data, dU);
  out.gradient = backprop_tutte(net, dU);
  return out;
}

TotalGradient grad_total(const DeformationNet& net, const ElasticObjective& objective) {
  objective.weights.validate();
  VertexCotangents dU = VertexCotangents::zeros_like(net);
  TotalGradient out;
  LossBreakdown& b = out.breakdown;
  b.w_elastic = objective.weights.elastic.at(objective.step);
  const ElasticTerm el = accumulate_elastic(net, objective.samples, objective.weights.reweighting, b.w_elastic, dU);
  b.elastic = el.value;
  b.max_distortion = el.max_distortion;
  b.handle = accumulate_handle(net, objective.constraints, objective.weights.handle, dU);
  b.reg = objective.weights.reg > 0.0 ? accumulate_regularization(net, objective.weights.reg, dU) : regularization(net);
  b.total = b.w_elastic * b.elastic + objective.weights.handle * b.handle + objective.weights.reg * b.reg;
  out.value = b.total;
  out.gradient = backprop_tutte(net, dU);
  return out;
}

TotalGradient grad_total(const DeformationNet& net, const FitObjective& objective) {
  VertexCotangents dU = VertexCotangents::zeros_like(net);
  TotalGradient out;
  out.fit = accumulate_fit(net, objective.data, dU);
  out.value = out.fit.total();
  out.gradient = backprop_tutte(net, dU);
  return out;
}

} // namespace tuttenet
