#include "tuttenet/deform.hpp"

#include <limits>
#include <string>

#include "tuttenet/errors.hpp"
#include "tuttenet/parallel.hpp"

namespace tuttenet {

namespace {

template <typename Error>
[[noreturn]] void rethrow_with_index(const Error& e, long index) {
  throw Error(std::string(e.what()) + " (point index " + std::to_string(index) + ")", e.layer(), index, e.point());
}

} // namespace

void PointSet::validate() const {
  if (!points.allFinite()) throw InvalidArgument("point set contains non-finite coordinates");
  if (weights) {
    if (weights->size() != points.cols()) throw InvalidArgument("weight count does not match point count");
    if ((weights->array() < 0.0).any() || !weights->allFinite())
      throw InvalidArgument("point weights must be finite and nonnegative");
  }
}

Eigen::VectorXd PointSet::weights_or_ones() const {
  return weights ? *weights : Eigen::VectorXd::Ones(points.cols());
}

DeformationNet::DeformationNet(MeshPtr mesh, std::vector<TutteLayerParams> params, std::vector<Frame> frames)
    : mesh_(std::move(mesh)), params_(std::move(params)), frames_(std::move(frames)) {
  if (!mesh_) throw InvalidArgument("deformation net needs a mesh");
  if (params_.empty()) throw InvalidArgument("deformation net needs at least one layer");
  if (params_.size() != frames_.size())
    throw InvalidArgument("parameter count (" + std::to_string(params_.size()) + ") does not match frame count (" +
                          std::to_string(frames_.size()) + ")");
  for (const auto& p : params_) p.validate(*mesh_);

  const std::size_t n = params_.size();
  layers_.resize(n);
  systems_.resize(n);
  parallel_for(
      n,
      [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
          TutteEmbedding emb = solve_tutte(mesh_, params_[i]);
          layers_[i] = PrismLayer{static_cast<int>(i), frames_[i], std::move(emb.map)};
          systems_[i] = LayerSystem{std::move(emb.boundary), std::move(emb.weights), std::move(emb.solver)};
        }
      },
      1);
}

DeformationNet DeformationNet::slice(int begin, int end) const {
  if (begin < 0 || end > num_layers() || begin >= end) throw InvalidArgument("invalid layer slice");
  DeformationNet out;
  out.mesh_ = mesh_;
  out.params_.assign(params_.begin() + begin, params_.begin() + end);
  out.frames_.assign(frames_.begin() + begin, frames_.begin() + end);
  out.layers_.assign(layers_.begin() + begin, layers_.begin() + end);
  out.systems_.assign(systems_.begin() + begin, systems_.begin() + end);
  return out;
}

double DeformationNet::min_det() const {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& l : layers_) d = std::min(d, l.map.min_det());
  return d;
}

DeformationNet realize(MeshPtr mesh, std::vector<TutteLayerParams> params, std::vector<Frame> frames) {
  return DeformationNet(std::move(mesh), std::move(params), std::move(frames));
}

DeformationNet zero_net(const MeshPtr& mesh, std::vector<Frame> frames) {
  std::vector<TutteLayerParams> params(frames.size(), TutteLayerParams::zeros(*mesh));
  return DeformationNet(mesh, std::move(params), std::move(frames));
}

Eigen::Vector3d forward(const DeformationNet& net, const Eigen::Vector3d& p) {
  Eigen::Vector3d x = p;
  for (const auto& layer : net.layers()) x = apply_prism(layer, x);
  return x;
}

Eigen::Vector3d inverse(const DeformationNet& net, const Eigen::Vector3d& p) {
  Eigen::Vector3d x = p;
  for (int i = net.num_layers() - 1; i >= 0; --i) x = invert_prism(net.layer(i), x);
  return x;
}

Eigen::Matrix3Xd forward(const DeformationNet& net, const Eigen::Matrix3Xd& points) {
  Eigen::Matrix3Xd out(3, points.cols());
  parallel_for(static_cast<std::size_t>(points.cols()), [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      const auto c = static_cast<Eigen::Index>(k);
      try {
        out.col(c) = forward(net, Eigen::Vector3d(points.col(c)));
      } catch (const OutOfDomain& e) {
        rethrow_with_index(e, static_cast<long>(k));
      }
    }
  });
  return out;
}

Eigen::Matrix3Xd inverse(const DeformationNet& net, const Eigen::Matrix3Xd& points) {
  Eigen::Matrix3Xd out(3, points.cols());
  parallel_for(static_cast<std::size_t>(points.cols()), [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      const auto c = static_cast<Eigen::Index>(k);
      try {
        out.col(c) = inverse(net, Eigen::Vector3d(points.col(c)));
      } catch (const NotInImage& e) {
        rethrow_with_index(e, static_cast<long>(k));
      }
    }
  });
  return out;
}

PointSet forward(const DeformationNet& net, const PointSet& ps) {
  ps.validate();
  return {forward(net, ps.points), ps.weights};
}

PointSet inverse(const DeformationNet& net, const PointSet& ps) {
  ps.validate();
  return {inverse(net, ps.points), ps.weights};
}

Eigen::Matrix3d jacobian(const DeformationNet& net, const Eigen::Vector3d& p) {
  Eigen::Matrix3d J = Eigen::Matrix3d::Identity();
  Eigen::Vector3d x = p;
  for (const auto& layer : net.layers()) {
    const PrismHit hit = prism_locate(layer, x);
    J = prism_triangle_jacobian(layer, hit.triangle) * J;
    const auto& aff = layer.map.affine(hit.triangle);
    Eigen::Vector3d r;
    r << aff.A * hit.local + aff.delta, hit.normal;
    x = layer.frame.R * r;
  }
  return J;
}

std::vector<Eigen::Matrix3d> jacobians(const DeformationNet& net, const Eigen::Matrix3Xd& points) {
  std::vector<Eigen::Matrix3d> out(static_cast<std::size_t>(points.cols()));
  parallel_for(out.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      try {
        out[k] = jacobian(net, points.col(static_cast<Eigen::Index>(k)));
      } catch (const OutOfDomain& e) {
        rethrow_with_index(e, static_cast<long>(k));
      }
    }
  });
  return out;
}

Eigen::Matrix3d inverse_jacobian(const DeformationNet& net, const Eigen::Vector3d& p_deformed) {
  Eigen::Matrix3d J = Eigen::Matrix3d::Identity();
  Eigen::Vector3d x = p_deformed;
  for (int i = net.num_layers() - 1; i >= 0; --i) {
    int t = -1;
    x = invert_prism(net.layer(i), x, t);
    J = prism_triangle_inverse_jacobian(net.layer(i), t) * J;
  }
  return J;
}

std::vector<int> orbit_triangles(const DeformationNet& net, const Eigen::Vector3d& p) {
  std::vector<int> tris;
  tris.reserve(static_cast<std::size_t>(net.num_layers()));
  Eigen::Vector3d x = p;
  for (const auto& layer : net.layers()) {
    tris.push_back(prism_locate(layer, x).triangle);
    x = apply_prism(layer, x);
  }
  return tris;
}

} // namespace tuttenet
