#include "tuttenet/prism.hpp"

#include <sstream>

#include <Eigen/LU>

#include "tuttenet/errors.hpp"

namespace tuttenet {

namespace {

Eigen::Matrix3d lift(const Eigen::Matrix2d& A) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m.topLeftCorner<2, 2>() = A;
  return m;
}

std::string describe(const char* what, int layer, const Eigen::Vector3d& p) {
  std::ostringstream os;
  os << what << " in layer " << layer << " at point (" << p.x() << ", " << p.y() << ", " << p.z() << ")";
  return os.str();
}

} // namespace

Frame Frame::from_matrix(const Eigen::Matrix3d& R) {
  if (!R.allFinite() || (R.transpose() * R - Eigen::Matrix3d::Identity()).norm() > 1e-10 ||
      std::abs(R.determinant() - 1.0) > 1e-10) {
    throw InvalidArgument("frame matrix is not a proper rotation");
  }
  return Frame{R};
}

std::vector<Frame> triplane_frames(int count) {
  if (count < 1) throw InvalidArgument("frame count must be >= 1");
  const Eigen::Vector3d ex = Eigen::Vector3d::UnitX(), ey = Eigen::Vector3d::UnitY(), ez = Eigen::Vector3d::UnitZ();
  Eigen::Matrix3d cycle[3];
  cycle[0] << ey, ez, ex; // local z = world x
  cycle[1] << ez, ex, ey; // local z = world y
  cycle[2] << ex, ey, ez; // local z = world z
  std::vector<Frame> frames;
  frames.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) frames.push_back(Frame{cycle[i % 3]});
  return frames;
}

PrismHit prism_locate(const PrismLayer& layer, const Eigen::Vector3d& p) {
  const Eigen::Vector3d q = layer.frame.R.transpose() * p;
  PrismHit hit;
  try {
    hit.local = clamp_to_domain(q.head<2>());
  } catch (const OutOfDomain&) {
    throw OutOfDomain(describe("point outside the square domain", layer.index, p), layer.index, -1, p);
  }
  hit.normal = q.z();
  hit.triangle = locate_triangle(layer.map.mesh(), hit.local);
  return hit;
}

Eigen::Vector3d apply_prism(const PrismLayer& layer, const Eigen::Vector3d& p) {
  const PrismHit hit = prism_locate(layer, p);
  const auto& aff = layer.map.affine(hit.triangle);
  Eigen::Vector3d r;
  r << aff.A * hit.local + aff.delta, hit.normal;
  return layer.frame.R * r;
}

Eigen::Matrix3d prism_triangle_jacobian(const PrismLayer& layer, int triangle) {
  return layer.frame.R * lift(layer.map.affine(triangle).A) * layer.frame.R.transpose();
}

Eigen::Matrix3d prism_triangle_inverse_jacobian(const PrismLayer& layer, int triangle) {
  return layer.frame.R * lift(layer.map.affine(triangle).A_inv) * layer.frame.R.transpose();
}

Eigen::Matrix3d prism_jacobian(const PrismLayer& layer, const Eigen::Vector3d& p) {
  return prism_triangle_jacobian(layer, prism_locate(layer, p).triangle);
}

Eigen::Vector3d invert_prism(const PrismLayer& layer, const Eigen::Vector3d& r, int& triangle) {
  const Eigen::Vector3d q = layer.frame.R.transpose() * r;
  triangle = layer.map.find_in_image(q.head<2>());
  if (triangle < 0) throw NotInImage(describe("point outside the layer image", layer.index, r), layer.index, -1, r);
  const auto& aff = layer.map.affine(triangle);
  Eigen::Vector3d s;
  s << aff.A_inv * (q.head<2>() - aff.delta), q.z();
  return layer.frame.R * s;
}

Eigen::Vector3d invert_prism(const PrismLayer& layer, const Eigen::Vector3d& r) {
  int t = -1;
  return invert_prism(layer, r, t);
}

} // namespace tuttenet
