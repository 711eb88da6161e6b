#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "tuttenet/errors.hpp"
#include "tuttenet/prism.hpp"
#include "tuttenet/tutte.hpp"

using namespace tuttenet;

namespace {

PrismLayer linear_layer(const Eigen::Matrix2d& A, const Frame& frame, int res = 5) {
  const MeshPtr mesh = make_mesh(res);
  return PrismLayer{0, frame, realize_plmap(mesh, A * mesh->vertices)};
}

PrismLayer random_layer(const Frame& frame, std::uint64_t seed, int res = 11) {
  std::mt19937_64 rng(seed);
  const MeshPtr mesh = make_mesh(res);
  return PrismLayer{3, frame, solve_tutte(mesh, oracle::random_params(*mesh, 1, 1.5, rng)[0]).map};
}

Eigen::Matrix3d fd_prism(const PrismLayer& layer, const Eigen::Vector3d& p, double h) {
  Eigen::Matrix3d J;
  for (int a = 0; a < 3; ++a) {
    Eigen::Vector3d e = Eigen::Vector3d::Zero();
    e[a] = h;
    J.col(a) = (apply_prism(layer, Eigen::Vector3d(p + e)) - apply_prism(layer, Eigen::Vector3d(p - e))) / (2 * h);
  }
  return J;
}

} // namespace

TEST_CASE("triplane frames cycle through the world axes") {
  const auto f3 = triplane_frames(3);
  REQUIRE(f3.size() == 3);
  CHECK(f3[0].normal() == Eigen::Vector3d::UnitX());
  CHECK(f3[1].normal() == Eigen::Vector3d::UnitY());
  CHECK(f3[2].normal() == Eigen::Vector3d::UnitZ());
  const auto f24 = triplane_frames(24);
  REQUIRE(f24.size() == 24);
  for (std::size_t i = 0; i < f24.size(); ++i) {
    CHECK(f24[i].R == f3[i % 3].R);
    CHECK((f24[i].R.transpose() * f24[i].R - Eigen::Matrix3d::Identity()).norm() <= 1e-15);
    CHECK(f24[i].R.determinant() == doctest::Approx(1.0));
  }
  CHECK_THROWS_AS(triplane_frames(0), InvalidArgument);
}

TEST_CASE("frames must be proper rotations") {
  CHECK_THROWS_AS(Frame::from_matrix(Eigen::Matrix3d::Identity() * 1.01), InvalidArgument);
  CHECK_THROWS_AS(Frame::from_matrix(Eigen::Vector3d(1, 1, -1).asDiagonal()), InvalidArgument);
  std::mt19937_64 rng(3);
  const Eigen::Matrix3d R = oracle::random_rotation(rng);
  CHECK(Frame::from_matrix(R).R == R);
}

TEST_CASE("identity layer is the identity under any frame") {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 5; ++k) {
    const PrismLayer layer = linear_layer(Eigen::Matrix2d::Identity(), Frame::from_matrix(oracle::random_rotation(rng)));
    const Eigen::Vector3d p(0.1, 0.2, 0.3);
    CHECK((apply_prism(layer, p) - p).norm() <= 1e-15);
    CHECK((prism_jacobian(layer, p) - Eigen::Matrix3d::Identity()).norm() <= 1e-14);
    CHECK((invert_prism(layer, p) - p).norm() <= 1e-15);
  }
}

TEST_CASE("scaling layers") {
  const double s = 1.5;
  const PrismLayer flat = linear_layer(s * Eigen::Matrix2d::Identity(), Frame{});
  const Eigen::Vector3d p(0.1, -0.4, 0.35);
  CHECK((apply_prism(flat, p) - Eigen::Vector3d(s * 0.1, s * -0.4, 0.35)).norm() <= 1e-15);

  const PrismLayer side = linear_layer(s * Eigen::Matrix2d::Identity(), triplane_frames(1)[0]);
  const Eigen::Vector3d r = apply_prism(side, p);
  CHECK(r.x() == p.x());
  CHECK(r.y() == doctest::Approx(s * p.y()).epsilon(1e-15));
  CHECK(r.z() == doctest::Approx(s * p.z()).epsilon(1e-15));

  const PrismLayer aniso = linear_layer(Eigen::Vector2d(2, 3).asDiagonal(), Frame{});
  CHECK((prism_jacobian(aniso, p) - Eigen::Matrix3d(Eigen::Vector3d(2, 3, 1).asDiagonal())).norm() <= 1e-14);
}

TEST_CASE("prism Jacobian matches central differences and has a unit normal direction") {
  std::mt19937_64 rng(9);
  int used = 0;
  for (int k = 0; k < 200; ++k) {
    const Frame frame = (k % 2) ? triplane_frames(2)[1] : Frame::from_matrix(oracle::random_rotation(rng));
    const PrismLayer layer = random_layer(frame, 100 + static_cast<std::uint64_t>(k % 7));
    const Eigen::Vector3d p = oracle::uniform_box(1, 0.55, rng).col(0);
    const double h = 1e-5;
    const int t = prism_locate(layer, p).triangle;
    bool stable = true;
    for (int a = 0; a < 3 && stable; ++a)
      for (double sgn : {-1.0, 1.0}) {
        Eigen::Vector3d q = p;
        q[a] += sgn * h;
        stable = stable && prism_locate(layer, q).triangle == t;
      }
    if (!stable) continue;
    ++used;
    const Eigen::Matrix3d J = prism_jacobian(layer, p);
    CHECK((J - fd_prism(layer, p, h)).norm() <= 1e-4 * J.norm());
    CHECK((J * frame.normal() - frame.normal()).norm() <= 1e-12);
    CHECK(J.determinant() == doctest::Approx(layer.map.affine(t).det).epsilon(1e-10));
    CHECK(J.determinant() > 0.0);
    CHECK((J - prism_triangle_jacobian(layer, t)).norm() == 0.0);
    CHECK((prism_triangle_inverse_jacobian(layer, t) * J - Eigen::Matrix3d::Identity()).norm() <= 1e-10);
  }
  CHECK(used >= 100);
}

TEST_CASE("prism inverse round trip and z preservation") {
  const PrismLayer layer = random_layer(Frame{}, 41, 25);
  std::mt19937_64 rng(13);
  const Eigen::Matrix3Xd pts = oracle::uniform_box(10000, 0.7, rng);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < pts.cols(); ++i) {
    const Eigen::Vector3d r = apply_prism(layer, pts.col(i));
    CHECK(r.z() == pts(2, i));
    worst = std::max(worst, (invert_prism(layer, r) - pts.col(i)).norm());
  }
  CHECK(worst <= 1e-8);
}

TEST_CASE("domain errors carry the layer") {
  const PrismLayer layer = random_layer(Frame{}, 4);
  try {
    apply_prism(layer, Eigen::Vector3d(1.5, 0.0, 0.0));
    FAIL("expected OutOfDomain");
  } catch (const OutOfDomain& e) {
    CHECK(e.layer() == 3);
    CHECK(e.point().x() == 1.5);
  }
  // The image of a Tutte layer lies inside the square, so far points are never hit.
  try {
    invert_prism(layer, Eigen::Vector3d(3.0, 3.0, 0.0));
    FAIL("expected NotInImage");
  } catch (const NotInImage& e) {
    CHECK(e.layer() == 3);
  }
}
