#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "tuttenet/tutte.hpp"

using namespace tuttenet;
using std::numbers::pi;

namespace {

double cross(const Eigen::Vector2d& a, const Eigen::Vector2d& b) { return a.x() * b.y() - a.y() * b.x(); }

// Points sharing a side of the square are collinear, so turns are only
// required to be non-negative; distinctness and winding come from the angles.
bool convex_ccw(const Eigen::Matrix2Xd& p) {
  const Eigen::Index n = p.cols();
  double winding = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Vector2d a = p.col(k), b = p.col((k + 1) % n), c = p.col((k + 2) % n);
    if ((b - a).norm() <= 0.0) return false;
    if (cross(b - a, c - b) < -1e-12) return false;
    winding += cross(a, b);
  }
  return winding > 0.0;
}

} // namespace

TEST_CASE("squash values and range") {
  CHECK(squash(0.0, 0.2) == 0.5);
  CHECK(squash(1.0, 0.1) == doctest::Approx(0.684847).epsilon(1e-6));
  CHECK(squash(1.0, 0.1) == doctest::Approx(0.1 + 0.8 / (1.0 + std::exp(-1.0))).epsilon(1e-15));
  CHECK(squash(800.0, 0.2) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(squash(-800.0, 0.2) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(std::isfinite(squash(-800.0, 0.2)));
  double prev = 0.0;
  for (double x = -30.0; x <= 30.0; x += 0.25) {
    const double s = squash(x, 0.2);
    CHECK(s > prev);
    CHECK(s >= 0.2);
    CHECK(s <= 0.8);
    prev = s;
  }
}

TEST_CASE("squash derivative matches central differences") {
  for (double eps : {0.1, 0.2})
    for (double x = -6.0; x <= 6.0; x += 0.5) {
      const double fd = (squash(x + 1e-5, eps) - squash(x - 1e-5, eps)) / 2e-5;
      CHECK(std::abs(fd - squash_derivative(x, eps)) <= 1e-6);
    }
}

TEST_CASE("ray intersection lands on the square") {
  for (double a = -4.0; a < 8.0; a += 0.01) {
    const Eigen::Vector2d p = ray_square_intersection(a);
    CHECK(p.cwiseAbs().maxCoeff() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::atan2(p.y(), p.x()) == doctest::Approx(std::remainder(a, 2 * pi)).epsilon(1e-9));
    const double h = 1e-6;
    const Eigen::Vector2d fd = (ray_square_intersection(a + h) - ray_square_intersection(a - h)) / (2 * h);
    if (std::abs(std::abs(p.x()) - std::abs(p.y())) > 1e-4)
      CHECK((fd - ray_square_intersection_derivative(a)).norm() <= 1e-5);
  }
}

TEST_CASE("zero parameters put the boundary at the rest corners and edges") {
  const Mesh2D m = build_mesh(3);
  const ConvexBoundary b = build_boundary(m, TutteLayerParams::zeros(m));
  REQUIRE(b.increments.size() == 8);
  for (Eigen::Index k = 0; k < 8; ++k) CHECK(b.increments[k] == doctest::Approx(pi / 4).epsilon(1e-14));
  for (int k = 0; k < 8; ++k)
    CHECK((b.points.col(k) - m.vertices.col(m.boundary_loop[static_cast<std::size_t>(k)])).norm() <= 1e-12);
  CHECK(b.points.col(0).isApprox(Eigen::Vector2d(-1, -1), 1e-14));
}

TEST_CASE("random boundaries are convex, on the square and sum to a full turn") {
  std::mt19937_64 rng(21);
  for (int n : {3, 7, 11, 25})
    for (double sigma : {0.5, 3.0, 20.0}) {
      const Mesh2D m = build_mesh(n);
      TutteLayerParams p = TutteLayerParams::zeros(m);
      for (Eigen::Index k = 0; k < p.boundary_increments.size(); ++k) p.boundary_increments[k] = sigma * oracle::normal(rng);
      const ConvexBoundary b = build_boundary(m, p);
      CHECK(b.increments.minCoeff() > 0.0);
      CHECK(std::abs(b.increments.sum() - 2 * pi) <= 1e-12);
      CHECK(std::abs(b.cumulative[b.cumulative.size() - 1] - 2 * pi) <= 1e-12);
      for (Eigen::Index k = 1; k < b.cumulative.size(); ++k) CHECK(b.cumulative[k] > b.cumulative[k - 1]);
      for (Eigen::Index k = 0; k < b.points.cols(); ++k)
        CHECK(std::abs(b.points.col(k).cwiseAbs().maxCoeff() - 1.0) <= 1e-12);
      CHECK(convex_ccw(b.points));
    }
}

TEST_CASE("one dominant increment keeps the polygon convex") {
  const Mesh2D m = build_mesh(5);
  TutteLayerParams p = TutteLayerParams::zeros(m);
  p.boundary_increments.setConstant(-50.0);
  p.boundary_increments[0] = 50.0;
  const ConvexBoundary b = build_boundary(m, p);
  // Increments are weighted by the rest angle each one spans.
  const double c0 = std::atan2(-1.0, -0.5) - std::atan2(-1.0, -1.0);
  const double expected = 2 * pi * 0.9 * c0 / (0.9 * c0 + 0.1 * (2 * pi - c0));
  CHECK(b.increments[0] == doctest::Approx(expected).epsilon(1e-12));
  CHECK(b.increments[0] > 4.0 * c0);
  CHECK(b.increments.minCoeff() > 0.0);
  CHECK(convex_ccw(b.points));
}

TEST_CASE("laplacian weights") {
  const Mesh2D m = build_mesh(7);
  const LaplacianSystem zero = assemble_laplacian(m, TutteLayerParams::zeros(m));
  CHECK((zero.weights.array() == 0.5).all());
  std::mt19937_64 rng(5);
  TutteLayerParams p = TutteLayerParams::zeros(m);
  for (Eigen::Index k = 0; k < p.edge_weights.size(); ++k) p.edge_weights[k] = 30.0 * oracle::normal(rng);
  const LaplacianSystem sys = assemble_laplacian(m, p);
  CHECK(sys.weights.minCoeff() >= 0.2);
  CHECK(sys.weights.maxCoeff() <= 0.8);
  const Eigen::MatrixXd dense(sys.interior);
  CHECK((dense - dense.transpose()).norm() == 0.0);
  CHECK(dense.rows() == m.num_interior());
}

TEST_CASE("uniform weights reproduce the regular grid") {
  for (int n : {3, 7, 11, 25}) {
    const MeshPtr mesh = make_mesh(n);
    const TutteEmbedding e = solve_tutte(mesh, TutteLayerParams::zeros(*mesh));
    CHECK((e.map.deformed() - mesh->vertices).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("random parameters give injective embeddings") {
  std::mt19937_64 rng(77);
  int trials = 0;
  for (int n : {7, 11, 25})
    for (int k = 0; k < 40; ++k) {
      const MeshPtr mesh = make_mesh(n);
      const double sigma = (k % 3 == 0) ? 8.0 : 1.5;
      const TutteLayerParams p = oracle::random_params(*mesh, 1, sigma, rng)[0];
      const TutteEmbedding e = solve_tutte(mesh, p);
      ++trials;
      CHECK(e.map.min_det() > 0.0);
      CHECK(tutte_residual(*mesh, e.weights, e.map.deformed()) <= 1e-8);
      for (int j = 0; j < mesh->num_boundary(); ++j)
        CHECK(e.map.deformed().col(mesh->boundary_loop[static_cast<std::size_t>(j)]) == e.boundary.points.col(j));
    }
  CHECK(trials >= 100);
}

TEST_CASE("explicit boundary solve") {
  const MeshPtr mesh = make_mesh(5);
  Eigen::Matrix2Xd b(2, mesh->num_boundary());
  for (int j = 0; j < mesh->num_boundary(); ++j)
    b.col(j) = 0.5 * mesh->vertices.col(mesh->boundary_loop[static_cast<std::size_t>(j)]);
  const TutteEmbedding e = solve_tutte_with_boundary(mesh, Eigen::VectorXd::Constant(mesh->num_edges(), 0.5), b);
  CHECK((e.map.deformed() - 0.5 * mesh->vertices).cwiseAbs().maxCoeff() <= 1e-12);
}
