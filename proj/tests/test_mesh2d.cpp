#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>

#include "oracles.hpp"
#include "tuttenet/errors.hpp"
#include "tuttenet/mesh2d.hpp"
#include "tuttenet/tutte.hpp"

using namespace tuttenet;

namespace {

double signed_area(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
  return 0.5 * ((b - a).x() * (c - a).y() - (c - a).x() * (b - a).y());
}

PLMap2D random_tutte_map(int res, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const MeshPtr mesh = make_mesh(res);
  return solve_tutte(mesh, oracle::random_params(*mesh, 1, 1.0, rng)[0]).map;
}

} // namespace

TEST_CASE("mesh counts") {
  const Mesh2D m2 = build_mesh(2);
  CHECK(m2.num_vertices() == 4);
  CHECK(m2.num_triangles() == 2);
  CHECK(m2.num_boundary() == 4);
  const Mesh2D m11 = build_mesh(11);
  CHECK(m11.num_vertices() == 121);
  CHECK(m11.num_triangles() == 200);
  const Mesh2D m25 = build_mesh(25);
  CHECK(m25.num_vertices() == 625);
  CHECK(m25.num_triangles() == 1152);
  CHECK(m25.num_edges() == 3 * 24 * 24 + 2 * 24);
  CHECK(m25.num_interior() == 23 * 23);
  CHECK_THROWS_AS(build_mesh(1), InvalidArgument);
}

TEST_CASE("mesh structural invariants") {
  for (int n : {2, 3, 7, 11}) {
    CAPTURE(n);
    const Mesh2D m = build_mesh(n);
    for (int i = 0; i < m.num_vertices(); ++i) {
      const Eigen::Vector2d v = m.vertices.col(i);
      const double x = -1.0 + 2.0 * (i % n) / (n - 1), y = -1.0 + 2.0 * (i / n) / (n - 1);
      CHECK(v.x() == doctest::Approx(x).epsilon(1e-15));
      CHECK(v.y() == doctest::Approx(y).epsilon(1e-15));
    }
    for (const auto& t : m.triangles) {
      const double a = signed_area(m.vertices.col(t[0]), m.vertices.col(t[1]), m.vertices.col(t[2]));
      CHECK(a == doctest::Approx(0.5 * m.spacing * m.spacing));
    }
    std::map<std::pair<int, int>, int> use;
    for (const auto& t : m.triangles)
      for (int k = 0; k < 3; ++k) {
        const int a = t[static_cast<std::size_t>(k)], b = t[static_cast<std::size_t>((k + 1) % 3)];
        ++use[{std::min(a, b), std::max(a, b)}];
      }
    CHECK(use.size() == m.edges.size());
    int boundary_edges = 0;
    for (const auto& e : m.edges) {
      CHECK(e[0] < e[1]);
      const int u = use[{e[0], e[1]}];
      CHECK((u == 1 || u == 2));
      boundary_edges += u == 1;
    }
    CHECK(boundary_edges == 4 * (n - 1));
    CHECK(std::is_sorted(m.edges.begin(), m.edges.end()));

    REQUIRE(m.num_boundary() == 4 * (n - 1));
    CHECK(m.vertices.col(m.boundary_loop[0]) == Eigen::Vector2d(-1, -1));
    double area = 0.0;
    for (int k = 0; k < m.num_boundary(); ++k) {
      const Eigen::Vector2d a = m.vertices.col(m.boundary_loop[static_cast<std::size_t>(k)]);
      const Eigen::Vector2d b = m.vertices.col(m.boundary_loop[static_cast<std::size_t>((k + 1) % m.num_boundary())]);
      CHECK(a.cwiseAbs().maxCoeff() == 1.0);
      CHECK((b - a).norm() == doctest::Approx(m.spacing));
      area += 0.5 * (a.x() * b.y() - b.x() * a.y());
    }
    CHECK(area == doctest::Approx(4.0));
    CHECK(m.num_interior() + m.num_boundary() == m.num_vertices());
  }
}

TEST_CASE("locate_triangle examples") {
  const Mesh2D m = build_mesh(2);
  CHECK(locate_triangle(m, {0.0, 0.0}) == 0);
  const int t = locate_triangle(m, {-0.5, -0.9});
  const auto c = oracle::containing_triangles(m, m.vertices, {-0.5, -0.9});
  REQUIRE(c.size() == 1);
  CHECK(t == c[0]);
  CHECK(t == 0);
  CHECK_THROWS_AS(locate_triangle(m, {1.5, 0.0}), OutOfDomain);
  CHECK(locate_triangle(m, {1.0 + 5e-10, 0.0}) >= 0);
  CHECK_THROWS_AS(locate_triangle(m, {1.0 + 1e-8, 0.0}), OutOfDomain);
}

TEST_CASE("grid location agrees with brute-force containment") {
  // Power-of-two cell counts keep grid lines exactly representable, so ties are exact.
  std::mt19937_64 rng(1);
  for (int n : {2, 3, 5, 9, 17}) {
    const Mesh2D m = build_mesh(n);
    for (int k = 0; k < 10000; ++k) {
      Eigen::Vector2d q(-1.0 + 2.0 * oracle::unit(rng), -1.0 + 2.0 * oracle::unit(rng));
      if (k % 4 == 1) q.x() = m.vertices(0, static_cast<Eigen::Index>(rng() % static_cast<unsigned>(n)));
      if (k % 4 == 2) q = m.vertices.col(static_cast<Eigen::Index>(rng() % static_cast<unsigned>(m.num_vertices())));
      if (k % 4 == 3) q.y() = q.x();
      const auto c = oracle::containing_triangles(m, m.vertices, q, 0.0);
      REQUIRE(!c.empty());
      CHECK(locate_triangle(m, q) == c.front());
    }
  }
  const Mesh2D m = build_mesh(11);
  for (int k = 0; k < 10000; ++k) {
    const Eigen::Vector2d q(-1.0 + 2.0 * oracle::unit(rng), -1.0 + 2.0 * oracle::unit(rng));
    const int t = locate_triangle(m, q);
    const auto c = oracle::containing_triangles(m, m.vertices, q, 1e-12);
    CHECK(std::find(c.begin(), c.end(), t) != c.end());
  }
}

TEST_CASE("realize_plmap on closed-form maps") {
  const MeshPtr mesh = make_mesh(5);
  const PLMap2D id = realize_plmap(mesh, mesh->vertices);
  const PLMap2D twice = realize_plmap(mesh, 2.0 * mesh->vertices);
  Eigen::Matrix2d rot;
  rot << 0, -1, 1, 0;
  const PLMap2D turned = realize_plmap(mesh, rot * mesh->vertices);
  for (int t = 0; t < mesh->num_triangles(); ++t) {
    CHECK((id.affine(t).A - Eigen::Matrix2d::Identity()).norm() <= 1e-14);
    CHECK(id.affine(t).delta.norm() <= 1e-14);
    CHECK((twice.affine(t).A - 2.0 * Eigen::Matrix2d::Identity()).norm() <= 1e-14);
    CHECK(twice.affine(t).delta.norm() <= 1e-14);
    CHECK((turned.affine(t).A - rot).norm() <= 1e-14);
    CHECK(turned.affine(t).det == doctest::Approx(1.0));
  }
  CHECK(apply_plmap(id, {0.3, -0.2}).isApprox(Eigen::Vector2d(0.3, -0.2), 1e-15));
  CHECK(apply_plmap(twice, {0.1, 0.1}).isApprox(Eigen::Vector2d(0.2, 0.2), 1e-15));
}

TEST_CASE("realized Tutte maps reproduce their vertices and invert their blocks") {
  const PLMap2D map = random_tutte_map(7, 3);
  const Mesh2D& m = map.mesh();
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto& a = map.affine(t);
    CHECK(a.det > 0.0);
    CHECK((a.A_inv * a.A - Eigen::Matrix2d::Identity()).norm() <= 1e-10);
    for (int v : m.triangles[static_cast<std::size_t>(t)])
      CHECK((a.A * m.vertices.col(v) + a.delta - map.deformed().col(v)).norm() <= 1e-10);
  }
}

TEST_CASE("apply_plmap is continuous across interior edges") {
  const PLMap2D map = random_tutte_map(7, 5);
  const Mesh2D& m = map.mesh();
  std::mt19937_64 rng(2);
  for (const auto& e : m.edges) {
    const Eigen::Vector2d q = m.vertices.col(e[0]) + oracle::unit(rng) * (m.vertices.col(e[1]) - m.vertices.col(e[0]));
    const auto c = oracle::containing_triangles(m, m.vertices, q, 1e-12);
    for (int t : c) {
      const auto& a = map.affine(t);
      CHECK((a.A * q + a.delta - apply_plmap(map, q)).norm() <= 1e-10);
    }
  }
}

TEST_CASE("image location") {
  const MeshPtr mesh = make_mesh(6);
  const PLMap2D id = realize_plmap(mesh, mesh->vertices);
  std::mt19937_64 rng(4);
  for (int k = 0; k < 1000; ++k) {
    const Eigen::Vector2d q(-1.0 + 2.0 * oracle::unit(rng), -1.0 + 2.0 * oracle::unit(rng));
    CHECK(locate_triangle_in_image(id, q) == locate_triangle(*mesh, q));
  }

  const PLMap2D map = random_tutte_map(11, 9);
  for (int k = 0; k < 1000; ++k) {
    const Eigen::Vector2d q(-1.0 + 2.0 * oracle::unit(rng), -1.0 + 2.0 * oracle::unit(rng));
    const Eigen::Vector2d r = apply_plmap(map, q);
    const int t = locate_triangle_in_image(map, r);
    const auto& tri = map.mesh().triangles[static_cast<std::size_t>(t)];
    const Eigen::Vector3d l = oracle::barycentric(map.deformed().col(tri[0]), map.deformed().col(tri[1]),
                                                  map.deformed().col(tri[2]), r);
    CHECK(l.minCoeff() >= -1e-10);
    CHECK((map.affine(t).A_inv * (r - map.affine(t).delta) - q).norm() <= 1e-8);
  }
  CHECK_THROWS_AS(locate_triangle_in_image(map, {5.0, 5.0}), NotInImage);
  CHECK(map.find_in_image({5.0, 5.0}) == -1);
}

TEST_CASE("Tutte plmaps pass the sampled collision test") {
  const PLMap2D map = random_tutte_map(11, 12);
  std::mt19937_64 rng(6);
  Eigen::Matrix3Xd in = Eigen::Matrix3Xd::Zero(3, 10000), out = Eigen::Matrix3Xd::Zero(3, 10000);
  for (int k = 0; k < 10000; ++k) {
    const Eigen::Vector2d q(-1.0 + 2.0 * oracle::unit(rng), -1.0 + 2.0 * oracle::unit(rng));
    in.col(k).head<2>() = q;
    out.col(k).head<2>() = apply_plmap(map, q);
  }
  REQUIRE(oracle::min_pairwise_distance(in, 0.05) >= 1e-6);
  CHECK(oracle::min_pairwise_distance(out, 0.05) > 1e-12);
  CHECK(map.min_det() > 0.0);
}

TEST_CASE("grid-hash collision oracle agrees with brute force") {
  std::mt19937_64 rng(8);
  const Eigen::Matrix3Xd p = oracle::uniform_box(500, 1.0, rng);
  CHECK(oracle::min_pairwise_distance(p, 0.5) == oracle::min_pairwise_distance_brute(p));
}
