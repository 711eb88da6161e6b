#pragma once

// Independent reference computations used by the tests. None of these call
// into the code paths they check beyond evaluating the public map.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "tuttenet/deform.hpp"
#include "tuttenet/grad.hpp"
#include "tuttenet/mesh2d.hpp"

namespace oracle {

inline double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double normal(std::mt19937_64& rng) {
  // Box-Muller; portable across standard libraries.
  const double u1 = std::max(unit(rng), 1e-300), u2 = unit(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

inline Eigen::Matrix3Xd uniform_box(long n, double half, std::mt19937_64& rng) {
  Eigen::Matrix3Xd p(3, n);
  for (long i = 0; i < n; ++i)
    for (int a = 0; a < 3; ++a) p(a, i) = -half + 2.0 * half * unit(rng);
  return p;
}

inline std::vector<tuttenet::TutteLayerParams> random_params(const tuttenet::Mesh2D& mesh, int layers, double sigma,
                                                             std::mt19937_64& rng) {
  std::vector<tuttenet::TutteLayerParams> out;
  for (int l = 0; l < layers; ++l) {
    tuttenet::TutteLayerParams p = tuttenet::TutteLayerParams::zeros(mesh);
    for (Eigen::Index i = 0; i < p.edge_weights.size(); ++i) p.edge_weights[i] = sigma * normal(rng);
    for (Eigen::Index i = 0; i < p.boundary_increments.size(); ++i) p.boundary_increments[i] = sigma * normal(rng);
    out.push_back(p);
  }
  return out;
}

inline Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  Eigen::Quaterniond q(normal(rng), normal(rng), normal(rng), normal(rng));
  return q.normalized().toRotationMatrix();
}

/// Central difference of a scalar function of a flat vector along coordinate i.
inline double central_difference(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                 Eigen::Index i, double h) {
  Eigen::VectorXd xp = x, xm = x;
  xp[i] += h;
  xm[i] -= h;
  return (f(xp) - f(xm)) / (2.0 * h);
}

/// Barycentric coordinates of q in triangle (a, b, c), by Cramer's rule.
inline Eigen::Vector3d barycentric(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c,
                                   const Eigen::Vector2d& q) {
  const double det = (b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y());
  const double l1 = ((q.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (q.y() - a.y())) / det;
  const double l2 = ((b.x() - a.x()) * (q.y() - a.y()) - (q.x() - a.x()) * (b.y() - a.y())) / det;
  return {1.0 - l1 - l2, l1, l2};
}

/// Every triangle of `pos` (2 x V) whose closed region contains q within tol.
inline std::vector<int> containing_triangles(const tuttenet::Mesh2D& mesh, const Eigen::Matrix2Xd& pos,
                                             const Eigen::Vector2d& q, double tol = 1e-12) {
  std::vector<int> out;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[static_cast<std::size_t>(t)];
    const Eigen::Vector3d l = barycentric(pos.col(tri[0]), pos.col(tri[1]), pos.col(tri[2]), q);
    if (l.minCoeff() >= -tol) out.push_back(t);
  }
  return out;
}

/// Minimum pairwise distance via uniform-grid hashing (cell size `cell`).
/// Exact as long as the true minimum is below `cell`; returns `cell` otherwise.
inline double min_pairwise_distance(const Eigen::Matrix3Xd& p, double cell) {
  auto key = [&](const Eigen::Vector3d& x) {
    const auto i = static_cast<std::int64_t>(std::floor(x.x() / cell));
    const auto j = static_cast<std::int64_t>(std::floor(x.y() / cell));
    const auto k = static_cast<std::int64_t>(std::floor(x.z() / cell));
    return std::array<std::int64_t, 3>{i, j, k};
  };
  auto hash = [](const std::array<std::int64_t, 3>& k) {
    return static_cast<std::uint64_t>(k[0] * 73856093) ^ static_cast<std::uint64_t>(k[1] * 19349663) ^
           static_cast<std::uint64_t>(k[2] * 83492791);
  };
  std::unordered_multimap<std::uint64_t, Eigen::Index> grid;
  for (Eigen::Index i = 0; i < p.cols(); ++i) grid.emplace(hash(key(p.col(i))), i);
  double best = cell;
  for (Eigen::Index i = 0; i < p.cols(); ++i) {
    const auto k = key(p.col(i));
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dz = -1; dz <= 1; ++dz) {
          const auto range = grid.equal_range(hash({k[0] + dx, k[1] + dy, k[2] + dz}));
          for (auto it = range.first; it != range.second; ++it)
            if (it->second > i) best = std::min(best, (p.col(i) - p.col(it->second)).norm());
        }
  }
  return best;
}

/// Brute-force minimum pairwise distance.
inline double min_pairwise_distance_brute(const Eigen::Matrix3Xd& p) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < p.cols(); ++i)
    for (Eigen::Index j = i + 1; j < p.cols(); ++j) best = std::min(best, (p.col(i) - p.col(j)).norm());
  return best;
}

/// Monte-Carlo estimate of the integral of f over [-1,1]^2 from n uniform
/// samples: returns (estimate, standard error).
inline std::pair<double, double> monte_carlo_integral(const std::function<double(const Eigen::Vector2d&)>& f, long n,
                                                      std::mt19937_64& rng) {
  double s = 0.0, s2 = 0.0;
  for (long i = 0; i < n; ++i) {
    const Eigen::Vector2d q(-1.0 + 2.0 * unit(rng), -1.0 + 2.0 * unit(rng));
    const double v = 4.0 * f(q);
    s += v;
    s2 += v * v;
  }
  const double mean = s / static_cast<double>(n);
  const double var = std::max(0.0, s2 / static_cast<double>(n) - mean * mean);
  return {mean, std::sqrt(var / static_cast<double>(n))};
}

/// Central-difference Jacobian of the composite map.
inline Eigen::Matrix3d fd_jacobian(const tuttenet::DeformationNet& net, const Eigen::Vector3d& p, double h) {
  Eigen::Matrix3d J;
  for (int a = 0; a < 3; ++a) {
    Eigen::Vector3d e = Eigen::Vector3d::Zero();
    e[a] = h;
    J.col(a) = (tuttenet::forward(net, Eigen::Vector3d(p + e)) - tuttenet::forward(net, Eigen::Vector3d(p - e))) / (2.0 * h);
  }
  return J;
}

/// True when the orbit of p visits the same triangles for every point of the
/// axis-aligned stencil of radius h.
inline bool stencil_stable(const tuttenet::DeformationNet& net, const Eigen::Vector3d& p, double h) {
  const auto tri = tuttenet::orbit_triangles(net, p);
  for (int a = 0; a < 3; ++a)
    for (double s : {-h, h}) {
      Eigen::Vector3d q = p;
      q[a] += s;
      if (tuttenet::orbit_triangles(net, q) != tri) return false;
    }
  return true;
}

/// Triangle visits of every point, concatenated; equality means no point
/// changed triangles.
inline std::vector<int> all_orbits(const tuttenet::DeformationNet& net, const Eigen::Matrix3Xd& points) {
  std::vector<int> out;
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    const auto t = tuttenet::orbit_triangles(net, points.col(i));
    out.insert(out.end(), t.begin(), t.end());
  }
  return out;
}

/// Relative vector error ||a - b|| / ||b||, with an absolute floor on ||b||.
inline double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor = 1e-12) {
  return (a - b).norm() / std::max(b.norm(), floor);
}

struct GradientCheck {
  double relative_error = 0.0;
  int used = 0;
  int rejected = 0;
  Eigen::VectorXd analytic;
  Eigen::VectorXd numeric;
};

/// Compare `analytic` (flat, over all raw parameters) against central
/// differences at `count` random coordinates. A coordinate whose +-h
/// perturbation makes `unstable(net_plus, net_minus)` true (a point changed
/// triangles, say) is rejected and redrawn.
inline GradientCheck check_gradient(const tuttenet::MeshPtr& mesh, const std::vector<tuttenet::Frame>& frames,
                                    const Eigen::VectorXd& theta, const Eigen::VectorXd& analytic,
                                    const std::function<double(const tuttenet::DeformationNet&)>& loss,
                                    const std::function<bool(const tuttenet::DeformationNet&,
                                                             const tuttenet::DeformationNet&)>& unstable,
                                    int count, double h, std::mt19937_64& rng) {
  const int layers = static_cast<int>(frames.size());
  auto net_at = [&](const Eigen::VectorXd& x) {
    return tuttenet::DeformationNet(mesh, tuttenet::unflatten(x, *mesh, layers), frames);
  };
  GradientCheck out;
  out.analytic.resize(count);
  out.numeric.resize(count);
  int attempts = 0;
  while (out.used < count && attempts < 50 * count) {
    ++attempts;
    const auto i = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(theta.size()));
    Eigen::VectorXd xp = theta, xm = theta;
    xp[i] += h;
    xm[i] -= h;
    const tuttenet::DeformationNet np = net_at(xp), nm = net_at(xm);
    if (unstable && unstable(np, nm)) {
      ++out.rejected;
      continue;
    }
    out.numeric[out.used] = (loss(np) - loss(nm)) / (2.0 * h);
    out.analytic[out.used] = analytic[i];
    ++out.used;
  }
  out.analytic.conservativeResize(out.used);
  out.numeric.conservativeResize(out.used);
  out.relative_error = relative_error(out.analytic, out.numeric);
  return out;
}

/// UV sphere of the given radius: `rings` latitude circles plus two poles.
struct SurfaceMesh {
  Eigen::Matrix3Xd vertices;
  std::vector<std::array<int, 3>> faces;
};

inline SurfaceMesh uv_sphere(int rings, int segments, double radius) {
  const double pi = 3.14159265358979323846;
  SurfaceMesh m;
  const int nv = rings * segments + 2;
  m.vertices.resize(3, nv);
  m.vertices.col(0) = Eigen::Vector3d(0, 0, -radius);
  for (int r = 0; r < rings; ++r) {
    const double phi = pi * (r + 1) / (rings + 1) - pi / 2;
    for (int s = 0; s < segments; ++s) {
      const double th = 2 * pi * s / segments;
      m.vertices.col(1 + r * segments + s) =
          radius * Eigen::Vector3d(std::cos(phi) * std::cos(th), std::cos(phi) * std::sin(th), std::sin(phi));
    }
  }
  m.vertices.col(nv - 1) = Eigen::Vector3d(0, 0, radius);
  auto v = [&](int r, int s) { return 1 + r * segments + (s % segments); };
  for (int s = 0; s < segments; ++s) m.faces.push_back({0, v(0, s + 1), v(0, s)});
  for (int r = 0; r + 1 < rings; ++r)
    for (int s = 0; s < segments; ++s) {
      m.faces.push_back({v(r, s), v(r, s + 1), v(r + 1, s + 1)});
      m.faces.push_back({v(r, s), v(r + 1, s + 1), v(r + 1, s)});
    }
  for (int s = 0; s < segments; ++s) m.faces.push_back({nv - 1, v(rings - 1, s), v(rings - 1, s + 1)});
  return m;
}

/// Rotation about z by angle max_angle * z / z_extent.
inline Eigen::Matrix3Xd twist(const Eigen::Matrix3Xd& p, double max_angle, double z_extent) {
  Eigen::Matrix3Xd out(3, p.cols());
  for (Eigen::Index i = 0; i < p.cols(); ++i) {
    const double a = max_angle * p(2, i) / z_extent;
    const double c = std::cos(a), s = std::sin(a);
    out.col(i) = Eigen::Vector3d(c * p(0, i) - s * p(1, i), s * p(0, i) + c * p(1, i), p(2, i));
  }
  return out;
}

} // namespace oracle
