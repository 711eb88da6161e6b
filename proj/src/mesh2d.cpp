#include "tuttenet/mesh2d.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/LU>

#include "tuttenet/errors.hpp"

namespace tuttenet {

namespace {

// Bary tolerance for the second (lenient) pass of inverse point location.
constexpr double kImageSlack = 1e-10;
constexpr double kBucketPad = 1e-9;

bool cell_is_even(int i, int j) { return ((i + j) & 1) == 0; }

// Candidate cell indices along one axis for grid coordinate g in [0, cells].
int axis_candidates(double g, int cells, int out[2]) {
  int f = static_cast<int>(std::floor(g));
  if (f > cells) f = cells;
  int count = 0;
  if (static_cast<double>(f) == g && f - 1 >= 0) out[count++] = f - 1;
  if (f <= cells - 1) out[count++] = f;
  if (count == 0) out[count++] = cells - 1;
  return count;
}

} // namespace

Mesh2D build_mesh(int resolution) {
  if (resolution < 2) {
    throw InvalidArgument("mesh resolution must be >= 2, got " + std::to_string(resolution));
  }
  const int n = resolution;
  const int cells = n - 1;
  Mesh2D mesh;
  mesh.resolution = n;
  mesh.spacing = 2.0 / cells;

  auto vid = [n](int i, int j) { return j * n + i; };

  mesh.vertices.resize(2, n * n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      mesh.vertices.col(vid(i, j)) << -1.0 + 2.0 * i / cells, -1.0 + 2.0 * j / cells;

  mesh.triangles.reserve(static_cast<std::size_t>(2 * cells * cells));
  for (int j = 0; j < cells; ++j) {
    for (int i = 0; i < cells; ++i) {
      const int v00 = vid(i, j), v10 = vid(i + 1, j), v11 = vid(i + 1, j + 1), v01 = vid(i, j + 1);
      if (cell_is_even(i, j)) {
        mesh.triangles.push_back({v00, v10, v11});
        mesh.triangles.push_back({v00, v11, v01});
      } else {
        mesh.triangles.push_back({v00, v10, v01});
        mesh.triangles.push_back({v10, v11, v01});
      }
    }
  }

  for (const auto& t : mesh.triangles) {
    for (int k = 0; k < 3; ++k) {
      int a = t[static_cast<std::size_t>(k)], b = t[static_cast<std::size_t>((k + 1) % 3)];
      mesh.edges.push_back({std::min(a, b), std::max(a, b)});
    }
  }
  std::sort(mesh.edges.begin(), mesh.edges.end());
  mesh.edges.erase(std::unique(mesh.edges.begin(), mesh.edges.end()), mesh.edges.end());

  for (int i = 0; i < cells; ++i) mesh.boundary_loop.push_back(vid(i, 0));
  for (int j = 0; j < cells; ++j) mesh.boundary_loop.push_back(vid(cells, j));
  for (int i = cells; i > 0; --i) mesh.boundary_loop.push_back(vid(i, cells));
  for (int j = cells; j > 0; --j) mesh.boundary_loop.push_back(vid(0, j));

  mesh.boundary_slot.assign(static_cast<std::size_t>(n * n), -1);
  mesh.interior_slot.assign(static_cast<std::size_t>(n * n), -1);
  for (std::size_t k = 0; k < mesh.boundary_loop.size(); ++k)
    mesh.boundary_slot[static_cast<std::size_t>(mesh.boundary_loop[k])] = static_cast<int>(k);
  for (int v = 0; v < n * n; ++v) {
    if (mesh.boundary_slot[static_cast<std::size_t>(v)] < 0) {
      mesh.interior_slot[static_cast<std::size_t>(v)] = static_cast<int>(mesh.interior_ids.size());
      mesh.interior_ids.push_back(v);
    }
  }

  mesh.edge_inverse.reserve(mesh.triangles.size());
  mesh.triangle_area.reserve(mesh.triangles.size());
  for (const auto& t : mesh.triangles) {
    Eigen::Matrix2d e;
    e.col(0) = mesh.vertices.col(t[1]) - mesh.vertices.col(t[0]);
    e.col(1) = mesh.vertices.col(t[2]) - mesh.vertices.col(t[0]);
    const double det = e.determinant();
    if (!(det > 0.0)) throw InternalError("degenerate source triangle in regular mesh");
    mesh.edge_inverse.push_back(e.inverse());
    mesh.triangle_area.push_back(0.5 * det);
  }
  return mesh;
}

MeshPtr make_mesh(int resolution) { return std::make_shared<const Mesh2D>(build_mesh(resolution)); }

Eigen::Vector2d clamp_to_domain(const Eigen::Vector2d& q) {
  const double lim = 1.0 + kDomainTolerance;
  if (!(std::abs(q.x()) <= lim && std::abs(q.y()) <= lim)) {
    std::ostringstream os;
    os << "point (" << q.x() << ", " << q.y() << ") is outside the square domain";
    throw OutOfDomain(os.str(), -1, -1, Eigen::Vector3d(q.x(), q.y(), 0.0));
  }
  return q.cwiseMax(-1.0).cwiseMin(1.0);
}

int locate_triangle(const Mesh2D& mesh, const Eigen::Vector2d& q) {
  const Eigen::Vector2d c = clamp_to_domain(q);
  const int cells = mesh.resolution - 1;
  const double gx = (c.x() + 1.0) / mesh.spacing;
  const double gy = (c.y() + 1.0) / mesh.spacing;
  int xs[2], ys[2];
  const int nx = axis_candidates(gx, cells, xs);
  const int ny = axis_candidates(gy, cells, ys);
  for (int b = 0; b < ny; ++b) {
    const int j = ys[b];
    for (int a = 0; a < nx; ++a) {
      const int i = xs[a];
      const double s = gx - i, t = gy - j;
      const int base = 2 * (j * cells + i);
      if (cell_is_even(i, j)) {
        if (t <= s) return base;
        if (t >= s) return base + 1;
      } else {
        if (s + t <= 1.0) return base;
        if (s + t >= 1.0) return base + 1;
      }
    }
  }
  // Unreachable: the candidate cells always cover the clamped point.
  throw InternalError("grid point location failed");
}

Eigen::Vector3d source_barycentric(const Mesh2D& mesh, int t, const Eigen::Vector2d& q) {
  const auto& tri = mesh.triangles[static_cast<std::size_t>(t)];
  const Eigen::Vector2d l = mesh.edge_inverse[static_cast<std::size_t>(t)] * (q - mesh.vertices.col(tri[0]));
  return {1.0 - l.x() - l.y(), l.x(), l.y()};
}

PLMap2D::PLMap2D(MeshPtr mesh, Eigen::Matrix2Xd deformed)
    : mesh_(std::move(mesh)), deformed_(std::move(deformed)) {
  const Mesh2D& m = *mesh_;
  if (deformed_.cols() != m.num_vertices()) {
    throw InvalidArgument("deformed vertex count " + std::to_string(deformed_.cols()) +
                          " does not match mesh vertex count " + std::to_string(m.num_vertices()));
  }
  affine_.resize(m.triangles.size());
  for (std::size_t t = 0; t < m.triangles.size(); ++t) {
    const auto& tri = m.triangles[t];
    Eigen::Matrix2d e;
    e.col(0) = deformed_.col(tri[1]) - deformed_.col(tri[0]);
    e.col(1) = deformed_.col(tri[2]) - deformed_.col(tri[0]);
    TriangleAffine& aff = affine_[t];
    aff.A = e * m.edge_inverse[t];
    aff.delta = deformed_.col(tri[0]) - aff.A * m.vertices.col(tri[0]);
    aff.det = aff.A.determinant();
    if (aff.det != 0.0) {
      aff.A_inv = aff.A.inverse();
    } else {
      aff.A_inv.setConstant(std::numeric_limits<double>::quiet_NaN());
    }
  }

  // Bucket grid over the deformed triangles' bounding boxes.
  const Eigen::Vector2d lo = deformed_.rowwise().minCoeff().array() - kBucketPad;
  const Eigen::Vector2d hi = deformed_.rowwise().maxCoeff().array() + kBucketPad;
  bucket_dim_ = std::max(1, m.resolution - 1);
  bucket_origin_ = lo;
  bucket_size_ = std::max((hi - lo).maxCoeff() / bucket_dim_, 1e-300);
  auto cell_of = [this](double v, double o) {
    int c = static_cast<int>(std::floor((v - o) / bucket_size_));
    return std::clamp(c, 0, bucket_dim_ - 1);
  };
  std::vector<std::array<int, 4>> ranges(m.triangles.size());
  std::vector<int> counts(static_cast<std::size_t>(bucket_dim_ * bucket_dim_), 0);
  for (std::size_t t = 0; t < m.triangles.size(); ++t) {
    const auto& tri = m.triangles[t];
    Eigen::Vector2d tlo = deformed_.col(tri[0]), thi = tlo;
    for (int k = 1; k < 3; ++k) {
      tlo = tlo.cwiseMin(deformed_.col(tri[static_cast<std::size_t>(k)]));
      thi = thi.cwiseMax(deformed_.col(tri[static_cast<std::size_t>(k)]));
    }
    auto& r = ranges[t];
    r = {cell_of(tlo.x() - kBucketPad, lo.x()), cell_of(thi.x() + kBucketPad, lo.x()),
         cell_of(tlo.y() - kBucketPad, lo.y()), cell_of(thi.y() + kBucketPad, lo.y())};
    for (int by = r[2]; by <= r[3]; ++by)
      for (int bx = r[0]; bx <= r[1]; ++bx) ++counts[static_cast<std::size_t>(by * bucket_dim_ + bx)];
  }
  bucket_start_.assign(counts.size() + 1, 0);
  for (std::size_t b = 0; b < counts.size(); ++b) bucket_start_[b + 1] = bucket_start_[b] + counts[b];
  bucket_items_.resize(static_cast<std::size_t>(bucket_start_.back()));
  std::vector<int> fill(bucket_start_.begin(), bucket_start_.end() - 1);
  for (std::size_t t = 0; t < m.triangles.size(); ++t) {
    const auto& r = ranges[t];
    for (int by = r[2]; by <= r[3]; ++by)
      for (int bx = r[0]; bx <= r[1]; ++bx)
        bucket_items_[static_cast<std::size_t>(fill[static_cast<std::size_t>(by * bucket_dim_ + bx)]++)] =
            static_cast<int>(t);
  }
}

double PLMap2D::min_det() const {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& a : affine_) d = std::min(d, a.det);
  return d;
}

Eigen::Vector3d PLMap2D::image_barycentric(int t, const Eigen::Vector2d& r) const {
  const auto& aff = affine_[static_cast<std::size_t>(t)];
  return source_barycentric(*mesh_, t, aff.A_inv * (r - aff.delta));
}

int PLMap2D::find_in_image(const Eigen::Vector2d& r) const {
  const Eigen::Vector2d g = (r - bucket_origin_) / bucket_size_;
  if (!(g.x() >= 0.0 && g.y() >= 0.0 && g.x() <= bucket_dim_ && g.y() <= bucket_dim_)) return -1;
  const int bx = std::min(static_cast<int>(g.x()), bucket_dim_ - 1);
  const int by = std::min(static_cast<int>(g.y()), bucket_dim_ - 1);
  const std::size_t b = static_cast<std::size_t>(by * bucket_dim_ + bx);
  const int begin = bucket_start_[b], end = bucket_start_[b + 1];
  int lenient = -1;
  for (int k = begin; k < end; ++k) {
    const int t = bucket_items_[static_cast<std::size_t>(k)];
    if (affine_[static_cast<std::size_t>(t)].det == 0.0) continue;
    const double m = image_barycentric(t, r).minCoeff();
    if (m >= 0.0) return t;
    if (lenient < 0 && m >= -kImageSlack) lenient = t;
  }
  return lenient;
}

PLMap2D realize_plmap(MeshPtr mesh, Eigen::Matrix2Xd deformed) {
  return PLMap2D(std::move(mesh), std::move(deformed));
}

int locate_triangle_in_image(const PLMap2D& map, const Eigen::Vector2d& r) {
  const int t = map.find_in_image(r);
  if (t < 0) {
    std::ostringstream os;
    os << "point (" << r.x() << ", " << r.y() << ") is not in the image of the mesh map";
    throw NotInImage(os.str(), -1, -1, Eigen::Vector3d(r.x(), r.y(), 0.0));
  }
  return t;
}

Eigen::Vector2d apply_plmap(const PLMap2D& map, const Eigen::Vector2d& q) {
  const Eigen::Vector2d c = clamp_to_domain(q);
  const auto& aff = map.affine(locate_triangle(map.mesh(), c));
  return aff.A * c + aff.delta;
}

} // namespace tuttenet
