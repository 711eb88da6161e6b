#pragma once

#include <array>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tuttenet/deform.hpp"

namespace tuttenet {

/// x_normalized = (x - center) * scale. The bounding box of the loaded
/// geometry lands centred in [-0.7, 0.7]^3 with its longest side spanning it.
struct Normalization {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double scale = 1.0;

  static constexpr double kHalfExtent = 0.7;

  static Normalization fit(const Eigen::Matrix3Xd& points);
  Eigen::Matrix3Xd apply(const Eigen::Matrix3Xd& points) const;
  Eigen::Matrix3Xd invert(const Eigen::Matrix3Xd& points) const;
};

enum class GeometryFormat { Obj, Ply, Grid };

struct Geometry {
  PointSet points;
  std::vector<std::array<int, 3>> faces;
  GeometryFormat format = GeometryFormat::Obj;
};

/// Parsers return raw (unnormalized) coordinates. Errors are ParseError with
/// the source name and line (or byte offset for binary data).
Geometry read_obj(std::istream& in, const std::string& name = "<obj>");
Geometry read_ply(std::istream& in, const std::string& name = "<ply>");

/// Dense scalar grid:
///   TNGRID 1
///   nx ny nz
///   xmin ymin zmin xmax ymax zmax
///   nx*ny*nz values, x fastest
/// Every node whose value exceeds `threshold` becomes a unit-weight sample.
Geometry read_grid(std::istream& in, double threshold, const std::string& name = "<grid>");

/// Dispatch on the extension (.obj, .ply, .grid/.tngrid). Throws ParseError on
/// empty geometry.
Geometry read_geometry(const std::filesystem::path& path, double density_threshold = 1.0);

struct NormalizedGeometry {
  Geometry geometry; // normalized coordinates
  Normalization normalization;
};

NormalizedGeometry load_geometry(const std::filesystem::path& path, double density_threshold = 1.0);

/// OBJ when faces are present or the extension is .obj, ascii PLY otherwise
/// (with a weight property when weights are present).
void write_geometry(const std::filesystem::path& path, const Eigen::Matrix3Xd& points,
                    const std::vector<std::array<int, 3>>& faces, const std::optional<Eigen::VectorXd>& weights = {});

/// Write to a sibling temporary file, then rename over `path`.
void atomic_write(const std::filesystem::path& path, const std::string& contents);

std::string read_text(const std::filesystem::path& path);

} // namespace tuttenet
