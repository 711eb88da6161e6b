#include "tuttenet/geometry_io.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "tuttenet/errors.hpp"

namespace tuttenet {

Normalization Normalization::fit(const Eigen::Matrix3Xd& points) {
  if (points.cols() == 0) throw InvalidArgument("cannot normalize empty geometry");
  const Eigen::Vector3d lo = points.rowwise().minCoeff();
  const Eigen::Vector3d hi = points.rowwise().maxCoeff();
  Normalization n;
  n.center = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo).maxCoeff();
  n.scale = half > 0.0 ? kHalfExtent / half : 1.0;
  return n;
}

Eigen::Matrix3Xd Normalization::apply(const Eigen::Matrix3Xd& points) const {
  return (points.colwise() - center) * scale;
}

Eigen::Matrix3Xd Normalization::invert(const Eigen::Matrix3Xd& points) const {
  return (points / scale).colwise() + center;
}

namespace {

[[noreturn]] void fail(const std::string& name, long line, const std::string& msg) {
  throw ParseError(name + ":" + std::to_string(line) + ": " + msg);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

Eigen::Matrix3Xd to_matrix(const std::vector<Eigen::Vector3d>& v) {
  Eigen::Matrix3Xd m(3, static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = v[i];
  return m;
}

void check_faces(const std::vector<std::array<int, 3>>& faces, std::size_t nv, const std::string& name) {
  for (std::size_t f = 0; f < faces.size(); ++f)
    for (int v : faces[f])
      if (v < 0 || static_cast<std::size_t>(v) >= nv)
        throw ParseError(name + ": face " + std::to_string(f) + " references vertex " + std::to_string(v) +
                         " but only " + std::to_string(nv) + " vertices exist");
}

} // namespace

Geometry read_obj(std::istream& in, const std::string& name) {
  std::vector<Eigen::Vector3d> verts;
  Geometry g;
  g.format = GeometryFormat::Obj;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Eigen::Vector3d p;
      if (!(ss >> p.x() >> p.y() >> p.z())) fail(name, lineno, "vertex needs three coordinates");
      if (!p.allFinite()) fail(name, lineno, "non-finite vertex coordinate");
      verts.push_back(p);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ss >> tok) {
        const std::string head = tok.substr(0, tok.find('/'));
        long v = 0;
        try {
          std::size_t used = 0;
          v = std::stol(head, &used);
          if (used != head.size()) throw std::invalid_argument(head);
        } catch (const std::exception&) {
          fail(name, lineno, "bad face index '" + tok + "'");
        }
        if (v == 0) fail(name, lineno, "face index 0 is invalid (indices are 1-based)");
        const long resolved = v > 0 ? v - 1 : static_cast<long>(verts.size()) + v;
        if (resolved < 0 || resolved >= static_cast<long>(verts.size()))
          fail(name, lineno, "face index " + std::to_string(v) + " out of range");
        idx.push_back(static_cast<int>(resolved));
      }
      if (idx.size() < 3) fail(name, lineno, "face needs at least three vertices");
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) g.faces.push_back({idx[0], idx[k], idx[k + 1]});
    }
  }
  g.points.points = to_matrix(verts);
  return g;
}

namespace {

enum class PlyType { I8, U8, I16, U16, I32, U32, F32, F64 };

PlyType ply_type(const std::string& s, const std::string& name, long line) {
  if (s == "char" || s == "int8") return PlyType::I8;
  if (s == "uchar" || s == "uint8") return PlyType::U8;
  if (s == "short" || s == "int16") return PlyType::I16;
  if (s == "ushort" || s == "uint16") return PlyType::U16;
  if (s == "int" || s == "int32") return PlyType::I32;
  if (s == "uint" || s == "uint32") return PlyType::U32;
  if (s == "float" || s == "float32") return PlyType::F32;
  if (s == "double" || s == "float64") return PlyType::F64;
  fail(name, line, "unknown PLY type '" + s + "'");
}

template <typename T>
double read_le(std::istream& in) {
  unsigned char buf[sizeof(T)];
  in.read(reinterpret_cast<char*>(buf), sizeof(T));
  T v;
  // Host is assumed little-endian, as is every supported target.
  std::memcpy(&v, buf, sizeof(T));
  return static_cast<double>(v);
}

double read_binary(std::istream& in, PlyType t) {
  switch (t) {
  case PlyType::I8: return read_le<std::int8_t>(in);
  case PlyType::U8: return read_le<std::uint8_t>(in);
  case PlyType::I16: return read_le<std::int16_t>(in);
  case PlyType::U16: return read_le<std::uint16_t>(in);
  case PlyType::I32: return read_le<std::int32_t>(in);
  case PlyType::U32: return read_le<std::uint32_t>(in);
  case PlyType::F32: return read_le<float>(in);
  case PlyType::F64: return read_le<double>(in);
  }
  return 0.0;
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::F32;
  bool list = false;
  PlyType count_type = PlyType::U8;
};

struct PlyElement {
  std::string name;
  long count = 0;
  std::vector<PlyProperty> props;
};

bool is_weight_name(const std::string& n) {
  return n == "weight" || n == "scalar" || n == "value" || n == "density" || n == "quality";
}

} // namespace

Geometry read_ply(std::istream& in, const std::string& name) {
  std::string line;
  long lineno = 0;
  auto next = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  if (!next() || line != "ply") fail(name, 1, "missing 'ply' magic");
  bool binary = false;
  std::vector<PlyElement> elements;
  bool header_done = false;
  while (next()) {
    std::istringstream ss(line);
    std::string kw;
    ss >> kw;
    if (kw == "format") {
      std::string fmt;
      ss >> fmt;
      if (fmt == "ascii") binary = false;
      else if (fmt == "binary_little_endian") binary = true;
      else fail(name, lineno, "unsupported PLY format '" + fmt + "'");
    } else if (kw == "element") {
      PlyElement e;
      if (!(ss >> e.name >> e.count) || e.count < 0) fail(name, lineno, "bad element declaration");
      elements.push_back(e);
    } else if (kw == "property") {
      if (elements.empty()) fail(name, lineno, "property before any element");
      PlyProperty p;
      std::string t;
      ss >> t;
      if (t == "list") {
        std::string ct, it;
        ss >> ct >> it >> p.name;
        p.list = true;
        p.count_type = ply_type(ct, name, lineno);
        p.type = ply_type(it, name, lineno);
      } else {
        p.type = ply_type(t, name, lineno);
        ss >> p.name;
      }
      if (p.name.empty()) fail(name, lineno, "property without a name");
      elements.back().props.push_back(p);
    } else if (kw == "end_header") {
      header_done = true;
      break;
    } else if (kw == "comment" || kw == "obj_info" || kw.empty()) {
      continue;
    } else {
      fail(name, lineno, "unexpected header keyword '" + kw + "'");
    }
  }
  if (!header_done) fail(name, lineno, "missing end_header");

  Geometry g;
  g.format = GeometryFormat::Ply;
  std::vector<Eigen::Vector3d> verts;
  std::vector<double> weights;
  bool has_weight = false;

  for (const auto& e : elements) {
    int ix = -1, iy = -1, iz = -1, iw = -1, iface = -1;
    for (std::size_t k = 0; k < e.props.size(); ++k) {
      const auto& p = e.props[k];
      const int ki = static_cast<int>(k);
      if (p.list) {
        if (p.name == "vertex_indices" || p.name == "vertex_index") iface = ki;
        continue;
      }
      if (p.name == "x") ix = ki;
      else if (p.name == "y") iy = ki;
      else if (p.name == "z") iz = ki;
      else if (iw < 0 && is_weight_name(lower(p.name))) iw = ki;
    }
    const bool is_vertex = e.name == "vertex";
    const bool is_face = e.name == "face";
    if (is_vertex && (ix < 0 || iy < 0 || iz < 0)) fail(name, lineno, "vertex element lacks x/y/z");
    if (is_vertex && iw >= 0) has_weight = true;

    for (long r = 0; r < e.count; ++r) {
      std::vector<double> scalars(e.props.size(), 0.0);
      std::vector<int> list;
      std::istringstream ss;
      if (!binary) {
        if (!next()) fail(name, lineno, "unexpected end of file in element '" + e.name + "'");
        ss.str(line);
      }
      const long where = binary ? static_cast<long>(in.tellg()) : lineno;
      auto bad = [&](const std::string& what) {
        if (binary) throw ParseError(name + ": byte offset " + std::to_string(where) + ": " + what);
        fail(name, lineno, what);
      };
      for (std::size_t k = 0; k < e.props.size(); ++k) {
        const auto& p = e.props[k];
        if (p.list) {
          double cnt = 0.0;
          if (binary) cnt = read_binary(in, p.count_type);
          else if (!(ss >> cnt)) bad("missing list count");
          if (cnt < 0) bad("negative list count");
          const auto n = static_cast<long>(cnt);
          for (long j = 0; j < n; ++j) {
            double v = 0.0;
            if (binary) v = read_binary(in, p.type);
            else if (!(ss >> v)) bad("list shorter than its count");
            if (static_cast<int>(k) == iface) list.push_back(static_cast<int>(v));
          }
        } else {
          if (binary) scalars[k] = read_binary(in, p.type);
          else if (!(ss >> scalars[k])) bad("missing value for property '" + p.name + "'");
        }
        if (binary && !in) bad("unexpected end of binary data");
      }
      if (is_vertex) {
        Eigen::Vector3d v(scalars[static_cast<std::size_t>(ix)], scalars[static_cast<std::size_t>(iy)],
                          scalars[static_cast<std::size_t>(iz)]);
        if (!v.allFinite()) bad("non-finite vertex coordinate");
        verts.push_back(v);
        if (iw >= 0) weights.push_back(scalars[static_cast<std::size_t>(iw)]);
      } else if (is_face && iface >= 0) {
        if (list.size() < 3) bad("face needs at least three vertices");
        for (std::size_t k = 1; k + 1 < list.size(); ++k) g.faces.push_back({list[0], list[k], list[k + 1]});
      }
    }
  }
  g.points.points = to_matrix(verts);
  if (has_weight) {
    g.points.weights = Eigen::Map<const Eigen::VectorXd>(weights.data(), static_cast<Eigen::Index>(weights.size()));
    if ((g.points.weights->array() < 0.0).any() || !g.points.weights->allFinite())
      throw ParseError(name + ": weights must be finite and nonnegative");
  }
  check_faces(g.faces, verts.size(), name);
  return g;
}

Geometry read_grid(std::istream& in, double threshold, const std::string& name) {
  std::string line;
  long lineno = 0;
  std::istringstream ss;
  std::string tok;
  // Whitespace-separated tokens with line tracking.
  auto token = [&](const char* what) -> std::string {
    while (!(ss >> tok)) {
      if (!std::getline(in, line)) fail(name, lineno, std::string("unexpected end of file, expected ") + what);
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      ss.clear();
      ss.str(line);
    }
    return tok;
  };
  auto number = [&](const char* what) -> double {
    const std::string t = token(what);
    try {
      std::size_t used = 0;
      const double v = std::stod(t, &used);
      if (used != t.size()) throw std::invalid_argument(t);
      return v;
    } catch (const std::exception&) {
      fail(name, lineno, std::string("expected ") + what + ", got '" + t + "'");
    }
  };
  if (token("magic") != "TNGRID") fail(name, lineno, "missing TNGRID magic");
  if (number("version") != 1.0) fail(name, lineno, "unsupported grid version");
  long dims[3];
  for (long& d : dims) {
    const double v = number("grid dimension");
    if (v < 1 || v != std::floor(v)) fail(name, lineno, "grid dimensions must be positive integers");
    d = static_cast<long>(v);
  }
  Eigen::Vector3d lo, hi;
  for (int a = 0; a < 3; ++a) lo[a] = number("bounding box");
  for (int a = 0; a < 3; ++a) hi[a] = number("bounding box");
  if (!(hi.array() >= lo.array()).all()) fail(name, lineno, "bounding box max below min");

  Geometry g;
  g.format = GeometryFormat::Grid;
  std::vector<Eigen::Vector3d> pts;
  auto coord = [&](int a, long i) {
    return dims[a] == 1 ? 0.5 * (lo[a] + hi[a]) : lo[a] + (hi[a] - lo[a]) * static_cast<double>(i) / static_cast<double>(dims[a] - 1);
  };
  for (long k = 0; k < dims[2]; ++k)
    for (long j = 0; j < dims[1]; ++j)
      for (long i = 0; i < dims[0]; ++i) {
        const double v = number("grid value");
        if (v > threshold) pts.emplace_back(coord(0, i), coord(1, j), coord(2, k));
      }
  g.points.points = to_matrix(pts);
  g.points.weights = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(pts.size()));
  return g;
}

Geometry read_geometry(const std::filesystem::path& path, double density_threshold) {
  const std::string ext = lower(path.extension().string());
  const std::string name = path.string();
  std::ifstream in(path, ext == ".ply" ? std::ios::binary : std::ios::in);
  if (!in) throw ParseError(name + ": cannot open file");
  Geometry g;
  if (ext == ".obj") g = read_obj(in, name);
  else if (ext == ".ply") g = read_ply(in, name);
  else if (ext == ".grid" || ext == ".tngrid") g = read_grid(in, density_threshold, name);
  else throw ParseError(name + ": unknown geometry extension '" + ext + "'");
  if (g.points.size() == 0) throw ParseError(name + ": geometry is empty");
  return g;
}

NormalizedGeometry load_geometry(const std::filesystem::path& path, double density_threshold) {
  NormalizedGeometry out;
  out.geometry = read_geometry(path, density_threshold);
  out.normalization = Normalization::fit(out.geometry.points.points);
  out.geometry.points.points = out.normalization.apply(out.geometry.points.points);
  return out;
}

void write_geometry(const std::filesystem::path& path, const Eigen::Matrix3Xd& points,
                    const std::vector<std::array<int, 3>>& faces, const std::optional<Eigen::VectorXd>& weights) {
  std::ostringstream os;
  os.precision(std::numeric_limits<double>::max_digits10);
  const std::string ext = lower(path.extension().string());
  if (ext == ".obj" || (ext != ".ply" && !faces.empty())) {
    for (Eigen::Index i = 0; i < points.cols(); ++i)
      os << "v " << points(0, i) << ' ' << points(1, i) << ' ' << points(2, i) << '\n';
    for (const auto& f : faces) os << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  } else {
    os << "ply\nformat ascii 1.0\nelement vertex " << points.cols()
       << "\nproperty double x\nproperty double y\nproperty double z\n";
    if (weights) os << "property double weight\n";
    if (!faces.empty()) os << "element face " << faces.size() << "\nproperty list uchar int vertex_indices\n";
    os << "end_header\n";
    for (Eigen::Index i = 0; i < points.cols(); ++i) {
      os << points(0, i) << ' ' << points(1, i) << ' ' << points(2, i);
      if (weights) os << ' ' << (*weights)[i];
      os << '\n';
    }
    for (const auto& f : faces) os << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
  }
  atomic_write(path, os.str());
}

void atomic_write(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw Error("write to " + tmp.string() + " failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error("cannot rename temporary file onto " + path.string());
  }
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string() + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

} // namespace tuttenet
