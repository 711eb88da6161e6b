#include "tuttenet/checkpoint.hpp"

#include <json.hpp>

#include "tuttenet/errors.hpp"

namespace tuttenet {

using nlohmann::json;

Checkpoint Checkpoint::from_net(const DeformationNet& net, const Normalization& normalization) {
  Checkpoint c;
  c.resolution = net.mesh().resolution;
  c.frames = net.frames();
  c.params = net.params();
  c.normalization = normalization;
  return c;
}

DeformationNet Checkpoint::realize() const { return DeformationNet(make_mesh(resolution), params, frames); }

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

json vec(const Eigen::VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

[[noreturn]] void bad(const std::string& name, const std::string& path, const std::string& what) {
  throw ParseError(name + ": " + path + ": " + what);
}

const json& field(const json& j, const char* key, const std::string& name, const std::string& path) {
  if (!j.is_object()) bad(name, path, "expected an object");
  const auto it = j.find(key);
  if (it == j.end()) bad(name, path + "." + key, "missing");
  return *it;
}

double number(const json& j, const std::string& name, const std::string& path) {
  if (!j.is_number()) bad(name, path, "expected a number");
  return j.get<double>();
}

Eigen::VectorXd vector(const json& j, Eigen::Index expected, const std::string& name, const std::string& path) {
  if (!j.is_array()) bad(name, path, "expected an array");
  if (expected >= 0 && static_cast<Eigen::Index>(j.size()) != expected)
    bad(name, path, "expected " + std::to_string(expected) + " entries, got " + std::to_string(j.size()));
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = number(j[i], name, path + "[" + std::to_string(i) + "]");
  return v;
}

} // namespace

std::string checkpoint_to_json(const Checkpoint& c) {
  json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["resolution"] = c.resolution;
  json frames = json::array();
  for (const auto& f : c.frames) {
    std::vector<double> r(9);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) r[static_cast<std::size_t>(3 * a + b)] = f.R(a, b);
    frames.push_back(r);
  }
  j["frames"] = frames;
  json layers = json::array();
  for (const auto& p : c.params)
    layers.push_back({{"edge_weights", vec(p.edge_weights)}, {"boundary_increments", vec(p.boundary_increments)}});
  j["layers"] = layers;
  j["normalization"] = {{"center", vec(c.normalization.center)}, {"scale", c.normalization.scale}};
  if (c.optimizer) {
    const AdamState& s = *c.optimizer;
    j["optimizer"] = {{"step", s.step},
                      {"beta1", s.beta1},
                      {"beta2", s.beta2},
                      {"epsilon", s.epsilon},
                      {"lr", {{"initial", s.lr.initial}, {"final", s.lr.final_value}, {"decay_steps", s.lr.decay_steps}}},
                      {"m", vec(s.m)},
                      {"v", vec(s.v)}};
  }
  j["config_hash"] = c.config_hash;
  return j.dump(1) + "\n";
}

Checkpoint checkpoint_from_json(const std::string& text, const std::string& name) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(name + ": " + e.what());
  }
  const json& fmt = field(j, "format", name, "$");
  if (!fmt.is_string() || fmt.get<std::string>() != kCheckpointFormat) bad(name, "$.format", "not a tuttenet checkpoint");
  const json& ver = field(j, "version", name, "$");
  if (!ver.is_number_integer() || ver.get<int>() != kCheckpointVersion)
    bad(name, "$.version", "unsupported version");

  Checkpoint c;
  const json& res = field(j, "resolution", name, "$");
  if (!res.is_number_integer() || res.get<int>() < 2) bad(name, "$.resolution", "expected an integer >= 2");
  c.resolution = res.get<int>();
  const Mesh2D mesh = build_mesh(c.resolution);

  const json& frames = field(j, "frames", name, "$");
  if (!frames.is_array()) bad(name, "$.frames", "expected an array");
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const std::string p = "$.frames[" + std::to_string(i) + "]";
    const Eigen::VectorXd r = vector(frames[i], 9, name, p);
    Eigen::Matrix3d R;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) R(a, b) = r[3 * a + b];
    try {
      c.frames.push_back(Frame::from_matrix(R));
    } catch (const InvalidArgument& e) {
      bad(name, p, e.what());
    }
  }

  const json& layers = field(j, "layers", name, "$");
  if (!layers.is_array()) bad(name, "$.layers", "expected an array");
  if (layers.size() != c.frames.size()) bad(name, "$.layers", "layer count does not match frame count");
  if (layers.empty()) bad(name, "$.layers", "at least one layer required");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string p = "$.layers[" + std::to_string(i) + "]";
    TutteLayerParams lp;
    lp.edge_weights = vector(field(layers[i], "edge_weights", name, p), mesh.num_edges(), name, p + ".edge_weights");
    lp.boundary_increments =
        vector(field(layers[i], "boundary_increments", name, p), mesh.num_boundary(), name, p + ".boundary_increments");
    if (!lp.edge_weights.allFinite() || !lp.boundary_increments.allFinite()) bad(name, p, "non-finite parameter");
    c.params.push_back(std::move(lp));
  }

  const json& norm = field(j, "normalization", name, "$");
  c.normalization.center = vector(field(norm, "center", name, "$.normalization"), 3, name, "$.normalization.center");
  c.normalization.scale = number(field(norm, "scale", name, "$.normalization"), name, "$.normalization.scale");
  if (!(c.normalization.scale > 0.0)) bad(name, "$.normalization.scale", "must be positive");

  if (j.contains("optimizer")) {
    const json& o = j["optimizer"];
    const std::string p = "$.optimizer";
    AdamState s;
    const json& st = field(o, "step", name, p);
    if (!st.is_number_integer() || st.get<int>() < 0) bad(name, p + ".step", "expected a nonnegative integer");
    s.step = st.get<int>();
    s.beta1 = number(field(o, "beta1", name, p), name, p + ".beta1");
    s.beta2 = number(field(o, "beta2", name, p), name, p + ".beta2");
    s.epsilon = number(field(o, "epsilon", name, p), name, p + ".epsilon");
    const json& lr = field(o, "lr", name, p);
    s.lr.initial = number(field(lr, "initial", name, p + ".lr"), name, p + ".lr.initial");
    s.lr.final_value = number(field(lr, "final", name, p + ".lr"), name, p + ".lr.final");
    s.lr.decay_steps = static_cast<int>(number(field(lr, "decay_steps", name, p + ".lr"), name, p + ".lr.decay_steps"));
    const Eigen::Index n = static_cast<Eigen::Index>(c.params.size()) * (mesh.num_edges() + mesh.num_boundary());
    s.m = vector(field(o, "m", name, p), n, name, p + ".m");
    s.v = vector(field(o, "v", name, p), n, name, p + ".v");
    c.optimizer = std::move(s);
  }
  if (j.contains("config_hash")) {
    if (!j["config_hash"].is_number_unsigned() && !j["config_hash"].is_number_integer())
      bad(name, "$.config_hash", "expected an integer");
    c.config_hash = j["config_hash"].get<std::uint64_t>();
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  atomic_write(path, checkpoint_to_json(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_json(read_text(path), path.string());
}

} // namespace tuttenet
