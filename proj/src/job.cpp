#include "tuttenet/job.hpp"

#include <initializer_list>
#include <set>

#include <json.hpp>

#include "tuttenet/checkpoint.hpp"
#include "tuttenet/errors.hpp"
#include "tuttenet/geometry_io.hpp"

namespace tuttenet {

using nlohmann::json;

const char* workflow_name(Workflow w) {
  switch (w) {
  case Workflow::Elastic: return "elastic";
  case Workflow::Fit: return "fit";
  case Workflow::Apply: return "apply";
  case Workflow::Invert: return "invert";
  case Workflow::Check: return "check";
  }
  return "?";
}

namespace {

[[noreturn]] void bad(const std::string& path, const std::string& what) { throw ConfigError(path + ": " + what); }

void allow_keys(const json& j, const std::string& path, std::initializer_list<const char*> keys) {
  if (!j.is_object()) bad(path, "expected an object");
  const std::set<std::string> ok(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items())
    if (!ok.count(k)) bad(path + "." + k, "unknown key");
}

double get_number(const json& j, const std::string& path) {
  if (!j.is_number()) bad(path, "expected a number");
  return j.get<double>();
}

double get_nonneg(const json& j, const std::string& path) {
  const double v = get_number(j, path);
  if (!(v >= 0.0)) bad(path, "must be nonnegative");
  return v;
}

long get_int(const json& j, const std::string& path, long min) {
  if (!j.is_number_integer()) bad(path, "expected an integer");
  const long v = j.get<long>();
  if (v < min) bad(path, "must be at least " + std::to_string(min));
  return v;
}

std::string get_string(const json& j, const std::string& path) {
  if (!j.is_string()) bad(path, "expected a string");
  return j.get<std::string>();
}

Eigen::Vector3d get_vec3(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) bad(path, "expected an array of 3 numbers");
  Eigen::Vector3d v;
  for (int i = 0; i < 3; ++i) v[i] = get_number(j[static_cast<std::size_t>(i)], path + "[" + std::to_string(i) + "]");
  return v;
}

void parse_net(const json& j, JobFile& job) {
  const std::string p = "$.net";
  allow_keys(j, p, {"layers", "resolution", "frames"});
  if (j.contains("layers")) job.layers = static_cast<int>(get_int(j["layers"], p + ".layers", 1));
  if (j.contains("resolution")) job.resolution = static_cast<int>(get_int(j["resolution"], p + ".resolution", 2));
  if (j.contains("frames")) {
    const json& f = j["frames"];
    if (f.is_string()) {
      if (f.get<std::string>() != "triplane") bad(p + ".frames", "expected \"triplane\" or a list of 3x3 matrices");
    } else if (f.is_array()) {
      for (std::size_t i = 0; i < f.size(); ++i) {
        const std::string fp = p + ".frames[" + std::to_string(i) + "]";
        if (!f[i].is_array() || f[i].size() != 9) bad(fp, "expected 9 numbers (row-major rotation)");
        Eigen::Matrix3d R;
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) {
            const auto k = static_cast<std::size_t>(3 * a + b);
            R(a, b) = get_number(f[i][k], fp + "[" + std::to_string(k) + "]");
          }
        try {
          job.frames.push_back(Frame::from_matrix(R));
        } catch (const InvalidArgument& e) {
          bad(fp, e.what());
        }
      }
      if (static_cast<int>(job.frames.size()) != job.layers)
        bad(p + ".frames", "frame count " + std::to_string(job.frames.size()) + " does not match layers " +
                               std::to_string(job.layers));
    } else {
      bad(p + ".frames", "expected \"triplane\" or a list of 3x3 matrices");
    }
  }
}

void parse_schedule(const json& j, JobFile& job) {
  const std::string p = "$.schedule";
  allow_keys(j, p, {"lr_initial", "lr_final", "lr_decay_steps", "max_steps", "tolerance", "window", "check_every",
                    "log_every"});
  if (j.contains("lr_initial")) job.lr.initial = get_number(j["lr_initial"], p + ".lr_initial");
  if (j.contains("lr_final")) job.lr.final_value = get_number(j["lr_final"], p + ".lr_final");
  if (j.contains("lr_decay_steps")) job.lr.decay_steps = static_cast<int>(get_int(j["lr_decay_steps"], p + ".lr_decay_steps", 0));
  if (j.contains("max_steps")) job.max_steps = static_cast<int>(get_int(j["max_steps"], p + ".max_steps", 0));
  if (j.contains("tolerance")) job.tolerance = get_number(j["tolerance"], p + ".tolerance");
  if (j.contains("window")) job.window = static_cast<int>(get_int(j["window"], p + ".window", 1));
  if (j.contains("check_every")) job.check_every = static_cast<int>(get_int(j["check_every"], p + ".check_every", 1));
  if (j.contains("log_every")) job.log_every = static_cast<int>(get_int(j["log_every"], p + ".log_every", 1));
  if (!(job.lr.initial > 0.0)) bad(p + ".lr_initial", "must be positive");
  if (!(job.lr.final_value > 0.0)) bad(p + ".lr_final", "must be positive");
}

void parse_weights(const json& j, JobFile& job) {
  const std::string p = "$.weights";
  allow_keys(j, p, {"handle", "reg", "elastic_initial", "elastic_decrement", "elastic_interval", "elastic_floor",
                    "reweighting"});
  LossWeights& w = job.weights;
  if (j.contains("handle")) w.handle = get_nonneg(j["handle"], p + ".handle");
  if (j.contains("reg")) w.reg = get_nonneg(j["reg"], p + ".reg");
  if (j.contains("elastic_initial")) w.elastic.initial = get_nonneg(j["elastic_initial"], p + ".elastic_initial");
  if (j.contains("elastic_decrement")) w.elastic.decrement = get_nonneg(j["elastic_decrement"], p + ".elastic_decrement");
  if (j.contains("elastic_interval"))
    w.elastic.interval = static_cast<int>(get_int(j["elastic_interval"], p + ".elastic_interval", 1));
  if (j.contains("elastic_floor")) w.elastic.floor = get_nonneg(j["elastic_floor"], p + ".elastic_floor");
  if (j.contains("reweighting")) {
    if (!j["reweighting"].is_boolean()) bad(p + ".reweighting", "expected a boolean");
    w.reweighting.enabled = j["reweighting"].get<bool>();
  }
  if (w.elastic.floor > w.elastic.initial) bad(p + ".elastic_floor", "exceeds elastic_initial");
}

void parse_samples(const json& j, JobFile& job) {
  const std::string p = "$.samples";
  allow_keys(j, p, {"moving", "static", "free"});
  if (j.contains("moving")) job.budget.moving = get_int(j["moving"], p + ".moving", 1);
  if (j.contains("static")) job.budget.fixed = get_int(j["static"], p + ".static", 1);
  if (j.contains("free")) job.budget.free = get_int(j["free"], p + ".free", 1);
}

HandleSpec parse_handle(const json& j, const std::string& p) {
  allow_keys(j, p, {"kind", "region", "axis", "angle_deg", "translation", "pivot"});
  HandleSpec h;
  if (!j.contains("kind")) bad(p + ".kind", "missing");
  const std::string kind = get_string(j["kind"], p + ".kind");
  if (kind == "moving") h.kind = HandleKind::Moving;
  else if (kind == "static") h.kind = HandleKind::Static;
  else bad(p + ".kind", "expected \"moving\" or \"static\"");

  if (!j.contains("region")) bad(p + ".region", "missing");
  const json& r = j["region"];
  const std::string rp = p + ".region";
  if (!r.is_object() || !r.contains("type")) bad(rp + ".type", "missing");
  const std::string type = get_string(r["type"], rp + ".type");
  if (type == "box") {
    allow_keys(r, rp, {"type", "min", "max"});
    if (!r.contains("min")) bad(rp + ".min", "missing");
    if (!r.contains("max")) bad(rp + ".max", "missing");
    h.region.shape = HandleRegion::Shape::Box;
    h.region.lo = get_vec3(r["min"], rp + ".min");
    h.region.hi = get_vec3(r["max"], rp + ".max");
    if (!(h.region.hi.array() >= h.region.lo.array()).all()) bad(rp + ".max", "below min");
  } else if (type == "sphere") {
    allow_keys(r, rp, {"type", "center", "radius"});
    if (!r.contains("center")) bad(rp + ".center", "missing");
    if (!r.contains("radius")) bad(rp + ".radius", "missing");
    h.region.shape = HandleRegion::Shape::Sphere;
    h.region.center = get_vec3(r["center"], rp + ".center");
    h.region.radius = get_number(r["radius"], rp + ".radius");
    if (!(h.region.radius > 0.0)) bad(rp + ".radius", "must be positive");
  } else {
    bad(rp + ".type", "expected \"box\" or \"sphere\"");
  }

  if (j.contains("axis")) h.axis = get_vec3(j["axis"], p + ".axis");
  if (j.contains("angle_deg")) h.angle_deg = get_number(j["angle_deg"], p + ".angle_deg");
  if (j.contains("translation")) h.translation = get_vec3(j["translation"], p + ".translation");
  if (j.contains("pivot")) h.pivot = get_vec3(j["pivot"], p + ".pivot");
  if (h.angle_deg != 0.0 && !(h.axis.norm() > 0.0)) bad(p + ".axis", "must be nonzero");
  if (h.kind == HandleKind::Static && (h.angle_deg != 0.0 || h.translation.norm() != 0.0))
    bad(p, "static handles cannot carry a motion");
  return h;
}

std::filesystem::path get_path(const json& j, const std::string& p, const std::filesystem::path& base) {
  const std::string s = get_string(j, p);
  if (s.empty()) bad(p, "empty path");
  std::filesystem::path path(s);
  return path.is_absolute() ? path : base / path;
}

void require_file(const std::optional<std::filesystem::path>& path, const std::string& p) {
  if (!path) bad(p, "required for this workflow");
  if (!std::filesystem::is_regular_file(*path)) bad(p, "file not found: " + path->string());
}

void require_writable(const std::optional<std::filesystem::path>& path, const std::string& p, bool required) {
  if (!path) {
    if (required) bad(p, "required for this workflow");
    return;
  }
  const auto dir = path->parent_path();
  if (!dir.empty() && !std::filesystem::is_directory(dir)) bad(p, "directory does not exist: " + dir.string());
}

} // namespace

ElasticJobConfig JobFile::elastic_config() const {
  ElasticJobConfig c;
  c.layers = layers;
  c.resolution = resolution;
  c.frames = frames;
  c.handles = handles;
  c.budget = budget;
  c.weights = weights;
  c.lr = lr;
  c.max_steps = max_steps;
  c.tolerance = tolerance;
  c.window = window;
  c.check_every = check_every;
  c.log_every = log_every;
  c.seed = seed;
  return c;
}

FitJobConfig JobFile::fit_config() const {
  FitJobConfig c;
  c.layers = layers;
  c.resolution = resolution;
  c.frames = frames;
  c.lr = lr;
  c.max_steps = max_steps;
  c.tolerance = tolerance;
  c.window = window;
  c.check_every = check_every;
  c.log_every = log_every;
  c.seed = seed;
  return c;
}

std::uint64_t JobFile::config_hash() const { return fnv1a(canonical + "|seed=" + std::to_string(seed)); }

JobFile parse_job(const std::string& text, const std::filesystem::path& base_dir, const std::string& name) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("$: " + name + " is not valid JSON: " + e.what());
  }
  allow_keys(j, "$", {"workflow", "net", "schedule", "weights", "samples", "handles", "input", "source", "target",
                      "checkpoint", "output", "log", "seed", "density_threshold"});
  JobFile job;
  if (!j.contains("workflow")) bad("$.workflow", "missing");
  const std::string wf = get_string(j["workflow"], "$.workflow");
  if (wf == "elastic") job.workflow = Workflow::Elastic;
  else if (wf == "fit") job.workflow = Workflow::Fit;
  else if (wf == "apply") job.workflow = Workflow::Apply;
  else if (wf == "invert") job.workflow = Workflow::Invert;
  else if (wf == "check") job.workflow = Workflow::Check;
  else bad("$.workflow", "expected one of elastic, fit, apply, invert, check");

  if (job.workflow == Workflow::Fit) {
    job.resolution = 11;
    job.lr = LearningRateSchedule::fit();
    job.max_steps = 5000;
    job.log_every = 100;
  } else {
    job.lr = LearningRateSchedule::elastic();
  }

  if (j.contains("net")) parse_net(j["net"], job);
  if (!job.frames.empty() && static_cast<int>(job.frames.size()) != job.layers)
    bad("$.net.frames", "frame count does not match layers");
  if (j.contains("schedule")) parse_schedule(j["schedule"], job);
  if (j.contains("weights")) parse_weights(j["weights"], job);
  if (j.contains("samples")) parse_samples(j["samples"], job);
  if (j.contains("handles")) {
    const json& h = j["handles"];
    if (!h.is_array()) bad("$.handles", "expected an array");
    for (std::size_t i = 0; i < h.size(); ++i) job.handles.push_back(parse_handle(h[i], "$.handles[" + std::to_string(i) + "]"));
  }
  for (const char* key : {"input", "source", "target", "checkpoint", "output", "log"}) {
    if (!j.contains(key)) continue;
    const auto path = get_path(j[key], std::string("$.") + key, base_dir);
    const std::string k = key;
    if (k == "input") job.input = path;
    else if (k == "source") job.source = path;
    else if (k == "target") job.target = path;
    else if (k == "checkpoint") job.checkpoint = path;
    else if (k == "output") job.output = path;
    else job.log = path;
  }
  if (j.contains("seed")) job.seed = static_cast<std::uint64_t>(get_int(j["seed"], "$.seed", 0));
  if (j.contains("density_threshold")) job.density_threshold = get_number(j["density_threshold"], "$.density_threshold");

  switch (job.workflow) {
  case Workflow::Elastic:
    require_file(job.input, "$.input");
    require_writable(job.checkpoint, "$.checkpoint", true);
    break;
  case Workflow::Fit:
    require_file(job.source, "$.source");
    require_file(job.target, "$.target");
    require_writable(job.checkpoint, "$.checkpoint", true);
    break;
  case Workflow::Apply:
  case Workflow::Invert:
    require_file(job.checkpoint, "$.checkpoint");
    require_file(job.input, "$.input");
    require_writable(job.output, "$.output", true);
    break;
  case Workflow::Check:
    require_file(job.checkpoint, "$.checkpoint");
    break;
  }
  require_writable(job.log, "$.log", false);

  j.erase("seed");
  job.canonical = j.dump();
  return job;
}

JobFile load_job(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const ParseError& e) {
    throw ConfigError(std::string("$: ") + e.what());
  }
  return parse_job(text, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path(), path.string());
}

} // namespace tuttenet
