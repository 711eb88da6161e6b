#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include "oracles.hpp"
#include "tuttenet/checkpoint.hpp"
#include "tuttenet/cli.hpp"
#include "tuttenet/geometry_io.hpp"

using namespace tuttenet;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

struct Workspace {
  fs::path dir;
  oracle::SurfaceMesh sphere;
  Eigen::Matrix3Xd raw;

  Workspace() {
    dir = fs::temp_directory_path() / ("tuttenet_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    sphere = oracle::uv_sphere(10, 14, 1.0);
    raw = (2.5 * sphere.vertices).colwise() + Eigen::Vector3d(5.0, -1.0, 0.25);
    write_geometry(dir / "sphere.obj", raw, sphere.faces);
  }
  ~Workspace() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
  std::string path(const std::string& name) const { return (dir / name).string(); }
  void write(const std::string& name, const std::string& text) const { std::ofstream(dir / name) << text; }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

double field(const std::string& log, const std::string& key) {
  const auto at = log.rfind(key + "=");
  REQUIRE(at != std::string::npos);
  return std::stod(log.substr(at + key.size() + 1));
}

} // namespace

TEST_CASE("fit with target equal to source, then check") {
  Workspace ws;
  ws.write("fit.json", R"({"workflow": "fit", "net": {"layers": 3, "resolution": 7},
    "schedule": {"max_steps": 40, "log_every": 10},
    "source": "sphere.obj", "target": "sphere.obj", "checkpoint": "fit_ckpt.json", "log": "fit.log"})");
  const Run r = cli({"fit", "--job", ws.path("fit.json")});
  INFO(r.err);
  REQUIRE(r.code == kExitOk);
  CHECK(field(r.out, "vertex_e3") * 1e-3 < 1e-6);
  CHECK(fs::exists(ws.dir / "fit_ckpt.json"));
  CHECK(slurp(ws.dir / "fit.log").find("step=0") != std::string::npos);
  const Checkpoint ck = load_checkpoint(ws.dir / "fit_ckpt.json");
  CHECK(ck.optimizer.has_value());
  CHECK(ck.config_hash != 0);

  const Run c = cli({"check", "--checkpoint", ws.path("fit_ckpt.json"), "--probes", "300"});
  INFO(c.out);
  CHECK(c.code == kExitOk);
  CHECK(c.out.find("status=fail") == std::string::npos);
  for (const char* name : {"check=determinant", "check=roundtrip", "check=boundary", "check=jacobian"})
    CHECK(c.out.find(name) != std::string::npos);
}

TEST_CASE("apply then invert restores the geometry") {
  Workspace ws;
  std::mt19937_64 rng(3);
  const MeshPtr mesh = make_mesh(11);
  const DeformationNet net = realize(mesh, oracle::random_params(*mesh, 6, 1.0, rng), triplane_frames(6));
  save_checkpoint(ws.dir / "net.json", Checkpoint::from_net(net, Normalization::fit(ws.raw)));

  REQUIRE(cli({"apply", "--checkpoint", ws.path("net.json"), "--input", ws.path("sphere.obj"), "--output",
               ws.path("moved.obj")}).code == kExitOk);
  const Geometry moved = read_geometry(ws.dir / "moved.obj");
  CHECK((moved.points.points - ws.raw).cwiseAbs().maxCoeff() > 1e-3);
  CHECK(moved.faces == ws.sphere.faces);
  REQUIRE(cli({"invert", "--checkpoint", ws.path("net.json"), "--input", ws.path("moved.obj"), "--output",
               ws.path("back.obj")}).code == kExitOk);
  const Geometry back = read_geometry(ws.dir / "back.obj");
  CHECK((back.points.points - ws.raw).cwiseAbs().maxCoeff() <= 1e-7);

  const Run c = cli({"check", "--checkpoint", ws.path("net.json")});
  CHECK(c.code == kExitOk);
}

TEST_CASE("report writes histogram and summary CSVs") {
  Workspace ws;
  std::mt19937_64 rng(4);
  const MeshPtr mesh = make_mesh(7);
  const DeformationNet net = realize(mesh, oracle::random_params(*mesh, 3, 1.0, rng), triplane_frames(3));
  save_checkpoint(ws.dir / "net.json", Checkpoint::from_net(net, Normalization::fit(ws.raw)));
  const Run r = cli({"report", "--checkpoint", ws.path("net.json"), "--input", ws.path("sphere.obj"), "--output",
                     ws.path("hist.csv")});
  REQUIRE(r.code == kExitOk);
  std::istringstream hist(slurp(ws.dir / "hist.csv"));
  std::string line;
  std::getline(hist, line);
  CHECK(line == "bin_lo,bin_hi,count");
  long total = 0;
  while (std::getline(hist, line)) total += std::stol(line.substr(line.rfind(',') + 1));
  CHECK(total == ws.raw.cols());
  const std::string summary = slurp(ws.dir / "hist_summary.csv");
  CHECK(summary.find("max") != std::string::npos);
  CHECK(summary.find("min_det") != std::string::npos);
}

TEST_CASE("configuration errors exit 2 with a field path") {
  Workspace ws;
  ws.write("bad.json", R"({"workflow": "fit", "net": {"layers": 3, "bogus": 1},
    "source": "sphere.obj", "target": "sphere.obj", "checkpoint": "c.json"})");
  const Run r = cli({"fit", "--job", ws.path("bad.json")});
  CHECK(r.code == kExitConfig);
  CHECK(r.err.find("$.net.bogus") != std::string::npos);

  ws.write("missing.json", R"({"workflow": "fit", "source": "nope.obj", "target": "sphere.obj", "checkpoint": "c.json"})");
  const Run m = cli({"fit", "--job", ws.path("missing.json")});
  CHECK(m.code == kExitConfig);
  CHECK(m.err.find("$.source") != std::string::npos);

  CHECK(cli({"fit"}).code == kExitConfig);
  CHECK(cli({"dance"}).code == kExitConfig);
  CHECK(cli({"check", "--checkpoint", ws.path("absent.json")}).code == kExitConfig);
  ws.write("garbage.json", "{\"format\": 3}");
  CHECK(cli({"check", "--checkpoint", ws.path("garbage.json")}).code == kExitConfig);
}

TEST_CASE("out-of-domain input exits 3") {
  Workspace ws;
  std::mt19937_64 rng(5);
  const MeshPtr mesh = make_mesh(5);
  const DeformationNet net = realize(mesh, oracle::random_params(*mesh, 2, 1.0, rng), triplane_frames(2));
  // A normalization fitted to a tiny region pushes the sphere far outside the cube.
  Normalization n;
  n.center = Eigen::Vector3d(5.0, -1.0, 0.25);
  n.scale = 10.0;
  save_checkpoint(ws.dir / "net.json", Checkpoint::from_net(net, n));
  const Run r = cli({"apply", "--checkpoint", ws.path("net.json"), "--input", ws.path("sphere.obj"), "--output",
                     ws.path("o.obj")});
  CHECK(r.code == kExitNumerical);
  CHECK(r.err.find("layer=") != std::string::npos);
}

TEST_CASE("elastic runs are reproducible for a fixed seed") {
  Workspace ws;
  ws.write("el.json", R"({"workflow": "elastic", "net": {"layers": 2, "resolution": 5},
    "schedule": {"max_steps": 15, "log_every": 5},
    "samples": {"moving": 40, "static": 40, "free": 40},
    "handles": [{"kind": "moving", "region": {"type": "box", "min": [-1, -1, 0.3], "max": [1, 1, 1]},
                 "translation": [0.05, 0, 0]},
                {"kind": "static", "region": {"type": "box", "min": [-1, -1, -1], "max": [1, 1, -0.3]}}],
    "input": "sphere.obj", "checkpoint": "a.json", "output": "deformed.obj", "seed": 11})");
  REQUIRE(cli({"elastic", "--job", ws.path("el.json")}).code == kExitOk);
  const std::string first = slurp(ws.dir / "a.json");
  REQUIRE(cli({"elastic", "--job", ws.path("el.json")}).code == kExitOk);
  CHECK(slurp(ws.dir / "a.json") == first);
  CHECK(fs::exists(ws.dir / "deformed.obj"));

  REQUIRE(cli({"elastic", "--job", ws.path("el.json"), "--seed", "12"}).code == kExitOk);
  const Checkpoint a = checkpoint_from_json(first), b = load_checkpoint(ws.dir / "a.json");
  CHECK(a.config_hash != b.config_hash);
}

TEST_CASE("the installed binary reports exit codes") {
  Workspace ws;
  const std::string cmd = std::string("\"") + TUTTENET_CLI_PATH + "\" check --checkpoint \"" + ws.path("absent.json") +
                          "\" >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == kExitConfig);
  const int help = std::system((std::string("\"") + TUTTENET_CLI_PATH + "\" --help >/dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(help) == kExitOk);
}
