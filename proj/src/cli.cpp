#include "tuttenet/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "tuttenet/checkpoint.hpp"
#include "tuttenet/errors.hpp"
#include "tuttenet/geometry_io.hpp"
#include "tuttenet/job.hpp"
#include "tuttenet/optim.hpp"

namespace tuttenet {

namespace {

namespace fs = std::filesystem;

struct Options {
  std::string job;
  std::optional<std::uint64_t> seed;
  std::string checkpoint;
  std::string input;
  std::string output;
  long probes = 1000;
};

/// Log sink: the job's log file if given, else `fallback`.
class LogSink {
public:
  LogSink(const std::optional<fs::path>& path, std::ostream& fallback) : stream_(&fallback) {
    if (path) {
      file_ = std::make_unique<std::ofstream>(*path);
      if (!*file_) throw ConfigError("$.log: cannot open " + path->string());
      stream_ = file_.get();
    }
    stream_->precision(10);
  }
  std::ostream& operator*() { return *stream_; }
  std::ostream* get() { return stream_; }

private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* stream_;
};

JobFile job_for(const Options& o, Workflow expected) {
  JobFile job = load_job(o.job);
  if (job.workflow != expected)
    throw ConfigError(std::string("$.workflow: job is '") + workflow_name(job.workflow) + "' but the command is '" +
                      workflow_name(expected) + "'");
  if (o.seed) job.seed = *o.seed;
  return job;
}

int cmd_elastic(const Options& o, std::ostream& out) {
  const JobFile job = job_for(o, Workflow::Elastic);
  const NormalizedGeometry geo = load_geometry(*job.input, job.density_threshold);
  LogSink log(job.log, out);
  const ElasticResult res = run_elastic(job.elastic_config(), geo.geometry.points, log.get());

  Checkpoint ck = Checkpoint::from_net(res.net, geo.normalization);
  ck.optimizer = res.optimizer;
  ck.config_hash = job.config_hash();
  save_checkpoint(*job.checkpoint, ck);
  if (job.output) {
    const Eigen::Matrix3Xd mapped = forward(res.net, geo.geometry.points.points);
    write_geometry(*job.output, geo.normalization.invert(mapped), geo.geometry.faces, geo.geometry.points.weights);
  }
  const auto& inj = res.report.injectivity;
  out << "elastic steps=" << res.report.steps << " handle_rms=" << res.report.handle_rms
      << " max_distortion=" << res.report.histogram.max << " injectivity_violations=" << inj.violations << '\n';
  return inj.violations == 0 ? kExitOk : kExitInvariant;
}

int cmd_fit(const Options& o, std::ostream& out) {
  const JobFile job = job_for(o, Workflow::Fit);
  const Geometry src = read_geometry(*job.source);
  const Geometry tgt = read_geometry(*job.target);
  if (src.points.size() != tgt.points.size())
    throw ConfigError("$.target: vertex count " + std::to_string(tgt.points.size()) + " differs from source count " +
                      std::to_string(src.points.size()));
  const Normalization norm = Normalization::fit(src.points.points);
  const FittingData data = FittingData::make(norm.apply(src.points.points), norm.apply(tgt.points.points), src.faces);
  LogSink log(job.log, out);
  const FitResult res = run_fit(job.fit_config(), data, log.get());

  Checkpoint ck = Checkpoint::from_net(res.net, norm);
  ck.optimizer = res.optimizer;
  ck.config_hash = job.config_hash();
  save_checkpoint(*job.checkpoint, ck);
  if (job.output) write_geometry(*job.output, norm.invert(forward(res.net, data.source)), src.faces);
  out << "fit steps=" << res.report.steps << " vertex_e3=" << res.report.vertex_e3()
      << " gradient_e3=" << res.report.gradient_e3() << " injectivity_violations=" << res.report.injectivity.violations
      << '\n';
  return res.report.injectivity.violations == 0 ? kExitOk : kExitInvariant;
}

struct MapPaths {
  fs::path checkpoint, input, output;
};

MapPaths map_paths(const Options& o, Workflow w) {
  MapPaths p;
  if (!o.job.empty()) {
    const JobFile job = job_for(o, w);
    p = {*job.checkpoint, *job.input, *job.output};
  }
  if (!o.checkpoint.empty()) p.checkpoint = o.checkpoint;
  if (!o.input.empty()) p.input = o.input;
  if (!o.output.empty()) p.output = o.output;
  if (p.checkpoint.empty()) throw ConfigError("--checkpoint: required");
  if (p.input.empty()) throw ConfigError("--input: required");
  if (p.output.empty()) throw ConfigError("--output: required");
  return p;
}

int cmd_map(const Options& o, std::ostream& out, bool invert) {
  const MapPaths p = map_paths(o, invert ? Workflow::Invert : Workflow::Apply);
  const Checkpoint ck = load_checkpoint(p.checkpoint);
  const DeformationNet net = ck.realize();
  const Geometry g = read_geometry(p.input);
  const Eigen::Matrix3Xd x = ck.normalization.apply(g.points.points);
  const Eigen::Matrix3Xd y = invert ? inverse(net, x) : forward(net, x);
  write_geometry(p.output, ck.normalization.invert(y), g.faces, g.points.weights);
  out << (invert ? "invert" : "apply") << " points=" << g.points.size() << " output=" << p.output.string() << '\n';
  return kExitOk;
}

Eigen::Matrix3Xd probe_points(long n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Eigen::Matrix3Xd p(3, n);
  for (long i = 0; i < n; ++i)
    for (int a = 0; a < 3; ++a) p(a, i) = -0.7 + 1.4 * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
  return p;
}

int cmd_check(const Options& o, std::ostream& out) {
  fs::path ckpath = o.checkpoint;
  std::uint64_t seed = o.seed.value_or(0);
  if (!o.job.empty()) {
    const JobFile job = job_for(o, Workflow::Check);
    if (ckpath.empty()) ckpath = *job.checkpoint;
    seed = job.seed;
  }
  if (ckpath.empty()) throw ConfigError("--checkpoint: required");
  const Checkpoint ck = load_checkpoint(ckpath);
  const DeformationNet net = ck.realize();
  out.precision(6);
  bool ok = true;
  auto report = [&](const char* name, bool pass, const std::string& detail) {
    out << "check=" << name << " status=" << (pass ? "pass" : "fail") << ' ' << detail << '\n';
    ok = ok && pass;
  };

  {
    int bad_layers = 0;
    for (const auto& l : net.layers())
      if (!(l.map.min_det() > 0.0)) ++bad_layers;
    std::ostringstream d;
    d << "min_det=" << net.min_det() << " failing_layers=" << bad_layers;
    report("determinant", bad_layers == 0, d.str());
  }
  {
    int bad_layers = 0;
    for (int i = 0; i < net.num_layers(); ++i) {
      const ConvexBoundary& b = net.system(i).boundary;
      bool conv = (b.increments.array() > 0.0).all() && std::abs(b.cumulative[b.cumulative.size() - 1] - 2.0 * std::numbers::pi) < 1e-9;
      for (Eigen::Index k = 0; k < b.points.cols(); ++k)
        conv = conv && std::abs(b.points.col(k).cwiseAbs().maxCoeff() - 1.0) < 1e-9;
      if (!conv) ++bad_layers;
    }
    report("boundary", bad_layers == 0, "failing_layers=" + std::to_string(bad_layers));
  }

  const Eigen::Matrix3Xd probes = probe_points(o.probes, seed);
  {
    const Eigen::Matrix3Xd back = inverse(net, forward(net, probes));
    const double err = (back - probes).colwise().norm().maxCoeff();
    std::ostringstream d;
    d << "probes=" << probes.cols() << " max_error=" << err;
    report("roundtrip", err <= 1e-8, d.str());
  }
  {
    // Central differences, skipping probes whose stencil changes triangles.
    const double h = 1e-6;
    const long n = std::min<long>(probes.cols(), 100);
    double worst = 0.0;
    long used = 0;
    for (long i = 0; i < n; ++i) {
      const Eigen::Vector3d p = probes.col(i);
      const auto tri = orbit_triangles(net, p);
      Eigen::Matrix3d fd;
      bool same = true;
      for (int a = 0; a < 3 && same; ++a) {
        Eigen::Vector3d e = Eigen::Vector3d::Zero();
        e[a] = h;
        same = orbit_triangles(net, p + e) == tri && orbit_triangles(net, p - e) == tri;
        fd.col(a) = (forward(net, Eigen::Vector3d(p + e)) - forward(net, Eigen::Vector3d(p - e))) / (2.0 * h);
      }
      if (!same) continue;
      const Eigen::Matrix3d J = jacobian(net, p);
      worst = std::max(worst, (J - fd).norm() / std::max(J.norm(), 1e-12));
      ++used;
    }
    std::ostringstream d;
    d << "probes=" << used << " max_relative_error=" << worst;
    report("jacobian", used > 0 && worst <= 1e-4, d.str());
  }
  return ok ? kExitOk : kExitInvariant;
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto idx = static_cast<std::size_t>(std::floor(q * static_cast<double>(v.size() - 1)));
  return v[idx];
}

int cmd_report(const Options& o, std::ostream& out) {
  if (o.checkpoint.empty()) throw ConfigError("--checkpoint: required");
  if (o.input.empty()) throw ConfigError("--input: required");
  if (o.output.empty()) throw ConfigError("--output: required");
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  const DeformationNet net = ck.realize();
  const Geometry g = read_geometry(o.input);
  const std::vector<double> d = distortions(net, ck.normalization.apply(g.points.points));
  const DistortionHistogram h = DistortionHistogram::build(d);

  std::ostringstream csv;
  csv.precision(std::numeric_limits<double>::max_digits10);
  csv << "bin_lo,bin_hi,count\n";
  for (std::size_t k = 0; k < h.counts.size(); ++k) {
    csv << h.edges[k] << ',';
    if (k + 1 < h.edges.size()) csv << h.edges[k + 1];
    else csv << "inf";
    csv << ',' << h.counts[k] << '\n';
  }
  atomic_write(o.output, csv.str());

  fs::path summary = o.output;
  summary.replace_filename(fs::path(o.output).stem().string() + "_summary.csv");
  std::ostringstream s;
  s.precision(std::numeric_limits<double>::max_digits10);
  s << "statistic,value\n"
    << "points," << d.size() << '\n'
    << "mean," << h.mean << '\n'
    << "median," << quantile(d, 0.5) << '\n'
    << "p95," << quantile(d, 0.95) << '\n'
    << "max," << h.max << '\n'
    << "layers," << net.num_layers() << '\n'
    << "resolution," << ck.resolution << '\n'
    << "min_det," << net.min_det() << '\n';
  atomic_write(summary, s.str());
  out << "report points=" << d.size() << " max_distortion=" << h.max << " histogram=" << o.output
      << " summary=" << summary.string() << '\n';
  return kExitOk;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Injective volumetric deformations from stacked Tutte embeddings", "tuttenet"};
  app.require_subcommand(1);
  Options o;

  auto add_seed = [&](CLI::App* c) {
    c->add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& s) { o.seed = s; },
                                          "Override the job's RNG seed");
  };
  CLI::App* elastic = app.add_subcommand("elastic", "Optimize a handle-driven elastic deformation");
  elastic->add_option("--job", o.job, "Job file (JSON)")->required();
  add_seed(elastic);
  CLI::App* fit = app.add_subcommand("fit", "Fit a deformation to a source/target pair");
  fit->add_option("--job", o.job, "Job file (JSON)")->required();
  add_seed(fit);
  CLI::App* apply = app.add_subcommand("apply", "Map geometry forward through a checkpoint");
  CLI::App* invert = app.add_subcommand("invert", "Map geometry backward through a checkpoint");
  for (CLI::App* c : {apply, invert}) {
    c->add_option("--job", o.job, "Job file (JSON)");
    c->add_option("--checkpoint", o.checkpoint, "Checkpoint file");
    c->add_option("--input", o.input, "Input geometry (OBJ/PLY/grid)");
    c->add_option("--output", o.output, "Output geometry (OBJ/PLY)");
  }
  CLI::App* check = app.add_subcommand("check", "Verify the invariants of a checkpoint");
  check->add_option("--job", o.job, "Job file (JSON)");
  check->add_option("--checkpoint", o.checkpoint, "Checkpoint file");
  check->add_option("--probes", o.probes, "Number of probe points")->check(CLI::PositiveNumber);
  add_seed(check);
  CLI::App* report = app.add_subcommand("report", "Distortion histogram and summary statistics as CSV");
  report->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  report->add_option("--input", o.input, "Geometry to evaluate")->required();
  report->add_option("--output", o.output, "Histogram CSV path")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (elastic->parsed()) return cmd_elastic(o, out);
    if (fit->parsed()) return cmd_fit(o, out);
    if (apply->parsed()) return cmd_map(o, out, false);
    if (invert->parsed()) return cmd_map(o, out, true);
    if (check->parsed()) return cmd_check(o, out);
    if (report->parsed()) return cmd_report(o, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InvalidArgument& e) {
    err << "invalid argument: " << e.what() << '\n';
    return kExitConfig;
  } catch (const OutOfDomain& e) {
    err << "out of domain: " << e.what() << " layer=" << e.layer() << " point_index=" << e.point_index() << '\n';
    return kExitNumerical;
  } catch (const NotInImage& e) {
    err << "not in image: " << e.what() << " layer=" << e.layer() << " point_index=" << e.point_index() << '\n';
    return kExitNumerical;
  } catch (const NumericalFailure& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const InternalError& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}

} // namespace tuttenet
