#include "tuttenet/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include <Eigen/Geometry>

#include "tuttenet/errors.hpp"

namespace tuttenet {

double LearningRateSchedule::at(int step) const {
  if (decay_steps <= 0 || step >= decay_steps) return final_value;
  if (step <= 0) return initial;
  const double f = static_cast<double>(step) / static_cast<double>(decay_steps);
  return initial + (final_value - initial) * f;
}

void LearningRateSchedule::validate() const {
  if (!(initial > 0.0) || !(final_value > 0.0)) throw InvalidArgument("learning rates must be positive");
  if (decay_steps < 0) throw InvalidArgument("learning-rate decay steps must be nonnegative");
}

AdamState AdamState::zeros(Eigen::Index size, LearningRateSchedule lr) {
  AdamState s;
  s.m = Eigen::VectorXd::Zero(size);
  s.v = Eigen::VectorXd::Zero(size);
  s.lr = lr;
  return s;
}

void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& gradient) {
  if (params.size() != gradient.size() || state.m.size() != params.size() || state.v.size() != params.size())
    throw InvalidArgument("Adam state, parameters and gradient must have the same size");
  for (Eigen::Index i = 0; i < gradient.size(); ++i)
    if (!std::isfinite(gradient[i]))
      throw NumericalFailure("non-finite gradient at parameter " + std::to_string(i) + " (step " +
                             std::to_string(state.step) + ")");
  const double lr = state.lr.at(state.step);
  const double t = static_cast<double>(state.step + 1);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * gradient;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * gradient.cwiseProduct(gradient);
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double mh = state.m[i] / c1;
    const double vh = state.v[i] / c2;
    params[i] -= lr * mh / (std::sqrt(vh) + state.epsilon);
  }
  ++state.step;
}

std::vector<double> DistortionHistogram::default_edges() { return {0.0, 1e-3, 1e-2, 2e-2, 5e-2, 1e-1, 5e-1}; }

DistortionHistogram DistortionHistogram::build(const std::vector<double>& values, std::vector<double> edges) {
  if (edges.empty() || !std::is_sorted(edges.begin(), edges.end())) throw InvalidArgument("histogram edges must be sorted");
  DistortionHistogram h;
  h.edges = std::move(edges);
  h.counts.assign(h.edges.size(), 0);
  double sum = 0.0;
  for (double v : values) {
    const auto it = std::upper_bound(h.edges.begin(), h.edges.end(), v);
    const std::size_t bin = it == h.edges.begin() ? 0 : static_cast<std::size_t>(it - h.edges.begin()) - 1;
    ++h.counts[bin];
    h.max = std::max(h.max, v);
    sum += v;
  }
  h.mean = values.empty() ? 0.0 : sum / static_cast<double>(values.size());
  return h;
}

std::vector<double> distortions(const DeformationNet& net, const Eigen::Matrix3Xd& points) {
  const auto J = jacobians(net, points);
  std::vector<double> out(J.size());
  for (std::size_t k = 0; k < J.size(); ++k) out[k] = strain_energy_density(J[k]);
  return out;
}

bool HandleRegion::contains(const Eigen::Vector3d& p) const {
  if (shape == Shape::Box) return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  return (p - center).norm() <= radius;
}

Eigen::Matrix3d HandleSpec::rotation() const {
  if (angle_deg == 0.0) return Eigen::Matrix3d::Identity();
  const double n = axis.norm();
  if (!(n > 0.0)) throw InvalidArgument("handle rotation axis must be nonzero");
  return Eigen::AngleAxisd(angle_deg * std::numbers::pi / 180.0, axis / n).toRotationMatrix();
}

Eigen::Vector3d HandleSpec::effective_translation() const { return pivot - rotation() * pivot + translation; }

namespace {

// Portable uniform double in [0, 1) from the raw engine output.
double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

} // namespace

std::vector<Eigen::Index> stratified_indices(Eigen::Index pool, long count, std::uint64_t seed) {
  std::vector<Eigen::Index> out;
  if (pool <= 0 || count <= 0) return out;
  if (pool <= count) {
    out.resize(static_cast<std::size_t>(pool));
    for (Eigen::Index i = 0; i < pool; ++i) out[static_cast<std::size_t>(i)] = i;
    return out;
  }
  std::mt19937_64 rng(seed);
  const double stride = static_cast<double>(pool) / static_cast<double>(count);
  out.reserve(static_cast<std::size_t>(count));
  for (long k = 0; k < count; ++k) {
    auto i = static_cast<Eigen::Index>(std::floor((static_cast<double>(k) + unit(rng)) * stride));
    out.push_back(std::min(i, pool - 1));
  }
  return out;
}

ElasticSamples draw_elastic_samples(const PointSet& pool, const std::vector<HandleSpec>& handles,
                                    const SampleBudget& budget, std::uint64_t seed) {
  pool.validate();
  const Eigen::VectorXd w = pool.weights_or_ones();
  const auto n = static_cast<std::size_t>(pool.size());
  std::vector<int> owner(n, -1);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t h = 0; h < handles.size(); ++h)
      if (handles[h].region.contains(pool.points.col(static_cast<Eigen::Index>(k)))) {
        owner[k] = static_cast<int>(h);
        break;
      }

  std::vector<Eigen::Index> moving_pool, static_pool, free_pool;
  for (std::size_t k = 0; k < n; ++k) {
    const auto idx = static_cast<Eigen::Index>(k);
    if (owner[k] < 0)
      free_pool.push_back(idx);
    else if (handles[static_cast<std::size_t>(owner[k])].kind == HandleKind::Static)
      static_pool.push_back(idx);
    else
      moving_pool.push_back(idx);
  }

  std::vector<Eigen::Index> chosen;
  auto draw = [&](const std::vector<Eigen::Index>& from, long count, std::uint64_t s) {
    for (Eigen::Index i : stratified_indices(static_cast<Eigen::Index>(from.size()), count, s))
      chosen.push_back(from[static_cast<std::size_t>(i)]);
  };
  draw(moving_pool, budget.moving, seed * 3 + 1);
  draw(static_pool, budget.fixed, seed * 3 + 2);
  const std::size_t end_static = chosen.size();
  draw(free_pool, budget.free, seed * 3 + 3);

  ElasticSamples out;
  out.samples.points.resize(3, static_cast<Eigen::Index>(chosen.size()));
  Eigen::VectorXd sw(static_cast<Eigen::Index>(chosen.size()));
  for (std::size_t k = 0; k < chosen.size(); ++k) {
    out.samples.points.col(static_cast<Eigen::Index>(k)) = pool.points.col(chosen[k]);
    sw[static_cast<Eigen::Index>(k)] = w[chosen[k]];
  }
  out.samples.weights = sw;

  std::vector<std::vector<Eigen::Index>> members(handles.size());
  for (std::size_t k = 0; k < end_static; ++k) members[static_cast<std::size_t>(owner[static_cast<std::size_t>(chosen[k])])].push_back(chosen[k]);
  for (std::size_t h = 0; h < handles.size(); ++h) {
    HandleConstraint c;
    c.kind = handles[h].kind;
    if (c.kind == HandleKind::Moving) {
      c.rotation = handles[h].rotation();
      c.translation = handles[h].effective_translation();
    }
    c.handle_points.points.resize(3, static_cast<Eigen::Index>(members[h].size()));
    for (std::size_t k = 0; k < members[h].size(); ++k)
      c.handle_points.points.col(static_cast<Eigen::Index>(k)) = pool.points.col(members[h][k]);
    out.constraints.push_back(std::move(c));
  }
  out.free_points.resize(3, static_cast<Eigen::Index>(chosen.size() - end_static));
  for (std::size_t k = end_static; k < chosen.size(); ++k)
    out.free_points.col(static_cast<Eigen::Index>(k - end_static)) = pool.points.col(chosen[k]);
  return out;
}

namespace {

void validate_common(int layers, int resolution, const std::vector<Frame>& frames, const LearningRateSchedule& lr,
                     int max_steps, int window, int check_every) {
  if (layers < 1) throw InvalidArgument("layer count must be at least 1");
  if (resolution < 2) throw InvalidArgument("resolution must be at least 2");
  if (!frames.empty() && static_cast<int>(frames.size()) != layers)
    throw InvalidArgument("frame count (" + std::to_string(frames.size()) + ") does not match layer count (" +
                          std::to_string(layers) + ")");
  lr.validate();
  if (max_steps < 0) throw InvalidArgument("max_steps must be nonnegative");
  if (window < 1) throw InvalidArgument("convergence window must be positive");
  if (check_every < 1) throw InvalidArgument("check_every must be positive");
}

void check_injectivity(const DeformationNet& net, InjectivityLog& log) {
  const double d = net.min_det();
  log.min_det = log.checks == 0 ? d : std::min(log.min_det, d);
  ++log.checks;
  if (!(d > 0.0)) ++log.violations;
}

bool converged(const std::vector<double>& history, int window, double tolerance) {
  if (tolerance <= 0.0 || static_cast<int>(history.size()) <= window) return false;
  const double now = history.back();
  const double then = history[history.size() - 1 - static_cast<std::size_t>(window)];
  const double denom = std::max(std::abs(then), std::numeric_limits<double>::min());
  return std::abs(now - then) / denom < tolerance;
}

Eigen::Index param_count(const Mesh2D& mesh, int layers) {
  return static_cast<Eigen::Index>(layers) * (mesh.num_edges() + mesh.num_boundary());
}

} // namespace

void ElasticJobConfig::validate() const {
  validate_common(layers, resolution, frames, lr, max_steps, window, check_every);
  if (budget.moving <= 0 || budget.fixed <= 0 || budget.free <= 0) throw InvalidArgument("sample budgets must be positive");
  weights.validate();
}

std::vector<Frame> ElasticJobConfig::resolved_frames() const { return frames.empty() ? triplane_frames(layers) : frames; }

void FitJobConfig::validate() const { validate_common(layers, resolution, frames, lr, max_steps, window, check_every); }

std::vector<Frame> FitJobConfig::resolved_frames() const { return frames.empty() ? triplane_frames(layers) : frames; }

double handle_rms(const DeformationNet& net, const std::vector<HandleConstraint>& constraints) {
  double sq = 0.0;
  Eigen::Index n = 0;
  for (const auto& c : constraints) {
    if (c.handle_points.size() == 0) continue;
    sq += (forward(net, c.handle_points.points) - c.targets()).colwise().squaredNorm().sum();
    n += c.handle_points.size();
  }
  return n == 0 ? 0.0 : std::sqrt(sq / static_cast<double>(n));
}

ElasticResult run_elastic(const ElasticJobConfig& config, const ElasticSamples& data, std::ostream* log) {
  config.validate();
  const MeshPtr mesh = make_mesh(config.resolution);
  const std::vector<Frame> frames = config.resolved_frames();
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(param_count(*mesh, config.layers));
  AdamState adam = AdamState::zeros(theta.size(), config.lr);

  InjectivityLog inj;
  std::vector<double> history;
  bool early = false;
  int step = 0;
  for (; step < config.max_steps; ++step) {
    const DeformationNet net(mesh, unflatten(theta, *mesh, config.layers), frames);
    if (step % config.check_every == 0) check_injectivity(net, inj);
    const TotalGradient tg = grad_total(net, ElasticObjective{data.constraints, data.samples, config.weights, step});
    history.push_back(tg.value);
    if (log && (step % config.log_every == 0)) {
      const LossBreakdown& b = tg.breakdown;
      *log << "step=" << step << " loss=" << b.total << " elastic=" << b.elastic << " handle=" << b.handle
           << " reg=" << b.reg << " w_elastic=" << b.w_elastic << " lr=" << adam.lr.at(adam.step)
           << " max_distortion=" << b.max_distortion << " handle_rms=" << handle_rms(net, data.constraints)
           << " min_det=" << net.min_det() << '\n';
    }
    if (converged(history, config.window, config.tolerance)) {
      early = true;
      break;
    }
    adam_step(adam, theta, flatten(tg.gradient.layers));
  }

  DeformationNet net(mesh, unflatten(theta, *mesh, config.layers), frames);
  check_injectivity(net, inj);
  ElasticReport rep;
  rep.steps = step;
  rep.early_stop = early;
  rep.final_loss = total_loss(net, data.constraints, data.samples, config.weights, step);
  rep.handle_rms = handle_rms(net, data.constraints);
  rep.injectivity = inj;
  rep.histogram = DistortionHistogram::build(distortions(net, data.samples.points));
  if (data.free_points.cols() > 0) {
    const auto fd = distortions(net, data.free_points);
    rep.free_max_distortion = *std::max_element(fd.begin(), fd.end());
  }
  if (log) {
    *log << "final steps=" << rep.steps << " early_stop=" << (rep.early_stop ? 1 : 0) << " loss=" << rep.final_loss.total
         << " handle_rms=" << rep.handle_rms << " max_distortion=" << rep.histogram.max
         << " mean_distortion=" << rep.histogram.mean << " free_max_distortion=" << rep.free_max_distortion
         << " injectivity_checks=" << inj.checks << " injectivity_violations=" << inj.violations
         << " min_det=" << inj.min_det << '\n';
  }
  return {std::move(net), std::move(adam), std::move(rep)};
}

ElasticResult run_elastic(const ElasticJobConfig& config, const PointSet& pool, std::ostream* log) {
  return run_elastic(config, draw_elastic_samples(pool, config.handles, config.budget, config.seed), log);
}

FitResult run_fit(const FitJobConfig& config, const FittingData& data, std::ostream* log) {
  config.validate();
  data.validate();
  const MeshPtr mesh = make_mesh(config.resolution);
  const std::vector<Frame> frames = config.resolved_frames();
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(param_count(*mesh, config.layers));
  AdamState adam = AdamState::zeros(theta.size(), config.lr);

  InjectivityLog inj;
  std::vector<double> history;
  bool early = false;
  int step = 0;
  for (; step < config.max_steps; ++step) {
    const DeformationNet net(mesh, unflatten(theta, *mesh, config.layers), frames);
    if (step % config.check_every == 0) check_injectivity(net, inj);
    const TotalGradient tg = grad_total(net, FitObjective{data});
    history.push_back(tg.value);
    if (log && (step % config.log_every == 0))
      *log << "step=" << step << " loss=" << tg.value << " vertex=" << tg.fit.vertex << " gradient=" << tg.fit.gradient
           << " lr=" << adam.lr.at(adam.step) << " min_det=" << net.min_det() << '\n';
    if (converged(history, config.window, config.tolerance)) {
      early = true;
      break;
    }
    adam_step(adam, theta, flatten(tg.gradient.layers));
  }

  DeformationNet net(mesh, unflatten(theta, *mesh, config.layers), frames);
  check_injectivity(net, inj);
  FitReport rep;
  rep.steps = step;
  rep.early_stop = early;
  rep.final_terms = fitting_loss(net, data);
  rep.injectivity = inj;
  if (log)
    *log << "final steps=" << rep.steps << " early_stop=" << (rep.early_stop ? 1 : 0)
         << " vertex_e3=" << rep.vertex_e3() << " gradient_e3=" << rep.gradient_e3()
         << " injectivity_checks=" << inj.checks << " injectivity_violations=" << inj.violations
         << " min_det=" << inj.min_det << '\n';
  return {std::move(net), std::move(adam), std::move(rep)};
}

} // namespace tuttenet
