#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <vector>

#include <Eigen/Core>

#include "tuttenet/deform.hpp"
#include "tuttenet/energy.hpp"
#include "tuttenet/grad.hpp"

namespace tuttenet {

/// Linear decay from `initial` to `final_value` over `decay_steps`, constant after.
struct LearningRateSchedule {
  double initial = 0.02;
  double final_value = 0.0002;
  int decay_steps = 4000;

  double at(int step) const;
  void validate() const;

  static LearningRateSchedule elastic() { return {0.02, 0.0002, 4000}; }
  static LearningRateSchedule fit() { return {0.02, 0.002, 5000}; }
};

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  int step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  LearningRateSchedule lr;

  static AdamState zeros(Eigen::Index size, LearningRateSchedule lr);
};

/// One bias-corrected Adam update at lr.at(state.step); advances state.step.
/// Throws NumericalFailure (naming the coordinate) on a non-finite gradient.
void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& gradient);

/// Fixed-edge histogram of per-sample strain energy.
struct DistortionHistogram {
  std::vector<double> edges; // bin k is [edges[k], edges[k+1]); last bin open
  std::vector<long> counts;
  double max = 0.0;
  double mean = 0.0;

  static std::vector<double> default_edges();
  static DistortionHistogram build(const std::vector<double>& values, std::vector<double> edges = default_edges());
};

std::vector<double> distortions(const DeformationNet& net, const Eigen::Matrix3Xd& points);

struct HandleRegion {
  enum class Shape { Box, Sphere };
  Shape shape = Shape::Box;
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(-1.0); // box
  Eigen::Vector3d hi = Eigen::Vector3d::Constant(1.0);
  Eigen::Vector3d center = Eigen::Vector3d::Zero(); // sphere
  double radius = 0.0;

  bool contains(const Eigen::Vector3d& p) const;
};

/// A selected region with a rigid motion p -> R (p - pivot) + pivot + t.
struct HandleSpec {
  HandleRegion region;
  HandleKind kind = HandleKind::Moving;
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();
  double angle_deg = 0.0;
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  Eigen::Vector3d pivot = Eigen::Vector3d::Zero();

  Eigen::Matrix3d rotation() const;
  /// Translation of the equivalent motion p -> R p + t'.
  Eigen::Vector3d effective_translation() const;
};

struct SampleBudget {
  long moving = 10000;
  long fixed = 15000;
  long free = 10000;
};

/// Draw one point from each of `count` equal strata of `pool` (in pool order).
/// Returns all indices when the pool is no larger than `count`.
std::vector<Eigen::Index> stratified_indices(Eigen::Index pool, long count, std::uint64_t seed);

struct ElasticSamples {
  std::vector<HandleConstraint> constraints;
  PointSet samples; // all drawn points, weighted
  Eigen::Matrix3Xd free_points;
};

/// Partition the pool by handle membership (first matching handle wins) and
/// draw the per-class budgets. Static handles get identity motion.
ElasticSamples draw_elastic_samples(const PointSet& pool, const std::vector<HandleSpec>& handles,
                                    const SampleBudget& budget, std::uint64_t seed);

struct ElasticJobConfig {
  int layers = 24;
  int resolution = 25;
  std::vector<Frame> frames; // empty: triplane
  std::vector<HandleSpec> handles;
  SampleBudget budget;
  LossWeights weights;
  LearningRateSchedule lr = LearningRateSchedule::elastic();
  int max_steps = 4000;
  double tolerance = 1e-7; // relative loss change over `window` steps; <= 0 disables
  int window = 100;
  int check_every = 100;
  int log_every = 50;
  std::uint64_t seed = 0;

  void validate() const;
  std::vector<Frame> resolved_frames() const;
};

struct FitJobConfig {
  int layers = 24;
  int resolution = 11;
  std::vector<Frame> frames;
  LearningRateSchedule lr = LearningRateSchedule::fit();
  int max_steps = 5000;
  double tolerance = 1e-7;
  int window = 100;
  int check_every = 100;
  int log_every = 100;
  std::uint64_t seed = 0;

  void validate() const;
  std::vector<Frame> resolved_frames() const;
};

struct InjectivityLog {
  int checks = 0;
  int violations = 0;
  double min_det = 0.0; // smallest seen at any check
};

struct ElasticReport {
  int steps = 0;
  bool early_stop = false;
  LossBreakdown final_loss;
  double handle_rms = 0.0;
  double free_max_distortion = 0.0;
  InjectivityLog injectivity;
  DistortionHistogram histogram;
};

struct FitReport {
  int steps = 0;
  bool early_stop = false;
  FittingTerms final_terms;
  InjectivityLog injectivity;
  double vertex_e3() const { return final_terms.vertex * 1e3; }
  double gradient_e3() const { return final_terms.gradient * 1e3; }
};

struct ElasticResult {
  DeformationNet net;
  AdamState optimizer;
  ElasticReport report;
};

struct FitResult {
  DeformationNet net;
  AdamState optimizer;
  FitReport report;
};

/// Handle RMS: sqrt of the mean squared residual over every handle point.
double handle_rms(const DeformationNet& net, const std::vector<HandleConstraint>& constraints);

ElasticResult run_elastic(const ElasticJobConfig& config, const ElasticSamples& data, std::ostream* log = nullptr);
ElasticResult run_elastic(const ElasticJobConfig& config, const PointSet& pool, std::ostream* log = nullptr);

FitResult run_fit(const FitJobConfig& config, const FittingData& data, std::ostream* log = nullptr);

} // namespace tuttenet
