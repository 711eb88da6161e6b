#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tuttenet/optim.hpp"

namespace tuttenet {

enum class Workflow { Elastic, Fit, Apply, Invert, Check };

const char* workflow_name(Workflow w);

/// A validated job description. Relative paths are resolved against the
/// directory holding the job file. Handle regions live in normalized
/// coordinates.
struct JobFile {
  Workflow workflow = Workflow::Elastic;

  int layers = 24;
  int resolution = 25;
  std::vector<Frame> frames; // empty: triplane

  LearningRateSchedule lr;
  int max_steps = 4000;
  double tolerance = 1e-7;
  int window = 100;
  int check_every = 100;
  int log_every = 50;

  LossWeights weights;
  SampleBudget budget;
  std::vector<HandleSpec> handles;

  std::optional<std::filesystem::path> input;
  std::optional<std::filesystem::path> source;
  std::optional<std::filesystem::path> target;
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::filesystem::path> output;
  std::optional<std::filesystem::path> log;

  std::uint64_t seed = 0;
  double density_threshold = 1.0;

  /// Compact dump of the job document; hashed into checkpoints.
  std::string canonical;

  ElasticJobConfig elastic_config() const;
  FitJobConfig fit_config() const;
  std::uint64_t config_hash() const;
};

/// Throws ConfigError whose message starts with the JSON path of the offending
/// field (e.g. "$.net.layers"). Unknown keys are rejected. Input files must
/// exist and output directories must be present.
JobFile parse_job(const std::string& text, const std::filesystem::path& base_dir = ".",
                  const std::string& name = "<job>");
JobFile load_job(const std::filesystem::path& path);

} // namespace tuttenet
