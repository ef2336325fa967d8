#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "eqm/data.hpp"
#include "eqm/model.hpp"
#include "eqm/objective.hpp"
#include "eqm/optimizer.hpp"
#include "eqm/sampler.hpp"

namespace eqm {

enum class DataSource { kDistribution, kMemorization };

struct DataSpec {
  DataSource source = DataSource::kDistribution;
  ToyDistribution distribution = ToyDistribution::ring(8, 2.0, 0.02);
  std::size_t train_size = 20000;       // distribution source
  std::size_t memorization_points = 8;  // memorization source

  void validate() const;
  bool operator==(const DataSpec&) const = default;
};

struct Seeds {
  std::uint64_t data = 1;
  std::uint64_t train = 11;
  std::uint64_t sample = 3;
  bool operator==(const Seeds&) const = default;
};

struct TrainBudget {
  std::size_t steps = 20000;
  std::size_t batch_size = 256;
  std::size_t checkpoint_every = 0;  // 0 = final checkpoint only
  bool operator==(const TrainBudget&) const = default;
};

/// Everything needed to reproduce a training + sampling run.
struct RunConfig {
  DataSpec data;
  ModelConfig model;
  Objective objective;
  AdamWConfig optimizer;
  SamplerConfig sampler;
  Seeds seeds;
  TrainBudget train;
  std::string output_dir = "runs/default";

  /// Field-level validation plus objective / model compatibility.
  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

/// Canonical JSON text (sorted keys, two-space indent).
std::string to_json(const RunConfig& config);
/// Parses and validates; unknown keys and bad values raise ValidationError
/// naming the offending field. Missing keys take their defaults.
RunConfig run_config_from_json(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Training points (and labels) described by the data spec.
LabeledPoints training_set(const RunConfig& config);

}  // namespace eqm
