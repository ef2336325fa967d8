#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "eqm/config.hpp"
#include "eqm/model.hpp"
#include "eqm/train.hpp"

namespace eqm {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Full training state. Byte layout: docs/checkpoint_format.md.
struct Checkpoint {
  RunConfig config;
  std::uint64_t step = 0;
  ParameterSet params;
  ParameterSet adam_m;  // empty before the first step
  ParameterSet adam_v;

  GradientFieldModel model() const { return GradientFieldModel(config.model, params); }
};

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt);
/// Rejects bad magic, unknown versions, truncation, trailing bytes and
/// digest mismatches with ValidationError.
Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);

/// Atomic write (temp file + rename).
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Hex SHA-256 of a byte string.
std::string sha256_hex(const std::vector<std::uint8_t>& bytes);

/// Trainer for a fresh run described by config.
Trainer make_trainer(const RunConfig& config);
/// Trainer for config starting from given weights (no optimizer state).
Trainer make_trainer(const RunConfig& config, GradientFieldModel model);
/// Trainer continuing exactly where the checkpoint left off.
Trainer resume_trainer(const Checkpoint& ckpt);
Checkpoint snapshot(const RunConfig& config, const Trainer& trainer);

/// Copies every tensor of source into a fresh model for target; names and
/// shapes must match exactly, otherwise the error lists the first mismatch.
GradientFieldModel init_from(const ModelConfig& target, const ParameterSet& source);

}  // namespace eqm
