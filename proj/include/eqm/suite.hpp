#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "eqm/checkpoint.hpp"
#include "eqm/eval.hpp"

namespace eqm {

/// Descent field of a trained model. Flow-matching checkpoints are read as
/// velocities; class-conditional ones need a label.
std::shared_ptr<const GradientField> field_of(const Checkpoint& ckpt,
                                              std::optional<int> label = std::nullopt);

/// A fresh draw from the data distribution of config, independent of the
/// training set. For memorization data the training points themselves.
ad::Tensor reference_set(const RunConfig& config, std::size_t n, std::uint64_t seed);

/// Fixed sampler settings per objective: ODE integration for flow matching,
/// gradient descent otherwise.
SamplerConfig default_sampler(const Checkpoint& ckpt);

struct SuiteOptions {
  std::size_t n = 500;
  std::uint64_t seed = 0;
  std::size_t permutations = 200;
  std::optional<SamplerConfig> sampler;  // defaults to default_sampler(ckpt)
  const Checkpoint* baseline = nullptr;  // partial-noise only
};

inline const std::vector<std::string> kSuites = {"statements", "quality", "ood", "partial-noise",
                                                 "nn-audit"};

/// Runs one evaluation suite. The checkpoint may be null for 'statements',
/// which then only covers the analytic fixtures.
std::vector<EvalReport> run_suite(const std::string& suite, const Checkpoint* ckpt,
                                  const SuiteOptions& options);

/// Fingerprint identifying a (checkpoint, suite, options) combination.
std::string suite_fingerprint(const std::string& suite, const Checkpoint* ckpt,
                              const SuiteOptions& options);

}  // namespace eqm
