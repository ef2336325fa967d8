#pragma once

#include <cstdint>

#include "eqm/model.hpp"

namespace eqm {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.0;
  double epsilon = 1e-8;
  /// Cosine decay from lr to lr * final_lr_fraction over decay_steps, then
  /// flat. 0 keeps the rate constant.
  std::uint64_t decay_steps = 0;
  double final_lr_fraction = 0.01;

  void validate() const;
  /// Learning rate used for the update numbered step (0-based).
  double lr_at(std::uint64_t step) const;
  bool operator==(const AdamWConfig&) const = default;
};

/// Adam with decoupled weight decay (lr is lr_at(step)):
///   p <- p (1 - lr wd)
///   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
///   p <- p - lr * m_hat / (sqrt(v_hat) + eps)
/// with m_hat, v_hat the bias-corrected moments.
class AdamW {
 public:
  AdamW() = default;
  explicit AdamW(AdamWConfig config) : config_(config) { config_.validate(); }

  /// Updates params in place. grads must carry the same names and shapes.
  void step(ParameterSet& params, const ParameterSet& grads);

  const AdamWConfig& config() const { return config_; }
  std::uint64_t step_count() const { return step_count_; }
  const ParameterSet& first_moment() const { return m_; }
  const ParameterSet& second_moment() const { return v_; }

  /// Restores a saved state (used by checkpoint loading).
  void restore(std::uint64_t step_count, ParameterSet m, ParameterSet v);

 private:
  AdamWConfig config_;
  std::uint64_t step_count_ = 0;
  ParameterSet m_;
  ParameterSet v_;
};

}  // namespace eqm
