#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "eqm/model.hpp"
#include "eqm/objective.hpp"
#include "eqm/optimizer.hpp"

namespace eqm {

/// Seed for the minibatch of a given step; lets a resumed run draw exactly
/// the batches the uninterrupted run would have drawn.
std::uint64_t batch_seed(std::uint64_t run_seed, std::uint64_t step);

/// Single-threaded training loop over a fixed training set.
class Trainer {
 public:
  Trainer(GradientFieldModel model, Objective objective, AdamWConfig optimizer, ad::Tensor points,
          std::vector<int> labels, std::size_t batch_size, std::uint64_t seed);

  /// One optimizer step; returns the minibatch loss before the update.
  /// Throws NumericalError naming the step on a non-finite loss.
  double step();

  /// Runs n steps and returns their losses.
  std::vector<double> run(std::size_t n,
                          const std::function<void(std::uint64_t step, double loss)>& on_step = {});

  const GradientFieldModel& model() const { return model_; }
  const AdamW& optimizer() const { return optimizer_; }
  AdamW& mutable_optimizer() { return optimizer_; }
  const Objective& objective() const { return objective_; }
  std::uint64_t steps_done() const { return optimizer_.step_count(); }

 private:
  GradientFieldModel model_;
  Objective objective_;
  AdamW optimizer_;
  ad::Tensor points_;
  std::vector<int> labels_;
  std::size_t batch_size_;
  std::uint64_t seed_;
};

}  // namespace eqm
