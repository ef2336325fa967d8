#include "eqm/train.hpp"

#include <cmath>

#include "eqm/error.hpp"

namespace eqm {

std::uint64_t batch_seed(std::uint64_t run_seed, std::uint64_t step) {
  // splitmix64 finalizer over (seed, step).
  std::uint64_t z = run_seed + 0x9e3779b97f4a7c15ULL * (step + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Trainer::Trainer(GradientFieldModel model, Objective objective, AdamWConfig optimizer,
                 ad::Tensor points, std::vector<int> labels, std::size_t batch_size,
                 std::uint64_t seed)
    : model_(std::move(model)),
      objective_(std::move(objective)),
      optimizer_(optimizer),
      points_(std::move(points)),
      labels_(std::move(labels)),
      batch_size_(batch_size),
      seed_(seed) {
  objective_.validate_for(model_.config());
  if (points_.rank() != 2 || points_.dim(1) != model_.config().input_dim) {
    throw ShapeError("training set must have shape [n," + std::to_string(model_.config().input_dim) +
                     "], got " + ad::shape_to_string(points_.shape()));
  }
  if (model_.config().num_classes > 0) {
    if (labels_.size() != points_.dim(0)) {
      throw ValidationError("class-conditional training needs one label per training point");
    }
    for (int l : labels_) {
      if (l < 0 || static_cast<std::size_t>(l) >= model_.config().num_classes) {
        throw ValidationError("training label " + std::to_string(l) + " out of range");
      }
    }
  }
  if (batch_size_ == 0) throw ValidationError("batch size must be >= 1");
}

double Trainer::step() {
  const std::uint64_t k = optimizer_.step_count();
  const TrainBatch batch = draw_batch(points_, labels_, model_.config().num_classes > 0,
                                      batch_size_, batch_seed(seed_, k));
  ad::Graph graph;
  const ParameterSet bound = model_.parameters().bind(graph);
  const ModelConfig& config = model_.config();
  ad::Tensor loss;
  try {
    loss = objective_.loss(ModelView{&config, &bound}, graph, batch);
  } catch (const NumericalError& e) {
    throw NumericalError("training step " + std::to_string(k) + ": " + e.what());
  }
  const double value = loss.item();
  if (!std::isfinite(value)) {
    throw NumericalError("non-finite loss at training step " + std::to_string(k));
  }
  ParameterSet grads;
  try {
    grads = bound.gradients(ad::backward(loss));
    optimizer_.step(model_.mutable_parameters(), grads);
  } catch (const NumericalError& e) {
    throw NumericalError("training step " + std::to_string(k) + ": " + e.what());
  }
  return value;
}

std::vector<double> Trainer::run(std::size_t n,
                                 const std::function<void(std::uint64_t, double)>& on_step) {
  std::vector<double> losses;
  losses.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t k = optimizer_.step_count();
    losses.push_back(step());
    if (on_step) on_step(k, losses.back());
  }
  return losses;
}

}  // namespace eqm
