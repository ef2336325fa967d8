#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "eqm/model.hpp"
#include "eqm/schedule.hpp"
#include "eqm/tensor.hpp"

namespace eqm {

enum class ObjectiveKind { kEqM, kEqME, kFM, kUncondFM };

std::string_view to_string(ObjectiveKind kind);
ObjectiveKind parse_objective_kind(std::string_view name);

/// One training minibatch. gamma is per sample and never shown to EqM models.
struct TrainBatch {
  ad::Tensor x;             // [n, d]
  ad::Tensor eps;           // [n, d], standard normal
  ad::Tensor gamma;         // [n], uniform on [0, 1]
  std::vector<int> labels;  // empty or one per row

  void validate() const;
};

/// Draws a batch by picking rows of points (with replacement) and fresh noise
/// and interpolation factors, all from one generator seeded with seed.
TrainBatch draw_batch(const ad::Tensor& points, const std::vector<int>& labels, bool with_labels,
                      std::size_t batch_size, std::uint64_t seed);

/// gamma * x + (1 - gamma) * eps, row-wise.
ad::Tensor corrupt(const ad::Tensor& x, const ad::Tensor& eps, const ad::Tensor& gamma);

/// (eps - x) * c(gamma), row-wise.
ad::Tensor target(const ad::Tensor& x, const ad::Tensor& eps, const ad::Tensor& gamma,
                  const Schedule& schedule);

/// mean((f(x_gamma) - target)^2). Non-equilibrium schedules are rejected
/// unless allow_non_equilibrium is set.
ad::Tensor eqm_loss(const ModelView& model, const TrainBatch& batch, const Schedule& schedule,
                    bool allow_non_equilibrium = false);

/// mean((grad g(x_gamma) - target)^2). x_gamma becomes a leaf of graph so the
/// input gradient stays differentiable with respect to the parameters.
ad::Tensor eqme_loss(const ModelView& model, ad::Graph& graph, const TrainBatch& batch,
                     const Schedule& schedule, bool allow_non_equilibrium = false);

/// mean((f(x_gamma, t = gamma) - (x - eps))^2); model must be noise-conditioned.
ad::Tensor fm_loss(const ModelView& model, const TrainBatch& batch);

/// mean((f(x_gamma) - (x - eps))^2); model must not be noise-conditioned.
ad::Tensor uncond_fm_loss(const ModelView& model, const TrainBatch& batch);

struct Objective {
  ObjectiveKind kind = ObjectiveKind::kEqM;
  Schedule schedule;
  bool allow_non_equilibrium = false;

  /// Checks the conditioning / energy-head rules against a model config.
  void validate_for(const ModelConfig& config) const;

  ad::Tensor loss(const ModelView& model, ad::Graph& graph, const TrainBatch& batch) const;

  bool operator==(const Objective&) const = default;
};

}  // namespace eqm
