#include "eqm/objective.hpp"

#include <random>

#include "eqm/error.hpp"

namespace eqm {

std::string_view to_string(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::kEqM: return "eqm";
    case ObjectiveKind::kEqME: return "eqm-e";
    case ObjectiveKind::kFM: return "fm";
    case ObjectiveKind::kUncondFM: return "uncond-fm";
  }
  return "?";
}

ObjectiveKind parse_objective_kind(std::string_view name) {
  if (name == "eqm") return ObjectiveKind::kEqM;
  if (name == "eqm-e") return ObjectiveKind::kEqME;
  if (name == "fm") return ObjectiveKind::kFM;
  if (name == "uncond-fm") return ObjectiveKind::kUncondFM;
  throw ValidationError("unknown objective kind '" + std::string(name) + "'");
}

void TrainBatch::validate() const {
  if (x.rank() != 2) throw ShapeError("batch x must be rank 2, got " + ad::shape_to_string(x.shape()));
  if (eps.shape() != x.shape()) {
    throw ShapeError("batch eps shape " + ad::shape_to_string(eps.shape()) + " differs from x " +
                     ad::shape_to_string(x.shape()));
  }
  if (gamma.shape() != ad::Shape{x.dim(0)}) {
    throw ShapeError("batch gamma must have shape [" + std::to_string(x.dim(0)) + "], got " +
                     ad::shape_to_string(gamma.shape()));
  }
  for (double g : gamma.values()) {
    if (!(g >= 0.0 && g <= 1.0)) throw ValidationError("gamma must lie in [0, 1]");
  }
  if (!labels.empty() && labels.size() != x.dim(0)) {
    throw ValidationError("batch needs one label per row");
  }
}

TrainBatch draw_batch(const ad::Tensor& points, const std::vector<int>& labels, bool with_labels,
                      std::size_t batch_size, std::uint64_t seed) {
  if (points.rank() != 2 || points.dim(0) == 0) throw ValidationError("training set is empty");
  if (batch_size == 0) throw ValidationError("batch size must be >= 1");
  if (with_labels && labels.size() != points.dim(0)) {
    throw ValidationError("training set has no labels for a class-conditional model");
  }
  const std::size_t d = points.dim(1);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, points.dim(0) - 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> x(batch_size * d), eps(batch_size * d), gamma(batch_size);
  std::vector<int> picked;
  for (std::size_t i = 0; i < batch_size; ++i) {
    const std::size_t r = pick(rng);
    for (std::size_t j = 0; j < d; ++j) x[i * d + j] = points.at(r, j);
    if (with_labels) picked.push_back(labels[r]);
  }
  for (double& e : eps) e = normal(rng);
  for (double& g : gamma) g = unit(rng);
  return {ad::Tensor({batch_size, d}, std::move(x)), ad::Tensor({batch_size, d}, std::move(eps)),
          ad::Tensor({batch_size}, std::move(gamma)), std::move(picked)};
}

ad::Tensor corrupt(const ad::Tensor& x, const ad::Tensor& eps, const ad::Tensor& gamma) {
  TrainBatch{x, eps, gamma, {}}.validate();
  const std::size_t d = x.dim(1);
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double g = gamma[i / d];
    out[i] = g * x[i] + (1.0 - g) * eps[i];
  }
  return ad::Tensor(x.shape(), std::move(out));
}

ad::Tensor target(const ad::Tensor& x, const ad::Tensor& eps, const ad::Tensor& gamma,
                  const Schedule& schedule) {
  TrainBatch{x, eps, gamma, {}}.validate();
  schedule.validate();
  const std::size_t d = x.dim(1);
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    out[i] = (eps[i] - x[i]) * schedule.eval(gamma[i / d]);
  }
  return ad::Tensor(x.shape(), std::move(out));
}

namespace {

void require_equilibrium(const Schedule& schedule, bool allow) {
  if (!allow && !schedule.is_equilibrium()) {
    throw ValidationError("schedule '" + std::string(to_string(schedule.kind)) +
                          "' does not vanish at gamma = 1; set allow_non_equilibrium to train with it");
  }
}

Conditioning batch_conditioning(const TrainBatch& batch, bool with_noise) {
  Conditioning c;
  c.labels = batch.labels;
  if (with_noise) c.noise_level = batch.gamma;
  return c;
}

ad::Tensor mse(const ad::Tensor& pred, const ad::Tensor& target) {
  return ad::mean(ad::square(ad::sub(pred, target)));
}

}  // namespace

ad::Tensor eqm_loss(const ModelView& model, const TrainBatch& batch, const Schedule& schedule,
                    bool allow_non_equilibrium) {
  require_equilibrium(schedule, allow_non_equilibrium);
  if (model.config->energy != EnergyKind::kNone) {
    throw ValidationError("eqm objective needs energy kind 'none'; use eqm-e for energy heads");
  }
  if (model.config->noise_conditioned) {
    throw ValidationError("eqm objective needs a model without noise conditioning");
  }
  const ad::Tensor xg = corrupt(batch.x, batch.eps, batch.gamma);
  const ad::Tensor f = model.forward(xg, batch_conditioning(batch, false));
  return mse(f, target(batch.x, batch.eps, batch.gamma, schedule));
}

ad::Tensor eqme_loss(const ModelView& model, ad::Graph& graph, const TrainBatch& batch,
                     const Schedule& schedule, bool allow_non_equilibrium) {
  require_equilibrium(schedule, allow_non_equilibrium);
  if (model.config->energy == EnergyKind::kNone) {
    throw ValidationError("eqm-e objective needs energy kind 'dot' or 'l2norm'");
  }
  const ad::Tensor xg = graph.variable(corrupt(batch.x, batch.eps, batch.gamma));
  const ad::Tensor grad = model.energy_gradient(xg, batch_conditioning(batch, false));
  return mse(grad, target(batch.x, batch.eps, batch.gamma, schedule));
}

ad::Tensor fm_loss(const ModelView& model, const TrainBatch& batch) {
  if (!model.config->noise_conditioned) {
    throw ValidationError("fm objective needs a noise-conditioned model");
  }
  const ad::Tensor xg = corrupt(batch.x, batch.eps, batch.gamma);
  const ad::Tensor f = model.forward(xg, batch_conditioning(batch, true));
  return mse(f, ad::sub(batch.x, batch.eps));
}

ad::Tensor uncond_fm_loss(const ModelView& model, const TrainBatch& batch) {
  if (model.config->noise_conditioned) {
    throw ValidationError("uncond-fm objective needs a model without noise conditioning");
  }
  if (model.config->energy != EnergyKind::kNone) {
    throw ValidationError("uncond-fm objective needs energy kind 'none'");
  }
  const ad::Tensor xg = corrupt(batch.x, batch.eps, batch.gamma);
  const ad::Tensor f = model.forward(xg, batch_conditioning(batch, false));
  return mse(f, ad::sub(batch.x, batch.eps));
}

void Objective::validate_for(const ModelConfig& config) const {
  schedule.validate();
  switch (kind) {
    case ObjectiveKind::kEqM:
      if (config.energy != EnergyKind::kNone || config.noise_conditioned) {
        throw ValidationError("objective 'eqm' needs model.energy = none and noise_conditioned = false");
      }
      require_equilibrium(schedule, allow_non_equilibrium);
      break;
    case ObjectiveKind::kEqME:
      if (config.energy == EnergyKind::kNone) {
        throw ValidationError("objective 'eqm-e' needs model.energy = dot or l2norm");
      }
      require_equilibrium(schedule, allow_non_equilibrium);
      break;
    case ObjectiveKind::kFM:
      if (!config.noise_conditioned) {
        throw ValidationError("objective 'fm' needs model.noise_conditioned = true");
      }
      break;
    case ObjectiveKind::kUncondFM:
      if (config.noise_conditioned || config.energy != EnergyKind::kNone) {
        throw ValidationError(
            "objective 'uncond-fm' needs model.energy = none and noise_conditioned = false");
      }
      break;
  }
}

ad::Tensor Objective::loss(const ModelView& model, ad::Graph& graph, const TrainBatch& batch) const {
  switch (kind) {
    case ObjectiveKind::kEqM: return eqm_loss(model, batch, schedule, allow_non_equilibrium);
    case ObjectiveKind::kEqME: return eqme_loss(model, graph, batch, schedule, allow_non_equilibrium);
    case ObjectiveKind::kFM: return fm_loss(model, batch);
    case ObjectiveKind::kUncondFM: return uncond_fm_loss(model, batch);
  }
  throw ValidationError("unknown objective");
}

}  // namespace eqm
