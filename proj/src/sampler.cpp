#include "eqm/sampler.hpp"

#include <cmath>
#include <limits>

#include "eqm/error.hpp"

namespace eqm {

namespace {

void check_batch(const GradientField& field, const ad::Tensor& x) {
  if (x.rank() != 2 || x.dim(1) != field.dim()) {
    throw ShapeError("sampler input must have shape [n," + std::to_string(field.dim()) + "], got " +
                     ad::shape_to_string(x.shape()));
  }
}

std::vector<double> row_norms(const ad::Tensor& g) {
  const std::size_t n = g.dim(0), d = g.dim(1);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += g.at(i, j) * g.at(i, j);
    out[i] = std::sqrt(s);
  }
  return out;
}

ad::Tensor checked_gradient(const GradientField& field, const ad::Tensor& x, double t,
                            std::size_t step) {
  try {
    ad::Tensor g = field.gradient(x, t);
    if (g.shape() != x.shape()) {
      throw ShapeError("field returned shape " + ad::shape_to_string(g.shape()) + " for input " +
                       ad::shape_to_string(x.shape()));
    }
    return g;
  } catch (const NumericalError& e) {
    throw NumericalError("sampling step " + std::to_string(step) + ": " + e.what());
  }
}

template <typename F>
ad::Tensor checked_update(std::size_t step, F&& f) {
  try {
    return f();
  } catch (const NumericalError& e) {
    throw NumericalError("non-finite state at sampling step " + std::to_string(step) + ": " +
                         e.what());
  }
}

// Fixed-budget loop shared by gd, nag and euler-ode. The update is
// x_{k+1} = x_k - eta * g(y_k) with y_k = x_k + mu (x_k - x_{k-1}), except
// that euler-ode writes it as x_k + h * v with v = -g.
Trajectory fixed_loop(const GradientField& field, const ad::Tensor& x0, const SamplerConfig& config,
                      bool nag, bool ode) {
  check_batch(field, x0);
  const std::size_t n = x0.dim(0);
  Trajectory tr;
  ad::Tensor x = x0.detach();
  ad::Tensor x_last = x;
  if (config.record_states) tr.states.push_back(x);
  for (std::size_t k = 0; k < config.steps; ++k) {
    const double t = static_cast<double>(k) * config.eta;
    const ad::Tensor y = nag ? ad::add(x, ad::scalar_mul(ad::sub(x, x_last), config.mu)) : x;
    const ad::Tensor g = checked_gradient(field, y, t, k);
    if (config.record_grad_norms) tr.grad_norms.push_back(row_norms(g));
    x_last = x;
    x = checked_update(k, [&] {
      if (ode) return ad::add(x, ad::scalar_mul(ad::scalar_mul(g, -1.0), config.eta));
      return ad::sub(x, ad::scalar_mul(g, config.eta));
    });
    if (config.record_states) tr.states.push_back(x);
  }
  tr.final = x;
  tr.steps_used.assign(n, config.steps);
  tr.capped.assign(n, false);
  tr.grad_evals = static_cast<std::uint64_t>(n) * config.steps;
  return tr;
}

}  // namespace

// ---------------------------------------------------------------------------

ModelField::ModelField(const GradientFieldModel& model, FieldOptions options)
    : model_(&model), options_(options) {
  const auto& c = model.config();
  if (c.num_classes > 0 && !options_.label) {
    throw ValidationError("class-conditional model needs a label to sample");
  }
  if (c.num_classes == 0 && options_.label) {
    throw ValidationError("unconditional model does not accept a label");
  }
  if (options_.label && (*options_.label < 0 || static_cast<std::size_t>(*options_.label) >= c.num_classes)) {
    throw ValidationError("label " + std::to_string(*options_.label) + " out of range [0, " +
                          std::to_string(c.num_classes) + ")");
  }
}

ad::Tensor ModelField::gradient(const ad::Tensor& x, double t) const {
  const std::size_t n = x.dim(0);
  Conditioning cond;
  if (options_.label) cond.labels.assign(n, *options_.label);
  if (model_->config().noise_conditioned) cond.noise_level = ad::Tensor::full({n}, t);
  ad::Tensor g = model_->config().energy == EnergyKind::kNone ? model_->forward(x, cond)
                                                              : model_->energy_gradient(x, cond);
  return options_.velocity ? ad::scalar_mul(g, -1.0) : g;
}

std::size_t ModelField::dim() const { return model_->config().input_dim; }

ComposedField::ComposedField(std::vector<std::shared_ptr<const GradientField>> members,
                             std::vector<double> weights)
    : members_(std::move(members)), weights_(std::move(weights)) {
  if (members_.empty()) throw ValidationError("composition needs at least one field");
  if (weights_.empty()) weights_.assign(members_.size(), 1.0);
  if (weights_.size() != members_.size()) {
    throw ValidationError("composition has " + std::to_string(members_.size()) + " fields but " +
                          std::to_string(weights_.size()) + " weights");
  }
  for (const auto& m : members_) {
    if (m->dim() != members_.front()->dim()) {
      throw ShapeError("composed fields disagree on dimension: " + std::to_string(m->dim()) +
                       " vs " + std::to_string(members_.front()->dim()));
    }
  }
}

ad::Tensor ComposedField::gradient(const ad::Tensor& x, double t) const {
  auto term = [&](std::size_t i) {
    ad::Tensor g = members_[i]->gradient(x, t);
    return weights_[i] == 1.0 ? g : ad::scalar_mul(g, weights_[i]);
  };
  ad::Tensor total = term(0);
  for (std::size_t i = 1; i < members_.size(); ++i) total = ad::add(total, term(i));
  return total;
}

std::shared_ptr<const GradientField> compose(std::vector<std::shared_ptr<const GradientField>> members,
                                             std::vector<double> weights) {
  return std::make_shared<ComposedField>(std::move(members), std::move(weights));
}

ad::Tensor grad_of(const GradientFieldModel& model, const ad::Tensor& x, std::optional<int> label) {
  return ModelField(model, {label, false}).gradient(x, 0.0);
}

// ---------------------------------------------------------------------------

std::string_view to_string(SamplerMethod m) {
  switch (m) {
    case SamplerMethod::kGD: return "gd";
    case SamplerMethod::kNAG: return "nag";
    case SamplerMethod::kEulerODE: return "euler-ode";
    case SamplerMethod::kAdaptive: return "adaptive";
  }
  return "?";
}

SamplerMethod parse_sampler_method(std::string_view name) {
  if (name == "gd") return SamplerMethod::kGD;
  if (name == "nag") return SamplerMethod::kNAG;
  if (name == "euler-ode") return SamplerMethod::kEulerODE;
  if (name == "adaptive") return SamplerMethod::kAdaptive;
  throw ValidationError("unknown sampler method '" + std::string(name) + "'");
}

void SamplerConfig::validate() const {
  // eta = 0 is accepted so the degenerate "no movement" case stays expressible.
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw ValidationError("sampler.eta must be >= 0");
  if (!(mu >= 0.0) || !std::isfinite(mu)) throw ValidationError("sampler.mu must be >= 0");
  if (steps < 1) throw ValidationError("sampler.steps must be >= 1");
  if (max_steps < 1) throw ValidationError("sampler.max_steps must be >= 1");
  if (method == SamplerMethod::kAdaptive) {
    if (!g_min) throw ValidationError("adaptive sampling requires g_min");
    if (!(*g_min > 0.0)) throw ValidationError("sampler.g_min must be > 0");
  } else if (g_min) {
    throw ValidationError("g_min is only valid with method 'adaptive'");
  }
  if (mu != 0.0 && method != SamplerMethod::kNAG && method != SamplerMethod::kAdaptive) {
    throw ValidationError("mu is only valid with methods 'nag' and 'adaptive'");
  }
}

Trajectory sample_gd(const GradientField& field, const ad::Tensor& x0, const SamplerConfig& config) {
  config.validate();
  if (config.method != SamplerMethod::kGD) throw ValidationError("sample_gd needs method 'gd'");
  return fixed_loop(field, x0, config, false, false);
}

Trajectory sample_nag(const GradientField& field, const ad::Tensor& x0, const SamplerConfig& config) {
  config.validate();
  if (config.method != SamplerMethod::kNAG) throw ValidationError("sample_nag needs method 'nag'");
  return fixed_loop(field, x0, config, true, false);
}

Trajectory sample_euler_ode(const GradientField& field, const ad::Tensor& x0,
                            const SamplerConfig& config) {
  config.validate();
  if (config.method != SamplerMethod::kEulerODE) {
    throw ValidationError("sample_euler_ode needs method 'euler-ode'");
  }
  return fixed_loop(field, x0, config, false, true);
}

Trajectory sample_adaptive(const GradientField& field, const ad::Tensor& x0,
                           const SamplerConfig& config) {
  config.validate();
  if (config.method != SamplerMethod::kAdaptive) {
    throw ValidationError("sample_adaptive needs method 'adaptive'");
  }
  check_batch(field, x0);
  const std::size_t n = x0.dim(0), d = x0.dim(1);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  Trajectory tr;
  tr.steps_used.assign(n, 0);
  tr.capped.assign(n, false);
  std::vector<double> x(x0.values().begin(), x0.values().end());
  std::vector<double> x_last = x;
  std::vector<std::size_t> active(n);
  for (std::size_t i = 0; i < n; ++i) active[i] = i;
  if (config.record_states) tr.states.push_back(x0.detach());

  for (std::size_t k = 0; !active.empty(); ++k) {
    // Look-ahead points of the samples still running (x itself when mu = 0).
    std::vector<double> y(active.size() * d);
    for (std::size_t r = 0; r < active.size(); ++r) {
      for (std::size_t j = 0; j < d; ++j) {
        const std::size_t idx = active[r] * d + j;
        y[r * d + j] = config.mu == 0.0 ? x[idx] : x[idx] + config.mu * (x[idx] - x_last[idx]);
      }
    }
    const ad::Tensor g = checked_gradient(field, ad::Tensor({active.size(), d}, std::move(y)),
                                          static_cast<double>(k) * config.eta, k);
    tr.grad_evals += active.size();
    const std::vector<double> norms = row_norms(g);
    if (config.record_grad_norms) tr.grad_norms.emplace_back(n, nan);

    std::vector<std::size_t> still;
    for (std::size_t r = 0; r < active.size(); ++r) {
      const std::size_t i = active[r];
      if (config.record_grad_norms) tr.grad_norms.back()[i] = norms[r];
      if (norms[r] < *config.g_min) continue;
      if (tr.steps_used[i] == config.max_steps) {
        tr.capped[i] = true;
        continue;
      }
      for (std::size_t j = 0; j < d; ++j) {
        const std::size_t idx = i * d + j;
        const double next = x[idx] - config.eta * g.at(r, j);
        if (!std::isfinite(next)) {
          throw NumericalError("non-finite state at sampling step " + std::to_string(k) +
                               " for sample " + std::to_string(i));
        }
        x_last[idx] = x[idx];
        x[idx] = next;
      }
      ++tr.steps_used[i];
      still.push_back(i);
    }
    active = std::move(still);
    if (config.record_states) tr.states.push_back(ad::Tensor({n, d}, x));
  }
  tr.final = ad::Tensor({n, d}, std::move(x));
  return tr;
}

Trajectory sample(const GradientField& field, const ad::Tensor& x0, const SamplerConfig& config) {
  switch (config.method) {
    case SamplerMethod::kGD: return sample_gd(field, x0, config);
    case SamplerMethod::kNAG: return sample_nag(field, x0, config);
    case SamplerMethod::kEulerODE: return sample_euler_ode(field, x0, config);
    case SamplerMethod::kAdaptive: return sample_adaptive(field, x0, config);
  }
  throw ValidationError("unknown sampler method");
}

Trajectory denoise_from(const GradientField& field, const ad::Tensor& x_partial,
                        const SamplerConfig& config) {
  return sample(field, x_partial, config);
}

double path_length(const Trajectory& trajectory) {
  if (trajectory.states.size() < 2) throw ValidationError("path_length needs recorded states");
  double total = 0.0;
  for (std::size_t k = 1; k < trajectory.states.size(); ++k) {
    const ad::Tensor& a = trajectory.states[k - 1];
    const ad::Tensor& b = trajectory.states[k];
    const std::size_t n = a.dim(0), d = a.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += (b.at(i, j) - a.at(i, j)) * (b.at(i, j) - a.at(i, j));
      total += std::sqrt(s);
    }
  }
  return total;
}

}  // namespace eqm
