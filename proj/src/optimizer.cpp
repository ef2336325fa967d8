#include "eqm/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "eqm/error.hpp"

namespace eqm {

void AdamWConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ValidationError("optimizer.lr must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ValidationError("optimizer.beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ValidationError("optimizer.beta2 must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ValidationError("optimizer.weight_decay must be >= 0");
  if (!(epsilon > 0.0)) throw ValidationError("optimizer.epsilon must be > 0");
  if (!(final_lr_fraction >= 0.0 && final_lr_fraction <= 1.0)) {
    throw ValidationError("optimizer.final_lr_fraction must lie in [0, 1]");
  }
}

double AdamWConfig::lr_at(std::uint64_t step) const {
  if (decay_steps == 0) return lr;
  const double progress = std::min(1.0, static_cast<double>(step) / static_cast<double>(decay_steps));
  const double floor = lr * final_lr_fraction;
  return floor + 0.5 * (lr - floor) * (1.0 + std::cos(std::numbers::pi * progress));
}

namespace {

void check_keys(const ParameterSet& params, const ParameterSet& other, const char* what) {
  if (params.size() != other.size()) {
    throw ValidationError(std::string(what) + " has " + std::to_string(other.size()) +
                          " entries, parameters have " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, p] = params.entries()[i];
    const auto& [oname, o] = other.entries()[i];
    if (name != oname) {
      throw ValidationError(std::string(what) + " key '" + oname + "' does not match parameter '" +
                            name + "'");
    }
    if (p.shape() != o.shape()) {
      throw ShapeError(std::string(what) + " for '" + name + "' has shape " +
                       ad::shape_to_string(o.shape()) + ", parameter has " +
                       ad::shape_to_string(p.shape()));
    }
  }
}

}  // namespace

void AdamW::step(ParameterSet& params, const ParameterSet& grads) {
  check_keys(params, grads, "gradient");
  for (const auto& [name, g] : grads.entries()) {
    for (double x : g.values()) {
      if (!std::isfinite(x)) throw NumericalError("non-finite gradient for '" + name + "'");
    }
  }
  if (m_.size() == 0) {
    for (const auto& [name, p] : params.entries()) {
      m_.add(name, ad::Tensor::zeros(p.shape()));
      v_.add(name, ad::Tensor::zeros(p.shape()));
    }
  }
  const double lr = config_.lr_at(step_count_);
  ++step_count_;
  const double t = static_cast<double>(step_count_);
  const double bc1 = 1.0 - std::pow(config_.beta1, t);
  const double bc2 = 1.0 - std::pow(config_.beta2, t);
  const double decay = 1.0 - lr * config_.weight_decay;

  ParameterSet new_params, new_m, new_v;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, p] = params.entries()[i];
    const ad::Tensor& g = grads.entries()[i].second;
    const ad::Tensor& m = m_.entries()[i].second;
    const ad::Tensor& v = v_.entries()[i].second;
    const std::size_t n = p.numel();
    std::vector<double> pv(n), mv(n), vv(n);
    for (std::size_t k = 0; k < n; ++k) {
      mv[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * g[k];
      vv[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * g[k] * g[k];
      const double m_hat = mv[k] / bc1;
      const double v_hat = vv[k] / bc2;
      pv[k] = p[k] * decay - lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
    new_params.add(name, ad::Tensor(p.shape(), std::move(pv)));
    new_m.add(name, ad::Tensor(p.shape(), std::move(mv)));
    new_v.add(name, ad::Tensor(p.shape(), std::move(vv)));
  }
  params = std::move(new_params);
  m_ = std::move(new_m);
  v_ = std::move(new_v);
}

void AdamW::restore(std::uint64_t step_count, ParameterSet m, ParameterSet v) {
  if (m.size() != v.size()) throw ValidationError("optimizer moments disagree in size");
  if (step_count > 0 && m.size() > 0) check_keys(m, v, "second moment");
  step_count_ = step_count;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace eqm
