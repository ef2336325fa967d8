#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "eqm/model.hpp"

namespace eqm {

/// Anything a sampler can descend. t is the pseudo-time k * eta of the
/// current step; only time-conditioned fields look at it.
class GradientField {
 public:
  virtual ~GradientField() = default;
  virtual ad::Tensor gradient(const ad::Tensor& x, double t) const = 0;
  virtual std::size_t dim() const = 0;
};

/// How a trained model is read as a gradient field.
struct FieldOptions {
  std::optional<int> label;  // required iff the model is class-conditional
  /// Flow-matching models predict a velocity v = x - eps; their descent
  /// direction is -v.
  bool velocity = false;
};

class ModelField : public GradientField {
 public:
  /// Keeps a reference to model; the model must outlive the field.
  explicit ModelField(const GradientFieldModel& model, FieldOptions options = {});
  ad::Tensor gradient(const ad::Tensor& x, double t) const override;
  std::size_t dim() const override;

 private:
  const GradientFieldModel* model_;
  FieldOptions options_;
};

/// Closed-form field, for tests and analytic fixtures.
class AnalyticField : public GradientField {
 public:
  using Fn = std::function<ad::Tensor(const ad::Tensor&)>;
  AnalyticField(std::size_t dim, Fn fn) : dim_(dim), fn_(std::move(fn)) {}
  ad::Tensor gradient(const ad::Tensor& x, double) const override { return fn_(x); }
  std::size_t dim() const override { return dim_; }

 private:
  std::size_t dim_;
  Fn fn_;
};

/// Weighted sum of member fields.
class ComposedField : public GradientField {
 public:
  ComposedField(std::vector<std::shared_ptr<const GradientField>> members,
                std::vector<double> weights = {});
  ad::Tensor gradient(const ad::Tensor& x, double t) const override;
  std::size_t dim() const override { return members_.front()->dim(); }

 private:
  std::vector<std::shared_ptr<const GradientField>> members_;
  std::vector<double> weights_;
};

std::shared_ptr<const GradientField> compose(std::vector<std::shared_ptr<const GradientField>> members,
                                             std::vector<double> weights = {});

/// forward(x) for energy kind none, the energy input-gradient otherwise.
ad::Tensor grad_of(const GradientFieldModel& model, const ad::Tensor& x,
                   std::optional<int> label = std::nullopt);

enum class SamplerMethod { kGD, kNAG, kEulerODE, kAdaptive };

std::string_view to_string(SamplerMethod m);
SamplerMethod parse_sampler_method(std::string_view name);

struct SamplerConfig {
  SamplerMethod method = SamplerMethod::kGD;
  double eta = 0.004;
  double mu = 0.0;  // NAG look-ahead; adaptive mode uses NAG when mu > 0
  std::size_t steps = 250;
  std::optional<double> g_min;  // adaptive only
  std::size_t max_steps = 1000;
  bool record_states = false;
  bool record_grad_norms = false;

  void validate() const;
  bool operator==(const SamplerConfig&) const = default;
};

struct Trajectory {
  std::vector<ad::Tensor> states;  // x_0 .. x_K when recorded
  std::vector<std::size_t> steps_used;
  std::vector<bool> capped;  // adaptive: stopped by max_steps, not by g_min
  ad::Tensor final;
  /// grad_norms[k][i]: norm of the gradient used for the update of step k on
  /// sample i; NaN once the sample has stopped.
  std::vector<std::vector<double>> grad_norms;
  std::uint64_t grad_evals = 0;  // per-sample gradient evaluations, summed
};

Trajectory sample_gd(const GradientField& field, const ad::Tensor& x0, const SamplerConfig& config);
Trajectory sample_nag(const GradientField& field, const ad::Tensor& x0, const SamplerConfig& config);
Trajectory sample_euler_ode(const GradientField& field, const ad::Tensor& x0,
                            const SamplerConfig& config);
Trajectory sample_adaptive(const GradientField& field, const ad::Tensor& x0,
                           const SamplerConfig& config);

/// Dispatches on config.method.
Trajectory sample(const GradientField& field, const ad::Tensor& x0, const SamplerConfig& config);

/// Standard sampling started from a partially corrupted batch.
Trajectory denoise_from(const GradientField& field, const ad::Tensor& x_partial,
                        const SamplerConfig& config);

/// Sum over samples of the Euclidean length of each recorded path.
double path_length(const Trajectory& trajectory);

}  // namespace eqm
