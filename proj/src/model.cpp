#include "eqm/model.hpp"

#include <cmath>
#include <random>

#include "eqm/error.hpp"

namespace eqm {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::kSilu: return "silu";
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
  }
  return "?";
}

std::string_view to_string(EnergyKind e) {
  switch (e) {
    case EnergyKind::kNone: return "none";
    case EnergyKind::kDot: return "dot";
    case EnergyKind::kL2Norm: return "l2norm";
  }
  return "?";
}

Activation parse_activation(std::string_view name) {
  if (name == "silu") return Activation::kSilu;
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw ValidationError("unknown activation '" + std::string(name) + "'");
}

EnergyKind parse_energy_kind(std::string_view name) {
  if (name == "none") return EnergyKind::kNone;
  if (name == "dot") return EnergyKind::kDot;
  if (name == "l2norm") return EnergyKind::kL2Norm;
  throw ValidationError("unknown energy kind '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  if (input_dim < 1) throw ValidationError("model.input_dim must be >= 1");
  if (hidden.empty()) throw ValidationError("model.hidden must list at least one width");
  for (std::size_t w : hidden) {
    if (w == 0) throw ValidationError("model.hidden widths must be >= 1");
  }
  if (noise_conditioned && energy != EnergyKind::kNone) {
    throw ValidationError("model.noise_conditioned cannot be combined with an energy head");
  }
}

std::size_t ModelConfig::parameter_count() const {
  std::size_t in = input_dim + (noise_conditioned ? kNoiseFeatures : 0);
  std::size_t count = 0;
  for (std::size_t w : hidden) {
    count += in * w + w;
    in = w;
  }
  count += in * input_dim + input_dim;
  count += num_classes * hidden.front();
  return count;
}

// ---------------------------------------------------------------------------

void ParameterSet::add(std::string name, ad::Tensor value) {
  if (contains(name)) throw ValidationError("duplicate parameter '" + name + "'");
  entries_.emplace_back(std::move(name), std::move(value));
}

const ad::Tensor& ParameterSet::get(std::string_view name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw ValidationError("unknown parameter '" + std::string(name) + "'");
}

bool ParameterSet::contains(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.first == name) return true;
  }
  return false;
}

void ParameterSet::set(std::string_view name, ad::Tensor value) {
  for (auto& [n, t] : entries_) {
    if (n != name) continue;
    if (t.shape() != value.shape()) {
      throw ShapeError("parameter '" + n + "' has shape " + ad::shape_to_string(t.shape()) +
                       ", got " + ad::shape_to_string(value.shape()));
    }
    t = std::move(value);
    return;
  }
  throw ValidationError("unknown parameter '" + std::string(name) + "'");
}

std::size_t ParameterSet::numel() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.numel();
  return n;
}

ParameterSet ParameterSet::bind(ad::Graph& graph) const {
  ParameterSet out;
  for (const auto& [n, t] : entries_) out.add(n, graph.variable(t));
  return out;
}

ParameterSet ParameterSet::gradients(const ad::Gradients& grads) const {
  ParameterSet out;
  for (const auto& [n, t] : entries_) out.add(n, grads[t]);
  return out;
}

ParameterSet ParameterSet::detached() const {
  ParameterSet out;
  for (const auto& [n, t] : entries_) out.add(n, t.detach());
  return out;
}

bool ParameterSet::identical(const ParameterSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].first != other.entries_[i].first) return false;
    if (!entries_[i].second.identical(other.entries_[i].second)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------

namespace {

std::string weight_name(std::size_t layer) { return "layers." + std::to_string(layer) + ".weight"; }
std::string bias_name(std::size_t layer) { return "layers." + std::to_string(layer) + ".bias"; }
constexpr const char* kLabelEmbedding = "label_embedding";

ad::Tensor activate(Activation a, const ad::Tensor& x) {
  switch (a) {
    case Activation::kSilu: return ad::silu(x);
    case Activation::kRelu: return ad::relu(x);
    case Activation::kTanh: return ad::tanh(x);
  }
  return x;
}

ad::Tensor one_hot(std::span<const int> labels, std::size_t classes) {
  std::vector<double> v(labels.size() * classes, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i)
    v[i * classes + static_cast<std::size_t>(labels[i])] = 1.0;
  return ad::Tensor({labels.size(), classes}, std::move(v));
}

void check_conditioning(const ModelConfig& config, const ad::Tensor& x, const Conditioning& cond) {
  if (x.rank() != 2 || x.dim(1) != config.input_dim) {
    throw ShapeError("model input must have shape [n," + std::to_string(config.input_dim) +
                     "], got " + ad::shape_to_string(x.shape()));
  }
  const std::size_t n = x.dim(0);
  if (config.num_classes == 0 && !cond.labels.empty()) {
    throw ValidationError("unconditional model does not accept a label");
  }
  if (config.num_classes > 0) {
    if (cond.labels.size() != n) {
      throw ValidationError("class-conditional model needs one label per row (" +
                            std::to_string(n) + "), got " + std::to_string(cond.labels.size()));
    }
    for (int l : cond.labels) {
      if (l < 0 || static_cast<std::size_t>(l) >= config.num_classes) {
        throw ValidationError("label " + std::to_string(l) + " out of range [0, " +
                              std::to_string(config.num_classes) + ")");
      }
    }
  }
  if (config.noise_conditioned != cond.noise_level.has_value()) {
    throw ValidationError(config.noise_conditioned
                              ? "noise-conditioned model requires a noise level"
                              : "model is not noise-conditioned; noise level not accepted");
  }
  if (cond.noise_level && cond.noise_level->shape() != ad::Shape{n}) {
    throw ShapeError("noise level must have shape [" + std::to_string(n) + "], got " +
                     ad::shape_to_string(cond.noise_level->shape()));
  }
}

}  // namespace

ad::Tensor noise_features(const ad::Tensor& t) {
  const std::size_t n = t.numel();
  const std::size_t half = kNoiseFeatures / 2;
  std::vector<double> v(n * kNoiseFeatures);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < half; ++k) {
      // Frequencies spaced geometrically from 1 to 1000.
      const double freq = std::pow(1000.0, static_cast<double>(k) / static_cast<double>(half - 1));
      v[i * kNoiseFeatures + k] = std::sin(freq * t[i]);
      v[i * kNoiseFeatures + half + k] = std::cos(freq * t[i]);
    }
  }
  return ad::Tensor({n, kNoiseFeatures}, std::move(v));
}

ad::Tensor ModelView::forward(const ad::Tensor& x, const Conditioning& cond) const {
  check_conditioning(*config, x, cond);
  const std::size_t n = x.dim(0);
  ad::Tensor h = cond.noise_level ? ad::concat(x, noise_features(*cond.noise_level)) : x;
  const std::size_t layers = config->hidden.size();
  for (std::size_t i = 0; i < layers; ++i) {
    const ad::Tensor& w = params->get(weight_name(i));
    const ad::Tensor& b = params->get(bias_name(i));
    ad::Tensor pre = ad::matmul(h, w) + ad::broadcast(b, {n, w.dim(1)});
    if (i == 0 && config->num_classes > 0) {
      pre = pre + ad::matmul(one_hot(cond.labels, config->num_classes), params->get(kLabelEmbedding));
    }
    h = activate(config->activation, pre);
  }
  const ad::Tensor& w = params->get(weight_name(layers));
  const ad::Tensor& b = params->get(bias_name(layers));
  return ad::matmul(h, w) + ad::broadcast(b, {n, w.dim(1)});
}

ad::Tensor ModelView::energy(const ad::Tensor& x, const Conditioning& cond) const {
  const ad::Tensor f = forward(x, cond);
  switch (config->energy) {
    case EnergyKind::kDot: return ad::sum_last(ad::mul(x, f));
    case EnergyKind::kL2Norm: return ad::scalar_mul(ad::sum_last(ad::square(f)), -0.5);
    case EnergyKind::kNone: break;
  }
  throw ValidationError("energy requested from a model with energy kind 'none'");
}

ad::Tensor ModelView::energy_gradient(const ad::Tensor& x, const Conditioning& cond) const {
  if (config->energy == EnergyKind::kNone) {
    throw ValidationError("energy_gradient requested from a model with energy kind 'none'");
  }
  if (!x.has_node()) {
    throw ValidationError("energy_gradient needs x to be a graph node");
  }
  // Rows are independent, so the gradient of the summed energy is the per-row gradient.
  return ad::input_gradient(ad::sum(energy(x, cond)), x);
}

// ---------------------------------------------------------------------------

GradientFieldModel::GradientFieldModel(ModelConfig config, ParameterSet params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  const GradientFieldModel reference = init(config_);
  const auto& expected = reference.parameters().entries();
  if (expected.size() != params_.size()) {
    throw ValidationError("parameter set has " + std::to_string(params_.size()) +
                          " tensors, model needs " + std::to_string(expected.size()));
  }
  for (const auto& [name, t] : expected) {
    const ad::Tensor& got = params_.get(name);
    if (got.shape() != t.shape()) {
      throw ShapeError("parameter '" + name + "' has shape " + ad::shape_to_string(got.shape()) +
                       ", model needs " + ad::shape_to_string(t.shape()));
    }
  }
}

GradientFieldModel GradientFieldModel::init(const ModelConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.init_seed);
  ParameterSet params;
  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
  auto uniform = [&](ad::Shape shape, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> v(ad::shape_numel(shape));
    for (double& x : v) x = dist(rng);
    return ad::Tensor(std::move(shape), std::move(v));
  };
  std::size_t in = config.input_dim + (config.noise_conditioned ? kNoiseFeatures : 0);
  std::vector<std::size_t> widths = config.hidden;
  widths.push_back(config.input_dim);
  for (std::size_t i = 0; i < widths.size(); ++i) {
    params.add(weight_name(i), uniform({in, widths[i]}, in));
    params.add(bias_name(i), uniform({widths[i]}, in));
    in = widths[i];
  }
  if (config.num_classes > 0) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> v(config.num_classes * config.hidden.front());
    for (double& x : v) x = normal(rng);
    params.add(kLabelEmbedding, ad::Tensor({config.num_classes, config.hidden.front()}, std::move(v)));
  }
  GradientFieldModel model;
  model.config_ = config;
  model.params_ = std::move(params);
  return model;
}

void GradientFieldModel::set_parameter(std::string_view name, ad::Tensor value) {
  params_.set(name, std::move(value));
}

ad::Tensor GradientFieldModel::forward(const ad::Tensor& x, const Conditioning& cond) const {
  return view().forward(x.detach(), cond);
}

ad::Tensor GradientFieldModel::energy(const ad::Tensor& x, const Conditioning& cond) const {
  return view().energy(x.detach(), cond);
}

ad::Tensor GradientFieldModel::energy_gradient(const ad::Tensor& x,
                                               const Conditioning& cond) const {
  ad::Graph graph;
  const ad::Tensor xv = graph.variable(x.detach());
  return view().energy_gradient(xv, cond).detach();
}

}  // namespace eqm
