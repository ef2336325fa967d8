#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "eqm/tensor.hpp"

namespace eqm {

enum class Activation { kSilu, kRelu, kTanh };
enum class EnergyKind { kNone, kDot, kL2Norm };

std::string_view to_string(Activation a);
std::string_view to_string(EnergyKind e);
Activation parse_activation(std::string_view name);
EnergyKind parse_energy_kind(std::string_view name);

/// Width of the sinusoidal noise-level feature appended to the input of
/// noise-conditioned (flow-matching baseline) models.
inline constexpr std::size_t kNoiseFeatures = 16;

struct ModelConfig {
  std::size_t input_dim = 2;
  std::vector<std::size_t> hidden = {256, 256, 256};
  Activation activation = Activation::kSilu;
  std::size_t num_classes = 0;
  bool noise_conditioned = false;
  EnergyKind energy = EnergyKind::kNone;
  std::uint64_t init_seed = 0;

  void validate() const;
  std::size_t parameter_count() const;

  bool operator==(const ModelConfig&) const = default;
};

/// Ordered, named collection of tensors. Order is insertion order and is
/// part of the checkpoint format.
class ParameterSet {
 public:
  void add(std::string name, ad::Tensor value);
  const ad::Tensor& get(std::string_view name) const;
  bool contains(std::string_view name) const;
  /// Replaces an existing entry; the shape must match.
  void set(std::string_view name, ad::Tensor value);

  std::size_t size() const { return entries_.size(); }
  std::size_t numel() const;
  const std::vector<std::pair<std::string, ad::Tensor>>& entries() const { return entries_; }

  /// Copy in which every tensor is a fresh leaf of graph.
  ParameterSet bind(ad::Graph& graph) const;
  /// Gradients for the tensors of a set returned by bind().
  ParameterSet gradients(const ad::Gradients& grads) const;
  /// Copy with graph links dropped.
  ParameterSet detached() const;

  bool identical(const ParameterSet& other) const;

 private:
  std::vector<std::pair<std::string, ad::Tensor>> entries_;
};

/// Inputs beyond the point batch.
struct Conditioning {
  std::vector<int> labels;                // one per row; required iff num_classes > 0
  std::optional<ad::Tensor> noise_level;  // [n]; required iff noise_conditioned

  static Conditioning label(int label, std::size_t n) {
    return {std::vector<int>(n, label), std::nullopt};
  }
  static Conditioning noise(ad::Tensor t) { return {{}, std::move(t)}; }
};

/// Read-only pairing of a config with a parameter set (owned elsewhere).
/// The forward functions are differentiable with respect to both x and the
/// parameters when either carries graph nodes.
struct ModelView {
  const ModelConfig* config;
  const ParameterSet* params;

  /// f(x): [n, d] -> [n, d].
  ad::Tensor forward(const ad::Tensor& x, const Conditioning& cond = {}) const;
  /// Scalar energy per row, [n]. Requires energy kind != none.
  ad::Tensor energy(const ad::Tensor& x, const Conditioning& cond = {}) const;
  /// d energy / dx as a live graph node; x must be a graph node.
  ad::Tensor energy_gradient(const ad::Tensor& x, const Conditioning& cond = {}) const;
};

/// MLP gradient field. Label conditioning adds a learned embedding to the
/// first hidden pre-activation; noise conditioning concatenates sinusoidal
/// features of t to the input.
class GradientFieldModel {
 public:
  GradientFieldModel() = default;
  GradientFieldModel(ModelConfig config, ParameterSet params);

  /// Deterministic initialization from config.init_seed.
  static GradientFieldModel init(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  const ParameterSet& parameters() const { return params_; }
  ParameterSet& mutable_parameters() { return params_; }
  ModelView view() const { return {&config_, &params_}; }

  /// Replaces one parameter; the shape must match.
  void set_parameter(std::string_view name, ad::Tensor value);

  ad::Tensor forward(const ad::Tensor& x, const Conditioning& cond = {}) const;
  ad::Tensor energy(const ad::Tensor& x, const Conditioning& cond = {}) const;
  /// Input gradient of the energy, detached from any graph.
  ad::Tensor energy_gradient(const ad::Tensor& x, const Conditioning& cond = {}) const;

 private:
  ModelConfig config_;
  ParameterSet params_;
};

/// Sinusoidal features of per-row noise levels, [n, kNoiseFeatures].
ad::Tensor noise_features(const ad::Tensor& t);

}  // namespace eqm
