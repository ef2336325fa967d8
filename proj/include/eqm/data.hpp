#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "eqm/tensor.hpp"

namespace eqm {

enum class DistributionKind { kGaussianMixture, kTwoMoons, kCheckerboard, kUniformBox };

std::string_view to_string(DistributionKind kind);
DistributionKind parse_distribution_kind(std::string_view name);

using Point2 = std::array<double, 2>;

/// A 2-D toy distribution. Only the fields relevant to the kind are used.
struct ToyDistribution {
  DistributionKind kind = DistributionKind::kGaussianMixture;
  std::vector<Point2> modes;    // mixture centers
  double mode_std = 0.02;       // per-coordinate std of each mixture component
  std::vector<double> weights;  // mixture weights, sum to 1
  Point2 box_lo{-8.0, -8.0};    // uniform box bounds
  Point2 box_hi{8.0, 8.0};
  double noise_scale = 0.05;    // two-moons jitter

  /// k equal-weight modes evenly spaced on a circle.
  static ToyDistribution ring(std::size_t k, double radius, double mode_std);
  static ToyDistribution mixture(std::vector<Point2> modes, double mode_std,
                                 std::vector<double> weights = {});
  static ToyDistribution two_moons(double noise_scale);
  static ToyDistribution checkerboard();
  static ToyDistribution uniform_box(Point2 lo, Point2 hi);

  void validate() const;
  /// Number of distinct labels sample_data can emit.
  std::size_t num_labels() const;
  /// Same distribution translated by (dx, dy).
  ToyDistribution shifted(double dx, double dy) const;

  bool operator==(const ToyDistribution&) const = default;
};

struct LabeledPoints {
  ad::Tensor points;        // [n, 2]
  std::vector<int> labels;  // mixture component / moon / board cell index
};

/// n i.i.d. draws. Deterministic per seed.
LabeledPoints sample_data(const ToyDistribution& dist, std::size_t n, std::uint64_t seed);

/// Standard normal [n, d]. Deterministic per seed.
ad::Tensor sample_noise(std::size_t n, std::size_t d, std::uint64_t seed);

/// k reproducible points in [-3, 3]^2 with pairwise distance at least 2.
ad::Tensor fixed_memorization_set(std::size_t k, std::uint64_t seed);

/// n copies of one point.
ad::Tensor constant_points(std::size_t n, Point2 value);

/// Out-of-distribution sets used by the detection experiment.
struct OodSet {
  std::string name;
  ad::Tensor points;
};

/// shifted (+8, +8), uniform box over [-8, 8]^2, and constant points at the origin.
std::vector<OodSet> ood_sets(const ToyDistribution& in_distribution, std::size_t n,
                             std::uint64_t seed);

}  // namespace eqm
