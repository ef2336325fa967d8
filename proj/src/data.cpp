#include "eqm/data.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "eqm/error.hpp"

namespace eqm {

std::string_view to_string(DistributionKind kind) {
  switch (kind) {
    case DistributionKind::kGaussianMixture: return "gaussian-mixture";
    case DistributionKind::kTwoMoons: return "two-moons";
    case DistributionKind::kCheckerboard: return "checkerboard";
    case DistributionKind::kUniformBox: return "uniform-box";
  }
  return "?";
}

DistributionKind parse_distribution_kind(std::string_view name) {
  if (name == "gaussian-mixture") return DistributionKind::kGaussianMixture;
  if (name == "two-moons") return DistributionKind::kTwoMoons;
  if (name == "checkerboard") return DistributionKind::kCheckerboard;
  if (name == "uniform-box") return DistributionKind::kUniformBox;
  throw ValidationError("unknown distribution kind '" + std::string(name) + "'");
}

ToyDistribution ToyDistribution::ring(std::size_t k, double radius, double mode_std) {
  std::vector<Point2> modes;
  for (std::size_t i = 0; i < k; ++i) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(k);
    modes.push_back({radius * std::cos(angle), radius * std::sin(angle)});
  }
  return mixture(std::move(modes), mode_std);
}

ToyDistribution ToyDistribution::mixture(std::vector<Point2> modes, double mode_std,
                                         std::vector<double> weights) {
  ToyDistribution d;
  d.kind = DistributionKind::kGaussianMixture;
  if (weights.empty() && !modes.empty()) {
    weights.assign(modes.size(), 1.0 / static_cast<double>(modes.size()));
  }
  d.modes = std::move(modes);
  d.mode_std = mode_std;
  d.weights = std::move(weights);
  d.validate();
  return d;
}

ToyDistribution ToyDistribution::two_moons(double noise_scale) {
  ToyDistribution d;
  d.kind = DistributionKind::kTwoMoons;
  d.noise_scale = noise_scale;
  d.validate();
  return d;
}

ToyDistribution ToyDistribution::checkerboard() {
  ToyDistribution d;
  d.kind = DistributionKind::kCheckerboard;
  return d;
}

ToyDistribution ToyDistribution::uniform_box(Point2 lo, Point2 hi) {
  ToyDistribution d;
  d.kind = DistributionKind::kUniformBox;
  d.box_lo = lo;
  d.box_hi = hi;
  d.validate();
  return d;
}

void ToyDistribution::validate() const {
  switch (kind) {
    case DistributionKind::kGaussianMixture: {
      if (modes.empty()) throw ValidationError("gaussian-mixture needs at least one mode");
      if (weights.size() != modes.size()) {
        throw ValidationError("gaussian-mixture has " + std::to_string(modes.size()) +
                              " modes but " + std::to_string(weights.size()) + " weights");
      }
      if (!(mode_std > 0.0)) throw ValidationError("mode_std must be > 0");
      double total = 0.0;
      for (double w : weights) {
        if (!(w >= 0.0)) throw ValidationError("mixture weights must be non-negative");
        total += w;
      }
      if (std::abs(total - 1.0) > 1e-12) {
        throw ValidationError("mixture weights must sum to 1, got " + std::to_string(total));
      }
      for (const auto& m : modes) {
        if (!std::isfinite(m[0]) || !std::isfinite(m[1])) {
          throw ValidationError("mixture modes must be finite");
        }
      }
      break;
    }
    case DistributionKind::kTwoMoons:
      if (!(noise_scale >= 0.0)) throw ValidationError("two-moons noise_scale must be >= 0");
      break;
    case DistributionKind::kCheckerboard: break;
    case DistributionKind::kUniformBox:
      if (!(box_lo[0] < box_hi[0] && box_lo[1] < box_hi[1])) {
        throw ValidationError("uniform-box needs lo < hi in both coordinates");
      }
      break;
  }
}

std::size_t ToyDistribution::num_labels() const {
  switch (kind) {
    case DistributionKind::kGaussianMixture: return modes.size();
    case DistributionKind::kTwoMoons: return 2;
    case DistributionKind::kCheckerboard: return 8;
    case DistributionKind::kUniformBox: return 1;
  }
  return 1;
}

ToyDistribution ToyDistribution::shifted(double dx, double dy) const {
  ToyDistribution d = *this;
  for (auto& m : d.modes) {
    m[0] += dx;
    m[1] += dy;
  }
  d.box_lo = {box_lo[0] + dx, box_lo[1] + dy};
  d.box_hi = {box_hi[0] + dx, box_hi[1] + dy};
  if (kind != DistributionKind::kGaussianMixture && kind != DistributionKind::kUniformBox) {
    throw ValidationError("shifted() supports gaussian-mixture and uniform-box only");
  }
  return d;
}

LabeledPoints sample_data(const ToyDistribution& dist, std::size_t n, std::uint64_t seed) {
  dist.validate();
  if (n == 0) throw ValidationError("sample_data needs n >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> xs(2 * n);
  std::vector<int> labels(n);

  std::vector<double> cumulative(dist.weights.size());
  std::partial_sum(dist.weights.begin(), dist.weights.end(), cumulative.begin());

  for (std::size_t i = 0; i < n; ++i) {
    double x = 0.0, y = 0.0;
    int label = 0;
    switch (dist.kind) {
      case DistributionKind::kGaussianMixture: {
        const double u = unit(rng);
        std::size_t k = 0;
        while (k + 1 < cumulative.size() && u >= cumulative[k]) ++k;
        label = static_cast<int>(k);
        x = dist.modes[k][0] + dist.mode_std * normal(rng);
        y = dist.modes[k][1] + dist.mode_std * normal(rng);
        break;
      }
      case DistributionKind::kTwoMoons: {
        // Two interleaved half circles, centered and scaled to about [-2.5, 2.5] x [-1.5, 1.5].
        label = unit(rng) < 0.5 ? 0 : 1;
        const double t = std::numbers::pi * unit(rng);
        double px = label == 0 ? std::cos(t) : 1.0 - std::cos(t);
        double py = label == 0 ? std::sin(t) : 0.5 - std::sin(t);
        px += dist.noise_scale * normal(rng);
        py += dist.noise_scale * normal(rng);
        x = 2.0 * (px - 0.5);
        y = 2.0 * (py - 0.25);
        break;
      }
      case DistributionKind::kCheckerboard: {
        // Dark cells of a 4x4 board on [-2, 2]^2.
        const auto cell = static_cast<int>(unit(rng) * 8.0);
        label = std::min(cell, 7);
        const int row = label / 2;
        const int col = 2 * (label % 2) + (row % 2);
        x = -2.0 + col + unit(rng);
        y = -2.0 + row + unit(rng);
        break;
      }
      case DistributionKind::kUniformBox:
        x = dist.box_lo[0] + (dist.box_hi[0] - dist.box_lo[0]) * unit(rng);
        y = dist.box_lo[1] + (dist.box_hi[1] - dist.box_lo[1]) * unit(rng);
        break;
    }
    xs[2 * i] = x;
    xs[2 * i + 1] = y;
    labels[i] = label;
  }
  return {ad::Tensor({n, 2}, std::move(xs)), std::move(labels)};
}

ad::Tensor sample_noise(std::size_t n, std::size_t d, std::uint64_t seed) {
  if (n == 0 || d == 0) throw ValidationError("sample_noise needs n, d >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(n * d);
  for (double& x : v) x = normal(rng);
  return ad::Tensor({n, d}, std::move(v));
}

ad::Tensor fixed_memorization_set(std::size_t k, std::uint64_t seed) {
  if (k == 0) throw ValidationError("fixed_memorization_set needs k >= 1");
  std::mt19937_64 rng(seed);
  double half = 3.0;
  std::vector<Point2> points;
  std::size_t attempts = 0;
  while (points.size() < k) {
    std::uniform_real_distribution<double> coord(-half, half);
    const Point2 p{coord(rng), coord(rng)};
    bool ok = true;
    for (const auto& q : points) {
      if (std::hypot(p[0] - q[0], p[1] - q[1]) < 2.0) {
        ok = false;
        break;
      }
    }
    if (ok) points.push_back(p);
    // Crowded box: widen it rather than loop forever.
    if (++attempts % 10000 == 0) half += 1.0;
  }
  std::vector<double> flat;
  for (const auto& p : points) flat.insert(flat.end(), p.begin(), p.end());
  return ad::Tensor({k, 2}, std::move(flat));
}

ad::Tensor constant_points(std::size_t n, Point2 value) {
  std::vector<double> v(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    v[2 * i] = value[0];
    v[2 * i + 1] = value[1];
  }
  return ad::Tensor({n, 2}, std::move(v));
}

std::vector<OodSet> ood_sets(const ToyDistribution& in_distribution, std::size_t n,
                             std::uint64_t seed) {
  std::vector<OodSet> sets;
  sets.push_back({"shifted", sample_data(in_distribution.shifted(8.0, 8.0), n, seed).points});
  sets.push_back(
      {"uniform-box",
       sample_data(ToyDistribution::uniform_box({-8.0, -8.0}, {8.0, 8.0}), n, seed + 1).points});
  sets.push_back({"constant", constant_points(n, {0.0, 0.0})});
  return sets;
}

}  // namespace eqm
