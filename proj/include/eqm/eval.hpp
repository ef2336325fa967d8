#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "eqm/data.hpp"
#include "eqm/sampler.hpp"

namespace eqm {

inline const std::vector<double> kDefaultBandwidths = {0.1, 0.5, 1.0, 2.0, 5.0};

struct NormStats {
  double mean = 0.0;
  double median = 0.0;
  double p5 = 0.0;
  double p95 = 0.0;
  double max = 0.0;
};

NormStats norm_stats(std::vector<double> values);

struct GradNormReport {
  NormStats at_data;
  NormStats at_corrupted;  // gamma = 0.5 corruptions of the same points
  std::vector<double> data_norms;
};

/// Gradient norms at the data points, and at gamma = 0.5 corruptions of them
/// (noise drawn from seed) for contrast.
GradNormReport grad_norm_at_data(const GradientField& field, const ad::Tensor& data,
                                 std::uint64_t seed);

struct MembershipReport {
  double fraction = 0.0;
  ad::Tensor endpoints;
  std::vector<std::size_t> steps_used;
};

/// Runs the sampler from n_inits standard-normal starts and reports the
/// fraction of endpoints within radius of some data point.
MembershipReport local_minima_membership(const GradientField& field, const ad::Tensor& data,
                                         std::size_t n_inits, double radius,
                                         const SamplerConfig& sampler, std::uint64_t seed);

/// L-smooth analytic energy with known infimum.
struct AnalyticEnergy {
  std::size_t dim = 0;
  double lipschitz = 0.0;  // L
  double infimum = 0.0;    // E_inf
  std::function<double(std::span<const double>)> energy;
  std::function<std::vector<double>(std::span<const double>)> gradient;

  /// E(x) = 1/2 x^T A x for symmetric positive semi-definite A; L is its
  /// largest eigenvalue.
  static AnalyticEnergy quadratic(const std::vector<std::vector<double>>& a);
};

struct BoundCheck {
  bool passed = true;
  bool degenerate = false;  // eta = 0: right-hand side infinite
  std::size_t checks = 0;
  std::size_t violations = 0;
  /// min over checks of rhs - lhs (negative means violated).
  double worst_slack = 0.0;
};

/// For each start x0 and each K: min_{k<K} |grad E(x_k)|^2 <= 2 (E(x0) - E_inf) / (eta K)
/// along gradient descent with step eta. Requires 0 <= eta <= 1/L.
BoundCheck convergence_bound_check(const AnalyticEnergy& energy, double eta,
                                   const std::vector<std::size_t>& ks, const ad::Tensor& x0s);

/// Unbiased squared MMD with a sum of RBF kernels. Exactly symmetric in its
/// arguments. Clamp at zero yourself if a non-negative value is needed.
double mmd(const ad::Tensor& samples, const ad::Tensor& reference,
           std::span<const double> bandwidths = kDefaultBandwidths);

struct NullDistribution {
  std::vector<double> values;  // sorted
  double mean = 0.0;
  double stddev = 0.0;
  double quantile(double q) const;
};

/// Permutation null of mmd for the pooled sets, with group sizes preserved.
NullDistribution mmd_permutation_null(const ad::Tensor& a, const ad::Tensor& b,
                                      std::size_t permutations, std::uint64_t seed,
                                      std::span<const double> bandwidths = kDefaultBandwidths);

struct Coverage {
  double covered_modes = 0.0;  // fraction of modes with a sample within radius
  double in_mode = 0.0;        // fraction of samples within radius of some mode
};

Coverage mode_coverage(const ad::Tensor& samples, const std::vector<Point2>& modes, double radius);

/// Rank AUROC treating higher scores as more out-of-distribution; ties count half.
double auroc(std::span<const double> scores_id, std::span<const double> scores_ood);

struct PartialNoiseCurves {
  std::vector<double> gammas;
  std::vector<double> model_mmd;
  std::vector<double> baseline_mmd;
};

/// For each gamma, corrupts held-out points with fresh noise, denoises them
/// with each field and scores the result against reference by mmd.
PartialNoiseCurves partial_noise_sweep(const GradientField& model, const SamplerConfig& model_sampler,
                                       const GradientField& baseline,
                                       const SamplerConfig& baseline_sampler,
                                       const ad::Tensor& held_out, const ad::Tensor& reference,
                                       const std::vector<double>& gammas, std::uint64_t seed);

struct NeighborAudit {
  std::size_t k = 0;
  std::vector<std::vector<double>> distances;  // squared, ascending
  std::vector<std::vector<std::size_t>> indices;
};

NeighborAudit nearest_neighbor_audit(const ad::Tensor& samples, const ad::Tensor& train,
                                     std::size_t k);

// ---------------------------------------------------------------------------

struct EvalReport {
  std::string metric;
  double value = 0.0;
  std::string fingerprint;
  std::uint64_t seed = 0;
  std::vector<double> aux;
};

/// 16 hex digits of FNV-1a over the text.
std::string fingerprint(const std::string& text);

/// Appends reports to a CSV ledger. A (fingerprint, metric) pair already in
/// the ledger is left alone unless force is set, in which case it is replaced.
/// Returns the number of rows written.
std::size_t append_to_ledger(const std::filesystem::path& path,
                             const std::vector<EvalReport>& reports, bool force);

}  // namespace eqm
