#include "eqm/suite.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "eqm/error.hpp"

namespace eqm {

namespace {

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) { return batch_seed(seed, salt); }

bool is_flow(const Checkpoint& c) {
  return c.config.objective.kind == ObjectiveKind::kFM ||
         c.config.objective.kind == ObjectiveKind::kUncondFM;
}

// Keeps the model alive for as long as the field is.
class OwningField : public GradientField {
 public:
  OwningField(GradientFieldModel model, FieldOptions options)
      : model_(std::make_shared<GradientFieldModel>(std::move(model))), field_(*model_, options) {}
  ad::Tensor gradient(const ad::Tensor& x, double t) const override { return field_.gradient(x, t); }
  std::size_t dim() const override { return field_.dim(); }

 private:
  std::shared_ptr<GradientFieldModel> model_;
  ModelField field_;
};

EvalReport report(const std::string& metric, double value, const std::string& fp,
                  std::uint64_t seed, std::vector<double> aux = {}) {
  return {metric, value, fp, seed, std::move(aux)};
}

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

void require(const Checkpoint* ckpt, const std::string& suite) {
  if (!ckpt) throw ValidationError("suite '" + suite + "' needs a checkpoint");
}

}  // namespace

std::shared_ptr<const GradientField> field_of(const Checkpoint& ckpt, std::optional<int> label) {
  return std::make_shared<OwningField>(ckpt.model(), FieldOptions{label, is_flow(ckpt)});
}

ad::Tensor reference_set(const RunConfig& config, std::size_t n, std::uint64_t seed) {
  if (config.data.source == DataSource::kMemorization) return training_set(config).points;
  return sample_data(config.data.distribution, n, seed).points;
}

SamplerConfig default_sampler(const Checkpoint& ckpt) {
  SamplerConfig s = ckpt.config.sampler;
  if (is_flow(ckpt) && s.method == SamplerMethod::kGD) s.method = SamplerMethod::kEulerODE;
  return s;
}

std::string suite_fingerprint(const std::string& suite, const Checkpoint* ckpt,
                              const SuiteOptions& o) {
  std::string key = suite + "|n=" + std::to_string(o.n) + "|perm=" + std::to_string(o.permutations);
  if (ckpt) key += "|ckpt=" + sha256_hex(serialize(*ckpt));
  if (o.baseline) key += "|baseline=" + sha256_hex(serialize(*o.baseline));
  if (o.sampler) {
    RunConfig tmp;
    tmp.sampler = *o.sampler;
    key += "|sampler=" + to_json(tmp);
  }
  return fingerprint(key);
}

std::vector<EvalReport> run_suite(const std::string& suite, const Checkpoint* ckpt,
                                  const SuiteOptions& o) {
  if (std::find(kSuites.begin(), kSuites.end(), suite) == kSuites.end()) {
    throw ValidationError("unknown suite '" + suite + "'");
  }
  if (o.n == 0) throw ValidationError("suite sample count must be >= 1");
  const std::string fp = suite_fingerprint(suite, ckpt, o);
  std::vector<EvalReport> out;

  auto sampler_for = [&](const Checkpoint& c) { return o.sampler ? *o.sampler : default_sampler(c); };
  auto unconditional = [&](const Checkpoint& c) {
    if (c.config.model.num_classes > 0) {
      throw ValidationError("suite '" + suite + "' needs an unconditional checkpoint");
    }
  };

  if (suite == "statements") {
    // Descent bound on quadratics with known smoothness.
    const std::vector<std::vector<std::vector<double>>> mats = {
        {{1.0, 0.0}, {0.0, 1.0}}, {{4.0, 1.0}, {1.0, 2.0}}, {{10.0, 0.0}, {0.0, 0.1}}};
    std::size_t checks = 0, violations = 0;
    double slack = std::numeric_limits<double>::infinity();
    const ad::Tensor x0 = sample_noise(50, 2, mix(o.seed, 1));
    for (const auto& a : mats) {
      const auto e = AnalyticEnergy::quadratic(a);
      for (double frac : {0.1, 0.5, 1.0}) {
        const auto r = convergence_bound_check(e, frac / e.lipschitz, {1, 10, 100, 1000}, x0);
        checks += r.checks;
        violations += r.violations;
        slack = std::min(slack, r.worst_slack);
      }
    }
    out.push_back(report("bound_violations", static_cast<double>(violations), fp, o.seed,
                         {static_cast<double>(checks), slack}));
    if (ckpt) {
      unconditional(*ckpt);
      const auto field = field_of(*ckpt);
      const ad::Tensor data = training_set(ckpt->config).points;
      const auto gn = grad_norm_at_data(*field, data, mix(o.seed, 2));
      out.push_back(report("grad_norm_ratio", gn.at_data.mean / gn.at_corrupted.mean, fp, o.seed,
                           {gn.at_data.mean, gn.at_corrupted.mean}));
      SamplerConfig ad = sampler_for(*ckpt);
      if (ad.method != SamplerMethod::kAdaptive) {
        ad.method = SamplerMethod::kAdaptive;
        ad.mu = 0.0;
        ad.g_min = 1e-3;
      }
      const auto m = local_minima_membership(*field, data, o.n, 0.25, ad, mix(o.seed, 3));
      out.push_back(report("minima_membership", m.fraction, fp, o.seed, {0.25}));
    }
  } else if (suite == "quality") {
    require(ckpt, suite);
    unconditional(*ckpt);
    const auto field = field_of(*ckpt);
    const ad::Tensor x0 = sample_noise(o.n, 2, mix(o.seed, 1));
    const auto traj = sample(*field, x0, sampler_for(*ckpt));
    const ad::Tensor ref = reference_set(ckpt->config, o.n, mix(o.seed, 2));
    const ad::Tensor ref2 = reference_set(ckpt->config, o.n, mix(o.seed, 3));
    const auto null = mmd_permutation_null(ref, ref2, o.permutations, mix(o.seed, 4));
    out.push_back(report("mmd", mmd(traj.final, ref), fp, o.seed,
                         {null.quantile(0.99), null.mean, null.stddev}));
    const auto& d = ckpt->config.data.distribution;
    if (ckpt->config.data.source == DataSource::kDistribution &&
        d.kind == DistributionKind::kGaussianMixture) {
      const auto cov = mode_coverage(traj.final, d.modes, 3.0 * d.mode_std);
      out.push_back(report("mode_coverage", cov.covered_modes, fp, o.seed, {cov.in_mode}));
    } else {
      std::vector<Point2> pts;
      for (std::size_t i = 0; i < ref.dim(0); ++i) pts.push_back({ref[2 * i], ref[2 * i + 1]});
      const auto cov = mode_coverage(traj.final, pts, 0.25);
      out.push_back(report("mode_coverage", cov.covered_modes, fp, o.seed, {cov.in_mode}));
    }
  } else if (suite == "ood") {
    require(ckpt, suite);
    unconditional(*ckpt);
    if (ckpt->config.model.energy == EnergyKind::kNone) {
      throw ValidationError("ood suite needs an energy model (energy kind dot or l2norm)");
    }
    const auto model = ckpt->model();
    const ad::Tensor id = reference_set(ckpt->config, o.n, mix(o.seed, 1));
    const ad::Tensor eid = model.energy(id);
    const double mean_id = mean_of(eid.values());
    for (const auto& s : ood_sets(ckpt->config.data.distribution, o.n, mix(o.seed, 2))) {
      const ad::Tensor e = model.energy(s.points);
      out.push_back(report("auroc_" + s.name, auroc(eid.values(), e.values()), fp, o.seed,
                           {mean_id, mean_of(e.values())}));
    }
  } else if (suite == "partial-noise") {
    require(ckpt, suite);
    if (!o.baseline) throw ValidationError("partial-noise suite needs a baseline checkpoint");
    unconditional(*ckpt);
    unconditional(*o.baseline);
    const auto model = field_of(*ckpt);
    const auto base = field_of(*o.baseline);
    const ad::Tensor held = reference_set(ckpt->config, o.n, mix(o.seed, 1));
    const ad::Tensor ref = reference_set(ckpt->config, o.n, mix(o.seed, 2));
    const auto curves = partial_noise_sweep(*model, sampler_for(*ckpt), *base,
                                            default_sampler(*o.baseline), held, ref,
                                            {0.0, 0.5, 0.8}, mix(o.seed, 3));
    for (std::size_t i = 0; i < curves.gammas.size(); ++i) {
      char g[16];
      std::snprintf(g, sizeof g, "%.1f", curves.gammas[i]);
      out.push_back(report(std::string("mmd_model_gamma_") + g, curves.model_mmd[i], fp, o.seed));
      out.push_back(report(std::string("mmd_baseline_gamma_") + g, curves.baseline_mmd[i], fp, o.seed));
    }
  } else if (suite == "nn-audit") {
    require(ckpt, suite);
    unconditional(*ckpt);
    const auto field = field_of(*ckpt);
    const auto traj = sample(*field, sample_noise(o.n, 2, mix(o.seed, 1)), sampler_for(*ckpt));
    const ad::Tensor train = training_set(ckpt->config).points;
    const auto audit = nearest_neighbor_audit(traj.final, train, 1);
    std::vector<double> d;
    for (const auto& row : audit.distances) d.push_back(std::sqrt(row[0]));
    const auto stats = norm_stats(d);
    out.push_back(report("nn_distance_mean", stats.mean, fp, o.seed, {stats.median, stats.p5, stats.max}));
    const double copies = static_cast<double>(std::count_if(d.begin(), d.end(), [](double v) { return v < 1e-3; }));
    out.push_back(report("nn_copy_fraction", copies / static_cast<double>(d.size()), fp, o.seed, {1e-3}));
  }
  return out;
}

}  // namespace eqm
