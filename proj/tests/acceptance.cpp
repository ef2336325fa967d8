// Acceptance harness: trains the shared 2-D fixtures once, then checks every
// acceptance criterion and prints one PASS/FAIL line each.
//
//   acceptance              all criteria
//   acceptance 8 9 10       a subset (only the fixtures they need are trained)
//   acceptance --strict     exit 1 if any criterion fails
//   acceptance --report F   also write the verdict lines to F
//
// Without --strict the exit status reports harness health only: 0 when every
// requested criterion was evaluated, whatever the verdicts.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdarg>
#include <cstring>
#include <mutex>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "eqm/checkpoint.hpp"
#include "eqm/csv.hpp"
#include "eqm/error.hpp"
#include "eqm/eval.hpp"
#include "eqm/kernels.hpp"
#include "eqm/suite.hpp"

using namespace eqm;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof buf, f, args);
  va_end(args);
  return buf;
}

// ---------------------------------------------------------------------------
// Pinned settings.

constexpr std::size_t kTrainSteps = 20000;
constexpr std::size_t kSamples = 500;
constexpr std::size_t kPermutations = 200;
constexpr double kEtaStar = 0.004;
constexpr std::size_t kFixedSteps = 250;
constexpr double kNagMu = 0.35;
constexpr double kModeStd = 0.05;
const ToyDistribution kRing = ToyDistribution::ring(8, 2.0, kModeStd);

RunConfig ring_config(ObjectiveKind kind, std::size_t width, EnergyKind energy, std::size_t classes,
                      std::uint64_t init_seed) {
  RunConfig c;
  c.data.distribution = kRing;
  c.data.train_size = 20000;
  c.model.hidden = {width, width, width};
  c.model.energy = energy;
  c.model.num_classes = classes;
  c.model.init_seed = init_seed;
  c.objective.kind = kind;
  c.optimizer.lr = 1e-3;
  c.optimizer.decay_steps = kTrainSteps;
  c.train.steps = kTrainSteps;
  c.train.batch_size = 256;
  c.seeds = {1, 11 + init_seed, 3};
  return c;
}

RunConfig memorization_config() {
  RunConfig c;
  c.data.source = DataSource::kMemorization;
  c.data.memorization_points = 8;
  c.model.hidden = {64, 64, 64};
  c.model.init_seed = 7;
  c.optimizer.lr = 2e-3;
  c.optimizer.decay_steps = kTrainSteps;
  c.train.steps = kTrainSteps;
  c.train.batch_size = 256;
  c.seeds = {1, 11, 3};
  return c;
}

struct Fixture {
  std::string name;
  RunConfig config;
  std::optional<Checkpoint> ckpt;
  double train_seconds = 0.0;
};

// ---------------------------------------------------------------------------

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Shared {
  std::map<std::string, Fixture> fixtures;
  ad::Tensor held_out, reference2, x0;
  std::optional<NullDistribution> null;

  const Checkpoint& ckpt(const std::string& name) const { return *fixtures.at(name).ckpt; }
  double train_seconds(const std::string& name) const { return fixtures.at(name).train_seconds; }
  const NullDistribution& ring_null() {
    if (!null) null = mmd_permutation_null(held_out, reference2, kPermutations, 4001);
    return *null;
  }
};

SamplerConfig gd(double eta = kEtaStar, std::size_t steps = kFixedSteps) {
  SamplerConfig s;
  s.eta = eta;
  s.steps = steps;
  return s;
}

// Criterion 1 ----------------------------------------------------------------

ad::Tensor random_tensor(const ad::Shape& shape, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(ad::shape_numel(shape));
  for (double& x : v) x = d(rng);
  return ad::Tensor(shape, std::move(v));
}

ad::Tensor with_value(const ad::Tensor& t, std::size_t i, double value) {
  std::vector<double> v(t.values().begin(), t.values().end());
  v[i] = value;
  return ad::Tensor(t.shape(), std::move(v));
}

double relative_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  return scale == 0.0 ? std::sqrt(diff) : std::sqrt(diff) / scale;
}

// Parameter gradient of a loss against central differences, all tensors.
double param_fd_error(const GradientFieldModel& m,
                      const std::function<ad::Tensor(const ModelView&, ad::Graph&)>& loss) {
  ad::Graph g;
  const ParameterSet bound = m.parameters().bind(g);
  const ModelConfig cfg = m.config();
  const ParameterSet grads = bound.gradients(ad::backward(loss(ModelView{&cfg, &bound}, g)));
  std::vector<double> analytic, fd;
  for (const auto& [name, p] : m.parameters().entries()) {
    const auto& ga = grads.get(name);
    analytic.insert(analytic.end(), ga.values().begin(), ga.values().end());
    for (std::size_t i = 0; i < p.numel(); ++i) {
      auto eval = [&](double value) {
        GradientFieldModel q = m;
        q.set_parameter(name, with_value(p, i, value));
        ad::Graph gg;
        return loss(q.view(), gg).item();
      };
      const double h = 1e-5;
      fd.push_back((eval(p[i] + h) - eval(p[i] - h)) / (2 * h));
    }
  }
  return relative_error(analytic, fd);
}

Verdict criterion1() {
  double worst_first = 0.0, worst_second = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    TrainBatch b;
    b.x = random_tensor({6, 2}, rng, -2, 2);
    b.eps = random_tensor({6, 2}, rng, -2, 2);
    b.gamma = random_tensor({6}, rng, 0, 1);
    const Schedule s = Schedule::truncated(0.8, 4.0);

    ModelConfig plain;
    plain.hidden = {8, 8};
    plain.init_seed = seed;
    const auto m = GradientFieldModel::init(plain);
    worst_first = std::max(worst_first, param_fd_error(m, [&](const ModelView& v, ad::Graph&) {
                             return eqm_loss(v, b, s);
                           }));

    // Input gradient of the energy (first order) and parameter gradient of
    // the EqM-E loss, which differentiates through that input gradient.
    ModelConfig energy = plain;
    energy.energy = seed % 2 ? EnergyKind::kDot : EnergyKind::kL2Norm;
    const auto me = GradientFieldModel::init(energy);
    const ad::Tensor x = random_tensor({4, 2}, rng, -2, 2);
    const ad::Tensor gx = me.energy_gradient(x);
    std::vector<double> fd(x.numel());
    for (std::size_t i = 0; i < x.numel(); ++i) {
      auto e = [&](double value) {
        const ad::Tensor en = me.energy(with_value(x, i, value));
        return std::accumulate(en.values().begin(), en.values().end(), 0.0);
      };
      fd[i] = (e(x[i] + 1e-5) - e(x[i] - 1e-5)) / 2e-5;
    }
    worst_first = std::max(worst_first, relative_error(gx.values(), fd));
    worst_second = std::max(worst_second, param_fd_error(me, [&](const ModelView& v, ad::Graph& g) {
                              return eqme_loss(v, g, b, s);
                            }));
  }
  return {worst_first < 1e-6 && worst_second < 1e-4,
          fmt("max rel err first-order %.2e (< 1e-6), second-order %.2e (< 1e-4), 100 seeds",
              worst_first, worst_second)};
}

// Criterion 2 ----------------------------------------------------------------

Verdict criterion2() {
  double worst = 0.0;
  auto check = [&](double got, double want) { worst = std::max(worst, std::abs(got - want)); };
  check(Schedule::linear().eval(0.5), 0.5);
  check(Schedule::truncated(0.8).eval(0.9), 0.5);
  check(Schedule::piecewise(0.8, 1.4).eval(0.4), 1.2);
  check(Schedule::linear().eval(1.0), 0.0);
  check(Schedule::truncated(0.8).eval(1.0), 0.0);
  check(Schedule::piecewise(0.8, 1.4).eval(1.0), 0.0);
  return {worst <= 1e-12, fmt("max abs deviation %.1e (<= 1e-12)", worst)};
}

// Criterion 3 ----------------------------------------------------------------

Verdict criterion3() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed + 100);
    ModelConfig c;
    c.hidden = {16, 16};
    c.init_seed = seed;
    const auto f = GradientFieldModel::init(c);
    GradientFieldModel neg = f;
    const std::size_t last = c.hidden.size();
    for (const char* part : {"weight", "bias"}) {
      const std::string name = "layers." + std::to_string(last) + "." + part;
      const ad::Tensor& p = f.parameters().get(name);
      std::vector<double> v(p.values().begin(), p.values().end());
      for (double& x : v) x = -x;
      neg.set_parameter(name, ad::Tensor(p.shape(), std::move(v)));
    }
    TrainBatch b;
    b.x = random_tensor({32, 2}, rng, -3, 3);
    b.eps = random_tensor({32, 2}, rng, -3, 3);
    b.gamma = random_tensor({32}, rng, 0, 1);
    const double eqm = eqm_loss(f.view(), b, Schedule::constant(1.0), true).item();
    const double fm = uncond_fm_loss(neg.view(), b).item();
    worst = std::max(worst, std::abs(eqm - fm));
  }
  return {worst <= 1e-12, fmt("max |EqM(f) - FM(-f)| = %.1e over 50 batches (<= 1e-12)", worst)};
}

// Criterion 4 ----------------------------------------------------------------

bool same_states(const Trajectory& a, const Trajectory& b) {
  if (a.states.size() != b.states.size()) return false;
  for (std::size_t k = 0; k < a.states.size(); ++k) {
    const auto x = a.states[k].values(), y = b.states[k].values();
    if (!std::equal(x.begin(), x.end(), y.begin(), y.end())) return false;
  }
  return true;
}

Verdict criterion4(Shared& s) {
  const auto field = field_of(s.ckpt("eqm"));
  bool ok = true;
  std::size_t compared = 0;
  for (double eta : {0.002, kEtaStar, 0.01}) {
    SamplerConfig g = gd(eta);
    g.record_states = true;
    SamplerConfig nag = g;
    nag.method = SamplerMethod::kNAG;
    SamplerConfig ode = g;
    ode.method = SamplerMethod::kEulerODE;
    const auto tg = sample(*field, s.x0, g);
    ok = ok && same_states(tg, sample(*field, s.x0, nag)) && same_states(tg, sample(*field, s.x0, ode));
    compared += 2 * tg.states.size();
  }
  return {ok, fmt("NAG(mu=0) and Euler-ODE(h=eta) vs GD: %zu states of 500 samples, %s", compared,
                  ok ? "all bit-identical" : "MISMATCH")};
}

// Criterion 5 ----------------------------------------------------------------

Verdict criterion5() {
  const auto t0 = Clock::now();
  const std::vector<std::vector<std::vector<double>>> mats = {
      {{1.0, 0.0}, {0.0, 1.0}},
      {{4.0, 1.0}, {1.0, 2.0}},
      {{10.0, 0.0}, {0.0, 0.1}},
      {{3.0, -1.5}, {-1.5, 3.0}}};
  const ad::Tensor x0 = sample_noise(50, 2, 5001);
  std::size_t checks = 0, violations = 0;
  double slack = std::numeric_limits<double>::infinity();
  for (const auto& a : mats) {
    const auto e = AnalyticEnergy::quadratic(a);
    for (double frac : {0.1, 0.5, 1.0}) {
      const auto r = convergence_bound_check(e, frac / e.lipschitz, {1, 10, 100, 1000}, x0);
      checks += r.checks;
      violations += r.violations;
      slack = std::min(slack, r.worst_slack);
    }
  }
  const double secs = seconds_since(t0);
  return {violations == 0 && secs < 10.0,
          fmt("%zu violations in %zu checks (worst slack %.3g), %.2f s (< 10 s)", violations, checks,
              slack, secs)};
}

// Criteria 6, 7 --------------------------------------------------------------

Verdict criterion6(Shared& s) {
  const auto t0 = Clock::now();
  const Checkpoint& c = s.ckpt("memorization");
  const auto field = field_of(c);
  const auto gn = grad_norm_at_data(*field, training_set(c.config).points, 6001);
  const double ratio = gn.at_data.mean / gn.at_corrupted.mean;
  const double secs = s.train_seconds("memorization") + seconds_since(t0);
  return {ratio <= 0.1 && secs < 180.0,
          fmt("mean |f| at data %.4f / at gamma=0.5 %.4f = %.4f (<= 0.1), %.1f s incl. training (< 180 s)",
              gn.at_data.mean, gn.at_corrupted.mean, ratio, secs)};
}

Verdict criterion7(Shared& s) {
  const auto t0 = Clock::now();
  const Checkpoint& c = s.ckpt("memorization");
  const auto field = field_of(c);
  const ad::Tensor data = training_set(c.config).points;
  // Threshold calibrated on the trained model: 5th percentile of |grad| at the data.
  const double g_min = grad_norm_at_data(*field, data, 6001).at_data.p5;
  SamplerConfig ad;
  ad.method = SamplerMethod::kAdaptive;
  ad.g_min = g_min;
  ad.max_steps = 1000;
  const auto m = local_minima_membership(*field, data, 512, 0.25, ad, 7001);
  const double secs = seconds_since(t0);
  return {m.fraction >= 0.95 && secs < 60.0,
          fmt("%.4f of 512 adaptive endpoints within 0.25 of a training point (>= 0.95), g_min=%.4g, %.2f s",
              m.fraction, g_min, secs)};
}

// Criteria 8-11, 13 ----------------------------------------------------------

double ring_mmd(Shared& s, const GradientField& f, const SamplerConfig& cfg, const ad::Tensor& x0) {
  return mmd(sample(f, x0, cfg).final, s.held_out);
}

Verdict criterion8(Shared& s) {
  const auto t0 = Clock::now();
  const auto field = field_of(s.ckpt("eqm"));
  const auto samples = sample(*field, s.x0, gd()).final;
  const auto cov = mode_coverage(samples, kRing.modes, 3 * kModeStd);
  const double d = mmd(samples, s.held_out);
  const double threshold = s.ring_null().quantile(0.99);
  const double secs = s.train_seconds("eqm") + seconds_since(t0);
  return {cov.covered_modes == 1.0 && d < threshold && secs < 300.0,
          fmt("modes covered %.3f (= 1), in-mode %.3f, mmd %.5f vs null99 %.5f (must be below): %s, %.1f s incl. training (< 300 s)",
              cov.covered_modes, cov.in_mode, d, threshold, d < threshold ? "ok" : "no", secs)};
}

Verdict criterion9(Shared& s) {
  const auto eqm = field_of(s.ckpt("eqm"));
  const auto fm = field_of(s.ckpt("fm"));
  std::vector<double> e, f;
  for (double eta : {0.5 * kEtaStar, kEtaStar, 2 * kEtaStar}) {
    e.push_back(ring_mmd(s, *eqm, gd(eta), s.x0));
    SamplerConfig ode = gd(eta);
    ode.method = SamplerMethod::kEulerODE;
    f.push_back(ring_mmd(s, *fm, ode, s.x0));
  }
  const double emax = *std::max_element(e.begin(), e.end()), emin = *std::min_element(e.begin(), e.end());
  const bool eqm_ok = emin > 0 && emax < 2 * emin;
  const bool fm_ok = f[0] > 2 * f[1] && f[2] > 2 * f[1];
  return {eqm_ok && fm_ok,
          fmt("EqM mmd {%.5f, %.5f, %.5f} max/min %.2f (< 2): %s; FM mmd {%.5f, %.5f, %.5f} "
              "ratios to eta* %.2f, %.2f (> 2 both): %s",
              e[0], e[1], e[2], emax / emin, eqm_ok ? "ok" : "no", f[0], f[1], f[2], f[0] / f[1],
              f[2] / f[1], fm_ok ? "ok" : "no")};
}

Verdict criterion10(Shared& s) {
  const Checkpoint& c = s.ckpt("eqm");
  const auto field = field_of(c);
  const double fixed = ring_mmd(s, *field, gd(), s.x0);
  const double g_min = grad_norm_at_data(*field, training_set(c.config).points, 6001).at_data.p5;
  SamplerConfig ad = gd();
  ad.method = SamplerMethod::kAdaptive;
  ad.g_min = g_min;
  ad.max_steps = 1000;
  const auto t = sample(*field, s.x0, ad);
  const double d = mmd(t.final, s.held_out);
  const double budget = static_cast<double>(kSamples * kFixedSteps);
  const double frac = static_cast<double>(t.grad_evals) / budget;
  double mean = 0, var = 0;
  for (auto k : t.steps_used) mean += static_cast<double>(k);
  mean /= static_cast<double>(t.steps_used.size());
  for (auto k : t.steps_used) var += (static_cast<double>(k) - mean) * (static_cast<double>(k) - mean);
  const double sd = std::sqrt(var / static_cast<double>(t.steps_used.size()));
  return {d <= 1.25 * fixed && frac <= 0.6 && sd > 0,
          fmt("adaptive mmd %.5f vs fixed %.5f (ratio %.3f <= 1.25), gradient evals %.3f of fixed (<= 0.6), "
              "steps mean %.1f sd %.1f (> 0), g_min=%.4g",
              d, fixed, d / fixed, frac, mean, sd, g_min)};
}

Verdict criterion11(Shared& s) {
  const auto field = field_of(s.ckpt("eqm"));
  int wins = 0;
  std::string per;
  for (std::uint64_t seed : {11001, 11002, 11003}) {
    const ad::Tensor x0 = sample_noise(kSamples, 2, seed);
    SamplerConfig g = gd(kEtaStar, 25);
    SamplerConfig n = g;
    n.method = SamplerMethod::kNAG;
    n.mu = kNagMu;
    const double dg = ring_mmd(s, *field, g, x0), dn = ring_mmd(s, *field, n, x0);
    wins += dn <= dg;
    per += fmt(" [gd %.5f nag %.5f]", dg, dn);
  }
  return {wins >= 2, fmt("NAG <= GD in %d/3 seeds at 25 steps (>= 2):%s", wins, per.c_str())};
}

Verdict criterion13(Shared& s) {
  const auto eqm = field_of(s.ckpt("eqm"));
  const auto fm = field_of(s.ckpt("fm"));
  SamplerConfig ode = gd();
  ode.method = SamplerMethod::kEulerODE;
  const ad::Tensor held = sample_data(kRing, kSamples, 13001).points;
  const auto c = partial_noise_sweep(*eqm, gd(), *fm, ode, held, s.held_out, {0.0, 0.5, 0.8}, 13002);
  const double tol = s.ring_null().stddev;
  const bool eqm_ok = c.model_mmd[1] <= c.model_mmd[0] + tol && c.model_mmd[2] <= c.model_mmd[1] + tol;
  const bool fm_ok = c.baseline_mmd[1] > c.baseline_mmd[0];
  return {eqm_ok && fm_ok,
          fmt("EqM mmd gamma 0/0.5/0.8 = %.5f/%.5f/%.5f non-increasing within null sd %.5f: %s; "
              "FM %.5f -> %.5f at gamma 0.5 degrades: %s",
              c.model_mmd[0], c.model_mmd[1], c.model_mmd[2], tol, eqm_ok ? "ok" : "no",
              c.baseline_mmd[0], c.baseline_mmd[1], fm_ok ? "ok" : "no")};
}

// Criterion 12 ---------------------------------------------------------------

Verdict criterion12(Shared& s) {
  const auto model = s.ckpt("eqme").model();
  const ad::Tensor eid = model.energy(s.held_out);
  const double mean_id = std::accumulate(eid.values().begin(), eid.values().end(), 0.0) /
                         static_cast<double>(eid.numel());
  bool ok = true;
  std::string per;
  for (const auto& set : ood_sets(kRing, kSamples, 12001)) {
    const ad::Tensor e = model.energy(set.points);
    const double a = auroc(eid.values(), e.values());
    const double mean = std::accumulate(e.values().begin(), e.values().end(), 0.0) /
                        static_cast<double>(e.numel());
    const double need = set.name == "constant" ? 0.99 : 0.9;
    ok = ok && a >= need && mean_id < mean;
    per += fmt(" %s auroc %.4f (>= %.2f) energy %.3f;", set.name.c_str(), a, need, mean);
  }
  return {ok, fmt("ID energy %.3f;%s", mean_id, per.c_str())};
}

// Criterion 14 ---------------------------------------------------------------

Verdict criterion14(Shared& s) {
  const Checkpoint& c = s.ckpt("cond");
  const auto model = c.model();
  const int l1 = 0, l2 = 1;  // adjacent ring components
  const auto composed = compose({field_of(c, l1), field_of(c, l2)});
  const ad::Tensor xc = sample(*composed, s.x0, gd()).final;
  const auto cov = mode_coverage(xc, {kRing.modes[l1], kRing.modes[l2]}, 3 * kModeStd);

  auto energy_sum = [&](const ad::Tensor& x) {
    const ad::Tensor e1 = model.energy(x, Conditioning::label(l1, x.dim(0)));
    const ad::Tensor e2 = model.energy(x, Conditioning::label(l2, x.dim(0)));
    std::vector<double> out(x.dim(0));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = e1[i] + e2[i];
    return out;
  };
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  std::vector<double> single = energy_sum(sample(*field_of(c, l1), s.x0, gd()).final);
  const auto single2 = energy_sum(sample(*field_of(c, l2), s.x0, gd()).final);
  single.insert(single.end(), single2.begin(), single2.end());
  const double m_comp = median(energy_sum(xc)), m_single = median(single);

  double cx = 0, cy = 0;
  for (std::size_t i = 0; i < xc.dim(0); ++i) {
    cx += xc[2 * i];
    cy += xc[2 * i + 1];
  }
  cx /= static_cast<double>(xc.dim(0));
  cy /= static_cast<double>(xc.dim(0));
  const bool region_ok = cov.in_mode >= 0.9, energy_ok = m_comp < m_single;
  return {region_ok && energy_ok,
          fmt("in 3sigma region of label %d or %d: %.3f (>= 0.9): %s; median energy sum composed %.3f < "
              "single-label %.3f: %s; composed mean position (%.3f, %.3f)",
              l1, l2, cov.in_mode, region_ok ? "ok" : "no", m_comp, m_single, energy_ok ? "ok" : "no",
              cx, cy)};
}

// Criterion 15 ---------------------------------------------------------------

Verdict criterion15(Shared& s, Clock::time_point start, bool full_run) {
  // Checkpoint round trip on a trained fixture.
  const Checkpoint& c = s.ckpt("eqm");
  const auto bytes = serialize(c);
  const Checkpoint back = deserialize(bytes);
  const bool roundtrip = serialize(back) == bytes && back.params.identical(c.params);

  // Identical seeds: loss curves, resume, and sample CSV text.
  RunConfig small = ring_config(ObjectiveKind::kEqM, 32, EnergyKind::kNone, 0, 5);
  small.train.steps = 300;
  small.optimizer.decay_steps = 300;
  Trainer a = make_trainer(small), b = make_trainer(small);
  const auto la = a.run(300), lb = b.run(300);
  const bool curves = la == lb;
  Trainer r1 = make_trainer(small);
  r1.run(150);
  Trainer r2 = resume_trainer(deserialize(serialize(snapshot(small, r1))));
  const auto tail = r2.run(150);
  const bool resume = std::equal(tail.begin(), tail.end(), la.begin() + 150);
  const auto field = field_of(c);
  const std::string csv1 = csv::to_string(csv::points_table(sample(*field, sample_noise(200, 2, 15001), gd()).final));
  const std::string csv2 = csv::to_string(csv::points_table(sample(*field, sample_noise(200, 2, 15001), gd()).final));
  const bool samples = csv1 == csv2;

  const double secs = seconds_since(start);
  const int threads = static_cast<int>(std::thread::hardware_concurrency());
  const bool time_ok = !full_run || secs < 900.0;
  return {roundtrip && curves && resume && samples && time_ok,
          fmt("checkpoint round trip %s, loss curves %s, resume %s, sample CSV %s; suite wall time %.1f s "
              "(< 900 s%s) on %d hardware thread(s)",
              roundtrip ? "bit-exact" : "DIFFERS", curves ? "identical" : "DIFFER",
              resume ? "bit-exact" : "DIFFERS", samples ? "identical" : "DIFFER", secs,
              full_run ? "" : ", partial run: not judged", threads)};
}

// ---------------------------------------------------------------------------

const std::map<int, std::vector<std::string>> kNeeds = {
    {4, {"eqm"}},  {6, {"memorization"}}, {7, {"memorization"}}, {8, {"eqm"}},
    {9, {"eqm", "fm"}}, {10, {"eqm"}}, {11, {"eqm"}}, {12, {"eqme"}},
    {13, {"eqm", "fm"}}, {14, {"cond"}}, {15, {"eqm"}},
};

const char* kTitles[] = {"",
                         "autodiff vs finite differences",
                         "schedule exactness",
                         "negation duality",
                         "sampler identities",
                         "descent bound on quadratics",
                         "memorization: field vanishes at data",
                         "memorization: endpoints are training points",
                         "generation quality",
                         "step-size robustness",
                         "adaptive compute",
                         "NAG benefit",
                         "OOD detection",
                         "partial-noise denoising",
                         "composition",
                         "engineering"};

}  // namespace

int main(int argc, char** argv) {
  const auto start = Clock::now();
  bool strict = false;
  std::string report_path;
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--strict") == 0) {
      strict = true;
    } else if (std::strcmp(argv[i], "--report") == 0 && i + 1 < argc) {
      report_path = argv[++i];
    } else {
      const int n = std::atoi(argv[i]);
      if (n < 1 || n > 15) {
        std::fprintf(stderr, "unknown argument '%s'\n", argv[i]);
        return 2;
      }
      wanted.insert(n);
    }
  }
  const bool full_run = wanted.empty();
  if (full_run) for (int n = 1; n <= 15; ++n) wanted.insert(n);

  Shared s;
  s.held_out = sample_data(kRing, kSamples, 1001).points;
  s.reference2 = sample_data(kRing, kSamples, 1002).points;
  s.x0 = sample_noise(kSamples, 2, 2001);

  const std::vector<Fixture> all = {
      {"memorization", memorization_config(), {}, 0.0},
      {"eqm", ring_config(ObjectiveKind::kEqM, 128, EnergyKind::kNone, 0, 7), {}, 0.0},
      {"fm", ring_config(ObjectiveKind::kUncondFM, 128, EnergyKind::kNone, 0, 7), {}, 0.0},
      {"eqme", ring_config(ObjectiveKind::kEqME, 64, EnergyKind::kDot, 0, 8), {}, 0.0},
      {"cond", ring_config(ObjectiveKind::kEqME, 64, EnergyKind::kDot, 8, 9), {}, 0.0},
  };
  std::set<std::string> needed;
  for (int n : wanted) {
    if (auto it = kNeeds.find(n); it != kNeeds.end()) needed.insert(it->second.begin(), it->second.end());
  }
  std::vector<Fixture*> to_train;
  for (const auto& f : all) {
    if (needed.count(f.name)) {
      s.fixtures[f.name] = f;
      to_train.push_back(&s.fixtures[f.name]);
    }
  }

  // Each fixture trains on its own thread; kernels inside get an even share of
  // the cores. Results do not depend on the split.
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t lanes = std::min<std::size_t>(to_train.size(), hw);
  std::printf("training %zu fixture(s) on %u hardware thread(s), %zu at a time\n", to_train.size(), hw, lanes);
  std::fflush(stdout);
  std::vector<std::string> errors;
  std::mutex mu;
  std::size_t next = 0;
  auto worker = [&] {
    kernels::set_threads(static_cast<int>(std::max<std::size_t>(1, hw / std::max<std::size_t>(1, lanes))));
    for (;;) {
      Fixture* f;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= to_train.size()) return;
        f = to_train[next++];
      }
      try {
        const auto t0 = Clock::now();
        Trainer t = make_trainer(f->config);
        t.run(f->config.train.steps);
        f->ckpt = snapshot(f->config, t);
        f->train_seconds = seconds_since(t0);
        std::lock_guard<std::mutex> lock(mu);
        std::printf("  trained %-12s %6.1f s\n", f->name.c_str(), f->train_seconds);
        std::fflush(stdout);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(mu);
        errors.push_back(f->name + ": " + e.what());
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t i = 0; i < lanes; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  kernels::set_threads(static_cast<int>(hw));
  if (!errors.empty()) {
    for (const auto& e : errors) std::fprintf(stderr, "fixture training failed: %s\n", e.c_str());
    return 2;
  }

  int passed = 0, evaluated = 0;
  std::string report;
  for (int n : wanted) {
    const auto t0 = Clock::now();
    Verdict v;
    try {
      switch (n) {
        case 1: v = criterion1(); break;
        case 2: v = criterion2(); break;
        case 3: v = criterion3(); break;
        case 4: v = criterion4(s); break;
        case 5: v = criterion5(); break;
        case 6: v = criterion6(s); break;
        case 7: v = criterion7(s); break;
        case 8: v = criterion8(s); break;
        case 9: v = criterion9(s); break;
        case 10: v = criterion10(s); break;
        case 11: v = criterion11(s); break;
        case 12: v = criterion12(s); break;
        case 13: v = criterion13(s); break;
        case 14: v = criterion14(s); break;
        case 15: v = criterion15(s, start, full_run); break;
      }
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    ++evaluated;
    passed += v.pass;
    const std::string line = fmt("criterion %2d %s  %s: %s [%.1f s]\n", n, v.pass ? "PASS" : "FAIL",
                                 kTitles[n], v.detail.c_str(), seconds_since(t0));
    std::fputs(line.c_str(), stdout);
    report += line;
    std::fflush(stdout);
  }
  const std::string summary =
      fmt("summary: %d/%d criteria passed, %.1f s total\n", passed, evaluated, seconds_since(start));
  std::fputs(summary.c_str(), stdout);
  if (!report_path.empty()) {
    std::FILE* out = std::fopen(report_path.c_str(), "w");
    if (!out) {
      std::fprintf(stderr, "cannot write %s\n", report_path.c_str());
      return 2;
    }
    std::fputs((report + summary).c_str(), out);
    std::fclose(out);
  }
  if (strict && passed != evaluated) return 1;
  return 0;
}
