#include "eqm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "eqm/csv.hpp"
#include "eqm/error.hpp"
#include "eqm/kernels.hpp"
#include "eqm/objective.hpp"

namespace eqm {

namespace {

double percentile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::vector<double> row_norms(const ad::Tensor& g) {
  std::vector<double> out(g.dim(0));
  for (std::size_t i = 0; i < g.dim(0); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < g.dim(1); ++j) s += g.at(i, j) * g.at(i, j);
    out[i] = std::sqrt(s);
  }
  return out;
}

void require_points(const ad::Tensor& t, const char* what) {
  if (t.rank() != 2 || t.dim(0) == 0) {
    throw ValidationError(std::string(what) + " must be a non-empty [n, d] set");
  }
}

double min_sq_distance(const ad::Tensor& points, std::size_t i, const ad::Tensor& set) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < set.dim(0); ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < set.dim(1); ++j) {
      const double diff = points.at(i, j) - set.at(r, j);
      s += diff * diff;
    }
    best = std::min(best, s);
  }
  return best;
}

// Kernel sums of the unbiased estimator.
double kernel_mean(const ad::Tensor& a, const ad::Tensor& b, std::span<const double> bw, bool same) {
  const std::size_t na = a.dim(0), nb = b.dim(0), d = a.dim(1);
  const double total = kernels::rbf_kernel_sum(a.values(), na, b.values(), nb, d, bw, same);
  const double pairs = same ? static_cast<double>(na) * static_cast<double>(na - 1)
                            : static_cast<double>(na) * static_cast<double>(nb);
  return total / pairs;
}

// Deterministic total order on point sets, so mmd(a, b) and mmd(b, a) run
// the same floating-point operations.
bool set_before(const ad::Tensor& a, const ad::Tensor& b) {
  if (a.dim(0) != b.dim(0)) return a.dim(0) < b.dim(0);
  const auto av = a.values(), bv = b.values();
  return std::lexicographical_compare(av.begin(), av.end(), bv.begin(), bv.end());
}

}  // namespace

NormStats norm_stats(std::vector<double> values) {
  NormStats s;
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  double total = 0.0;
  for (double v : values) total += v;
  s.mean = total / static_cast<double>(values.size());
  s.median = percentile(values, 0.5);
  s.p5 = percentile(values, 0.05);
  s.p95 = percentile(values, 0.95);
  s.max = values.back();
  return s;
}

GradNormReport grad_norm_at_data(const GradientField& field, const ad::Tensor& data,
                                 std::uint64_t seed) {
  require_points(data, "data");
  GradNormReport r;
  r.data_norms = row_norms(field.gradient(data, 0.0));
  r.at_data = norm_stats(r.data_norms);
  const std::size_t n = data.dim(0);
  const ad::Tensor noisy =
      corrupt(data, sample_noise(n, data.dim(1), seed), ad::Tensor::full({n}, 0.5));
  r.at_corrupted = norm_stats(row_norms(field.gradient(noisy, 0.0)));
  return r;
}

MembershipReport local_minima_membership(const GradientField& field, const ad::Tensor& data,
                                         std::size_t n_inits, double radius,
                                         const SamplerConfig& sampler, std::uint64_t seed) {
  require_points(data, "data");
  if (n_inits == 0) throw ValidationError("n_inits must be >= 1");
  if (!(radius > 0.0)) throw ValidationError("radius must be > 0");
  const Trajectory tr = sample(field, sample_noise(n_inits, data.dim(1), seed), sampler);
  std::size_t inside = 0;
  for (std::size_t i = 0; i < n_inits; ++i) {
    inside += min_sq_distance(tr.final, i, data) <= radius * radius;
  }
  return {static_cast<double>(inside) / static_cast<double>(n_inits), tr.final, tr.steps_used};
}

AnalyticEnergy AnalyticEnergy::quadratic(const std::vector<std::vector<double>>& a) {
  const std::size_t d = a.size();
  if (d == 0) throw ValidationError("quadratic energy needs a non-empty matrix");
  for (const auto& row : a) {
    if (row.size() != d) throw ShapeError("quadratic energy matrix must be square");
  }
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      if (a[i][j] != a[j][i]) throw ValidationError("quadratic energy matrix must be symmetric");

  // Eigenvalues by cyclic Jacobi rotations. Power iteration from a fixed
  // start misses the top eigenvalue when the start is orthogonal to it.
  std::vector<std::vector<double>> m = a;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i + 1; j < d; ++j) off += m[i][j] * m[i][j];
    if (off == 0.0) break;
    for (std::size_t p = 0; p < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) {
        if (m[p][q] == 0.0) continue;
        const double theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < d; ++k) {
          const double mkp = m[k][p], mkq = m[k][q];
          m[k][p] = c * mkp - s * mkq;
          m[k][q] = s * mkp + c * mkq;
        }
        for (std::size_t k = 0; k < d; ++k) {
          const double mpk = m[p][k], mqk = m[q][k];
          m[p][k] = c * mpk - s * mqk;
          m[q][k] = s * mpk + c * mqk;
        }
      }
    }
  }
  double lambda = -std::numeric_limits<double>::infinity();
  double lambda_min = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < d; ++i) {
    lambda = std::max(lambda, m[i][i]);
    lambda_min = std::min(lambda_min, m[i][i]);
  }
  if (lambda_min < -1e-12 * std::max(1.0, std::abs(lambda))) {
    throw ValidationError("quadratic energy matrix must be positive semidefinite");
  }
  // Round L up by a hair so eta = 1/L never overshoots the true 1/L.
  lambda *= 1.0 + 1e-14;

  AnalyticEnergy e;
  e.dim = d;
  e.lipschitz = lambda;
  e.infimum = 0.0;
  e.gradient = [a](std::span<const double> x) {
    std::vector<double> g(x.size(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i)
      for (std::size_t j = 0; j < x.size(); ++j) g[i] += a[i][j] * x[j];
    return g;
  };
  e.energy = [a](std::span<const double> x) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
      for (std::size_t j = 0; j < x.size(); ++j) s += x[i] * a[i][j] * x[j];
    return 0.5 * s;
  };
  return e;
}

BoundCheck convergence_bound_check(const AnalyticEnergy& energy, double eta,
                                   const std::vector<std::size_t>& ks, const ad::Tensor& x0s) {
  if (x0s.rank() != 2 || x0s.dim(1) != energy.dim) {
    throw ShapeError("starts must have shape [m," + std::to_string(energy.dim) + "]");
  }
  if (!(eta >= 0.0)) throw ValidationError("eta must be >= 0");
  // Tiny relative allowance for rounding in L.
  if (eta * energy.lipschitz > 1.0 + 1e-12) {
    throw ValidationError("eta exceeds 1/L; the bound is only guaranteed for eta <= 1/L");
  }
  for (std::size_t k : ks) {
    if (k == 0) throw ValidationError("K must be >= 1");
  }
  BoundCheck r;
  r.worst_slack = std::numeric_limits<double>::infinity();
  if (eta == 0.0) {
    r.degenerate = true;
    r.checks = ks.size() * x0s.dim(0);
    return r;
  }
  const std::size_t kmax = ks.empty() ? 0 : *std::max_element(ks.begin(), ks.end());
  for (std::size_t s = 0; s < x0s.dim(0); ++s) {
    std::vector<double> x(energy.dim);
    for (std::size_t j = 0; j < energy.dim; ++j) x[j] = x0s.at(s, j);
    const double e0 = energy.energy(x);
    // best[k] = min_{i<=k} |grad E(x_i)|^2
    std::vector<double> best(kmax);
    double running = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < kmax; ++k) {
      const std::vector<double> g = energy.gradient(x);
      double g2 = 0.0;
      for (double v : g) g2 += v * v;
      running = std::min(running, g2);
      best[k] = running;
      for (std::size_t j = 0; j < energy.dim; ++j) x[j] -= eta * g[j];
    }
    for (std::size_t k : ks) {
      const double lhs = best[k - 1];
      const double rhs = 2.0 * (e0 - energy.infimum) / (eta * static_cast<double>(k));
      ++r.checks;
      r.worst_slack = std::min(r.worst_slack, rhs - lhs);
      if (lhs > rhs) {
        ++r.violations;
        r.passed = false;
      }
    }
  }
  return r;
}

double mmd(const ad::Tensor& samples, const ad::Tensor& reference, std::span<const double> bandwidths) {
  require_points(samples, "samples");
  require_points(reference, "reference");
  if (samples.dim(1) != reference.dim(1)) throw ShapeError("mmd sets differ in dimension");
  if (samples.dim(0) < 2 || reference.dim(0) < 2) {
    throw ValidationError("unbiased mmd needs at least two points per set");
  }
  if (bandwidths.empty()) throw ValidationError("mmd needs at least one bandwidth");
  const bool swap = set_before(reference, samples);
  const ad::Tensor& a = swap ? reference : samples;
  const ad::Tensor& b = swap ? samples : reference;
  const double kaa = kernel_mean(a, a, bandwidths, true);
  const double kbb = kernel_mean(b, b, bandwidths, true);
  const double kab = kernel_mean(a, b, bandwidths, false);
  return kaa + kbb - 2.0 * kab;
}

double NullDistribution::quantile(double q) const {
  if (values.empty()) throw ValidationError("empty null distribution");
  return percentile(values, q);
}

NullDistribution mmd_permutation_null(const ad::Tensor& a, const ad::Tensor& b,
                                      std::size_t permutations, std::uint64_t seed,
                                      std::span<const double> bandwidths) {
  require_points(a, "a");
  require_points(b, "b");
  if (a.dim(1) != b.dim(1)) throw ShapeError("mmd sets differ in dimension");
  if (permutations == 0) throw ValidationError("permutations must be >= 1");
  const std::size_t na = a.dim(0), nb = b.dim(0), n = na + nb, d = a.dim(1);
  std::vector<double> pool(a.values().begin(), a.values().end());
  pool.insert(pool.end(), b.values().begin(), b.values().end());

  // Kernel matrix once; each permutation only re-partitions it.
  std::vector<double> sq(n * n);
  kernels::squared_distances(pool, n, pool, n, d, sq);
  std::vector<double> inv;
  for (double h : bandwidths) inv.push_back(-0.5 / (h * h));
  std::vector<double> k(n * n);
  for (std::size_t i = 0; i < n * n; ++i) {
    double s = 0.0;
    for (double w : inv) s += std::exp(w * sq[i]);
    k[i] = s;
  }

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<char> in_a(n);
  NullDistribution null;
  for (std::size_t p = 0; p < permutations; ++p) {
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t i = 0; i < n; ++i) in_a[perm[i]] = i < na;
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = k.data() + i * n;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (in_a[i] && in_a[j]) saa += row[j];
        else if (!in_a[i] && !in_a[j]) sbb += row[j];
        else sab += row[j];
      }
    }
    const double value = 2.0 * saa / (static_cast<double>(na) * static_cast<double>(na - 1)) +
                         2.0 * sbb / (static_cast<double>(nb) * static_cast<double>(nb - 1)) -
                         2.0 * sab / (static_cast<double>(na) * static_cast<double>(nb));
    null.values.push_back(value);
  }
  std::sort(null.values.begin(), null.values.end());
  double total = 0.0;
  for (double v : null.values) total += v;
  null.mean = total / static_cast<double>(permutations);
  double var = 0.0;
  for (double v : null.values) var += (v - null.mean) * (v - null.mean);
  null.stddev = permutations > 1 ? std::sqrt(var / static_cast<double>(permutations - 1)) : 0.0;
  return null;
}

Coverage mode_coverage(const ad::Tensor& samples, const std::vector<Point2>& modes, double radius) {
  if (modes.empty()) throw ValidationError("mode_coverage needs at least one mode");
  require_points(samples, "samples");
  if (samples.dim(1) != 2) throw ShapeError("mode_coverage expects 2-D samples");
  const double r2 = radius * radius;
  std::vector<char> hit(modes.size(), 0);
  std::size_t inside = 0;
  for (std::size_t i = 0; i < samples.dim(0); ++i) {
    bool any = false;
    for (std::size_t m = 0; m < modes.size(); ++m) {
      const double dx = samples.at(i, 0) - modes[m][0], dy = samples.at(i, 1) - modes[m][1];
      if (dx * dx + dy * dy <= r2) {
        hit[m] = 1;
        any = true;
      }
    }
    inside += any;
  }
  Coverage c;
  c.covered_modes = static_cast<double>(std::count(hit.begin(), hit.end(), 1)) /
                    static_cast<double>(modes.size());
  c.in_mode = static_cast<double>(inside) / static_cast<double>(samples.dim(0));
  return c;
}

double auroc(std::span<const double> scores_id, std::span<const double> scores_ood) {
  if (scores_id.empty() || scores_ood.empty()) throw ValidationError("auroc needs non-empty score sets");
  struct Item {
    double score;
    bool ood;
  };
  std::vector<Item> all;
  for (double s : scores_id) all.push_back({s, false});
  for (double s : scores_ood) all.push_back({s, true});
  for (const Item& it : all) {
    if (!std::isfinite(it.score)) throw NumericalError("auroc scores must be finite");
  }
  std::sort(all.begin(), all.end(), [](const Item& x, const Item& y) { return x.score < y.score; });
  // Mid-ranks over tie groups.
  double rank_sum_ood = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (all[t].ood) rank_sum_ood += mid;
    }
    i = j;
  }
  const double n_id = static_cast<double>(scores_id.size());
  const double n_ood = static_cast<double>(scores_ood.size());
  return (rank_sum_ood - n_ood * (n_ood + 1.0) / 2.0) / (n_id * n_ood);
}

PartialNoiseCurves partial_noise_sweep(const GradientField& model, const SamplerConfig& model_sampler,
                                       const GradientField& baseline,
                                       const SamplerConfig& baseline_sampler,
                                       const ad::Tensor& held_out, const ad::Tensor& reference,
                                       const std::vector<double>& gammas, std::uint64_t seed) {
  require_points(held_out, "held-out set");
  PartialNoiseCurves c;
  const std::size_t n = held_out.dim(0);
  const ad::Tensor eps = sample_noise(n, held_out.dim(1), seed);
  for (double g : gammas) {
    if (!(g >= 0.0 && g <= 1.0)) throw ValidationError("start gamma must lie in [0, 1]");
    const ad::Tensor start = corrupt(held_out, eps, ad::Tensor::full({n}, g));
    c.gammas.push_back(g);
    c.model_mmd.push_back(mmd(denoise_from(model, start, model_sampler).final, reference));
    c.baseline_mmd.push_back(mmd(denoise_from(baseline, start, baseline_sampler).final, reference));
  }
  return c;
}

NeighborAudit nearest_neighbor_audit(const ad::Tensor& samples, const ad::Tensor& train,
                                     std::size_t k) {
  require_points(samples, "samples");
  require_points(train, "training set");
  if (k < 1) throw ValidationError("k must be >= 1");
  if (k > train.dim(0)) {
    throw ValidationError("k = " + std::to_string(k) + " exceeds the training set size " +
                          std::to_string(train.dim(0)));
  }
  if (samples.dim(1) != train.dim(1)) throw ShapeError("samples and training set differ in dimension");
  const std::size_t n = samples.dim(0), m = train.dim(0);
  std::vector<double> sq(n * m);
  kernels::squared_distances(samples.values(), n, train.values(), m, samples.dim(1), sq);
  NeighborAudit audit;
  audit.k = k;
  std::vector<std::size_t> idx(m);
  for (std::size_t i = 0; i < n; ++i) {
    std::iota(idx.begin(), idx.end(), 0);
    const double* row = sq.data() + i * m;
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [row](std::size_t x, std::size_t y) {
                        return row[x] < row[y] || (row[x] == row[y] && x < y);
                      });
    std::vector<double> dist(k);
    for (std::size_t t = 0; t < k; ++t) dist[t] = row[idx[t]];
    audit.distances.push_back(std::move(dist));
    audit.indices.emplace_back(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return audit;
}

// ---------------------------------------------------------------------------

std::string fingerprint(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::size_t append_to_ledger(const std::filesystem::path& path,
                             const std::vector<EvalReport>& reports, bool force) {
  csv::Table table;
  table.header = {"fingerprint", "seed", "metric", "value", "aux"};
  if (std::filesystem::exists(path)) {
    table = csv::read(path);
    if (table.header != csv::Row{"fingerprint", "seed", "metric", "value", "aux"}) {
      throw ValidationError("ledger " + path.string() + " has an unexpected header");
    }
  }
  auto key_of = [](const csv::Row& r) { return r[0] + "\x1f" + r[2]; };
  std::size_t written = 0;
  for (const EvalReport& rep : reports) {
    if (!std::isfinite(rep.value)) {
      throw NumericalError("metric '" + rep.metric + "' is not finite");
    }
    std::string aux;
    for (std::size_t i = 0; i < rep.aux.size(); ++i) {
      if (i) aux += ';';
      aux += csv::format(rep.aux[i]);
    }
    csv::Row row = {rep.fingerprint, std::to_string(rep.seed), rep.metric, csv::format(rep.value), aux};
    const std::string key = key_of(row);
    auto it = std::find_if(table.rows.begin(), table.rows.end(),
                           [&](const csv::Row& r) { return key_of(r) == key; });
    if (it != table.rows.end()) {
      if (!force) continue;
      *it = std::move(row);
    } else {
      table.rows.push_back(std::move(row));
    }
    ++written;
  }
  csv::write(path, table);
  return written;
}

}  // namespace eqm
