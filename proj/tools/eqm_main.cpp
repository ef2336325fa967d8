// eqm: train, sample, evaluate and plot equilibrium-matching models on 2-D toy data.
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "eqm/checkpoint.hpp"
#include "eqm/csv.hpp"
#include "eqm/error.hpp"
#include "eqm/plot.hpp"
#include "eqm/suite.hpp"

namespace fs = std::filesystem;
using namespace eqm;

namespace {

constexpr const char* kOutputEnv = "EQM_OUTPUT_DIR";

struct Globals {
  std::optional<std::uint64_t> seed;
  bool force = false;
  bool quiet = false;
  std::string out_dir;

  fs::path base() const {
    if (!out_dir.empty()) return out_dir;
    if (const char* env = std::getenv(kOutputEnv); env && *env) return env;
    return ".";
  }
  fs::path resolve(const fs::path& p) const { return p.is_absolute() ? p : base() / p; }
  std::uint64_t seed_or(std::uint64_t fallback) const { return seed.value_or(fallback); }
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << text;
  }
  fs::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Sampler flags shared by sample, compose, eval and sweep.

struct SamplerFlags {
  std::optional<std::string> method;
  std::optional<double> eta, mu, g_min;
  std::optional<std::size_t> steps, max_steps;

  void add(CLI::App* app) {
    app->add_option("--method", method, "gd | nag | euler-ode | adaptive");
    app->add_option("--eta", eta, "step size");
    app->add_option("--mu", mu, "NAG look-ahead (nag, adaptive)");
    app->add_option("--steps", steps, "fixed number of steps");
    app->add_option("--g-min", g_min, "adaptive stopping threshold on the gradient norm");
    app->add_option("--max-steps", max_steps, "adaptive step cap");
  }
  bool any() const { return method || eta || mu || g_min || steps || max_steps; }
  SamplerConfig apply(SamplerConfig s) const {
    if (method) s.method = parse_sampler_method(*method);
    // A method switch drops settings that only the old method accepted.
    if (method && s.method != SamplerMethod::kAdaptive) s.g_min.reset();
    if (method && s.method != SamplerMethod::kNAG && s.method != SamplerMethod::kAdaptive) s.mu = 0.0;
    if (eta) s.eta = *eta;
    if (mu) s.mu = *mu;
    if (steps) s.steps = *steps;
    if (g_min) s.g_min = *g_min;
    if (max_steps) s.max_steps = *max_steps;
    s.validate();
    return s;
  }
};

csv::Table samples_table(const Trajectory& t, bool adaptive) {
  csv::Table table = csv::points_table(t.final);
  if (adaptive) {
    table.header.push_back("steps_used");
    table.header.push_back("capped");
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
      table.rows[i].push_back(std::to_string(t.steps_used[i]));
      table.rows[i].push_back(t.capped[i] ? "1" : "0");
    }
  }
  return table;
}

csv::Table trajectory_table(const Trajectory& t) {
  csv::Table table{{"step", "sample", "x0", "x1"}, {}};
  for (std::size_t k = 0; k < t.states.size(); ++k) {
    const auto& s = t.states[k];
    for (std::size_t i = 0; i < s.dim(0); ++i) {
      table.rows.push_back({std::to_string(k), std::to_string(i), csv::format(s.at(i, 0)),
                            csv::format(s.at(i, 1))});
    }
  }
  return table;
}

std::string summary(const Trajectory& t) {
  std::ostringstream o;
  o << t.final.dim(0) << " samples, " << t.grad_evals << " gradient evaluations";
  return o.str();
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config, init_from, resume, out;
  std::optional<std::size_t> steps;
};

int cmd_train(const Globals& g, const TrainArgs& a) {
  Checkpoint start;
  std::optional<Trainer> trainer;
  RunConfig config;
  if (!a.resume.empty()) {
    if (!a.init_from.empty()) throw ValidationError("--resume and --init-from are exclusive");
    start = load_checkpoint(a.resume);
    config = start.config;
    if (!a.config.empty()) throw ValidationError("--resume takes its config from the checkpoint");
    if (g.seed && *g.seed != config.seeds.train) {
      throw ValidationError("--seed differs from the resumed run's training seed");
    }
  } else {
    if (a.config.empty()) throw ValidationError("train needs --config (or --resume)");
    config = load_run_config(a.config);
    if (g.seed) config.seeds.train = *g.seed;
  }
  if (a.steps) config.train.steps = *a.steps;
  config.validate();
  // --out changes where files go, not the run's identity.
  const fs::path dir = g.resolve(a.out.empty() ? config.output_dir : a.out);
  fs::create_directories(dir);

  if (!a.resume.empty()) {
    start.config = config;
    trainer.emplace(resume_trainer(start));
  } else if (!a.init_from.empty()) {
    const Checkpoint src = load_checkpoint(a.init_from);
    trainer.emplace(make_trainer(config, init_from(config.model, src.params)));
  } else {
    trainer.emplace(make_trainer(config));
  }
  write_text(dir / "config.json", to_json(config));

  csv::Table losses{{"step", "loss"}, {}};
  const fs::path loss_path = dir / "loss.csv";
  if (!a.resume.empty() && fs::exists(loss_path)) {
    // Keep the rows the resumed run already logged.
    for (auto& row : csv::read(loss_path).rows) {
      if (std::stoull(row.at(0)) < trainer->steps_done()) losses.rows.push_back(row);
    }
  }
  const std::uint64_t first = trainer->steps_done();
  if (first > config.train.steps) {
    throw ValidationError("checkpoint is at step " + std::to_string(first) + ", past the budget of " +
                          std::to_string(config.train.steps));
  }
  try {
    trainer->run(config.train.steps - first, [&](std::uint64_t step, double loss) {
      losses.rows.push_back({std::to_string(step), csv::format(loss)});
      const std::uint64_t done = step + 1;
      if (config.train.checkpoint_every > 0 && done % config.train.checkpoint_every == 0 &&
          done < config.train.steps) {
        char name[64];
        std::snprintf(name, sizeof name, "checkpoint_%08llu.bin", static_cast<unsigned long long>(done));
        save_checkpoint(dir / name, snapshot(config, *trainer));
      }
      if (!g.quiet && (done % 1000 == 0 || done == config.train.steps)) {
        std::cerr << "step " << done << "/" << config.train.steps << " loss " << loss << "\n";
      }
    });
  } catch (const NumericalError&) {
    csv::write(loss_path, losses);
    throw;
  }
  csv::write(loss_path, losses);
  save_checkpoint(dir / "checkpoint.bin", snapshot(config, *trainer));
  std::cout << (dir / "checkpoint.bin").string() << "\n";
  return 0;
}

struct SampleArgs {
  std::string checkpoint, out = "samples.csv", trajectory;
  std::size_t n = 500;
  std::optional<int> label;
  SamplerFlags flags;
};

int cmd_sample(const Globals& g, const SampleArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  SamplerConfig s = a.flags.apply(default_sampler(ckpt));
  if (!a.trajectory.empty()) s.record_states = true;
  if (a.n == 0) throw ValidationError("--n must be >= 1");
  const auto field = field_of(ckpt, a.label);
  const ad::Tensor x0 = sample_noise(a.n, 2, g.seed_or(ckpt.config.seeds.sample));
  const Trajectory t = sample(*field, x0, s);
  csv::write(g.resolve(a.out), samples_table(t, s.method == SamplerMethod::kAdaptive));
  if (!a.trajectory.empty()) csv::write(g.resolve(a.trajectory), trajectory_table(t));
  if (!g.quiet) std::cerr << summary(t) << "\n";
  return 0;
}

struct ComposeArgs {
  std::string checkpoint, out = "composed.csv";
  int label1 = 0, label2 = 0;
  double w1 = 1.0, w2 = 1.0;
  std::size_t n = 500;
  SamplerFlags flags;
};

int cmd_compose(const Globals& g, const ComposeArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  if (ckpt.config.model.num_classes == 0) {
    throw ValidationError("compose needs a class-conditional checkpoint (num_classes > 0)");
  }
  if (a.n == 0) throw ValidationError("--n must be >= 1");
  const SamplerConfig s = a.flags.apply(default_sampler(ckpt));
  const auto field = compose({field_of(ckpt, a.label1), field_of(ckpt, a.label2)}, {a.w1, a.w2});
  const ad::Tensor x0 = sample_noise(a.n, 2, g.seed_or(ckpt.config.seeds.sample));
  const Trajectory t = sample(*field, x0, s);
  csv::write(g.resolve(a.out), samples_table(t, s.method == SamplerMethod::kAdaptive));
  if (!g.quiet) std::cerr << summary(t) << "\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint, suite, baseline, ledger = "ledger.csv", out;
  std::size_t n = 500, permutations = 200;
  SamplerFlags flags;
};

int cmd_eval(const Globals& g, const EvalArgs& a) {
  std::optional<Checkpoint> ckpt, base;
  if (!a.checkpoint.empty()) ckpt = load_checkpoint(a.checkpoint);
  if (!a.baseline.empty()) base = load_checkpoint(a.baseline);
  SuiteOptions o;
  o.n = a.n;
  o.permutations = a.permutations;
  o.seed = g.seed_or(0);
  o.baseline = base ? &*base : nullptr;
  if (a.flags.any()) {
    if (!ckpt) throw ValidationError("sampler flags need --checkpoint");
    o.sampler = a.flags.apply(default_sampler(*ckpt));
  }
  const auto reports = run_suite(a.suite, ckpt ? &*ckpt : nullptr, o);
  csv::Table table{{"fingerprint", "seed", "metric", "value", "aux"}, {}};
  for (const auto& r : reports) {
    std::string aux;
    for (std::size_t i = 0; i < r.aux.size(); ++i) aux += (i ? ";" : "") + csv::format(r.aux[i]);
    table.rows.push_back({r.fingerprint, std::to_string(r.seed), r.metric, csv::format(r.value), aux});
  }
  std::cout << csv::to_string(table);
  if (!a.out.empty()) csv::write(g.resolve(a.out), table);
  const std::size_t written = append_to_ledger(g.resolve(a.ledger), reports, g.force);
  if (!g.quiet && written < reports.size()) {
    std::cerr << reports.size() - written << " row(s) already in the ledger; use --force to replace\n";
  }
  return 0;
}

struct SweepArgs {
  std::string checkpoint, axis, values, out = "sweep.csv";
  std::size_t n = 500;
  std::optional<std::size_t> train_steps;
  SamplerFlags flags;
};

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  if (out.empty()) throw ValidationError("--values is empty");
  return out;
}

int cmd_sweep(const Globals& g, const SweepArgs& a) {
  static const std::vector<std::string> axes = {"eta", "mu", "steps", "g-min", "lambda", "schedule"};
  if (std::find(axes.begin(), axes.end(), a.axis) == axes.end()) {
    throw ValidationError("unknown sweep axis '" + a.axis + "' (expected eta, mu, steps, g-min, lambda or schedule)");
  }
  if (a.n == 0) throw ValidationError("--n must be >= 1");
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  if (ckpt.config.model.num_classes > 0) throw ValidationError("sweep needs an unconditional checkpoint");
  const SamplerConfig base = a.flags.apply(default_sampler(ckpt));
  const std::uint64_t seed = g.seed_or(ckpt.config.seeds.sample);
  const ad::Tensor x0 = sample_noise(a.n, 2, seed);
  const ad::Tensor ref = reference_set(ckpt.config, a.n, batch_seed(seed, 2));
  const bool training_axis = a.axis == "lambda" || a.axis == "schedule";

  csv::Table table{{"axis", "value", "mmd", "mode_coverage", "in_mode", "grad_evals"}, {}};
  for (const std::string& v : split(a.values)) {
    Checkpoint run = ckpt;
    SamplerConfig s = base;
    if (a.axis == "eta") s.eta = csv::parse_number(v);
    if (a.axis == "mu") {
      s.mu = csv::parse_number(v);
      if (s.method == SamplerMethod::kGD && s.mu > 0) s.method = SamplerMethod::kNAG;
    }
    if (a.axis == "steps") s.steps = static_cast<std::size_t>(csv::parse_number(v));
    if (a.axis == "g-min") {
      s.method = SamplerMethod::kAdaptive;
      s.g_min = csv::parse_number(v);
    }
    if (training_axis) {
      RunConfig c = ckpt.config;
      if (a.axis == "lambda") c.objective.schedule.lambda = csv::parse_number(v);
      else c.objective.schedule.kind = parse_schedule_kind(v);
      if (a.train_steps) c.train.steps = *a.train_steps;
      c.validate();
      Trainer t = make_trainer(c);
      t.run(c.train.steps);
      run = snapshot(c, t);
      if (!g.quiet) std::cerr << "trained " << a.axis << "=" << v << "\n";
    }
    s.validate();
    const auto field = field_of(run);
    const Trajectory traj = sample(*field, x0, s);
    const auto& d = ckpt.config.data.distribution;
    Coverage cov;
    if (d.kind == DistributionKind::kGaussianMixture && ckpt.config.data.source == DataSource::kDistribution) {
      cov = mode_coverage(traj.final, d.modes, 3.0 * d.mode_std);
    }
    table.rows.push_back({a.axis, v, csv::format(mmd(traj.final, ref)), csv::format(cov.covered_modes),
                          csv::format(cov.in_mode), std::to_string(traj.grad_evals)});
  }
  csv::write(g.resolve(a.out), table);
  std::cout << csv::to_string(table);
  return 0;
}

struct PlotArgs {
  std::string kind, checkpoint, csv_in, column = "steps_used", x, out, title;
  std::vector<std::string> samples, ys;
  std::vector<double> extent = {-3.0, 3.0};
  std::size_t grid = 40, bins = 20, levels = 12;
  std::optional<int> label;
  double t = 0.0;
};

int cmd_plot(const Globals& g, const PlotArgs& a) {
  static const std::vector<std::string> kinds = {"vector-field", "scatter", "energy", "histogram", "curves"};
  if (std::find(kinds.begin(), kinds.end(), a.kind) == kinds.end()) {
    throw ValidationError("unknown plot kind '" + a.kind +
                          "' (expected vector-field, scatter, energy, histogram or curves)");
  }
  if (a.extent.size() != 2 && a.extent.size() != 4) throw ValidationError("--extent takes lo,hi or xlo,xhi,ylo,yhi");
  plot::Extent e;
  if (a.extent.size() == 2) e = {{a.extent[0], a.extent[0]}, {a.extent[1], a.extent[1]}};
  else e = {{a.extent[0], a.extent[2]}, {a.extent[1], a.extent[3]}};
  auto need = [&](const std::string& v, const char* flag) {
    if (v.empty()) throw ValidationError("plot kind '" + a.kind + "' needs " + flag);
  };
  std::string svg;
  if (a.kind == "vector-field") {
    need(a.checkpoint, "--checkpoint");
    const Checkpoint ckpt = load_checkpoint(a.checkpoint);
    svg = plot::vector_field(*field_of(ckpt, a.label), e, a.grid, a.t, a.title);
  } else if (a.kind == "energy") {
    need(a.checkpoint, "--checkpoint");
    svg = plot::energy_contours(load_checkpoint(a.checkpoint).model(), e, a.grid, a.levels, a.label, a.title);
  } else if (a.kind == "scatter") {
    if (a.samples.empty()) throw ValidationError("plot kind 'scatter' needs --samples");
    std::vector<plot::Series> series;
    for (const auto& p : a.samples) {
      series.push_back({fs::path(p).stem().string(), csv::points_from_table(csv::read(p))});
    }
    svg = plot::scatter(series, e, a.title);
  } else if (a.kind == "histogram") {
    need(a.csv_in, "--csv");
    const auto table = csv::read(a.csv_in);
    const std::size_t col = table.column(a.column);
    std::vector<std::size_t> values;
    for (const auto& r : table.rows) values.push_back(static_cast<std::size_t>(csv::parse_number(r.at(col))));
    svg = plot::histogram(values, a.bins, a.title, a.column);
  } else {
    need(a.csv_in, "--csv");
    need(a.x, "--x");
    if (a.ys.empty()) throw ValidationError("plot kind 'curves' needs --y");
    const auto table = csv::read(a.csv_in);
    std::vector<double> xs;
    const std::size_t xc = table.column(a.x);
    for (const auto& r : table.rows) xs.push_back(csv::parse_number(r.at(xc)));
    std::vector<plot::Curve> curves;
    for (const auto& y : a.ys) {
      const std::size_t yc = table.column(y);
      plot::Curve c{y, {}};
      for (const auto& r : table.rows) c.y.push_back(csv::parse_number(r.at(yc)));
      curves.push_back(std::move(c));
    }
    svg = plot::curves(xs, curves, a.title, a.x, "");
  }
  const fs::path out = g.resolve(a.out.empty() ? a.kind + ".svg" : a.out);
  write_text(out, svg);
  std::cout << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Equilibrium matching on 2-D toy data"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "seed overriding the config/checkpoint default");
  app.add_flag("--force", g.force, "replace ledger rows that already exist");
  app.add_flag("-q,--quiet", g.quiet, "no progress output");
  app.add_option("--out-dir", g.out_dir,
                 std::string("directory relative output paths resolve against (default: $") + kOutputEnv +
                     ", else the working directory)");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train a model from a JSON run config");
  train->add_option("--config", ta.config, "run config (JSON)");
  train->add_option("--init-from", ta.init_from, "warm-start weights from a checkpoint");
  train->add_option("--resume", ta.resume, "continue a checkpointed run");
  train->add_option("--steps", ta.steps, "override the total step budget");
  train->add_option("--out", ta.out, "run directory (default: config output_dir)");

  SampleArgs sa;
  auto* samp = app.add_subcommand("sample", "draw samples from a checkpoint");
  samp->add_option("--checkpoint", sa.checkpoint)->required();
  samp->add_option("--n", sa.n, "number of samples");
  samp->add_option("--label", sa.label, "class label for conditional models");
  samp->add_option("--out", sa.out, "samples CSV");
  samp->add_option("--trajectory", sa.trajectory, "also write every state to this CSV");
  sa.flags.add(samp);

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "run an evaluation suite and append it to the ledger");
  ev->add_option("--suite", ea.suite, "statements | quality | ood | partial-noise | nn-audit")->required();
  ev->add_option("--checkpoint", ea.checkpoint);
  ev->add_option("--baseline", ea.baseline, "flow-matching checkpoint (partial-noise)");
  ev->add_option("--n", ea.n, "samples per metric");
  ev->add_option("--permutations", ea.permutations, "MMD permutation-null size");
  ev->add_option("--ledger", ea.ledger, "results ledger CSV");
  ev->add_option("--out", ea.out, "also write this run's rows to a CSV");
  ea.flags.add(ev);

  SweepArgs wa;
  auto* sw = app.add_subcommand("sweep", "metric as one setting varies");
  sw->add_option("--checkpoint", wa.checkpoint)->required();
  sw->add_option("--axis", wa.axis, "eta | mu | steps | g-min | lambda | schedule")->required();
  sw->add_option("--values", wa.values, "comma-separated values")->required();
  sw->add_option("--n", wa.n, "samples per value");
  sw->add_option("--train-steps", wa.train_steps, "step budget for training axes");
  sw->add_option("--out", wa.out, "sweep CSV");
  wa.flags.add(sw);

  ComposeArgs ca;
  auto* co = app.add_subcommand("compose", "sample the sum of two label-conditioned fields");
  co->add_option("--checkpoint", ca.checkpoint)->required();
  co->add_option("--label1", ca.label1)->required();
  co->add_option("--label2", ca.label2)->required();
  co->add_option("--w1", ca.w1, "weight of the first field");
  co->add_option("--w2", ca.w2, "weight of the second field");
  co->add_option("--n", ca.n, "number of samples");
  co->add_option("--out", ca.out, "samples CSV");
  ca.flags.add(co);

  PlotArgs pa;
  auto* pl = app.add_subcommand("plot", "write an SVG figure");
  pl->add_option("--kind", pa.kind, "vector-field | scatter | energy | histogram | curves")->required();
  pl->add_option("--checkpoint", pa.checkpoint);
  pl->add_option("--label", pa.label);
  pl->add_option("--samples", pa.samples, "sample CSV(s) for scatter");
  pl->add_option("--csv", pa.csv_in, "input table for histogram and curves");
  pl->add_option("--column", pa.column, "histogram column");
  pl->add_option("--x", pa.x, "curves x column");
  pl->add_option("--y", pa.ys, "curves y column(s)");
  pl->add_option("--grid", pa.grid, "grid size (vector-field arrows per side, energy resolution)");
  pl->add_option("--levels", pa.levels, "contour levels");
  pl->add_option("--bins", pa.bins, "histogram bins");
  pl->add_option("--t", pa.t, "time passed to time-conditioned fields");
  pl->add_option("--extent", pa.extent, "lo,hi or xlo,xhi,ylo,yhi")->delimiter(',');
  pl->add_option("--title", pa.title);
  pl->add_option("--out", pa.out, "SVG path (default <kind>.svg)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*train) return cmd_train(g, ta);
    if (*samp) return cmd_sample(g, sa);
    if (*ev) return cmd_eval(g, ea);
    if (*sw) return cmd_sweep(g, wa);
    if (*co) return cmd_compose(g, ca);
    if (*pl) return cmd_plot(g, pa);
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
