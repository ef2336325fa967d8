#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "eqm/data.hpp"
#include "eqm/error.hpp"
#include "eqm/objective.hpp"
#include "eqm/optimizer.hpp"
#include "test_util.hpp"

using namespace eqm;
using eqm::ad::Tensor;
using eqm::testing::random_tensor;
using eqm::testing::relative_error;
using eqm::testing::with_value;

namespace {

TrainBatch random_batch(std::mt19937_64& rng, std::size_t n) {
  TrainBatch b;
  b.x = random_tensor({n, 2}, rng, -2, 2);
  b.eps = random_tensor({n, 2}, rng, -2, 2);
  b.gamma = random_tensor({n}, rng, 0, 1);
  return b;
}

ModelConfig small(EnergyKind energy = EnergyKind::kNone, std::uint64_t seed = 1) {
  ModelConfig c;
  c.hidden = {8};
  c.energy = energy;
  c.init_seed = seed;
  return c;
}

// Copy of m whose output is exactly -f.
GradientFieldModel negated(const GradientFieldModel& m) {
  GradientFieldModel out = m;
  const std::size_t last = m.config().hidden.size();
  for (const char* part : {".weight", ".bias"}) {
    const std::string name = "layers." + std::to_string(last) + part;
    out.set_parameter(name, ad::scalar_mul(m.parameters().get(name), -1.0));
  }
  return out;
}

}  // namespace

TEST_CASE("corruption endpoints") {
  std::mt19937_64 rng(1);
  const Tensor x = random_tensor({4, 2}, rng), e = random_tensor({4, 2}, rng);
  CHECK(corrupt(x, e, Tensor::full({4}, 1.0)).identical(x));
  CHECK(corrupt(x, e, Tensor::full({4}, 0.0)).identical(e));
  const Tensor mid = corrupt(Tensor::matrix({{2, 0}}), Tensor::matrix({{0, 2}}), Tensor::vector({0.5}));
  CHECK(mid[0] == 1.0);
  CHECK(mid[1] == 1.0);
  CHECK_THROWS_AS(corrupt(x, Tensor::zeros({3, 2}), Tensor::zeros({4})), ShapeError);
  CHECK_THROWS_AS(corrupt(x, e, Tensor::zeros({3})), ShapeError);
}

TEST_CASE("targets") {
  std::mt19937_64 rng(2);
  const Tensor x = random_tensor({6, 2}, rng), e = random_tensor({6, 2}, rng);
  for (const Schedule& s : {Schedule::linear(2.0), Schedule::truncated(0.8, 4.0),
                            Schedule::piecewise(0.8, 1.4, 3.0)}) {
    const Tensor t = target(x, e, Tensor::full({6}, 1.0), s);
    for (std::size_t i = 0; i < t.numel(); ++i) CHECK(t[i] == 0.0);
  }
  const Tensor one = target(Tensor::matrix({{1, 0}}), Tensor::matrix({{0, 0}}),
                            Tensor::vector({0.0}), Schedule::linear(1.0));
  CHECK(one[0] == -1.0);
  CHECK(one[1] == 0.0);
  const Tensor plateau = target(Tensor::matrix({{1, 0}}), Tensor::matrix({{0, 0}}),
                                Tensor::vector({0.5}), Schedule::truncated(0.8, 4.0));
  CHECK(plateau[0] == -4.0);
}

TEST_CASE("eqm loss at an exact fit and at zero output") {
  // Zero output: loss = mean(target^2).
  auto m = GradientFieldModel::init(small());
  m.set_parameter("layers.1.weight", Tensor::zeros({8, 2}));
  m.set_parameter("layers.1.bias", Tensor::zeros({2}));
  std::mt19937_64 rng(3);
  const TrainBatch b = random_batch(rng, 16);
  const Schedule s = Schedule::truncated(0.8, 4.0);
  const Tensor t = target(b.x, b.eps, b.gamma, s);
  double expected = 0.0;
  for (double v : t.values()) expected += v * v;
  expected /= static_cast<double>(t.numel());
  CHECK(std::abs(eqm_loss(m.view(), b, s).item() - expected) <= 1e-12 * expected);

  // Exact fit: gamma = 1 rows have zero target, which a zero-output model matches.
  TrainBatch clean = b;
  clean.gamma = Tensor::full({16}, 1.0);
  CHECK(eqm_loss(m.view(), clean, s).item() == 0.0);
}

TEST_CASE("flow-matching target is nonzero at gamma = 1") {
  auto m = GradientFieldModel::init(small());
  m.set_parameter("layers.1.weight", Tensor::zeros({8, 2}));
  m.set_parameter("layers.1.bias", Tensor::zeros({2}));
  std::mt19937_64 rng(4);
  TrainBatch b = random_batch(rng, 8);
  b.gamma = Tensor::full({8}, 1.0);
  CHECK(uncond_fm_loss(m.view(), b).item() > 0.0);
  CHECK(eqm_loss(m.view(), b, Schedule::linear()).item() == 0.0);
}

TEST_CASE("negation duality with a constant schedule") {
  for (int seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    const auto m = GradientFieldModel::init(small(EnergyKind::kNone, seed));
    const TrainBatch b = random_batch(rng, 32);
    const double eqm = eqm_loss(m.view(), b, Schedule::constant(1.0), true).item();
    const double fm = uncond_fm_loss(negated(m).view(), b).item();
    CHECK(std::abs(eqm - fm) <= 1e-12);
  }
}

TEST_CASE("non-equilibrium schedule needs the override") {
  const auto m = GradientFieldModel::init(small());
  std::mt19937_64 rng(5);
  const TrainBatch b = random_batch(rng, 4);
  CHECK_THROWS_AS(eqm_loss(m.view(), b, Schedule::constant()), ValidationError);
  CHECK_NOTHROW(eqm_loss(m.view(), b, Schedule::constant(), true));
  Objective obj{ObjectiveKind::kEqM, Schedule::constant(), false};
  CHECK_THROWS_AS(obj.validate_for(m.config()), ValidationError);
}

TEST_CASE("objective / model compatibility") {
  ModelConfig none = small(), dot = small(EnergyKind::kDot), fm = small();
  fm.noise_conditioned = true;
  CHECK_THROWS_AS((Objective{ObjectiveKind::kEqME, Schedule{}, false}.validate_for(none)), ValidationError);
  CHECK_THROWS_AS((Objective{ObjectiveKind::kEqM, Schedule{}, false}.validate_for(dot)), ValidationError);
  CHECK_THROWS_AS((Objective{ObjectiveKind::kFM, Schedule{}, false}.validate_for(none)), ValidationError);
  CHECK_THROWS_AS((Objective{ObjectiveKind::kUncondFM, Schedule{}, false}.validate_for(fm)), ValidationError);
  CHECK_NOTHROW((Objective{ObjectiveKind::kFM, Schedule{}, false}.validate_for(fm)));
  std::mt19937_64 rng(6);
  const TrainBatch b = random_batch(rng, 4);
  CHECK_THROWS_AS(fm_loss(GradientFieldModel::init(none).view(), b), ValidationError);
  CHECK_THROWS_AS(uncond_fm_loss(GradientFieldModel::init(fm).view(), b), ValidationError);
  ad::Graph g;
  CHECK_THROWS_AS(eqme_loss(GradientFieldModel::init(none).view(), g, b, Schedule{}), ValidationError);
}

TEST_CASE("fm loss is zero when the output equals x - eps") {
  // An identity network fed x_gamma at gamma = 0 outputs eps; choose x = 2 eps so x - eps = eps.
  ModelConfig c;
  c.hidden = {4};
  c.activation = Activation::kRelu;
  auto m = GradientFieldModel::init(c);
  m.set_parameter("layers.0.weight", Tensor::matrix({{1, -1, 0, 0}, {0, 0, 1, -1}}));
  m.set_parameter("layers.0.bias", Tensor::zeros({4}));
  m.set_parameter("layers.1.weight", Tensor::matrix({{1, 0}, {-1, 0}, {0, 1}, {0, -1}}));
  m.set_parameter("layers.1.bias", Tensor::zeros({2}));
  TrainBatch b;
  b.eps = Tensor::matrix({{0.5, -1.0}, {2.0, 0.25}});
  b.x = ad::scalar_mul(b.eps, 2.0);
  b.gamma = Tensor::zeros({2});
  CHECK(uncond_fm_loss(m.view(), b).item() == 0.0);
}

TEST_CASE("uncond-fm equals fm when the t features carry zero weight") {
  ModelConfig fc = small();
  fc.noise_conditioned = true;
  auto fm = GradientFieldModel::init(fc);
  ModelConfig uc = small();
  auto un = GradientFieldModel::init(uc);
  // Copy the unconditional first layer into the x rows; zero the t rows.
  const Tensor w = un.parameters().get("layers.0.weight");
  std::vector<double> v((2 + kNoiseFeatures) * 8, 0.0);
  for (std::size_t i = 0; i < 16; ++i) v[i] = w[i];
  fm.set_parameter("layers.0.weight", Tensor({2 + kNoiseFeatures, 8}, v));
  for (const char* n : {"layers.0.bias", "layers.1.weight", "layers.1.bias"}) {
    fm.set_parameter(n, un.parameters().get(n));
  }
  std::mt19937_64 rng(7);
  const TrainBatch b = random_batch(rng, 16);
  CHECK(std::abs(fm_loss(fm.view(), b).item() - uncond_fm_loss(un.view(), b).item()) <= 1e-12);
}

TEST_CASE("eqm-e parameter gradients match finite differences") {
  for (EnergyKind kind : {EnergyKind::kDot, EnergyKind::kL2Norm}) {
    const auto m = GradientFieldModel::init(small(kind, 4));
    std::mt19937_64 rng(9);
    const TrainBatch b = random_batch(rng, 6);
    const Schedule s = Schedule::truncated(0.8, 4.0);
    ad::Graph g;
    const ParameterSet bound = m.parameters().bind(g);
    const ModelConfig cfg = m.config();
    const ParameterSet grads =
        bound.gradients(ad::backward(eqme_loss(ModelView{&cfg, &bound}, g, b, s)));
    for (const auto& [name, p] : m.parameters().entries()) {
      std::vector<double> fd(p.numel());
      for (std::size_t i = 0; i < p.numel(); ++i) {
        auto eval = [&](double value) {
          GradientFieldModel q = m;
          q.set_parameter(name, with_value(p, i, value));
          ad::Graph gg;
          return eqme_loss(q.view(), gg, b, s).item();
        };
        fd[i] = (eval(p[i] + 1e-5) - eval(p[i] - 1e-5)) / 2e-5;
      }
      CHECK(relative_error(grads.get(name).values(), fd) < 1e-4);
    }
  }
}

TEST_CASE("eqm-e smoke training on a single point") {
  const auto m0 = GradientFieldModel::init(small(EnergyKind::kDot, 2));
  GradientFieldModel m = m0;
  AdamW opt(AdamWConfig{.lr = 1e-3});
  const Tensor point = Tensor::matrix({{1.0, -0.5}});
  const Schedule s;
  const TrainBatch probe = draw_batch(point, {}, false, 64, 999);
  auto eval = [&](const GradientFieldModel& mm) {
    ad::Graph g;
    return eqme_loss(mm.view(), g, probe, s).item();
  };
  const double initial = eval(m);
  for (int step = 0; step < 200; ++step) {
    const TrainBatch b = draw_batch(point, {}, false, 64, step);
    ad::Graph g;
    const ParameterSet bound = m.parameters().bind(g);
    const ModelConfig cfg = m.config();
    const ad::Tensor loss = eqme_loss(ModelView{&cfg, &bound}, g, b, s);
    opt.step(m.mutable_parameters(), bound.gradients(ad::backward(loss)));
  }
  CHECK(eval(m) < initial);
}

TEST_CASE("draw_batch") {
  const auto data = sample_data(ToyDistribution::ring(4, 2.0, 0.1), 50, 1);
  const TrainBatch a = draw_batch(data.points, data.labels, true, 32, 7);
  const TrainBatch b = draw_batch(data.points, data.labels, true, 32, 7);
  CHECK(a.x.identical(b.x));
  CHECK(a.eps.identical(b.eps));
  CHECK(a.gamma.identical(b.gamma));
  CHECK(a.labels == b.labels);
  CHECK(a.labels.size() == 32);
  for (double g : a.gamma.values()) CHECK((g >= 0.0 && g <= 1.0));
  CHECK(draw_batch(data.points, data.labels, false, 32, 7).labels.empty());
}

// ---------------------------------------------------------------------------

namespace {

ParameterSet single(const std::string& name, Tensor t) {
  ParameterSet p;
  p.add(name, std::move(t));
  return p;
}

}  // namespace

TEST_CASE("adamw with zero gradients leaves parameters unchanged") {
  ParameterSet p = single("w", Tensor::vector({1.0, -2.0, 3.0}));
  const ParameterSet before = p;
  AdamW opt;
  for (int i = 0; i < 5; ++i) opt.step(p, single("w", Tensor::zeros({3})));
  CHECK(p.identical(before));
  CHECK(opt.step_count() == 5);
}

TEST_CASE("adamw first step is lr * sign(g)") {
  ParameterSet p = single("w", Tensor::vector({0.0, 0.0, 0.0}));
  AdamW opt(AdamWConfig{.lr = 0.01});
  const Tensor g = Tensor::vector({3.0, -0.5, 1e-3});
  opt.step(p, single("w", g));
  for (std::size_t i = 0; i < 3; ++i) {
    const double expected = -0.01 * g[i] / (std::abs(g[i]) + 1e-8);
    CHECK(std::abs(p.get("w")[i] - expected) <= 1e-15);
  }
}

TEST_CASE("adamw decreases a quadratic each step") {
  ParameterSet p = single("theta", Tensor::vector({1.0, 1.0}));
  AdamW opt(AdamWConfig{.lr = 0.05});
  auto loss = [&] {
    const Tensor& t = p.get("theta");
    return t[0] * t[0] + t[1] * t[1];
  };
  double prev = loss();
  for (int i = 0; i < 10; ++i) {
    opt.step(p, single("theta", ad::scalar_mul(p.get("theta"), 2.0)));
    const double now = loss();
    CHECK(now < prev);
    prev = now;
  }
}

TEST_CASE("adamw weight decay is decoupled") {
  ParameterSet p = single("w", Tensor::vector({2.0}));
  AdamW opt(AdamWConfig{.lr = 0.1, .weight_decay = 0.5});
  opt.step(p, single("w", Tensor::zeros({1})));
  CHECK(p.get("w")[0] == 2.0 * (1.0 - 0.05));
}

TEST_CASE("adamw errors") {
  ParameterSet p = single("w", Tensor::vector({1.0}));
  AdamW opt;
  CHECK_THROWS_AS(opt.step(p, single("v", Tensor::vector({1.0}))), ValidationError);
  CHECK_THROWS_AS(opt.step(p, single("w", Tensor::vector({1.0, 2.0}))), ShapeError);
  CHECK_THROWS_AS(AdamW(AdamWConfig{.lr = -1.0}), ValidationError);
}

TEST_CASE("adamw is deterministic and restorable") {
  std::mt19937_64 rng(1);
  const Tensor g1 = random_tensor({4}, rng), g2 = random_tensor({4}, rng);
  ParameterSet a = single("w", Tensor::vector({1, 2, 3, 4}));
  ParameterSet b = a;
  AdamW oa, ob;
  oa.step(a, single("w", g1));
  ob.step(b, single("w", g1));
  AdamW oc;
  oc.restore(ob.step_count(), ob.first_moment(), ob.second_moment());
  ParameterSet c = b;
  oa.step(a, single("w", g2));
  oc.step(c, single("w", g2));
  CHECK(a.identical(c));
}
