#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>

#include "eqm/checkpoint.hpp"
#include "eqm/config.hpp"
#include "eqm/error.hpp"

using namespace eqm;

namespace {

RunConfig tiny(ObjectiveKind kind = ObjectiveKind::kEqM) {
  RunConfig c;
  c.model.hidden = {16, 16};
  c.data.train_size = 256;
  c.train.batch_size = 32;
  c.train.steps = 10;
  c.optimizer.lr = 1e-3;
  c.objective.kind = kind;
  if (kind == ObjectiveKind::kEqME) c.model.energy = EnergyKind::kDot;
  if (kind == ObjectiveKind::kFM) c.model.noise_conditioned = true;
  return c;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("eqm_test_io_" + name);
}

}  // namespace

TEST_CASE("run config json round-trips exactly") {
  RunConfig c = tiny();
  c.optimizer.lr = 0.1 + 0.2;  // not representable in short decimal
  c.sampler.g_min = 1.0 / 3.0;
  c.sampler.method = SamplerMethod::kAdaptive;
  c.sampler.mu = 0.35;
  c.seeds.train = 0xFFFFFFFFFFFFFFFFull;
  c.data.distribution = ToyDistribution::mixture({{0.1, -0.7}, {1e-300, 3.0}}, 0.05, {0.25, 0.75});
  c.model.num_classes = 2;
  const RunConfig back = run_config_from_json(to_json(c));
  CHECK(back == c);
  CHECK(to_json(back) == to_json(c));
}

TEST_CASE("run config json defaults and errors") {
  CHECK(run_config_from_json("{}") == RunConfig{});
  CHECK_THROWS_WITH_AS(run_config_from_json(R"({"optimizer": {"learning_rate": 1}})"),
                       doctest::Contains("optimizer.learning_rate"), ValidationError);
  CHECK_THROWS_WITH_AS(run_config_from_json(R"({"sampler": {"eta": "x"}})"),
                       doctest::Contains("sampler.eta"), ValidationError);
  CHECK_THROWS_WITH_AS(run_config_from_json(R"({"schedule": {"lambda": -1}})"),
                       doctest::Contains("lambda"), ValidationError);
  CHECK_THROWS_AS(run_config_from_json("{not json"), ValidationError);
  // Noise-conditioned EqM is rejected.
  CHECK_THROWS_AS(run_config_from_json(R"({"model": {"noise_conditioned": true}})"), ValidationError);
  // Label count must agree with the data.
  CHECK_THROWS_AS(run_config_from_json(R"({"model": {"num_classes": 3}})"), ValidationError);
}

TEST_CASE("checkpoint save/load/save is byte identical") {
  for (auto kind : {ObjectiveKind::kEqM, ObjectiveKind::kEqME, ObjectiveKind::kFM}) {
    RunConfig c = tiny(kind);
    Trainer t = make_trainer(c);
    t.run(3);
    const Checkpoint ckpt = snapshot(c, t);
    const auto bytes = serialize(ckpt);
    const auto path = temp_path("roundtrip.ckpt");
    save_checkpoint(path, ckpt);
    const Checkpoint loaded = load_checkpoint(path);
    CHECK(serialize(loaded) == bytes);
    CHECK(loaded.config == c);
    CHECK(loaded.step == 3);
    CHECK(loaded.params.identical(ckpt.params));
    std::filesystem::remove(path);
  }
}

TEST_CASE("checkpoint corruption is detected") {
  RunConfig c = tiny();
  Trainer t = make_trainer(c);
  auto bytes = serialize(snapshot(c, t));
  SUBCASE("bit flip in payload") {
    bytes[bytes.size() / 2] ^= 0x01;
    CHECK_THROWS_WITH_AS(deserialize(bytes), doctest::Contains("digest"), ValidationError);
  }
  SUBCASE("truncation") {
    bytes.resize(bytes.size() - 40);
    CHECK_THROWS_AS(deserialize(bytes), ValidationError);
  }
  SUBCASE("bad magic") {
    bytes[0] = 'X';
    CHECK_THROWS_WITH_AS(deserialize(bytes), doctest::Contains("magic"), ValidationError);
  }
  SUBCASE("future version") {
    bytes[8] = 99;
    CHECK_THROWS_WITH_AS(deserialize(bytes), doctest::Contains("version"), ValidationError);
  }
}

TEST_CASE("resume continues bit-exactly") {
  for (auto kind : {ObjectiveKind::kEqM, ObjectiveKind::kEqME}) {
    RunConfig c = tiny(kind);
    Trainer straight = make_trainer(c);
    const auto all = straight.run(8);

    Trainer first = make_trainer(c);
    first.run(5);
    const auto path = temp_path("resume.ckpt");
    save_checkpoint(path, snapshot(c, first));
    Trainer resumed = resume_trainer(load_checkpoint(path));
    CHECK(resumed.steps_done() == 5);
    const auto rest = resumed.run(3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(rest[i] == all[5 + i]);
    CHECK(resumed.model().parameters().identical(straight.model().parameters()));
    std::filesystem::remove(path);
  }
}

TEST_CASE("init-from checks names and shapes") {
  RunConfig c = tiny();
  const auto src = GradientFieldModel::init(c.model);
  ModelConfig same = c.model;
  same.init_seed = 99;
  CHECK(init_from(same, src.parameters()).parameters().identical(src.parameters()));
  ModelConfig wider = c.model;
  wider.hidden = {32, 16};
  CHECK_THROWS_WITH_AS(init_from(wider, src.parameters()), doctest::Contains("layers.0.weight"),
                       ValidationError);
  ModelConfig deeper = c.model;
  deeper.hidden = {16, 16, 16};
  CHECK_THROWS_AS(init_from(deeper, src.parameters()), ValidationError);
}

TEST_CASE("memorization data source") {
  RunConfig c = tiny();
  c.data.source = DataSource::kMemorization;
  c.data.memorization_points = 5;
  const auto d = training_set(c);
  CHECK(d.points.dim(0) == 5);
  CHECK(run_config_from_json(to_json(c)) == c);
}
