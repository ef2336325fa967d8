#include "eqm/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "eqm/error.hpp"
#include "json.hpp"

namespace eqm {

using nlohmann::json;

void DataSpec::validate() const {
  distribution.validate();
  if (source == DataSource::kDistribution && train_size == 0) {
    throw ValidationError("data.train_size must be >= 1");
  }
  if (source == DataSource::kMemorization && memorization_points == 0) {
    throw ValidationError("data.memorization_points must be >= 1");
  }
}

void RunConfig::validate() const {
  data.validate();
  model.validate();
  optimizer.validate();
  sampler.validate();
  objective.validate_for(model);
  if (model.input_dim != 2) throw ValidationError("model.input_dim must be 2 for toy data");
  if (model.num_classes > 0 && model.num_classes != data.distribution.num_labels()) {
    throw ValidationError("model.num_classes (" + std::to_string(model.num_classes) +
                          ") must equal the number of data labels (" +
                          std::to_string(data.distribution.num_labels()) + ")");
  }
  if (model.num_classes > 0 && data.source == DataSource::kMemorization) {
    throw ValidationError("memorization data has no labels; use model.num_classes = 0");
  }
  if (train.batch_size == 0) throw ValidationError("train.batch_size must be >= 1");
  if (output_dir.empty()) throw ValidationError("output_dir must not be empty");
}

namespace {

json points_json(const std::vector<Point2>& pts) {
  json a = json::array();
  for (const auto& p : pts) a.push_back({p[0], p[1]});
  return a;
}

json to_json_value(const RunConfig& c) {
  const ToyDistribution& d = c.data.distribution;
  json j;
  j["data"] = {
      {"source", c.data.source == DataSource::kDistribution ? "distribution" : "memorization"},
      {"kind", std::string(to_string(d.kind))},
      {"modes", points_json(d.modes)},
      {"mode_std", d.mode_std},
      {"weights", d.weights},
      {"box_lo", {d.box_lo[0], d.box_lo[1]}},
      {"box_hi", {d.box_hi[0], d.box_hi[1]}},
      {"noise_scale", d.noise_scale},
      {"train_size", c.data.train_size},
      {"memorization_points", c.data.memorization_points},
  };
  j["model"] = {
      {"input_dim", c.model.input_dim},
      {"hidden", c.model.hidden},
      {"activation", std::string(to_string(c.model.activation))},
      {"num_classes", c.model.num_classes},
      {"noise_conditioned", c.model.noise_conditioned},
      {"energy", std::string(to_string(c.model.energy))},
      {"init_seed", c.model.init_seed},
  };
  j["schedule"] = {
      {"kind", std::string(to_string(c.objective.schedule.kind))},
      {"a", c.objective.schedule.a},
      {"b", c.objective.schedule.b},
      {"lambda", c.objective.schedule.lambda},
  };
  j["objective"] = {
      {"kind", std::string(to_string(c.objective.kind))},
      {"allow_non_equilibrium", c.objective.allow_non_equilibrium},
  };
  j["optimizer"] = {
      {"lr", c.optimizer.lr},
      {"beta1", c.optimizer.beta1},
      {"beta2", c.optimizer.beta2},
      {"weight_decay", c.optimizer.weight_decay},
      {"epsilon", c.optimizer.epsilon},
      {"decay_steps", c.optimizer.decay_steps},
      {"final_lr_fraction", c.optimizer.final_lr_fraction},
  };
  j["sampler"] = {
      {"method", std::string(to_string(c.sampler.method))},
      {"eta", c.sampler.eta},
      {"mu", c.sampler.mu},
      {"steps", c.sampler.steps},
      {"g_min", c.sampler.g_min ? json(*c.sampler.g_min) : json(nullptr)},
      {"max_steps", c.sampler.max_steps},
  };
  j["seeds"] = {{"data", c.seeds.data}, {"train", c.seeds.train}, {"sample", c.seeds.sample}};
  j["train"] = {
      {"steps", c.train.steps},
      {"batch_size", c.train.batch_size},
      {"checkpoint_every", c.train.checkpoint_every},
  };
  j["output_dir"] = c.output_dir;
  return j;
}

// Reads typed fields out of one JSON object, tracking which keys were used so
// leftovers can be reported.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ValidationError(path_ + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    used_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ValidationError("field '" + field(key) + "' has the wrong type");
    }
  }

  std::optional<Reader> child(const char* key) {
    used_.insert(key);
    if (!j_.contains(key)) return std::nullopt;
    return Reader(j_.at(key), field(key));
  }

  const json* raw(const char* key) {
    used_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!used_.count(k)) throw ValidationError("unknown field '" + field(k.c_str()) + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

template <typename F>
auto named(const std::string& field, F&& f) {
  try {
    return f();
  } catch (const ValidationError& e) {
    throw ValidationError("field '" + field + "': " + e.what());
  }
}

Point2 read_point(const json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw ValidationError("field '" + field + "' must be a pair of numbers");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

std::string to_json(const RunConfig& config) { return to_json_value(config).dump(2) + "\n"; }

RunConfig run_config_from_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  Reader top(root, "");
  if (auto r = top.child("data")) {
    std::string source = "distribution", kind = std::string(to_string(c.data.distribution.kind));
    r->get("source", source);
    if (source == "distribution") c.data.source = DataSource::kDistribution;
    else if (source == "memorization") c.data.source = DataSource::kMemorization;
    else throw ValidationError("field 'data.source' must be 'distribution' or 'memorization'");
    r->get("kind", kind);
    ToyDistribution& d = c.data.distribution;
    d.kind = named("data.kind", [&] { return parse_distribution_kind(kind); });
    if (const json* m = r->raw("modes")) {
      if (!m->is_array()) throw ValidationError("field 'data.modes' must be a list of pairs");
      d.modes.clear();
      for (const auto& p : *m) d.modes.push_back(read_point(p, "data.modes"));
    }
    r->get("mode_std", d.mode_std);
    r->get("weights", d.weights);
    if (const json* p = r->raw("box_lo")) d.box_lo = read_point(*p, "data.box_lo");
    if (const json* p = r->raw("box_hi")) d.box_hi = read_point(*p, "data.box_hi");
    r->get("noise_scale", d.noise_scale);
    r->get("train_size", c.data.train_size);
    r->get("memorization_points", c.data.memorization_points);
    r->finish();
  }
  if (auto r = top.child("model")) {
    std::string activation = std::string(to_string(c.model.activation));
    std::string energy = std::string(to_string(c.model.energy));
    r->get("input_dim", c.model.input_dim);
    r->get("hidden", c.model.hidden);
    r->get("activation", activation);
    r->get("num_classes", c.model.num_classes);
    r->get("noise_conditioned", c.model.noise_conditioned);
    r->get("energy", energy);
    r->get("init_seed", c.model.init_seed);
    c.model.activation = named("model.activation", [&] { return parse_activation(activation); });
    c.model.energy = named("model.energy", [&] { return parse_energy_kind(energy); });
    r->finish();
  }
  if (auto r = top.child("schedule")) {
    std::string kind = std::string(to_string(c.objective.schedule.kind));
    r->get("kind", kind);
    c.objective.schedule.kind = named("schedule.kind", [&] { return parse_schedule_kind(kind); });
    r->get("a", c.objective.schedule.a);
    r->get("b", c.objective.schedule.b);
    r->get("lambda", c.objective.schedule.lambda);
    r->finish();
    named("schedule", [&] { c.objective.schedule.validate(); return 0; });
  }
  if (auto r = top.child("objective")) {
    std::string kind = std::string(to_string(c.objective.kind));
    r->get("kind", kind);
    c.objective.kind = named("objective.kind", [&] { return parse_objective_kind(kind); });
    r->get("allow_non_equilibrium", c.objective.allow_non_equilibrium);
    r->finish();
  }
  if (auto r = top.child("optimizer")) {
    r->get("lr", c.optimizer.lr);
    r->get("beta1", c.optimizer.beta1);
    r->get("beta2", c.optimizer.beta2);
    r->get("weight_decay", c.optimizer.weight_decay);
    r->get("epsilon", c.optimizer.epsilon);
    r->get("decay_steps", c.optimizer.decay_steps);
    r->get("final_lr_fraction", c.optimizer.final_lr_fraction);
    r->finish();
  }
  if (auto r = top.child("sampler")) {
    std::string method = std::string(to_string(c.sampler.method));
    r->get("method", method);
    c.sampler.method = named("sampler.method", [&] { return parse_sampler_method(method); });
    r->get("eta", c.sampler.eta);
    r->get("mu", c.sampler.mu);
    r->get("steps", c.sampler.steps);
    if (const json* g = r->raw("g_min")) {
      if (g->is_null()) c.sampler.g_min.reset();
      else if (g->is_number()) c.sampler.g_min = g->get<double>();
      else throw ValidationError("field 'sampler.g_min' must be a number or null");
    }
    r->get("max_steps", c.sampler.max_steps);
    r->finish();
  }
  if (auto r = top.child("seeds")) {
    r->get("data", c.seeds.data);
    r->get("train", c.seeds.train);
    r->get("sample", c.seeds.sample);
    r->finish();
  }
  if (auto r = top.child("train")) {
    r->get("steps", c.train.steps);
    r->get("batch_size", c.train.batch_size);
    r->get("checkpoint_every", c.train.checkpoint_every);
    r->finish();
  }
  top.get("output_dir", c.output_dir);
  top.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return run_config_from_json(ss.str());
}

LabeledPoints training_set(const RunConfig& config) {
  if (config.data.source == DataSource::kMemorization) {
    const ad::Tensor pts = fixed_memorization_set(config.data.memorization_points, config.seeds.data);
    return {pts, std::vector<int>(pts.dim(0), 0)};
  }
  return sample_data(config.data.distribution, config.data.train_size, config.seeds.data);
}

}  // namespace eqm
