#include "donet/config.hpp"

#include <fstream>
#include <initializer_list>
#include <string_view>
#include <type_traits>

namespace donet {

namespace {

using nlohmann::json;

bool non_negative_integer(const json& j) {
  return j.is_number_unsigned() || (j.is_number_integer() && j.get<std::int64_t>() >= 0);
}

void require_object(const json& j, std::string_view where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
}

void only_keys(const json& j, std::string_view where,
               std::initializer_list<std::string_view> allowed) {
  require_object(j, where);
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("unknown key '" + key + "' in " + std::string(where));
  }
}

template <typename T>
void read(const json& j, std::string_view key, T& out, std::string_view where) {
  auto it = j.find(std::string(key));
  if (it == j.end()) return;
  if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
    if (!non_negative_integer(*it)) {
      throw ConfigError("'" + std::string(key) + "' in " + std::string(where) +
                        " must be a non-negative integer");
    }
  }
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value for '" + std::string(key) + "' in " + std::string(where));
  }
}

template <typename Fn>
auto guarded(std::string_view where, Fn fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string(where) + ": " + e.what());
  }
}

InitScheme parse_interval(const json& j, std::string_view where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw ConfigError(std::string(where) + " must be a [lo, hi] pair");
  }
  InitScheme s{j[0].get<double>(), j[1].get<double>()};
  guarded(where, [&] {
    s.validate();
    return 0;
  });
  return s;
}

ModelSection parse_model(const json& j) {
  only_keys(j, "section 'model'", {"kind", "depth", "width", "map", "lambda_init"});
  ModelSection m;
  std::string kind(to_string(m.kind)), map(to_string(m.map));
  read(j, "kind", kind, "model");
  read(j, "map", map, "model");
  read(j, "depth", m.depth, "model");
  read(j, "width", m.width, "model");
  guarded("model", [&] {
    m.kind = parse_block_kind(kind);
    m.map = parse_map_kind(map);
    return 0;
  });
  if (j.contains("lambda_init")) m.lambda_init = parse_interval(j["lambda_init"], "model.lambda_init");
  if (m.depth < 1) throw ConfigError("model.depth must be >= 1");
  if (m.width < 1) throw ConfigError("model.width must be >= 1");
  return m;
}

DataConfig parse_data(const json& j) {
  only_keys(j, "section 'train.data'",
            {"kind", "n", "noise_sd", "test_fraction", "images", "labels", "test_images",
             "test_labels", "limit"});
  DataConfig d;
  read(j, "kind", d.kind, "train.data");
  read(j, "n", d.n, "train.data");
  read(j, "noise_sd", d.noise_sd, "train.data");
  read(j, "test_fraction", d.test_fraction, "train.data");
  read(j, "images", d.images, "train.data");
  read(j, "labels", d.labels, "train.data");
  read(j, "test_images", d.test_images, "train.data");
  read(j, "test_labels", d.test_labels, "train.data");
  read(j, "limit", d.limit, "train.data");
  guarded("train.data", [&] {
    d.validate();
    return 0;
  });
  return d;
}

TrainSection parse_train(const json& j) {
  only_keys(j, "section 'train'",
            {"epochs", "batch_size", "lr0", "lr_drops", "momentum", "weight_decay", "data"});
  TrainSection t;
  read(j, "epochs", t.epochs, "train");
  read(j, "batch_size", t.batch_size, "train");
  read(j, "lr0", t.lr0, "train");
  read(j, "momentum", t.momentum, "train");
  read(j, "weight_decay", t.weight_decay, "train");
  if (j.contains("lr_drops")) {
    const json& drops = j["lr_drops"];
    if (!drops.is_array()) throw ConfigError("train.lr_drops must be a list of [epoch, divisor]");
    for (const json& d : drops) {
      if (!d.is_array() || d.size() != 2 || !non_negative_integer(d[0]) || !d[1].is_number()) {
        throw ConfigError("train.lr_drops entries must be [epoch, divisor]");
      }
      t.lr_drops.push_back({d[0].get<std::size_t>(), d[1].get<double>()});
    }
  }
  if (j.contains("data")) t.data = parse_data(j["data"]);
  return t;
}

EvalConfig parse_eval(const json& j) {
  only_keys(j, "section 'eval'", {"noise", "attacks", "chunk", "parallel"});
  EvalConfig e;
  read(j, "chunk", e.chunk, "eval");
  read(j, "parallel", e.parallel, "eval");
  if (j.contains("noise")) {
    if (!j["noise"].is_array()) throw ConfigError("eval.noise must be a list");
    for (const json& n : j["noise"]) {
      only_keys(n, "an eval.noise entry", {"kind", "severity", "seed"});
      NoiseSpec spec;
      std::string kind;
      read(n, "kind", kind, "eval.noise");
      spec.kind = guarded("eval.noise", [&] { return perturb::parse_noise_kind(kind); });
      spec.severity = perturb::default_severity(spec.kind);
      read(n, "severity", spec.severity, "eval.noise");
      if (n.contains("seed")) {
        std::uint64_t s = 0;
        read(n, "seed", s, "eval.noise");
        spec.seed = s;
      }
      guarded("eval.noise", [&] {
        perturb::NoiseConfig{spec.kind, spec.severity, 0}.validate();
        return 0;
      });
      e.noises.push_back(spec);
    }
  }
  if (j.contains("attacks")) {
    if (!j["attacks"].is_array()) throw ConfigError("eval.attacks must be a list");
    for (const json& a : j["attacks"]) {
      only_keys(a, "an eval.attacks entry", {"kind", "epsilons", "alpha", "iters", "seed"});
      AttackSpec spec;
      std::string kind;
      read(a, "kind", kind, "eval.attacks");
      spec.kind = guarded("eval.attacks", [&] { return perturb::parse_attack_kind(kind); });
      read(a, "epsilons", spec.epsilons, "eval.attacks");
      read(a, "alpha", spec.alpha, "eval.attacks");
      read(a, "iters", spec.iters, "eval.attacks");
      if (a.contains("seed")) {
        std::uint64_t s = 0;
        read(a, "seed", s, "eval.attacks");
        spec.seed = s;
      }
      if (spec.epsilons.empty()) throw ConfigError("eval.attacks entry has no epsilons");
      for (double eps : spec.epsilons) {
        guarded("eval.attacks", [&] {
          perturb::AttackConfig{spec.kind, eps, spec.alpha, spec.iters, 0}.validate();
          return 0;
        });
      }
      e.attacks.push_back(spec);
    }
  }
  return e;
}

LandscapeSection parse_landscape(const json& j) {
  only_keys(j, "section 'landscape'", {"G", "sample_index", "step"});
  LandscapeSection l;
  read(j, "G", l.G, "landscape");
  read(j, "sample_index", l.sample_index, "landscape");
  read(j, "step", l.step, "landscape");
  if (!(l.step > 0.0)) throw ConfigError("landscape.step must be > 0");
  return l;
}

OdeSection parse_ode(const json& j) {
  only_keys(j, "section 'ode'", {"lambda", "rho", "dt", "T"});
  OdeSection o;
  std::string rho(ode::to_string(o.rho));
  read(j, "lambda", o.lambda, "ode");
  read(j, "rho", rho, "ode");
  read(j, "dt", o.dt, "ode");
  read(j, "T", o.T, "ode");
  o.rho = guarded("ode", [&] { return ode::parse_rho_kind(rho); });
  if (!(o.lambda >= 0.0)) throw ConfigError("ode.lambda must be >= 0");
  if (!(o.dt > 0.0) || !(o.T > 0.0)) throw ConfigError("ode.dt and ode.T must be > 0");
  return o;
}

StabilitySection parse_stability(const json& j) {
  only_keys(j, "section 'stability'", {"dynamics", "start", "matrix", "lambda", "rho"});
  StabilitySection s;
  std::string rho(ode::to_string(s.rho));
  read(j, "dynamics", s.dynamics, "stability");
  read(j, "start", s.start, "stability");
  read(j, "matrix", s.matrix, "stability");
  read(j, "lambda", s.lambda, "stability");
  read(j, "rho", rho, "stability");
  s.rho = guarded("stability", [&] { return ode::parse_rho_kind(rho); });
  if (!(s.lambda >= 0.0)) throw ConfigError("stability.lambda must be >= 0");
  return s;
}

SweepSection parse_sweep(const json& j) {
  only_keys(j, "section 'sweep'", {"intervals", "seeds"});
  SweepSection s;
  if (j.contains("intervals")) {
    if (!j["intervals"].is_array()) throw ConfigError("sweep.intervals must be a list");
    s.intervals.clear();
    for (const json& iv : j["intervals"]) s.intervals.push_back(parse_interval(iv, "sweep.intervals"));
    if (s.intervals.size() < 2) throw ConfigError("sweep needs at least 2 intervals");
  }
  read(j, "seeds", s.seeds, "sweep");
  if (s.seeds.empty()) throw ConfigError("sweep.seeds is empty");
  return s;
}

EnsembleSection parse_ensemble(const json& j) {
  only_keys(j, "section 'ensemble'", {"runs"});
  EnsembleSection e;
  read(j, "runs", e.runs, "ensemble");
  return e;
}

}  // namespace

TrainConfig RunConfigFile::train_config() const {
  if (!model) throw ConfigError("missing section 'model'");
  if (!train) throw ConfigError("missing section 'train'");
  TrainConfig c;
  c.epochs = train->epochs;
  c.batch_size = train->batch_size;
  c.lr0 = train->lr0;
  c.lr_drops = train->lr_drops;
  c.momentum = train->momentum;
  c.weight_decay = train->weight_decay;
  c.data = train->data;
  c.lambda_init = model->lambda_init;
  c.model.kind = model->kind;
  c.model.depth = model->depth;
  c.model.width = model->width;
  c.model.map = model->map;
  c.seed = seed;
  guarded("train", [&] {
    c.validate();
    return 0;
  });
  return c;
}

RunConfigFile parse_run_config(const json& j) {
  only_keys(j, "the top level",
            {"model", "train", "eval", "landscape", "ode", "stability", "sweep", "ensemble",
             "output_dir", "seed"});
  RunConfigFile c;
  if (!j.contains("seed")) throw ConfigError("missing required key 'seed'");
  if (!j.contains("output_dir")) throw ConfigError("missing required key 'output_dir'");
  if (!non_negative_integer(j["seed"])) throw ConfigError("'seed' must be a non-negative integer");
  if (!j["output_dir"].is_string()) throw ConfigError("'output_dir' must be a string");
  c.seed = j["seed"].get<std::uint64_t>();
  c.output_dir = j["output_dir"].get<std::string>();
  if (j.contains("model")) c.model = parse_model(j["model"]);
  if (j.contains("train")) c.train = parse_train(j["train"]);
  if (j.contains("eval")) c.eval = parse_eval(j["eval"]);
  if (j.contains("landscape")) c.landscape = parse_landscape(j["landscape"]);
  if (j.contains("ode")) c.ode = parse_ode(j["ode"]);
  if (j.contains("stability")) c.stability = parse_stability(j["stability"]);
  if (j.contains("sweep")) c.sweep = parse_sweep(j["sweep"]);
  if (j.contains("ensemble")) c.ensemble = parse_ensemble(j["ensemble"]);
  return c;
}

RunConfigFile load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_run_config(j);
}

}  // namespace donet
