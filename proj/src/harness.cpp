#include "donet/harness.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "donet/ops.hpp"
#include "donet/rng.hpp"

namespace donet {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

}  // namespace

void DataConfig::validate() const {
  if (kind == "moons" || kind == "spirals") {
    if (n < 4) throw std::invalid_argument("data.n must be >= 4");
    if (!(noise_sd >= 0.0)) throw std::invalid_argument("data.noise_sd must be >= 0");
  } else if (kind == "idx") {
    if (images.empty() || labels.empty()) {
      throw std::invalid_argument("idx data needs images and labels paths");
    }
    if (test_images.empty() != test_labels.empty()) {
      throw std::invalid_argument("idx test images and labels go together");
    }
  } else {
    throw std::invalid_argument("unknown data kind '" + kind + "'");
  }
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw std::invalid_argument("data.test_fraction must lie in (0, 1)");
  }
}

Split prepare_data(const DataConfig& cfg, MapKind map, std::uint64_t seed) {
  cfg.validate();
  Split split;
  if (cfg.kind == "idx") {
    Dataset all = load_idx(cfg.images, cfg.labels);
    if (cfg.limit > 0 && cfg.limit < all.size()) all = all.slice(0, cfg.limit);
    if (!cfg.test_images.empty()) {
      split.train = std::move(all);
      split.test = load_idx(cfg.test_images, cfg.test_labels);
      split.test.classes = split.train.classes =
          std::max(split.train.classes, split.test.classes);
    } else {
      split = split_dataset(all, cfg.test_fraction, sub_seed(seed, "split"));
    }
    if (map == MapKind::Dense) {
      split.train = split.train.flattened();
      split.test = split.test.flattened();
    }
    return split;
  }
  if (map == MapKind::Conv) {
    throw std::invalid_argument("conv models need image data (data.kind = idx)");
  }
  const Dataset all = synth_dataset(parse_synth_kind(cfg.kind), cfg.n, cfg.noise_sd,
                                    sub_seed(seed, "data"));
  return split_dataset(all, cfg.test_fraction, sub_seed(seed, "split"));
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("train.epochs must be >= 1");
  if (batch_size < 2) throw std::invalid_argument("train.batch_size must be >= 2");
  if (!(lr0 > 0.0)) throw std::invalid_argument("train.lr0 must be > 0");
  for (std::size_t i = 0; i < lr_drops.size(); ++i) {
    if (!(lr_drops[i].divisor > 0.0)) {
      throw std::invalid_argument("learning-rate divisors must be > 0");
    }
    if (i > 0 && lr_drops[i].epoch < lr_drops[i - 1].epoch) {
      throw std::invalid_argument("learning-rate drops must be sorted by epoch");
    }
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw std::invalid_argument("train.momentum must lie in [0, 1)");
  }
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("train.weight_decay must be >= 0");
  lambda_init.validate();
}

double learning_rate(const TrainConfig& cfg, std::size_t epoch) {
  double lr = cfg.lr0;
  for (const LrDrop& d : cfg.lr_drops) {
    if (d.epoch <= epoch) lr /= d.divisor;
  }
  return lr;
}

TrainResult sgd_train(const TrainConfig& cfg, const Dataset& train) {
  cfg.validate();
  ModelConfig mc = cfg.model;
  mc.input_shape = train.sample_shape();
  mc.classes = train.classes;
  TrainResult result{build_model(mc, cfg.lambda_init, cfg.seed), {}, {}, false, {}};
  Model& model = result.model;
  std::vector<ParamRef> params = model.parameters();
  std::vector<Tensor> velocity;
  velocity.reserve(params.size());
  for (const ParamRef& p : params) velocity.push_back(Tensor::like(*p.tensor));

  Rng shuffle = make_rng(sub_seed(cfg.seed, "shuffle"));
  const double chance = 100.0 / static_cast<double>(train.classes) + 1.0;
  std::size_t stuck = 0;
  const std::size_t n = train.size();

  for (std::size_t epoch = 0; epoch < cfg.epochs && !result.failed; ++epoch) {
    const double lr = learning_rate(cfg, epoch);
    const std::vector<std::size_t> order = permutation(n, shuffle);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      if (end - start < 2) continue;
      const Dataset batch =
          train.subset(std::span<const std::size_t>(order).subspan(start, end - start));
      Graph g;
      ParamBinder bind(g, true);
      Var logits = model.forward(bind, g.constant(batch.x), Mode::Train);
      Var loss = softmax_cross_entropy(logits, batch.y);
      const double lv = loss.value().item();
      if (!std::isfinite(lv)) {
        result.failed = true;
        result.failure_reason = "non-finite training loss in epoch " + std::to_string(epoch);
        break;
      }
      g.backward(loss);
      for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k].tensor;
        const Tensor& grad = g.grad(bind.find(p)->id);
        const double wd = params[k].decay ? cfg.weight_decay : 0.0;
        Tensor& v = velocity[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
          v[i] = cfg.momentum * v[i] + grad[i];
          p[i] -= lr * (v[i] + wd * p[i]);
        }
      }
      const auto pred = argmax_rows(logits.value());
      for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == batch.y[i];
      loss_sum += lv * static_cast<double>(end - start);
      seen += end - start;
    }
    if (result.failed) break;
    const double acc = 100.0 * static_cast<double>(correct) / static_cast<double>(seen);
    result.loss_curve.push_back(loss_sum / static_cast<double>(seen));
    result.accuracy_curve.push_back(acc);
    stuck = acc <= chance ? stuck + 1 : 0;
    if (stuck >= kChanceEpochs) {
      result.failed = true;
      result.failure_reason = "training accuracy at chance for " +
                              std::to_string(kChanceEpochs) + " consecutive epochs";
    }
  }
  return result;
}

EvalConfig resolve_seeds(EvalConfig cfg, std::uint64_t run_seed) {
  for (NoiseSpec& n : cfg.noises) {
    if (!n.seed) n.seed = sub_seed(run_seed, "noise:" + std::string(perturb::to_string(n.kind)));
  }
  for (AttackSpec& a : cfg.attacks) {
    if (!a.seed) a.seed = sub_seed(run_seed, "attack:" + std::string(perturb::to_string(a.kind)));
  }
  return cfg;
}

std::string epsilon_label(double epsilon) {
  const double k = epsilon * 255.0;
  const double r = std::round(k);
  if (std::abs(k - r) < 1e-9) return std::to_string(static_cast<long long>(r)) + "/255";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", epsilon);
  return buf;
}

double accuracy_percent(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size() || labels.empty()) {
    throw std::invalid_argument("accuracy needs equally sized, non-empty inputs");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predictions[i] == labels[i];
  return 100.0 * static_cast<double>(correct) / static_cast<double>(labels.size());
}

namespace {

struct EvalTask {
  std::string name;
  enum { Clean, Noise, Attack } kind;
  perturb::NoiseConfig noise;
  perturb::AttackConfig attack;
};

std::vector<EvalTask> eval_tasks(const EvalConfig& cfg) {
  std::vector<EvalTask> tasks;
  tasks.push_back({"clean", EvalTask::Clean, {}, {}});
  std::set<std::string> names{"clean"};
  auto unique = [&names](std::string name) {
    if (!names.insert(name).second) {
      throw std::invalid_argument("duplicate evaluation '" + name + "'");
    }
    return name;
  };
  std::multiset<perturb::NoiseKind> kinds;
  for (const NoiseSpec& n : cfg.noises) kinds.insert(n.kind);
  for (const NoiseSpec& n : cfg.noises) {
    std::string name = "noise:" + std::string(perturb::to_string(n.kind));
    if (kinds.count(n.kind) > 1) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "@%g", n.severity);
      name += buf;
    }
    perturb::NoiseConfig nc{n.kind, n.severity, n.seed.value_or(0)};
    nc.validate();
    tasks.push_back({unique(name), EvalTask::Noise, nc, {}});
  }
  for (const AttackSpec& a : cfg.attacks) {
    for (double eps : a.epsilons) {
      perturb::AttackConfig ac{a.kind, eps, a.alpha, a.iters, a.seed.value_or(0)};
      ac.validate();
      tasks.push_back({unique(std::string(perturb::to_string(a.kind)) + "@" + epsilon_label(eps)),
                       EvalTask::Attack, {}, ac});
    }
  }
  return tasks;
}

}  // namespace

Evaluation evaluate(const Classifier& model, const Dataset& data, const EvalConfig& cfg) {
  if (data.size() == 0) throw std::invalid_argument("evaluation on an empty dataset");
  if (cfg.chunk < 1) throw std::invalid_argument("evaluation chunk must be >= 1");
  const std::vector<EvalTask> tasks = eval_tasks(cfg);
  const std::size_t n = data.size();
  const std::size_t chunks = (n + cfg.chunk - 1) / cfg.chunk;
  std::vector<std::vector<int>> preds(tasks.size(), std::vector<int>(n, 0));

  std::exception_ptr error;
  const long long total = static_cast<long long>(chunks * tasks.size());
#pragma omp parallel for schedule(dynamic, 1) if (cfg.parallel && total > 1)
  for (long long w = 0; w < total; ++w) {
    try {
      const std::size_t c = static_cast<std::size_t>(w) / tasks.size();
      const EvalTask& task = tasks[static_cast<std::size_t>(w) % tasks.size()];
      const std::size_t begin = c * cfg.chunk;
      const std::size_t end = std::min(n, begin + cfg.chunk);
      const Dataset part = data.slice(begin, end);
      Tensor input;
      switch (task.kind) {
        case EvalTask::Clean:
          input = part.x;
          break;
        case EvalTask::Noise:
          input = perturb::apply_noise(part.x, task.noise, begin);
          break;
        case EvalTask::Attack:
          input = perturb::attack(model, part.x, part.y, task.attack, begin);
          break;
      }
      const auto p = argmax_rows(model.probabilities(input));
      auto& dst = preds[static_cast<std::size_t>(w) % tasks.size()];
      std::copy(p.begin(), p.end(), dst.begin() + static_cast<std::ptrdiff_t>(begin));
    } catch (...) {
#pragma omp critical(donet_eval_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);

  Evaluation out;
  double noise_sum = 0.0;
  std::size_t noise_count = 0;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const double acc = accuracy_percent(preds[t], data.y);
    out.metrics[tasks[t].name] = acc;
    if (tasks[t].kind == EvalTask::Noise) {
      noise_sum += acc;
      ++noise_count;
    }
    out.predictions[tasks[t].name] = std::move(preds[t]);
  }
  if (noise_count > 0) out.metrics["noise_avg"] = noise_sum / static_cast<double>(noise_count);
  return out;
}

void write_predictions_csv(const Evaluation& eval, const Dataset& data,
                           const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "index,label";
  for (const auto& [name, _] : eval.predictions) out << ',' << name;
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << i << ',' << data.y[i];
    for (const auto& [_, p] : eval.predictions) out << ',' << p[i];
    out << '\n';
  }
}

void write_metrics_csv(const Metrics& metrics, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "metric,value\n";
  for (const auto& [name, v] : metrics) out << name << ',' << v << '\n';
}

nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json drops = nlohmann::json::array();
  for (const auto& d : c.lr_drops) drops.push_back({d.epoch, d.divisor});
  return {
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"lr0", c.lr0},
      {"lr_drops", drops},
      {"momentum", c.momentum},
      {"weight_decay", c.weight_decay},
      {"lambda_init", {c.lambda_init.lambda_lo, c.lambda_init.lambda_hi}},
      {"seed", c.seed},
      {"model",
       {{"kind", std::string(to_string(c.model.kind))},
        {"depth", c.model.depth},
        {"width", c.model.width},
        {"map", std::string(to_string(c.model.map))}}},
      {"data",
       {{"kind", c.data.kind},
        {"n", c.data.n},
        {"noise_sd", c.data.noise_sd},
        {"test_fraction", c.data.test_fraction},
        {"images", c.data.images},
        {"labels", c.data.labels},
        {"test_images", c.data.test_images},
        {"test_labels", c.data.test_labels},
        {"limit", c.data.limit}}},
  };
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.lr0 = j.at("lr0").get<double>();
  for (const auto& d : j.at("lr_drops")) {
    c.lr_drops.push_back({d.at(0).get<std::size_t>(), d.at(1).get<double>()});
  }
  c.momentum = j.at("momentum").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.lambda_init = {j.at("lambda_init").at(0).get<double>(),
                   j.at("lambda_init").at(1).get<double>()};
  c.seed = j.at("seed").get<std::uint64_t>();
  const auto& m = j.at("model");
  c.model.kind = parse_block_kind(m.at("kind").get<std::string>());
  c.model.depth = m.at("depth").get<std::size_t>();
  c.model.width = m.at("width").get<std::size_t>();
  c.model.map = parse_map_kind(m.at("map").get<std::string>());
  const auto& d = j.at("data");
  c.data.kind = d.at("kind").get<std::string>();
  c.data.n = d.at("n").get<std::size_t>();
  c.data.noise_sd = d.at("noise_sd").get<double>();
  c.data.test_fraction = d.at("test_fraction").get<double>();
  c.data.images = d.at("images").get<std::string>();
  c.data.labels = d.at("labels").get<std::string>();
  c.data.test_images = d.at("test_images").get<std::string>();
  c.data.test_labels = d.at("test_labels").get<std::string>();
  c.data.limit = d.at("limit").get<std::size_t>();
  return c;
}

nlohmann::json to_json(const RunRecord& r) {
  return {
      {"config", to_json(r.config)},
      {"params_file", r.params_file},
      {"metrics", r.metrics},
      {"loss_curve", r.loss_curve},
      {"accuracy_curve", r.accuracy_curve},
      {"failed", r.failed},
      {"failure_reason", r.failure_reason},
      {"fraction_active", r.fraction_active},
      {"wall_seconds", r.wall_seconds},
  };
}

RunRecord run_record_from_json(const nlohmann::json& j) {
  RunRecord r;
  r.config = train_config_from_json(j.at("config"));
  r.params_file = j.at("params_file").get<std::string>();
  r.metrics = j.at("metrics").get<Metrics>();
  r.loss_curve = j.at("loss_curve").get<std::vector<double>>();
  r.accuracy_curve = j.at("accuracy_curve").get<std::vector<double>>();
  r.failed = j.at("failed").get<bool>();
  r.failure_reason = j.at("failure_reason").get<std::string>();
  r.fraction_active = j.at("fraction_active").get<double>();
  r.wall_seconds = j.at("wall_seconds").get<double>();
  return r;
}

namespace {

bool all_finite(Model& m) {
  for (const ParamRef& p : m.parameters()) {
    if (!p.tensor->all_finite()) return false;
  }
  return true;
}

}  // namespace

RunOutput run_experiment(const TrainConfig& cfg, const EvalConfig& eval) {
  const auto t0 = std::chrono::steady_clock::now();
  const Split split = prepare_data(cfg.data, cfg.model.map, cfg.seed);
  TrainResult trained = sgd_train(cfg, split.train);
  RunOutput out{{}, std::move(trained.model)};
  RunRecord& r = out.record;
  r.config = cfg;
  r.loss_curve = std::move(trained.loss_curve);
  r.accuracy_curve = std::move(trained.accuracy_curve);
  r.failed = trained.failed;
  r.failure_reason = trained.failure_reason;

  const EvalConfig resolved = resolve_seeds(eval, cfg.seed);
  const ModelClassifier clf(out.model);
  if (all_finite(out.model)) {
    r.metrics = evaluate(clf, split.test, resolved).metrics;
    r.fraction_active = coefficient_report(out.model, &split.test.x).fraction_active;
  } else {
    // No usable gradient: attacked predictions are the clean ones.
    EvalConfig no_attacks = resolved;
    no_attacks.attacks.clear();
    r.metrics = evaluate(clf, split.test, no_attacks).metrics;
    for (const EvalTask& t : eval_tasks(resolved)) {
      if (t.kind == EvalTask::Attack) r.metrics[t.name] = r.metrics.at("clean");
    }
    r.fraction_active = 0.0;
  }
  r.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

std::vector<InitScheme> default_sweep_intervals() {
  return {{0.0, 0.1}, {0.1, 0.2}, {0.2, 0.25}, {0.25, 0.3}, {0.3, 0.4}};
}

std::map<std::string, MetricSummary> summarize_runs(const std::vector<const RunRecord*>& runs) {
  std::set<std::string> names;
  for (const RunRecord* r : runs) {
    for (const auto& [name, _] : r->metrics) names.insert(name);
  }
  std::size_t failed = 0;
  for (const RunRecord* r : runs) failed += r->failed;
  std::map<std::string, MetricSummary> out;
  for (const std::string& name : names) {
    std::vector<double> values;
    for (const RunRecord* r : runs) {
      if (!r->failed) values.push_back(r->metrics.at(name));
    }
    MetricSummary s;
    s.n_runs = values.size();
    s.n_failed = failed;
    if (!values.empty()) {
      double sum = 0.0;
      for (double v : values) sum += v;
      s.mean = sum / static_cast<double>(values.size());
      if (values.size() >= 2) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
      }
    } else {
      s.mean = std::numeric_limits<double>::quiet_NaN();
    }
    out[name] = s;
  }
  return out;
}

SweepResult init_sweep(const TrainConfig& base, const std::vector<InitScheme>& intervals,
                       const std::vector<std::uint64_t>& seeds, const EvalConfig& eval) {
  if (intervals.size() < 2) throw std::invalid_argument("sweep needs at least 2 intervals");
  if (seeds.empty()) throw std::invalid_argument("sweep needs at least one seed");
  SweepResult result;
  result.intervals = intervals;
  for (const InitScheme& iv : intervals) {
    iv.validate();
    std::vector<const RunRecord*> group;
    const std::size_t first = result.runs.size();
    for (std::uint64_t seed : seeds) {
      TrainConfig cfg = base;
      cfg.lambda_init = iv;
      cfg.seed = seed;
      result.runs.push_back({iv, seed, run_experiment(cfg, eval).record});
    }
    for (std::size_t k = first; k < result.runs.size(); ++k) group.push_back(&result.runs[k].record);
    result.summaries.push_back(summarize_runs(group));
  }
  return result;
}

void write_summary_csv(const std::map<std::string, MetricSummary>& summary,
                       const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "metric,mean,sd,n_runs,n_failed\n";
  for (const auto& [name, s] : summary) {
    out << name << ',';
    if (s.n_runs > 0) out << s.mean;
    out << ',';
    if (s.sd) out << *s.sd;
    out << ',' << s.n_runs << ',' << s.n_failed << '\n';
  }
}

void write_sweep_runs_csv(const SweepResult& result, const std::filesystem::path& path) {
  auto out = open_out(path);
  std::set<std::string> names;
  for (const auto& run : result.runs) {
    for (const auto& [name, _] : run.record.metrics) names.insert(name);
  }
  out << "interval_lo,interval_hi,seed,failed";
  for (const auto& name : names) out << ',' << name;
  out << '\n';
  for (const auto& run : result.runs) {
    out << run.interval.lambda_lo << ',' << run.interval.lambda_hi << ',' << run.seed << ','
        << (run.record.failed ? 1 : 0);
    for (const auto& name : names) {
      out << ',';
      auto it = run.record.metrics.find(name);
      if (it != run.record.metrics.end()) out << it->second;
    }
    out << '\n';
  }
}

EnsembleResult ensemble_eval(const std::vector<const Model*>& members, const Dataset& data,
                             const EvalConfig& cfg) {
  if (members.size() < 2) throw std::invalid_argument("ensemble needs at least 2 runs");
  const EnsembleClassifier ensemble(members);
  EnsembleResult r;
  for (const Model* m : members) {
    r.members.push_back(evaluate(ModelClassifier(*m), data, cfg).metrics);
  }
  r.ensemble = evaluate(ensemble, data, cfg).metrics;
  for (const auto& [name, value] : r.ensemble) {
    double sum = 0.0;
    for (const Metrics& m : r.members) sum += m.at(name);
    const double mean = sum / static_cast<double>(r.members.size());
    r.single_mean[name] = mean;
    r.improvement[name] = value - mean;
  }
  return r;
}

void write_member_metrics_csv(const EnsembleResult& result,
                              const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "run,metric,value\n";
  for (std::size_t k = 0; k < result.members.size(); ++k) {
    for (const auto& [name, v] : result.members[k]) out << k << ',' << name << ',' << v << '\n';
  }
  for (const auto& [name, v] : result.ensemble) out << "ensemble," << name << ',' << v << '\n';
}

double LandscapeGrid::loss_at(long i, long j) const {
  const long g = static_cast<long>(G);
  if (i < -g || i > g || j < -g || j > g) throw std::out_of_range("grid index");
  return loss[static_cast<std::size_t>(i + g) * side() + static_cast<std::size_t>(j + g)];
}

int LandscapeGrid::pred_at(long i, long j) const {
  const long g = static_cast<long>(G);
  if (i < -g || i > g || j < -g || j > g) throw std::out_of_range("grid index");
  return pred[static_cast<std::size_t>(i + g) * side() + static_cast<std::size_t>(j + g)];
}

LandscapeGrid landscape_scan_directions(const Classifier& model, const Tensor& x, int label,
                                        std::size_t G, double step, const Tensor& d1,
                                        const Tensor& d2) {
  if (x.rank() < 2 || x.dim(0) != 1) {
    throw std::invalid_argument("landscape input must be a single sample with batch dim 1");
  }
  if (d1.shape() != x.shape() || d2.shape() != x.shape()) {
    throw std::invalid_argument("landscape directions must match the input shape");
  }
  LandscapeGrid grid;
  grid.G = G;
  grid.step = step;
  grid.label = label;
  grid.d1 = d1;
  grid.d2 = d2;
  const std::size_t side = grid.side();
  const std::size_t points = side * side;
  const std::size_t per = x.size();
  Shape shape = x.shape();
  shape[0] = points;
  Tensor batch(shape);
  const long g = static_cast<long>(G);
  for (long i = -g; i <= g; ++i) {
    for (long j = -g; j <= g; ++j) {
      const std::size_t row =
          static_cast<std::size_t>(i + g) * side + static_cast<std::size_t>(j + g);
      const double a = static_cast<double>(i) * step;
      const double b = static_cast<double>(j) * step;
      for (std::size_t k = 0; k < per; ++k) {
        const double v = x[k] + a * d1[k] + b * d2[k];
        batch[row * per + k] = std::min(std::max(v, 0.0), 1.0);
      }
    }
  }
  Dataset data{std::move(batch), std::vector<int>(points, label), model.classes()};
  grid.loss.resize(points);
  grid.pred.resize(points);
  constexpr std::size_t kChunk = 64;
  const long long chunks = static_cast<long long>((points + kChunk - 1) / kChunk);
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 1) if (chunks > 1)
  for (long long c = 0; c < chunks; ++c) {
    try {
      const std::size_t begin = static_cast<std::size_t>(c) * kChunk;
      const std::size_t end = std::min(points, begin + kChunk);
      const Dataset part = data.slice(begin, end);
      const auto losses = model.per_sample_loss(part.x, part.y);
      const auto preds = argmax_rows(model.probabilities(part.x));
      for (std::size_t r = 0; r < end - begin; ++r) {
        grid.loss[begin + r] = losses[r];
        grid.pred[begin + r] = preds[r];
      }
    } catch (...) {
#pragma omp critical(donet_scan_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return grid;
}

LandscapeGrid landscape_scan(const Classifier& model, const Tensor& x, int label,
                             std::size_t G, double step, std::uint64_t seed) {
  const std::vector<int> labels{label};
  const Tensor grad = perturb::input_gradient(model, x, labels);
  Tensor d1 = Tensor::like(x);
  double d1_norm2 = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    d1[k] = grad[k] > 0.0 ? 1.0 : (grad[k] < 0.0 ? -1.0 : 0.0);
    d1_norm2 += d1[k] * d1[k];
  }
  if (d1_norm2 == 0.0) {
    throw std::runtime_error("attack gradient is zero; the FGSM direction is undefined");
  }
  Rng rng = make_rng(sub_seed(seed, "landscape"));
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor d2 = Tensor::like(x);
  for (auto& v : d2.data()) v = normal(rng);
  for (int pass = 0; pass < 2; ++pass) {
    double dot = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) dot += d1[k] * d2[k];
    const double c = dot / d1_norm2;
    for (std::size_t k = 0; k < x.size(); ++k) d2[k] -= c * d1[k];
  }
  double linf = 0.0;
  for (double v : d2.data()) linf = std::max(linf, std::abs(v));
  if (linf == 0.0) throw std::runtime_error("random direction collapsed to zero");
  for (auto& v : d2.data()) v /= linf;
  LandscapeGrid grid = landscape_scan_directions(model, x, label, G, step, d1, d2);
  grid.seed = seed;
  return grid;
}

std::uint64_t tensor_checksum(const Tensor& t) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : t.data()) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

void write_landscape(const LandscapeGrid& grid, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::size_t side = grid.side();
  {
    auto out = open_out(dir / "loss.csv");
    for (std::size_t r = 0; r < side; ++r) {
      for (std::size_t c = 0; c < side; ++c) {
        if (c) out << ',';
        out << grid.loss[r * side + c];
      }
      out << '\n';
    }
  }
  {
    auto out = open_out(dir / "pred.csv");
    for (std::size_t r = 0; r < side; ++r) {
      for (std::size_t c = 0; c < side; ++c) {
        if (c) out << ',';
        out << grid.pred[r * side + c];
      }
      out << '\n';
    }
  }
  auto hex = [](std::uint64_t v) {
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << v;
    return s.str();
  };
  const nlohmann::json meta = {
      {"G", grid.G},
      {"step", grid.step},
      {"seed", grid.seed},
      {"label", grid.label},
      {"rows", "i from -G to G along d1 (FGSM direction)"},
      {"cols", "j from -G to G along d2 (orthogonal random direction)"},
      {"d1_checksum", hex(tensor_checksum(grid.d1))},
      {"d2_checksum", hex(tensor_checksum(grid.d2))},
  };
  auto out = open_out(dir / "landscape.json");
  out << meta.dump(2) << '\n';
}

std::vector<double> read_grid_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<double> values;
  std::string line;
  while (std::getline(in, line)) {
    std::stringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) values.push_back(std::stod(cell));
  }
  return values;
}

}  // namespace donet
