#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "donet/blocks.hpp"
#include "donet/classifier.hpp"
#include "donet/data.hpp"
#include "donet/perturb.hpp"
#include "json.hpp"

namespace donet {

struct DataConfig {
  std::string kind = "moons";  // moons | spirals | idx
  std::size_t n = 600;
  double noise_sd = 0.1;
  double test_fraction = 0.25;
  // idx only; test files optional (otherwise the training files are split).
  std::string images;
  std::string labels;
  std::string test_images;
  std::string test_labels;
  std::size_t limit = 0;  // keep the first `limit` training samples when > 0

  void validate() const;
};

// Loads or generates the data and splits it deterministically from `seed`.
Split prepare_data(const DataConfig& cfg, MapKind map, std::uint64_t seed);

struct LrDrop {
  std::size_t epoch;
  double divisor;
};

struct TrainConfig {
  std::size_t epochs = 40;
  std::size_t batch_size = 32;
  double lr0 = 0.1;
  std::vector<LrDrop> lr_drops;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  InitScheme lambda_init;
  std::uint64_t seed = 0;
  ModelConfig model;
  DataConfig data;

  void validate() const;
};

// lr0 divided by every drop whose epoch is ≤ `epoch` (0-based).
double learning_rate(const TrainConfig& cfg, std::size_t epoch);

// A run counts as FAILED when the loss goes non-finite or training accuracy
// stays at or below chance + 1 point for this many consecutive epochs.
inline constexpr std::size_t kChanceEpochs = 10;

struct TrainResult {
  Model model;
  std::vector<double> loss_curve;      // mean train loss per epoch
  std::vector<double> accuracy_curve;  // train accuracy (percent) per epoch
  bool failed = false;
  std::string failure_reason;
};

// The model's input shape and class count are taken from `train`.
TrainResult sgd_train(const TrainConfig& cfg, const Dataset& train);

using Metrics = std::map<std::string, double>;

struct AttackSpec {
  perturb::AttackKind kind = perturb::AttackKind::FGSM;
  std::vector<double> epsilons{2.0 / 255.0};
  double alpha = 2.0 / 255.0;
  std::size_t iters = 10;
  std::optional<std::uint64_t> seed;
};

struct NoiseSpec {
  perturb::NoiseKind kind = perturb::NoiseKind::Gaussian;
  double severity = 0.08;
  std::optional<std::uint64_t> seed;
};

struct EvalConfig {
  std::vector<NoiseSpec> noises;
  std::vector<AttackSpec> attacks;
  std::size_t chunk = 64;
  bool parallel = true;
};

// Fills missing noise/attack seeds from the run seed; unresolved seeds are
// treated as 0 by evaluate().
EvalConfig resolve_seeds(EvalConfig cfg, std::uint64_t run_seed);

// "k/255" when ε·255 is within 1e-9 of an integer, otherwise %g.
std::string epsilon_label(double epsilon);

// Metric names: "clean", "noise:<kind>", "noise_avg" (when noises are
// configured) and "<attack>@<ε label>". Accuracies are percentages.
struct Evaluation {
  Metrics metrics;
  std::map<std::string, std::vector<int>> predictions;
};

// Chunks of `cfg.chunk` samples fan out over OpenMP threads when
// `cfg.parallel`; results do not depend on the thread count.
Evaluation evaluate(const Classifier& model, const Dataset& data, const EvalConfig& cfg);

double accuracy_percent(std::span<const int> predictions, std::span<const int> labels);

// Wide CSV: index,label,<metric>... with one predicted class per cell.
void write_predictions_csv(const Evaluation& eval, const Dataset& data,
                           const std::filesystem::path& path);
// metric,value
void write_metrics_csv(const Metrics& metrics, const std::filesystem::path& path);

struct RunRecord {
  TrainConfig config;
  std::string params_file;
  Metrics metrics;
  std::vector<double> loss_curve;
  std::vector<double> accuracy_curve;
  bool failed = false;
  std::string failure_reason;
  double fraction_active = 0.0;
  double wall_seconds = 0.0;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunRecord& record);
RunRecord run_record_from_json(const nlohmann::json& j);

struct RunOutput {
  RunRecord record;
  Model model;
};

// Train, evaluate on the test split and fill a record (params_file unset).
RunOutput run_experiment(const TrainConfig& cfg, const EvalConfig& eval);

struct MetricSummary {
  double mean = 0.0;
  std::optional<double> sd;  // sample SD; absent with fewer than two runs
  std::size_t n_runs = 0;
  std::size_t n_failed = 0;
};

struct SweepRun {
  InitScheme interval;
  std::uint64_t seed = 0;
  RunRecord record;
};

struct SweepResult {
  std::vector<InitScheme> intervals;
  std::vector<SweepRun> runs;
  // One summary per interval, keyed by metric; FAILED runs excluded.
  std::vector<std::map<std::string, MetricSummary>> summaries;
};

std::vector<InitScheme> default_sweep_intervals();

std::map<std::string, MetricSummary> summarize_runs(const std::vector<const RunRecord*>& runs);

SweepResult init_sweep(const TrainConfig& base, const std::vector<InitScheme>& intervals,
                       const std::vector<std::uint64_t>& seeds, const EvalConfig& eval);

// metric,mean,sd,n_runs,n_failed (sd empty when absent)
void write_summary_csv(const std::map<std::string, MetricSummary>& summary,
                       const std::filesystem::path& path);
// interval_lo,interval_hi,seed,failed,<metrics...>
void write_sweep_runs_csv(const SweepResult& result, const std::filesystem::path& path);

struct EnsembleResult {
  Metrics ensemble;
  std::vector<Metrics> members;
  Metrics single_mean;
  Metrics improvement;  // ensemble − single_mean
};

// Members are evaluated individually and as a mean-of-softmax ensemble.
EnsembleResult ensemble_eval(const std::vector<const Model*>& members, const Dataset& data,
                             const EvalConfig& cfg);

// run,metric,value
void write_member_metrics_csv(const EnsembleResult& result,
                              const std::filesystem::path& path);

struct LandscapeGrid {
  std::size_t G = 0;
  double step = 1.0 / 255.0;
  std::uint64_t seed = 0;
  int label = 0;
  Tensor d1;
  Tensor d2;
  std::vector<double> loss;  // (2G+1)², row i along d1, column j along d2
  std::vector<int> pred;

  std::size_t side() const { return 2 * G + 1; }
  double loss_at(long i, long j) const;
  int pred_at(long i, long j) const;
};

// x is a single sample with a leading batch dimension of 1. Throws when the
// attack gradient is identically zero.
LandscapeGrid landscape_scan(const Classifier& model, const Tensor& x, int label,
                             std::size_t G, double step, std::uint64_t seed);

// Grid over explicit directions; point (i,j) is clamp(x + (i·s)·d1 + (j·s)·d2).
LandscapeGrid landscape_scan_directions(const Classifier& model, const Tensor& x, int label,
                                        std::size_t G, double step, const Tensor& d1,
                                        const Tensor& d2);

void write_landscape(const LandscapeGrid& grid, const std::filesystem::path& dir);
// Reads loss.csv back into a row-major vector.
std::vector<double> read_grid_csv(const std::filesystem::path& path);

// FNV-1a over the little-endian bytes of every value.
std::uint64_t tensor_checksum(const Tensor& t);

}  // namespace donet
