#pragma once

// Strict JSON run configuration. Unknown keys anywhere are errors; only
// `seed` and `output_dir` are mandatory.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "donet/harness.hpp"
#include "donet/ode.hpp"
#include "json.hpp"

namespace donet {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelSection {
  BlockKind kind = BlockKind::In;
  std::size_t depth = 8;
  std::size_t width = 32;
  MapKind map = MapKind::Dense;
  InitScheme lambda_init;
};

struct TrainSection {
  std::size_t epochs = 40;
  std::size_t batch_size = 32;
  double lr0 = 0.1;
  std::vector<LrDrop> lr_drops;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  DataConfig data;
};

struct LandscapeSection {
  std::size_t G = 10;
  std::size_t sample_index = 0;
  double step = 1.0 / 255.0;
};

struct OdeSection {
  double lambda = 0.7;
  ode::RhoKind rho = ode::RhoKind::One;
  double dt = 1e-5;
  double T = 1.0;
};

struct StabilitySection {
  std::string dynamics = "cubic";
  std::vector<double> start;
  std::string matrix;  // parse_matrix source; takes precedence over dynamics
  double lambda = 0.5;
  ode::RhoKind rho = ode::RhoKind::One;
};

struct SweepSection {
  std::vector<InitScheme> intervals = default_sweep_intervals();
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
};

struct EnsembleSection {
  std::vector<std::string> runs;
};

struct RunConfigFile {
  std::optional<ModelSection> model;
  std::optional<TrainSection> train;
  std::optional<EvalConfig> eval;
  std::optional<LandscapeSection> landscape;
  std::optional<OdeSection> ode;
  std::optional<StabilitySection> stability;
  std::optional<SweepSection> sweep;
  std::optional<EnsembleSection> ensemble;
  std::string output_dir;
  std::uint64_t seed = 0;

  // Needs the model and train sections; throws ConfigError naming the
  // missing one.
  TrainConfig train_config() const;
  EvalConfig eval_config() const { return eval.value_or(EvalConfig{}); }
};

RunConfigFile parse_run_config(const nlohmann::json& j);
RunConfigFile load_run_config(const std::filesystem::path& path);

}  // namespace donet
