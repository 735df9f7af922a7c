#pragma once

// The layer family interpolating between residual and non-residual networks,
// and the desk-scale classifier built from it.
//
//   Residual      x + f(x)
//   NonResidual   f(x)
//   In            (1 − ReLU(λ))·x + f(x)
//   LambdaIn      (1 − ReLU(λ))·x + (1 + ReLU(λ))·f(x)
//   InSig         (1 − σ(λ))·x + f(x)
//   InGating      (1 − ReLU(W_d·x̄ + b_d))·x + f(x)
//   InGatingSig   (1 − σ(W_d·x̄ + b_d))·x + f(x)
//
// The step size is folded into the coefficient, so no Δt appears here. x̄ is
// x itself for dense blocks and the per-channel spatial mean for conv blocks,
// which makes the gating coefficient one scalar per sample.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "donet/graph.hpp"
#include "donet/ops.hpp"
#include "donet/tensor.hpp"

namespace donet {

enum class BlockKind : std::uint8_t {
  Residual = 0,
  NonResidual = 1,
  In = 2,
  LambdaIn = 3,
  InSig = 4,
  InGating = 5,
  InGatingSig = 6,
};

inline constexpr std::array<BlockKind, 7> kAllBlockKinds = {
    BlockKind::Residual, BlockKind::NonResidual, BlockKind::In,
    BlockKind::LambdaIn, BlockKind::InSig,       BlockKind::InGating,
    BlockKind::InGatingSig};

std::string_view to_string(BlockKind kind);
BlockKind parse_block_kind(std::string_view name);

bool owns_lambda(BlockKind kind);
bool owns_gate(BlockKind kind);
bool uses_sigmoid(BlockKind kind);

enum class MapKind : std::uint8_t { Dense = 0, Conv = 1 };

std::string_view to_string(MapKind kind);
MapKind parse_map_kind(std::string_view name);

// Creates graph nodes for parameter tensors, once per tensor. Trainable
// binders make leaves (gradients available after backward); frozen binders
// make constants.
class ParamBinder {
 public:
  ParamBinder(Graph& graph, bool trainable) : graph_(graph), trainable_(trainable) {}

  Var operator()(const Tensor& parameter);
  std::optional<Var> find(const Tensor& parameter) const;
  Graph& graph() const { return graph_; }
  bool trainable() const { return trainable_; }

 private:
  Graph& graph_;
  bool trainable_;
  std::unordered_map<const Tensor*, Var> bound_;
};

struct NormLayer {
  Tensor gamma;
  Tensor beta;
  BatchNormState state;

  static NormLayer make(std::size_t channels);
};

// f_n: norm → ReLU → map → norm → ReLU → map; shape preserving.
struct Transform {
  MapKind map = MapKind::Dense;
  NormLayer norm1;
  Tensor w1;
  std::optional<Tensor> b1;  // dense only
  NormLayer norm2;
  Tensor w2;
  std::optional<Tensor> b2;  // dense only
};

struct BlockParams {
  BlockKind kind = BlockKind::Residual;
  Transform transform;
  std::optional<Tensor> lambda_raw;  // {1}, pre-activation
  std::optional<Tensor> gate_w;      // width × 1
  std::optional<Tensor> gate_b;      // {1}

  // Throws if optional members do not match the kind.
  void validate() const;
  std::size_t width() const;
};

struct InitScheme {
  double lambda_lo = 0.2;
  double lambda_hi = 0.25;

  void validate() const;
};

Var transform_forward(const Transform& t, ParamBinder& bind, Var x, Mode mode,
                      Transform* stats = nullptr);

// Effective coefficient a: shape {1} for λ kinds, N×1 for gating kinds.
// Residual and NonResidual have no coefficient node.
std::optional<Var> block_coefficient(const BlockParams& p, ParamBinder& bind,
                                     Var x);

// Block output. In train mode running statistics are written to `stats` when
// given (normally the same object as `p`). The coefficient node, if any, is
// reported through `coefficient`.
Var block_forward(const BlockParams& p, ParamBinder& bind, Var x, Mode mode,
                  BlockParams* stats = nullptr,
                  std::optional<Var>* coefficient = nullptr);

struct ModelConfig {
  BlockKind kind = BlockKind::In;
  std::size_t depth = 8;
  std::size_t width = 32;
  MapKind map = MapKind::Dense;
  Shape input_shape{2};  // per sample: {D} for dense, {C,H,W} for conv
  std::size_t classes = 2;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ParamRef {
  Tensor* tensor;
  bool decay;
  std::string name;
};

class Model {
 public:
  ModelConfig config;
  Tensor stem_w;
  std::optional<Tensor> stem_b;
  std::vector<BlockParams> blocks;
  NormLayer head_norm;
  Tensor head_w;
  Tensor head_b;

  // Train-mode forward updates this model's running statistics.
  Var forward(ParamBinder& bind, Var x, Mode mode,
              std::vector<std::optional<Var>>* coefficients = nullptr);
  // Eval-mode forward.
  Var forward(ParamBinder& bind, Var x,
              std::vector<std::optional<Var>>* coefficients = nullptr) const;

  // Eval-mode logits without gradients.
  Tensor logits(const Tensor& x) const;

  // Every trainable tensor; λ is excluded from weight decay.
  std::vector<ParamRef> parameters();

 private:
  Var forward_impl(ParamBinder& bind, Var x, Mode mode, Model* stats,
                   std::vector<std::optional<Var>>* coefficients) const;
};

std::vector<BlockParams> build_stack(std::size_t depth, std::size_t width,
                                     BlockKind kind, MapKind map,
                                     const InitScheme& init, std::uint64_t seed);

Model build_model(const ModelConfig& config, const InitScheme& init,
                  std::uint64_t seed);

struct CoefficientReport {
  std::vector<double> coefficients;
  double fraction_active = 0.0;           // share with a > 0.01
  std::array<std::size_t, 3> bins{};      // [0,1], (1,2], (2,∞)
};

inline constexpr double kActiveThreshold = 0.01;

// Gating kinds need a probe batch; their per-block value is the batch mean.
CoefficientReport coefficient_report(const Model& model,
                                     const Tensor* probe_batch = nullptr);
CoefficientReport summarize_coefficients(std::vector<double> coefficients);
void write_coefficients_csv(const CoefficientReport& report,
                            const std::filesystem::path& path);

// Binary parameter file:
//   "DONET1", u32 block count, then per block: u8 kind, u32 tensor count,
//   per tensor (u8 role, u32 rank, u32 extents...), then the f64 payloads.
//   A trailing "HEAD" section carries the model configuration, stem and
//   classifier head in the same tensor-list layout. All little-endian.
enum class TensorRole : std::uint8_t {
  Norm1Gamma = 0,
  Norm1Beta = 1,
  Norm1Mean = 2,
  Norm1Var = 3,
  Map1Weight = 4,
  Map1Bias = 5,
  Norm2Gamma = 6,
  Norm2Beta = 7,
  Norm2Mean = 8,
  Norm2Var = 9,
  Map2Weight = 10,
  Map2Bias = 11,
  Lambda = 12,
  GateWeight = 13,
  GateBias = 14,
  StemWeight = 15,
  StemBias = 16,
  HeadGamma = 17,
  HeadBeta = 18,
  HeadMean = 19,
  HeadVar = 20,
  HeadWeight = 21,
  HeadBias = 22,
};

std::vector<std::uint8_t> serialize_model(const Model& model);
Model deserialize_model(std::span<const std::uint8_t> bytes);
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

}  // namespace donet
