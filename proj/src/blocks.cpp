#include "donet/blocks.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <random>
#include <stdexcept>

#include "donet/rng.hpp"

namespace donet {

std::string_view to_string(BlockKind kind) {
  switch (kind) {
    case BlockKind::Residual: return "residual";
    case BlockKind::NonResidual: return "non_residual";
    case BlockKind::In: return "in";
    case BlockKind::LambdaIn: return "lambda_in";
    case BlockKind::InSig: return "in_sig";
    case BlockKind::InGating: return "in_gating";
    case BlockKind::InGatingSig: return "in_gating_sig";
  }
  return "unknown";
}

BlockKind parse_block_kind(std::string_view name) {
  for (BlockKind k : kAllBlockKinds) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown block kind '" + std::string(name) + "'");
}

bool owns_lambda(BlockKind kind) {
  return kind == BlockKind::In || kind == BlockKind::LambdaIn ||
         kind == BlockKind::InSig;
}

bool owns_gate(BlockKind kind) {
  return kind == BlockKind::InGating || kind == BlockKind::InGatingSig;
}

bool uses_sigmoid(BlockKind kind) {
  return kind == BlockKind::InSig || kind == BlockKind::InGatingSig;
}

std::string_view to_string(MapKind kind) {
  return kind == MapKind::Dense ? "dense" : "conv";
}

MapKind parse_map_kind(std::string_view name) {
  if (name == "dense") return MapKind::Dense;
  if (name == "conv") return MapKind::Conv;
  throw std::invalid_argument("unknown map kind '" + std::string(name) + "'");
}

Var ParamBinder::operator()(const Tensor& parameter) {
  auto it = bound_.find(&parameter);
  if (it != bound_.end()) return it->second;
  Var v = trainable_ ? graph_.leaf(parameter) : graph_.constant(parameter);
  bound_.emplace(&parameter, v);
  return v;
}

std::optional<Var> ParamBinder::find(const Tensor& parameter) const {
  auto it = bound_.find(&parameter);
  if (it == bound_.end()) return std::nullopt;
  return it->second;
}

NormLayer NormLayer::make(std::size_t channels) {
  return {Tensor({channels}, 1.0), Tensor({channels}, 0.0),
          BatchNormState::identity(channels)};
}

void BlockParams::validate() const {
  if (lambda_raw.has_value() != owns_lambda(kind)) {
    throw std::invalid_argument(std::string("block kind ") +
                                std::string(to_string(kind)) +
                                (owns_lambda(kind) ? " requires" : " must not carry") +
                                " an interpolation coefficient");
  }
  if (gate_w.has_value() != owns_gate(kind) || gate_b.has_value() != owns_gate(kind)) {
    throw std::invalid_argument(std::string("block kind ") +
                                std::string(to_string(kind)) +
                                (owns_gate(kind) ? " requires" : " must not carry") +
                                " gate weights");
  }
  if (lambda_raw && lambda_raw->size() != 1) {
    throw std::invalid_argument("lambda_raw must hold a single value");
  }
}

std::size_t BlockParams::width() const { return transform.w1.dim(0); }

void InitScheme::validate() const {
  if (!(lambda_lo <= lambda_hi)) {
    throw std::invalid_argument("empty initialization interval [" +
                                std::to_string(lambda_lo) + ", " +
                                std::to_string(lambda_hi) + "]");
  }
}

namespace {

Var norm_forward(const NormLayer& n, ParamBinder& bind, Var x, Mode mode,
                 NormLayer* stats) {
  return batch_norm(x, bind(n.gamma), bind(n.beta), n.state, mode,
                    stats ? &stats->state : nullptr);
}

Var map_forward(MapKind map, const Tensor& w, const std::optional<Tensor>& b,
                ParamBinder& bind, Var x) {
  if (map == MapKind::Conv) return conv2d(x, bind(w), 1, 1);
  Var y = matmul(x, bind(w));
  return b ? add_bias(y, bind(*b)) : y;
}

}  // namespace

Var transform_forward(const Transform& t, ParamBinder& bind, Var x, Mode mode,
                      Transform* stats) {
  Var h = norm_forward(t.norm1, bind, x, mode, stats ? &stats->norm1 : nullptr);
  h = relu(h);
  h = map_forward(t.map, t.w1, t.b1, bind, h);
  h = norm_forward(t.norm2, bind, h, mode, stats ? &stats->norm2 : nullptr);
  h = relu(h);
  return map_forward(t.map, t.w2, t.b2, bind, h);
}

std::optional<Var> block_coefficient(const BlockParams& p, ParamBinder& bind,
                                     Var x) {
  if (owns_lambda(p.kind)) {
    Var lam = bind(*p.lambda_raw);
    return uses_sigmoid(p.kind) ? sigmoid(lam) : relu(lam);
  }
  if (owns_gate(p.kind)) {
    Var pooled = x.value().rank() == 4 ? spatial_mean(x) : x;
    Var d = add_bias(matmul(pooled, bind(*p.gate_w)), bind(*p.gate_b));
    return uses_sigmoid(p.kind) ? sigmoid(d) : relu(d);
  }
  return std::nullopt;
}

Var block_forward(const BlockParams& p, ParamBinder& bind, Var x, Mode mode,
                  BlockParams* stats, std::optional<Var>* coefficient) {
  p.validate();
  Graph& g = bind.graph();
  Var fx = transform_forward(p.transform, bind, x, mode,
                             stats ? &stats->transform : nullptr);
  if (fx.shape() != x.shape()) {
    throw std::invalid_argument("block transform changed shape " +
                                shape_string(x.shape()) + " → " +
                                shape_string(fx.shape()));
  }
  std::optional<Var> a = block_coefficient(p, bind, x);
  if (coefficient) *coefficient = a;

  switch (p.kind) {
    case BlockKind::Residual:
      return add(x, fx);
    case BlockKind::NonResidual:
      return fx;
    default:
      break;
  }
  Var one = g.constant(Tensor::scalar(1.0));
  auto times = [](Var factor, Var v) {
    return factor.value().size() == 1 ? mul(factor, v) : scale_rows(v, factor);
  };
  Var skip = times(sub(one, *a), x);
  if (p.kind == BlockKind::LambdaIn) return add(skip, times(add(one, *a), fx));
  return add(skip, fx);
}

Var Model::forward(ParamBinder& bind, Var x, Mode mode,
                   std::vector<std::optional<Var>>* coefficients) {
  return forward_impl(bind, x, mode, mode == Mode::Train ? this : nullptr,
                      coefficients);
}

Var Model::forward(ParamBinder& bind, Var x,
                   std::vector<std::optional<Var>>* coefficients) const {
  return forward_impl(bind, x, Mode::Eval, nullptr, coefficients);
}

Var Model::forward_impl(ParamBinder& bind, Var x, Mode mode, Model* stats,
                        std::vector<std::optional<Var>>* coefficients) const {
  const Shape& xs = x.shape();
  if (xs.size() != config.input_shape.size() + 1 ||
      !std::equal(config.input_shape.begin(), config.input_shape.end(),
                  xs.begin() + 1)) {
    throw std::invalid_argument("model expects batches of " +
                                shape_string(config.input_shape) + ", got " +
                                shape_string(xs));
  }
  Var h = config.map == MapKind::Conv
              ? conv2d(x, bind(stem_w), 1, 1)
              : add_bias(matmul(x, bind(stem_w)), bind(*stem_b));
  if (coefficients) coefficients->assign(blocks.size(), std::nullopt);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    h = block_forward(blocks[i], bind, h, mode,
                      stats ? &stats->blocks[i] : nullptr,
                      coefficients ? &(*coefficients)[i] : nullptr);
  }
  h = norm_forward(head_norm, bind, h, mode, stats ? &stats->head_norm : nullptr);
  h = relu(h);
  if (config.map == MapKind::Conv) h = spatial_mean(h);
  return add_bias(matmul(h, bind(head_w)), bind(head_b));
}

Tensor Model::logits(const Tensor& x) const {
  Graph g;
  ParamBinder bind(g, false);
  return forward(bind, g.constant(x)).value();
}

std::vector<ParamRef> Model::parameters() {
  std::vector<ParamRef> out;
  auto norm = [&out](NormLayer& n, const std::string& prefix) {
    out.push_back({&n.gamma, true, prefix + ".gamma"});
    out.push_back({&n.beta, true, prefix + ".beta"});
  };
  out.push_back({&stem_w, true, "stem.w"});
  if (stem_b) out.push_back({&*stem_b, true, "stem.b"});
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    BlockParams& b = blocks[i];
    const std::string p = "block" + std::to_string(i);
    norm(b.transform.norm1, p + ".norm1");
    out.push_back({&b.transform.w1, true, p + ".w1"});
    if (b.transform.b1) out.push_back({&*b.transform.b1, true, p + ".b1"});
    norm(b.transform.norm2, p + ".norm2");
    out.push_back({&b.transform.w2, true, p + ".w2"});
    if (b.transform.b2) out.push_back({&*b.transform.b2, true, p + ".b2"});
    if (b.lambda_raw) out.push_back({&*b.lambda_raw, false, p + ".lambda"});
    if (b.gate_w) out.push_back({&*b.gate_w, true, p + ".gate_w"});
    if (b.gate_b) out.push_back({&*b.gate_b, true, p + ".gate_b"});
  }
  norm(head_norm, "head.norm");
  out.push_back({&head_w, true, "head.w"});
  out.push_back({&head_b, true, "head.b"});
  return out;
}

namespace {

Tensor normal_tensor(Shape shape, double sd, Rng& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, sd);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

Transform make_transform(std::size_t width, MapKind map, Rng& rng) {
  Transform t;
  t.map = map;
  t.norm1 = NormLayer::make(width);
  t.norm2 = NormLayer::make(width);
  if (map == MapKind::Dense) {
    const double sd = std::sqrt(2.0 / static_cast<double>(width));
    t.w1 = normal_tensor({width, width}, sd, rng);
    t.w2 = normal_tensor({width, width}, sd, rng);
    t.b1 = Tensor({width}, 0.0);
    t.b2 = Tensor({width}, 0.0);
  } else {
    const double sd = std::sqrt(2.0 / static_cast<double>(9 * width));
    t.w1 = normal_tensor({width, width, 3, 3}, sd, rng);
    t.w2 = normal_tensor({width, width, 3, 3}, sd, rng);
  }
  return t;
}

}  // namespace

std::vector<BlockParams> build_stack(std::size_t depth, std::size_t width,
                                     BlockKind kind, MapKind map,
                                     const InitScheme& init, std::uint64_t seed) {
  if (depth < 1) throw std::invalid_argument("stack depth must be at least 1");
  if (width < 1) throw std::invalid_argument("stack width must be at least 1");
  init.validate();
  // Separate streams keep the transform weights identical across kinds for a
  // given seed, so runs of different kinds are paired.
  Rng transform_rng = make_rng(sub_seed(seed, "transform"));
  Rng lambda_rng = make_rng(sub_seed(seed, "lambda"));
  Rng gate_rng = make_rng(sub_seed(seed, "gate"));
  std::uniform_real_distribution<double> interval(init.lambda_lo, init.lambda_hi);
  std::vector<BlockParams> blocks;
  blocks.reserve(depth);
  for (std::size_t i = 0; i < depth; ++i) {
    BlockParams b;
    b.kind = kind;
    b.transform = make_transform(width, map, transform_rng);
    const double draw = init.lambda_lo == init.lambda_hi ? init.lambda_lo
                                                         : interval(lambda_rng);
    if (owns_lambda(kind)) b.lambda_raw = Tensor::scalar(draw);
    if (owns_gate(kind)) {
      b.gate_w = normal_tensor({width, 1}, 0.01, gate_rng);
      b.gate_b = Tensor::scalar(draw);
    }
    blocks.push_back(std::move(b));
  }
  return blocks;
}

void ModelConfig::validate() const {
  if (depth < 1) throw std::invalid_argument("model depth must be at least 1");
  if (width < 1) throw std::invalid_argument("model width must be at least 1");
  if (classes < 2) throw std::invalid_argument("model needs at least 2 classes");
  if (map == MapKind::Dense && input_shape.size() != 1) {
    throw std::invalid_argument("dense models take flat inputs, got " +
                                shape_string(input_shape));
  }
  if (map == MapKind::Conv && input_shape.size() != 3) {
    throw std::invalid_argument("conv models take C×H×W inputs, got " +
                                shape_string(input_shape));
  }
}

Model build_model(const ModelConfig& config, const InitScheme& init,
                  std::uint64_t seed) {
  config.validate();
  Model m;
  m.config = config;
  Rng stem_rng = make_rng(sub_seed(seed, "stem"));
  Rng head_rng = make_rng(sub_seed(seed, "head"));
  const std::size_t in = config.input_shape[0];
  if (config.map == MapKind::Dense) {
    m.stem_w = normal_tensor({in, config.width}, std::sqrt(2.0 / static_cast<double>(in)),
                             stem_rng);
    m.stem_b = Tensor({config.width}, 0.0);
  } else {
    m.stem_w = normal_tensor({config.width, in, 3, 3},
                             std::sqrt(2.0 / static_cast<double>(9 * in)), stem_rng);
  }
  m.blocks = build_stack(config.depth, config.width, config.kind, config.map,
                         init, sub_seed(seed, "blocks"));
  m.head_norm = NormLayer::make(config.width);
  m.head_w = normal_tensor({config.width, config.classes},
                           std::sqrt(1.0 / static_cast<double>(config.width)), head_rng);
  m.head_b = Tensor({config.classes}, 0.0);
  return m;
}

CoefficientReport summarize_coefficients(std::vector<double> coefficients) {
  CoefficientReport r;
  r.coefficients = std::move(coefficients);
  std::size_t active = 0;
  for (double a : r.coefficients) {
    if (a > kActiveThreshold) ++active;
    if (a <= 1.0) {
      ++r.bins[0];
    } else if (a <= 2.0) {
      ++r.bins[1];
    } else {
      ++r.bins[2];
    }
  }
  r.fraction_active = r.coefficients.empty()
                          ? 0.0
                          : static_cast<double>(active) /
                                static_cast<double>(r.coefficients.size());
  return r;
}

CoefficientReport coefficient_report(const Model& model, const Tensor* probe_batch) {
  const BlockKind kind = model.config.kind;
  std::vector<double> values;
  values.reserve(model.blocks.size());
  if (owns_gate(kind)) {
    if (probe_batch == nullptr) {
      throw std::invalid_argument("gating coefficients depend on the input; "
                                  "a probe batch is required");
    }
    Graph g;
    ParamBinder bind(g, false);
    std::vector<std::optional<Var>> trace;
    model.forward(bind, g.constant(*probe_batch), &trace);
    for (const auto& a : trace) {
      const Tensor& t = a->value();
      double acc = 0.0;
      for (double v : t.data()) acc += v;
      values.push_back(acc / static_cast<double>(t.size()));
    }
  } else {
    for (const BlockParams& b : model.blocks) {
      if (owns_lambda(kind)) {
        const double raw = b.lambda_raw->item();
        values.push_back(uses_sigmoid(kind) ? (raw >= 0.0 ? 1.0 / (1.0 + std::exp(-raw))
                                                          : std::exp(raw) / (1.0 + std::exp(raw)))
                                            : std::max(raw, 0.0));
      } else {
        values.push_back(kind == BlockKind::NonResidual ? 1.0 : 0.0);
      }
    }
  }
  return summarize_coefficients(std::move(values));
}

void write_coefficients_csv(const CoefficientReport& report,
                            const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "block_index,coefficient\n" << std::setprecision(17);
  for (std::size_t i = 0; i < report.coefficients.size(); ++i) {
    out << i << ',' << report.coefficients[i] << '\n';
  }
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr char kMagic[] = "DONET1";
constexpr char kHeadTag[] = "HEAD";

class ByteWriter {
 public:
  void raw(const char* s, std::size_t n) {
    bytes_.insert(bytes_.end(), s, s + n);
  }
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void expect(const char* s, std::size_t n, const char* what) {
    need(n);
    if (std::memcmp(bytes_.data() + pos_, s, n) != 0) {
      throw std::runtime_error(std::string("parameter file: bad ") + what);
    }
    pos_ += n;
  }
  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_++]} << (8 * i);
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= std::uint64_t{bytes_[pos_++]} << (8 * i);
    return std::bit_cast<double>(bits);
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw std::runtime_error("parameter file truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

using TensorList = std::vector<std::pair<TensorRole, const Tensor*>>;

void write_tensor_list(ByteWriter& w, const TensorList& list) {
  w.u32(static_cast<std::uint32_t>(list.size()));
  for (const auto& [role, t] : list) {
    w.u8(static_cast<std::uint8_t>(role));
    w.u32(static_cast<std::uint32_t>(t->rank()));
    for (auto e : t->shape()) w.u32(static_cast<std::uint32_t>(e));
  }
  for (const auto& entry : list) {
    for (double v : entry.second->data()) w.f64(v);
  }
}

std::vector<std::pair<TensorRole, Tensor>> read_tensor_list(ByteReader& r) {
  const std::uint32_t count = r.u32();
  if (count > 64) throw std::runtime_error("parameter file: implausible tensor count");
  std::vector<std::pair<TensorRole, Shape>> headers;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto role = static_cast<TensorRole>(r.u8());
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 4) throw std::runtime_error("parameter file: bad tensor rank");
    Shape shape;
    for (std::uint32_t k = 0; k < rank; ++k) shape.push_back(r.u32());
    headers.emplace_back(role, std::move(shape));
  }
  std::vector<std::pair<TensorRole, Tensor>> out;
  for (auto& [role, shape] : headers) {
    Tensor t(shape);
    for (auto& v : t.data()) v = r.f64();
    out.emplace_back(role, std::move(t));
  }
  return out;
}

void push_norm(TensorList& list, const NormLayer& n, TensorRole gamma) {
  const auto base = static_cast<std::uint8_t>(gamma);
  list.emplace_back(gamma, &n.gamma);
  list.emplace_back(static_cast<TensorRole>(base + 1), &n.beta);
  list.emplace_back(static_cast<TensorRole>(base + 2), &n.state.running_mean);
  list.emplace_back(static_cast<TensorRole>(base + 3), &n.state.running_var);
}

void assign_norm(NormLayer& n, TensorRole role, Tensor t, TensorRole gamma) {
  switch (static_cast<int>(role) - static_cast<int>(gamma)) {
    case 0: n.gamma = std::move(t); break;
    case 1: n.beta = std::move(t); break;
    case 2: n.state.running_mean = std::move(t); break;
    case 3: n.state.running_var = std::move(t); break;
    default: throw std::logic_error("not a norm role");
  }
}

bool in_range(TensorRole role, TensorRole lo, TensorRole hi) {
  return static_cast<int>(role) >= static_cast<int>(lo) &&
         static_cast<int>(role) <= static_cast<int>(hi);
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const Model& model) {
  ByteWriter w;
  w.raw(kMagic, 6);
  w.u32(static_cast<std::uint32_t>(model.blocks.size()));
  for (const BlockParams& b : model.blocks) {
    w.u8(static_cast<std::uint8_t>(b.kind));
    TensorList list;
    push_norm(list, b.transform.norm1, TensorRole::Norm1Gamma);
    list.emplace_back(TensorRole::Map1Weight, &b.transform.w1);
    if (b.transform.b1) list.emplace_back(TensorRole::Map1Bias, &*b.transform.b1);
    push_norm(list, b.transform.norm2, TensorRole::Norm2Gamma);
    list.emplace_back(TensorRole::Map2Weight, &b.transform.w2);
    if (b.transform.b2) list.emplace_back(TensorRole::Map2Bias, &*b.transform.b2);
    if (b.lambda_raw) list.emplace_back(TensorRole::Lambda, &*b.lambda_raw);
    if (b.gate_w) list.emplace_back(TensorRole::GateWeight, &*b.gate_w);
    if (b.gate_b) list.emplace_back(TensorRole::GateBias, &*b.gate_b);
    write_tensor_list(w, list);
  }
  w.raw(kHeadTag, 4);
  const ModelConfig& c = model.config;
  w.u8(static_cast<std::uint8_t>(c.map));
  w.u8(static_cast<std::uint8_t>(c.kind));
  w.u32(static_cast<std::uint32_t>(c.width));
  w.u32(static_cast<std::uint32_t>(c.classes));
  w.u32(static_cast<std::uint32_t>(c.input_shape.size()));
  for (auto e : c.input_shape) w.u32(static_cast<std::uint32_t>(e));
  TensorList head;
  head.emplace_back(TensorRole::StemWeight, &model.stem_w);
  if (model.stem_b) head.emplace_back(TensorRole::StemBias, &*model.stem_b);
  push_norm(head, model.head_norm, TensorRole::HeadGamma);
  head.emplace_back(TensorRole::HeadWeight, &model.head_w);
  head.emplace_back(TensorRole::HeadBias, &model.head_b);
  write_tensor_list(w, head);
  return w.take();
}

Model deserialize_model(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw std::runtime_error("parameter file is empty");
  ByteReader r(bytes);
  r.expect(kMagic, 6, "magic");
  const std::uint32_t count = r.u32();
  Model m;
  std::vector<BlockParams> blocks;
  for (std::uint32_t i = 0; i < count; ++i) {
    BlockParams b;
    const std::uint8_t tag = r.u8();
    if (tag > static_cast<std::uint8_t>(BlockKind::InGatingSig)) {
      throw std::runtime_error("parameter file: unknown block kind tag " +
                               std::to_string(tag));
    }
    b.kind = static_cast<BlockKind>(tag);
    for (auto& [role, t] : read_tensor_list(r)) {
      if (in_range(role, TensorRole::Norm1Gamma, TensorRole::Norm1Var)) {
        assign_norm(b.transform.norm1, role, std::move(t), TensorRole::Norm1Gamma);
      } else if (in_range(role, TensorRole::Norm2Gamma, TensorRole::Norm2Var)) {
        assign_norm(b.transform.norm2, role, std::move(t), TensorRole::Norm2Gamma);
      } else if (role == TensorRole::Map1Weight) {
        b.transform.w1 = std::move(t);
      } else if (role == TensorRole::Map1Bias) {
        b.transform.b1 = std::move(t);
      } else if (role == TensorRole::Map2Weight) {
        b.transform.w2 = std::move(t);
      } else if (role == TensorRole::Map2Bias) {
        b.transform.b2 = std::move(t);
      } else if (role == TensorRole::Lambda) {
        b.lambda_raw = std::move(t);
      } else if (role == TensorRole::GateWeight) {
        b.gate_w = std::move(t);
      } else if (role == TensorRole::GateBias) {
        b.gate_b = std::move(t);
      } else {
        throw std::runtime_error("parameter file: unexpected role in block");
      }
    }
    b.transform.map = b.transform.w1.rank() == 4 ? MapKind::Conv : MapKind::Dense;
    b.validate();
    blocks.push_back(std::move(b));
  }
  r.expect(kHeadTag, 4, "head section");
  ModelConfig& c = m.config;
  c.map = static_cast<MapKind>(r.u8());
  c.kind = static_cast<BlockKind>(r.u8());
  c.width = r.u32();
  c.classes = r.u32();
  const std::uint32_t rank = r.u32();
  if (rank == 0 || rank > 3) throw std::runtime_error("parameter file: bad input rank");
  c.input_shape.clear();
  for (std::uint32_t k = 0; k < rank; ++k) c.input_shape.push_back(r.u32());
  c.depth = blocks.size();
  for (auto& [role, t] : read_tensor_list(r)) {
    if (in_range(role, TensorRole::HeadGamma, TensorRole::HeadVar)) {
      assign_norm(m.head_norm, role, std::move(t), TensorRole::HeadGamma);
    } else if (role == TensorRole::StemWeight) {
      m.stem_w = std::move(t);
    } else if (role == TensorRole::StemBias) {
      m.stem_b = std::move(t);
    } else if (role == TensorRole::HeadWeight) {
      m.head_w = std::move(t);
    } else if (role == TensorRole::HeadBias) {
      m.head_b = std::move(t);
    } else {
      throw std::runtime_error("parameter file: unexpected role in head section");
    }
  }
  if (!r.done()) throw std::runtime_error("parameter file: trailing bytes");
  m.blocks = std::move(blocks);
  c.validate();
  return m;
}

void save_model(const Model& model, const std::filesystem::path& path) {
  const auto bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace donet
