#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "../support/block_fixtures.hpp"
#include "../support/gradcheck.hpp"
#include "../support/param_reader.hpp"
#include "donet/blocks.hpp"

namespace donet {
namespace {

using testing::random_tensor;

using testing::bit_equal;
using testing::run_block;
using testing::with_kind;

testing::BlockFixture random_fixture(MapKind map, Rng& rng) {
  return testing::random_block_fixture(map, rng);
}

TEST(BlockReduction, InAndLambdaInWithNonPositiveLambdaAreResidual) {
  Rng rng = make_rng(1);
  for (MapKind map : {MapKind::Dense, MapKind::Conv}) {
    for (int trial = 0; trial < 50; ++trial) {
      const testing::BlockFixture f = random_fixture(map, rng);
      for (Mode mode : {Mode::Train, Mode::Eval}) {
        const Tensor res = run_block(with_kind(f.base, BlockKind::Residual, {}), f.x, mode);
        for (double lam : {0.0, -0.5, -3.0, -1e-300}) {
          EXPECT_TRUE(bit_equal(run_block(with_kind(f.base, BlockKind::In, lam), f.x, mode), res));
          EXPECT_TRUE(
              bit_equal(run_block(with_kind(f.base, BlockKind::LambdaIn, lam), f.x, mode), res));
        }
      }
    }
  }
}

TEST(BlockReduction, InWithUnitCoefficientIsNonResidual) {
  Rng rng = make_rng(2);
  for (MapKind map : {MapKind::Dense, MapKind::Conv}) {
    for (int trial = 0; trial < 50; ++trial) {
      const testing::BlockFixture f = random_fixture(map, rng);
      for (Mode mode : {Mode::Train, Mode::Eval}) {
        const Tensor nonres = run_block(with_kind(f.base, BlockKind::NonResidual, {}), f.x, mode);
        EXPECT_TRUE(bit_equal(run_block(with_kind(f.base, BlockKind::In, 1.0), f.x, mode), nonres));
      }
    }
  }
}

TEST(BlockReduction, InMinusNonResidualIsScaledInput) {
  Rng rng = make_rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const testing::BlockFixture f = random_fixture(MapKind::Dense, rng);
    const double lam = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const Tensor in = run_block(with_kind(f.base, BlockKind::In, lam), f.x, Mode::Eval);
    const Tensor non = run_block(with_kind(f.base, BlockKind::NonResidual, {}), f.x, Mode::Eval);
    for (std::size_t i = 0; i < in.size(); ++i) {
      // One rounding in the product and one in each sum.
      EXPECT_NEAR(in[i] - non[i], (1.0 - lam) * f.x[i], 1e-12);
    }
  }
}

TEST(Blocks, LambdaInArithmetic) {
  // Width 1 dense block whose transform maps 2 to 1 in eval mode.
  auto stack = build_stack(1, 1, BlockKind::LambdaIn, MapKind::Dense, InitScheme{}, 5);
  BlockParams p = stack.front();
  p.transform.w1 = Tensor({1, 1}, {0.5});
  p.transform.b1 = Tensor({1}, {0.0});
  p.transform.w2 = Tensor({1, 1}, {1.0});
  p.transform.b2 = Tensor({1}, {0.0});
  p.lambda_raw = Tensor({1}, {0.25});
  const Tensor y = run_block(p, Tensor({1, 1}, {2.0}), Mode::Eval);
  EXPECT_EQ(y[0], 2.75);
}

TEST(Blocks, GatingSigmoidCoefficientIsStrictlyInsideUnitInterval) {
  Rng rng = make_rng(4);
  for (MapKind map : {MapKind::Dense, MapKind::Conv}) {
    auto stack = build_stack(1, 4, BlockKind::InGatingSig, map, InitScheme{}, rng());
    BlockParams& p = stack.front();
    *p.gate_w = random_tensor(p.gate_w->shape(), rng, -1.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
      const Tensor x = map == MapKind::Dense ? random_tensor({6, 4}, rng, -5.0, 5.0)
                                             : random_tensor({3, 4, 3, 3}, rng, -5.0, 5.0);
      Graph g;
      ParamBinder bind(g, false);
      const auto a = block_coefficient(p, bind, g.constant(x));
      ASSERT_TRUE(a);
      EXPECT_EQ(a->shape(), (Shape{x.dim(0), 1}));
      for (double v : a->value().data()) {
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, 1.0);
      }
    }
  }
}

TEST(Blocks, ShapeMismatchIsRejected) {
  auto stack = build_stack(1, 4, BlockKind::In, MapKind::Dense, InitScheme{}, 6);
  Graph g;
  ParamBinder bind(g, false);
  EXPECT_ANY_THROW(block_forward(stack.front(), bind, g.constant(Tensor({2, 3})), Mode::Eval));
}

TEST(BuildStack, LambdaDrawsStayInTheInterval) {
  for (InitScheme init : {InitScheme{0.2, 0.25}, InitScheme{0.3, 0.4}, InitScheme{0.0, 0.1}}) {
    for (BlockKind kind : {BlockKind::In, BlockKind::LambdaIn, BlockKind::InSig}) {
      const auto stack = build_stack(30, 8, kind, MapKind::Dense, init, 99);
      for (const BlockParams& p : stack) {
        ASSERT_TRUE(p.lambda_raw);
        EXPECT_GE(p.lambda_raw->item(), init.lambda_lo);
        EXPECT_LE(p.lambda_raw->item(), init.lambda_hi);
      }
    }
  }
}

TEST(BuildStack, OptionalMembersFollowTheKind) {
  for (BlockKind kind : kAllBlockKinds) {
    const auto stack = build_stack(2, 4, kind, MapKind::Conv, InitScheme{}, 1);
    for (const BlockParams& p : stack) {
      EXPECT_EQ(p.lambda_raw.has_value(), owns_lambda(kind));
      EXPECT_EQ(p.gate_w.has_value(), owns_gate(kind));
      EXPECT_EQ(p.gate_b.has_value(), owns_gate(kind));
      EXPECT_FALSE(p.transform.b1.has_value());
    }
  }
}

TEST(BuildStack, DeterministicPerSeed) {
  const auto a = build_stack(3, 4, BlockKind::InGating, MapKind::Dense, InitScheme{}, 17);
  const auto b = build_stack(3, 4, BlockKind::InGating, MapKind::Dense, InitScheme{}, 17);
  const auto c = build_stack(3, 4, BlockKind::InGating, MapKind::Dense, InitScheme{}, 18);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].transform.w1, b[i].transform.w1);
    EXPECT_EQ(*a[i].gate_b, *b[i].gate_b);
  }
  EXPECT_NE(a[0].transform.w1, c[0].transform.w1);
}

TEST(BuildStack, RejectsBadArguments) {
  EXPECT_ANY_THROW(build_stack(0, 4, BlockKind::In, MapKind::Dense, InitScheme{}, 1));
  EXPECT_ANY_THROW(build_stack(2, 4, BlockKind::In, MapKind::Dense, InitScheme{0.3, 0.2}, 1));
}

TEST(BlockKinds, NamesRoundTrip) {
  for (BlockKind kind : kAllBlockKinds) EXPECT_EQ(parse_block_kind(to_string(kind)), kind);
  EXPECT_ANY_THROW(parse_block_kind("resnet"));
}

Model small_model(BlockKind kind, MapKind map, std::uint64_t seed) {
  ModelConfig cfg;
  cfg.kind = kind;
  cfg.depth = 3;
  cfg.width = 4;
  cfg.map = map;
  cfg.input_shape = map == MapKind::Dense ? Shape{2} : Shape{1, 5, 5};
  cfg.classes = 3;
  return build_model(cfg, InitScheme{}, seed);
}

TEST(Coefficients, AllNegativeLambdasAreInactive) {
  Model m = small_model(BlockKind::In, MapKind::Dense, 1);
  for (BlockParams& b : m.blocks) b.lambda_raw = Tensor({1}, {-1.0});
  EXPECT_EQ(coefficient_report(m).fraction_active, 0.0);
}

TEST(Coefficients, FractionAndBins) {
  Model m = small_model(BlockKind::In, MapKind::Dense, 1);
  const double lams[] = {0.5, 0.005, 1.5};
  for (std::size_t i = 0; i < 3; ++i) m.blocks[i].lambda_raw = Tensor({1}, {lams[i]});
  const CoefficientReport r = coefficient_report(m);
  EXPECT_DOUBLE_EQ(r.fraction_active, 2.0 / 3.0);
  EXPECT_EQ(r.bins, (std::array<std::size_t, 3>{2, 1, 0}));
}

TEST(Coefficients, GatingNeedsProbe) {
  Model m = small_model(BlockKind::InGating, MapKind::Dense, 1);
  EXPECT_THROW(coefficient_report(m), std::invalid_argument);
  Rng rng = make_rng(3);
  const Tensor probe = random_tensor({8, 2}, rng, 0.0, 1.0);
  const CoefficientReport r = coefficient_report(m, &probe);
  EXPECT_EQ(r.coefficients.size(), 3u);
  EXPECT_EQ(r.bins[0] + r.bins[1] + r.bins[2], 3u);
  EXPECT_GE(r.fraction_active, 0.0);
  EXPECT_LE(r.fraction_active, 1.0);
}

TEST(Coefficients, CsvHeader) {
  const auto path = std::filesystem::temp_directory_path() / "donet_coeff_test.csv";
  write_coefficients_csv(summarize_coefficients({0.1, 0.2}), path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "block_index,coefficient");
  std::filesystem::remove(path);
}

TEST(Serialization, RoundTripIsExact) {
  Rng rng = make_rng(8);
  for (BlockKind kind : kAllBlockKinds) {
    for (MapKind map : {MapKind::Dense, MapKind::Conv}) {
      const Model m = small_model(kind, map, rng());
      const auto bytes = serialize_model(m);
      const Model back = deserialize_model(bytes);
      EXPECT_EQ(serialize_model(back), bytes);
      EXPECT_EQ(back.config, m.config);
      const Tensor x = map == MapKind::Dense ? random_tensor({4, 2}, rng, 0.0, 1.0)
                                             : random_tensor({2, 1, 5, 5}, rng, 0.0, 1.0);
      EXPECT_TRUE(bit_equal(back.logits(x), m.logits(x)));
    }
  }
}

TEST(Serialization, HeaderLayout) {
  const Model m = small_model(BlockKind::InSig, MapKind::Dense, 2);
  const auto bytes = serialize_model(m);
  ASSERT_GT(bytes.size(), 11u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 6), "DONET1");
  EXPECT_EQ(bytes[6], 3);  // little-endian block count
  EXPECT_EQ(bytes[7] | bytes[8] | bytes[9], 0);
  EXPECT_EQ(bytes[10], static_cast<std::uint8_t>(BlockKind::InSig));
}

TEST(Serialization, RejectsCorruptFiles) {
  const Model m = small_model(BlockKind::In, MapKind::Dense, 2);
  auto bytes = serialize_model(m);
  EXPECT_ANY_THROW(deserialize_model({}));
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  EXPECT_ANY_THROW(deserialize_model(truncated));
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_ANY_THROW(deserialize_model(trailing));
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_ANY_THROW(deserialize_model(magic));
  auto kind = bytes;
  kind[10] = 42;
  EXPECT_ANY_THROW(deserialize_model(kind));
}

TEST(Serialization, IndependentReaderAgreesOnFractionActive) {
  Rng rng = make_rng(9);
  for (BlockKind kind : {BlockKind::In, BlockKind::LambdaIn, BlockKind::InSig}) {
    Model m = small_model(kind, MapKind::Dense, rng());
    m.blocks[0].lambda_raw = Tensor({1}, {-0.2});
    m.blocks[1].lambda_raw = Tensor({1}, {0.01});
    const auto path = std::filesystem::temp_directory_path() / "donet_params_test.bin";
    save_model(m, path);
    const auto raw = testing::read_raw_blocks(path);
    ASSERT_EQ(raw.size(), m.blocks.size());
    EXPECT_EQ(testing::raw_fraction_active(raw), coefficient_report(load_model(path)).fraction_active);
    std::filesystem::remove(path);
  }
}

}  // namespace
}  // namespace donet
