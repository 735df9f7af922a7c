#include "block_fixtures.hpp"

#include <cstring>

#include "gradcheck.hpp"

namespace donet::testing {

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

Tensor run_block(const BlockParams& p, const Tensor& x, Mode mode) {
  Graph g;
  ParamBinder bind(g, false);
  return block_forward(p, bind, g.constant(x), mode).value();
}

BlockParams with_kind(BlockParams p, BlockKind kind, std::optional<double> lambda) {
  p.kind = kind;
  p.lambda_raw.reset();
  p.gate_w.reset();
  p.gate_b.reset();
  if (lambda) p.lambda_raw = Tensor({1}, {*lambda});
  return p;
}

BlockFixture random_block_fixture(MapKind map, Rng& rng) {
  const std::size_t width = 4;
  auto stack = build_stack(1, width, BlockKind::Residual, map, InitScheme{}, rng());
  BlockParams p = stack.front();
  for (NormLayer* n : {&p.transform.norm1, &p.transform.norm2}) {
    n->gamma = random_tensor(n->gamma.shape(), rng, 0.5, 1.5);
    n->beta = random_tensor(n->beta.shape(), rng);
    n->state.running_mean = random_tensor(n->state.running_mean.shape(), rng);
    n->state.running_var = random_tensor(n->state.running_var.shape(), rng, 0.5, 2.0);
  }
  Tensor x = map == MapKind::Dense ? random_tensor({5, width}, rng, -3.0, 3.0)
                                   : random_tensor({2, width, 4, 4}, rng, -3.0, 3.0);
  return {p, x};
}

ReductionCounts check_reduction_identities(std::size_t trials, std::uint64_t seed) {
  ReductionCounts c;
  Rng rng = make_rng(seed);
  auto tally = [&c](bool same) {
    ++c.comparisons;
    c.mismatches += same ? 0 : 1;
  };
  for (MapKind map : {MapKind::Dense, MapKind::Conv}) {
    for (std::size_t t = 0; t < trials; ++t) {
      const BlockFixture f = random_block_fixture(map, rng);
      for (Mode mode : {Mode::Train, Mode::Eval}) {
        const Tensor res = run_block(with_kind(f.base, BlockKind::Residual, {}), f.x, mode);
        for (double lam : {0.0, -0.5, -3.0, -1e-300}) {
          tally(bit_equal(run_block(with_kind(f.base, BlockKind::In, lam), f.x, mode), res));
          tally(bit_equal(run_block(with_kind(f.base, BlockKind::LambdaIn, lam), f.x, mode), res));
        }
        const Tensor non = run_block(with_kind(f.base, BlockKind::NonResidual, {}), f.x, mode);
        tally(bit_equal(run_block(with_kind(f.base, BlockKind::In, 1.0), f.x, mode), non));
      }
    }
  }
  return c;
}

}  // namespace donet::testing
