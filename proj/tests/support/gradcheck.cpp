#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "donet/ops.hpp"

namespace donet::testing {

namespace {

double project(Var out, const Tensor& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) s += r[i] * out.value()[i];
  return s;
}

double evaluate(const Builder& build, const Tensor& r) {
  Graph g;
  ParamBinder bind(g, false);
  return project(build(bind), r);
}

// Values in ±[0.05, 1] keep ReLU inputs off the kink at 0.
Tensor off_zero(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> mag(0.05, 1.0);
  std::bernoulli_distribution sign(0.5);
  for (double& v : t.data()) v = sign(rng) ? mag(rng) : -mag(rng);
  return t;
}

std::vector<int> random_labels(std::size_t n, int classes, Rng& rng) {
  std::uniform_int_distribution<int> pick(0, classes - 1);
  std::vector<int> y(n);
  for (int& v : y) v = pick(rng);
  return y;
}

struct OpCase {
  std::string name;
  std::vector<OpKind> covers;
  // Draws fresh inputs into `inputs` and returns the builder over them.
  std::function<Builder(std::vector<Tensor>& inputs, Rng& rng)> make;
};

std::vector<OpCase> op_cases() {
  std::vector<OpCase> c;
  auto binary = [&](std::string name, OpKind kind, Var (*fn)(Var, Var)) {
    c.push_back({name, {kind}, [fn](std::vector<Tensor>& in, Rng& rng) {
                   in = {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)};
                   return Builder([&in, fn](ParamBinder& b) { return fn(b(in[0]), b(in[1])); });
                 }});
  };
  binary("add", OpKind::Add, &add);
  binary("sub", OpKind::Sub, &sub);
  binary("mul", OpKind::Mul, &mul);
  c.push_back({"mul_broadcast", {OpKind::Mul}, [](std::vector<Tensor>& in, Rng& rng) {
                 in = {random_tensor({3, 4}, rng), random_tensor({1}, rng)};
                 return Builder([&in](ParamBinder& b) { return mul(b(in[1]), b(in[0])); });
               }});
  c.push_back({"add_broadcast", {OpKind::Add}, [](std::vector<Tensor>& in, Rng& rng) {
                 in = {random_tensor({2, 3}, rng), random_tensor({1}, rng)};
                 return Builder([&in](ParamBinder& b) { return add(b(in[0]), b(in[1])); });
               }});
  c.push_back({"relu", {OpKind::Relu}, [](std::vector<Tensor>& in, Rng& rng) {
                 in = {off_zero({4, 5}, rng)};
                 return Builder([&in](ParamBinder& b) { return relu(b(in[0])); });
               }});
  c.push_back({"sigmoid", {OpKind::Sigmoid}, [](std::vector<Tensor>& in, Rng& rng) {
                 in = {random_tensor({4, 5}, rng, -3.0, 3.0)};
                 return Builder([&in](ParamBinder& b) { return sigmoid(b(in[0])); });
               }});
  c.push_back({"scale", {OpKind::Scale}, [](std::vector<Tensor>& in, Rng& rng) {
                 in = {random_tensor({3, 3}, rng)};
                 const double f = std::uniform_real_distribution<double>(-2.0, 2.0)(rng);
                 return Builder([&in, f](ParamBinder& b) { return scale(b(in[0]), f); });
               }});
  c.push_back({"sum", {OpKind::Sum}, [](std::vector<Tensor>& in, Rng& rng) {
                 in = {random_tensor({2, 3, 2}, rng)};
                 return Builder([&in](ParamBinder& b) { return sum(b(in[0])); });
               }});
  c.push_back({"mean", {OpKind::Mean}, [](std::vector<Tensor>& in, Rng& rng) {
                 in = {random_tensor({2, 5}, rng)};
                 return Builder([&in](ParamBinder& b) { return mean(b(in[0])); });
               }});
  c.push_back({"matmul", {OpKind::MatMul}, [](std::vector<Tensor>& in, Rng& rng) {
                 in = {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)};
                 return Builder([&in](ParamBinder& b) { return matmul(b(in[0]), b(in[1])); });
               }});
  c.push_back({"add_bias", {OpKind::AddBias}, [](std::vector<Tensor>& in, Rng& rng) {
                 in = {random_tensor({3, 4}, rng), random_tensor({4}, rng)};
                 return Builder([&in](ParamBinder& b) { return add_bias(b(in[0]), b(in[1])); });
               }});
  c.push_back({"conv2d", {OpKind::Conv2d}, [](std::vector<Tensor>& in, Rng& rng) {
                 in = {random_tensor({2, 2, 5, 5}, rng), random_tensor({3, 2, 3, 3}, rng)};
                 const std::size_t stride = 1 + rng() % 2;
                 const std::size_t pad = rng() % 2;
                 return Builder([&in, stride, pad](ParamBinder& b) {
                   return conv2d(b(in[0]), b(in[1]), stride, pad);
                 });
               }});
  c.push_back({"batch_norm_train", {OpKind::BatchNorm}, [](std::vector<Tensor>& in, Rng& rng) {
                 const bool spatial = rng() % 2;
                 in = {spatial ? random_tensor({2, 3, 2, 2}, rng) : random_tensor({5, 3}, rng),
                       random_tensor({3}, rng, 0.5, 1.5), random_tensor({3}, rng)};
                 return Builder([&in](ParamBinder& b) {
                   const BatchNormState state = BatchNormState::identity(3);
                   return batch_norm(b(in[0]), b(in[1]), b(in[2]), state, Mode::Train, nullptr);
                 });
               }});
  c.push_back({"batch_norm_eval", {OpKind::BatchNorm}, [](std::vector<Tensor>& in, Rng& rng) {
                 in = {random_tensor({4, 3}, rng), random_tensor({3}, rng, 0.5, 1.5),
                       random_tensor({3}, rng)};
                 BatchNormState state = BatchNormState::identity(3);
                 state.running_mean = random_tensor({3}, rng);
                 state.running_var = random_tensor({3}, rng, 0.5, 2.0);
                 return Builder([&in, state](ParamBinder& b) {
                   return batch_norm(b(in[0]), b(in[1]), b(in[2]), state, Mode::Eval, nullptr);
                 });
               }});
  c.push_back({"softmax_cross_entropy", {OpKind::SoftmaxCrossEntropy},
               [](std::vector<Tensor>& in, Rng& rng) {
                 in = {random_tensor({4, 3}, rng, -2.0, 2.0)};
                 auto y = random_labels(4, 3, rng);
                 return Builder([&in, y](ParamBinder& b) { return softmax_cross_entropy(b(in[0]), y); });
               }});
  c.push_back({"softmax", {OpKind::Softmax}, [](std::vector<Tensor>& in, Rng& rng) {
                 in = {random_tensor({3, 4}, rng, -2.0, 2.0)};
                 return Builder([&in](ParamBinder& b) { return softmax(b(in[0])); });
               }});
  c.push_back({"nll_from_probs", {OpKind::NllFromProbs}, [](std::vector<Tensor>& in, Rng& rng) {
                 in = {random_tensor({4, 3}, rng, 0.1, 1.0)};
                 auto y = random_labels(4, 3, rng);
                 return Builder([&in, y](ParamBinder& b) { return nll_from_probs(b(in[0]), y); });
               }});
  c.push_back({"scale_rows", {OpKind::ScaleRows}, [](std::vector<Tensor>& in, Rng& rng) {
                 in = {random_tensor({3, 2, 2}, rng), random_tensor({3}, rng)};
                 return Builder([&in](ParamBinder& b) { return scale_rows(b(in[0]), b(in[1])); });
               }});
  c.push_back({"spatial_mean", {OpKind::SpatialMean}, [](std::vector<Tensor>& in, Rng& rng) {
                 in = {random_tensor({2, 3, 2, 3}, rng)};
                 return Builder([&in](ParamBinder& b) { return spatial_mean(b(in[0])); });
               }});
  c.push_back({"reshape", {OpKind::Reshape}, [](std::vector<Tensor>& in, Rng& rng) {
                 in = {random_tensor({2, 6}, rng)};
                 return Builder([&in](ParamBinder& b) { return reshape(b(in[0]), {3, 4}); });
               }});
  c.push_back({"mean_of", {OpKind::MeanOf}, [](std::vector<Tensor>& in, Rng& rng) {
                 in = {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng),
                       random_tensor({2, 3}, rng)};
                 return Builder([&in](ParamBinder& b) {
                   const std::vector<Var> xs{b(in[0]), b(in[1]), b(in[2])};
                   return mean_of(xs);
                 });
               }});
  c.push_back({"classifier_loss", {OpKind::Softmax, OpKind::MeanOf, OpKind::NllFromProbs},
               [](std::vector<Tensor>& in, Rng& rng) {
                 in = {random_tensor({3, 3}, rng, -2.0, 2.0), random_tensor({3, 3}, rng, -2.0, 2.0)};
                 auto y = random_labels(3, 3, rng);
                 return Builder([&in, y](ParamBinder& b) {
                   const std::vector<Var> ps{softmax(b(in[0])), softmax(b(in[1]))};
                   return nll_from_probs(mean_of(ps), y);
                 });
               }});
  return c;
}

std::vector<Tensor*> block_tensors(BlockParams& p) {
  Transform& t = p.transform;
  std::vector<Tensor*> out{&t.norm1.gamma, &t.norm1.beta, &t.w1, &t.norm2.gamma,
                           &t.norm2.beta,  &t.w2};
  for (auto* opt : {&t.b1, &t.b2, &p.lambda_raw, &p.gate_w, &p.gate_b}) {
    if (*opt) out.push_back(&**opt);
  }
  return out;
}

}  // namespace

Tensor random_tensor(Shape shape, Rng& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.data()) v = u(rng);
  return t;
}

double gradcheck(const std::vector<Tensor*>& wrt, const Builder& build, std::uint64_t seed,
                 double step) {
  Graph g;
  ParamBinder bind(g, true);
  for (Tensor* t : wrt) bind(*t);
  const Var out = build(bind);
  Rng rng = make_rng(seed);
  const Tensor r = random_tensor(out.shape(), rng);
  Var loss = sum(mul(out, g.constant(r)));
  g.backward(loss);

  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (Tensor* t : wrt) {
    const Tensor& analytic = g.grad(*bind.find(*t));
    for (std::size_t i = 0; i < t->size(); ++i) {
      const double keep = (*t)[i];
      (*t)[i] = keep + step;
      const double up = evaluate(build, r);
      (*t)[i] = keep - step;
      const double down = evaluate(build, r);
      (*t)[i] = keep;
      const double numeric = (up - down) / (2.0 * step);
      diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
      a2 += analytic[i] * analytic[i];
      n2 += numeric * numeric;
    }
  }
  return std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-8});
}

std::vector<GradCaseResult> run_gradient_suite(std::size_t cases, std::uint64_t seed) {
  std::vector<GradCaseResult> results;
  Rng rng = make_rng(seed);
  for (const OpCase& oc : op_cases()) {
    GradCaseResult res{oc.name, oc.covers, cases, 0.0};
    for (std::size_t k = 0; k < cases; ++k) {
      std::vector<Tensor> inputs;
      const Builder b = oc.make(inputs, rng);
      std::vector<Tensor*> wrt;
      for (Tensor& t : inputs) wrt.push_back(&t);
      res.worst = std::max(res.worst, gradcheck(wrt, b, rng()));
    }
    results.push_back(res);
  }
  for (MapKind map : {MapKind::Dense, MapKind::Conv}) {
    for (BlockKind kind : kAllBlockKinds) {
      GradCaseResult res{"block:" + std::string(to_string(kind)) + "/" + std::string(to_string(map)),
                         {},
                         cases,
                         0.0};
      for (std::size_t k = 0; k < cases; ++k) {
        const std::size_t width = 3;
        std::vector<BlockParams> stack =
            build_stack(1, width, kind, map, InitScheme{0.2, 0.25}, rng());
        BlockParams& p = stack.front();
        // Zero-initialized biases put exact zeros on ReLU inputs, where the
        // derivative is undefined, so every parameter is redrawn.
        for (NormLayer* n : {&p.transform.norm1, &p.transform.norm2}) {
          n->gamma = random_tensor(n->gamma.shape(), rng, 0.5, 1.5);
          n->beta = random_tensor(n->beta.shape(), rng);
          n->state.running_mean = random_tensor(n->state.running_mean.shape(), rng);
          n->state.running_var = random_tensor(n->state.running_var.shape(), rng, 0.5, 2.0);
        }
        for (auto* b : {&p.transform.b1, &p.transform.b2}) {
          if (*b) **b = random_tensor((*b)->shape(), rng);
        }
        // Spread λ beyond the init interval so both coefficient regimes are hit.
        if (p.lambda_raw) (*p.lambda_raw)[0] = std::uniform_real_distribution<double>(0.1, 0.9)(rng);
        Tensor x = map == MapKind::Dense ? random_tensor({4, width}, rng)
                                         : random_tensor({2, width, 3, 3}, rng);
        const Mode mode = k % 2 == 0 ? Mode::Train : Mode::Eval;
        std::vector<Tensor*> wrt = block_tensors(p);
        wrt.push_back(&x);
        const Builder b = [&p, &x, mode](ParamBinder& bind) {
          return block_forward(p, bind, bind(x), mode);
        };
        res.worst = std::max(res.worst, gradcheck(wrt, b, rng()));
      }
      results.push_back(res);
    }
  }
  return results;
}

}  // namespace donet::testing
