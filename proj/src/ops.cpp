#include "donet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "donet/kernels.hpp"

namespace donet {

namespace {

Graph& graph_of(Var a) {
  if (a.graph == nullptr) throw std::logic_error("Var is not bound to a graph");
  return *a.graph;
}

Graph& graph_of(Var a, Var b) {
  if (a.graph != b.graph) {
    throw std::invalid_argument("operands belong to different graphs");
  }
  return graph_of(a);
}

double sigmoid_value(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_labels(std::span<const int> labels, std::size_t rows,
                  std::size_t classes) {
  if (labels.size() != rows) {
    throw std::invalid_argument("expected " + std::to_string(rows) +
                                " labels, got " +
                                std::to_string(labels.size()));
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw std::out_of_range("label " + std::to_string(y) +
                              " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw std::invalid_argument(std::string(what) + " expects rank " +
                                std::to_string(rank) + ", got " +
                                shape_string(t.shape()));
  }
}

// Accumulates g (shaped like the output) into a parent that was either full
// shaped or a broadcast scalar; `factor` is applied per element.
template <typename F>
void accumulate_broadcast(Tensor* target, const Tensor& g, F factor) {
  if (target == nullptr) return;
  if (target->size() == g.size()) {
    for (std::size_t i = 0; i < g.size(); ++i) (*target)[i] += g[i] * factor(i);
  } else {
    double acc = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * factor(i);
    (*target)[0] += acc;
  }
}

Var binary(ElementwiseOp op, Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Shape out_shape;
  if (av.shape() == bv.shape()) {
    out_shape = av.shape();
  } else if (bv.size() == 1) {
    out_shape = av.shape();
  } else if (av.size() == 1) {
    out_shape = bv.shape();
  } else {
    throw std::invalid_argument("elementwise shape mismatch: " +
                                shape_string(av.shape()) + " vs " +
                                shape_string(bv.shape()));
  }
  Tensor out(out_shape);
  const bool a_scalar = av.size() == 1 && out.size() != 1;
  const bool b_scalar = bv.size() == 1 && out.size() != 1;
  auto at = [&](const Tensor& t, bool scalar, std::size_t i) {
    return scalar ? t[0] : t[i];
  };
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = at(av, a_scalar, i);
    const double y = at(bv, b_scalar, i);
    switch (op) {
      case ElementwiseOp::Add: out[i] = x + y; break;
      case ElementwiseOp::Sub: out[i] = x - y; break;
      case ElementwiseOp::Mul: out[i] = x * y; break;
      default: throw std::logic_error("not a binary elementwise op");
    }
  }
  const std::size_t ia = a.id;
  const std::size_t ib = b.id;
  OpKind kind = op == ElementwiseOp::Add   ? OpKind::Add
                : op == ElementwiseOp::Sub ? OpKind::Sub
                                           : OpKind::Mul;
  return g.record(kind, std::move(out), {ia, ib},
                  [op, ia, ib, a_scalar, b_scalar](Graph& graph, std::size_t self) {
                    const Tensor& go = graph.output_grad(self);
                    const Tensor& av = graph.value(ia);
                    const Tensor& bv = graph.value(ib);
                    auto val = [](const Tensor& t, bool scalar, std::size_t i) {
                      return scalar ? t[0] : t[i];
                    };
                    switch (op) {
                      case ElementwiseOp::Add:
                        accumulate_broadcast(graph.grad_target(ia), go,
                                             [](std::size_t) { return 1.0; });
                        accumulate_broadcast(graph.grad_target(ib), go,
                                             [](std::size_t) { return 1.0; });
                        break;
                      case ElementwiseOp::Sub:
                        accumulate_broadcast(graph.grad_target(ia), go,
                                             [](std::size_t) { return 1.0; });
                        accumulate_broadcast(graph.grad_target(ib), go,
                                             [](std::size_t) { return -1.0; });
                        break;
                      case ElementwiseOp::Mul:
                        accumulate_broadcast(graph.grad_target(ia), go, [&](std::size_t i) {
                          return val(bv, b_scalar, i);
                        });
                        accumulate_broadcast(graph.grad_target(ib), go, [&](std::size_t i) {
                          return val(av, a_scalar, i);
                        });
                        break;
                      default:
                        break;
                    }
                  });
}

}  // namespace

Var elementwise(ElementwiseOp op, Var a, std::optional<Var> b) {
  switch (op) {
    case ElementwiseOp::Add:
    case ElementwiseOp::Sub:
    case ElementwiseOp::Mul:
      if (!b) throw std::invalid_argument("binary elementwise op needs two operands");
      return binary(op, a, *b);
    case ElementwiseOp::Relu: {
      Graph& g = graph_of(a);
      Tensor out = Tensor::like(a.value());
      const Tensor& x = a.value();
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
      const std::size_t ia = a.id;
      return g.record(OpKind::Relu, std::move(out), {ia},
                      [ia](Graph& graph, std::size_t self) {
                        Tensor* ga = graph.grad_target(ia);
                        if (!ga) return;
                        const Tensor& x = graph.value(ia);
                        const Tensor& go = graph.output_grad(self);
                        for (std::size_t i = 0; i < x.size(); ++i) {
                          if (x[i] > 0.0) (*ga)[i] += go[i];
                        }
                      });
    }
    case ElementwiseOp::Sigmoid: {
      Graph& g = graph_of(a);
      Tensor out = Tensor::like(a.value());
      const Tensor& x = a.value();
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = sigmoid_value(x[i]);
      const std::size_t ia = a.id;
      return g.record(OpKind::Sigmoid, std::move(out), {ia},
                      [ia](Graph& graph, std::size_t self) {
                        Tensor* ga = graph.grad_target(ia);
                        if (!ga) return;
                        const Tensor& s = graph.value(self);
                        const Tensor& go = graph.output_grad(self);
                        for (std::size_t i = 0; i < s.size(); ++i) {
                          (*ga)[i] += go[i] * s[i] * (1.0 - s[i]);
                        }
                      });
    }
  }
  throw std::logic_error("unknown elementwise op");
}

Var add(Var a, Var b) { return elementwise(ElementwiseOp::Add, a, b); }
Var sub(Var a, Var b) { return elementwise(ElementwiseOp::Sub, a, b); }
Var mul(Var a, Var b) { return elementwise(ElementwiseOp::Mul, a, b); }
Var relu(Var x) { return elementwise(ElementwiseOp::Relu, x); }
Var sigmoid(Var x) { return elementwise(ElementwiseOp::Sigmoid, x); }

Var scale(Var x, double factor) {
  Graph& g = graph_of(x);
  Tensor out = x.value();
  for (auto& v : out.data()) v *= factor;
  const std::size_t ix = x.id;
  return g.record(OpKind::Scale, std::move(out), {ix},
                  [ix, factor](Graph& graph, std::size_t self) {
                    Tensor* gx = graph.grad_target(ix);
                    if (!gx) return;
                    const Tensor& go = graph.output_grad(self);
                    for (std::size_t i = 0; i < go.size(); ++i) (*gx)[i] += go[i] * factor;
                  });
}

Var sum(Var x) {
  Graph& g = graph_of(x);
  double acc = 0.0;
  for (double v : x.value().data()) acc += v;
  const std::size_t ix = x.id;
  return g.record(OpKind::Sum, Tensor::scalar(acc), {ix},
                  [ix](Graph& graph, std::size_t self) {
                    Tensor* gx = graph.grad_target(ix);
                    if (!gx) return;
                    const double go = graph.output_grad(self)[0];
                    for (auto& v : gx->data()) v += go;
                  });
}

Var mean(Var x) {
  Graph& g = graph_of(x);
  const double n = static_cast<double>(x.value().size());
  double acc = 0.0;
  for (double v : x.value().data()) acc += v;
  const std::size_t ix = x.id;
  return g.record(OpKind::Mean, Tensor::scalar(acc / n), {ix},
                  [ix, n](Graph& graph, std::size_t self) {
                    Tensor* gx = graph.grad_target(ix);
                    if (!gx) return;
                    const double go = graph.output_grad(self)[0] / n;
                    for (auto& v : gx->data()) v += go;
                  });
}

Var matmul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank(av, 2, "matmul");
  require_rank(bv, 2, "matmul");
  if (av.dim(1) != bv.dim(0)) {
    throw std::invalid_argument("matmul inner dimensions differ: " +
                                shape_string(av.shape()) + " · " +
                                shape_string(bv.shape()));
  }
  const kernels::MatDims d{av.dim(0), av.dim(1), bv.dim(1)};
  Tensor out({d.m, d.n});
  kernels::matmul(av.data(), bv.data(), out.data(), d);
  const std::size_t ia = a.id;
  const std::size_t ib = b.id;
  return g.record(OpKind::MatMul, std::move(out), {ia, ib},
                  [ia, ib, d](Graph& graph, std::size_t self) {
                    const Tensor& go = graph.output_grad(self);
                    if (Tensor* ga = graph.grad_target(ia)) {
                      // dA[m×k] = G[m×n] · Bᵀ
                      Tensor tmp({d.m, d.k});
                      kernels::matmul_a_bt(go.data(), graph.value(ib).data(),
                                           tmp.data(), {d.m, d.k, d.n});
                      for (std::size_t i = 0; i < tmp.size(); ++i) (*ga)[i] += tmp[i];
                    }
                    if (Tensor* gb = graph.grad_target(ib)) {
                      // dB[k×n] = Aᵀ · G
                      Tensor tmp({d.k, d.n});
                      kernels::matmul_at_b(graph.value(ia).data(), go.data(),
                                           tmp.data(), d);
                      for (std::size_t i = 0; i < tmp.size(); ++i) (*gb)[i] += tmp[i];
                    }
                  });
}

Var add_bias(Var x, Var bias) {
  Graph& g = graph_of(x, bias);
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  require_rank(xv, 2, "add_bias");
  if (bv.size() != xv.dim(1)) {
    throw std::invalid_argument("add_bias: bias " + shape_string(bv.shape()) +
                                " does not match " + shape_string(xv.shape()));
  }
  const std::size_t rows = xv.dim(0);
  const std::size_t cols = xv.dim(1);
  Tensor out = xv;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] += bv[j];
  const std::size_t ix = x.id;
  const std::size_t ib = bias.id;
  return g.record(OpKind::AddBias, std::move(out), {ix, ib},
                  [ix, ib, rows, cols](Graph& graph, std::size_t self) {
                    const Tensor& go = graph.output_grad(self);
                    if (Tensor* gx = graph.grad_target(ix)) {
                      for (std::size_t i = 0; i < go.size(); ++i) (*gx)[i] += go[i];
                    }
                    if (Tensor* gb = graph.grad_target(ib)) {
                      for (std::size_t j = 0; j < cols; ++j) {
                        double acc = 0.0;
                        for (std::size_t i = 0; i < rows; ++i) acc += go[i * cols + j];
                        (*gb)[j] += acc;
                      }
                    }
                  });
}

Var conv2d(Var x, Var w, std::size_t stride, std::size_t pad) {
  Graph& g = graph_of(x, w);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require_rank(xv, 4, "conv2d input");
  require_rank(wv, 4, "conv2d weight");
  if (wv.dim(2) != 3 || wv.dim(3) != 3) {
    throw std::invalid_argument("conv2d supports 3x3 kernels, got " +
                                shape_string(wv.shape()));
  }
  if (pad > 1 || stride < 1 || stride > 2) {
    throw std::invalid_argument("conv2d supports pad in {0,1} and stride in {1,2}");
  }
  if (wv.dim(1) != xv.dim(1)) {
    throw std::invalid_argument("conv2d channel mismatch: input " +
                                shape_string(xv.shape()) + ", weight " +
                                shape_string(wv.shape()));
  }
  kernels::ConvDims d;
  d.batch = xv.dim(0);
  d.channels = xv.dim(1);
  d.height = xv.dim(2);
  d.width = xv.dim(3);
  d.filters = wv.dim(0);
  d.kernel = 3;
  d.stride = stride;
  d.pad = pad;
  if (d.height + 2 * pad < 3 || d.width + 2 * pad < 3) {
    throw std::invalid_argument("conv2d input " + shape_string(xv.shape()) +
                                " smaller than kernel");
  }
  Tensor out({d.batch, d.filters, d.out_height(), d.out_width()});
  kernels::conv2d_forward(xv.data(), wv.data(), out.data(), d);
  const std::size_t ix = x.id;
  const std::size_t iw = w.id;
  return g.record(OpKind::Conv2d, std::move(out), {ix, iw},
                  [ix, iw, d](Graph& graph, std::size_t self) {
                    const Tensor& go = graph.output_grad(self);
                    if (Tensor* gx = graph.grad_target(ix)) {
                      Tensor tmp = Tensor::like(*gx);
                      kernels::conv2d_backward_input(go.data(), graph.value(iw).data(),
                                                     tmp.data(), d);
                      for (std::size_t i = 0; i < tmp.size(); ++i) (*gx)[i] += tmp[i];
                    }
                    if (Tensor* gw = graph.grad_target(iw)) {
                      Tensor tmp = Tensor::like(*gw);
                      kernels::conv2d_backward_weight(graph.value(ix).data(), go.data(),
                                                      tmp.data(), d);
                      for (std::size_t i = 0; i < tmp.size(); ++i) (*gw)[i] += tmp[i];
                    }
                  });
}

BatchNormState BatchNormState::identity(std::size_t channels) {
  BatchNormState s;
  s.running_mean = Tensor({channels}, 0.0);
  s.running_var = Tensor({channels}, 1.0);
  return s;
}

Var batch_norm(Var x, Var gamma, Var beta, BatchNormState& state, Mode mode) {
  return batch_norm(x, gamma, beta, state, mode, &state);
}

Var batch_norm(Var x, Var gamma, Var beta, const BatchNormState& state,
               Mode mode, BatchNormState* update) {
  Graph& g = graph_of(x, gamma);
  graph_of(x, beta);
  const Tensor& xv = x.value();
  if (xv.rank() != 2 && xv.rank() != 4) {
    throw std::invalid_argument("batch_norm expects N×D or N×C×H×W, got " +
                                shape_string(xv.shape()));
  }
  const std::size_t n = xv.dim(0);
  const std::size_t channels = xv.dim(1);
  const std::size_t inner = xv.size() / (n * channels);
  const std::size_t count = n * inner;
  if (gamma.value().size() != channels || beta.value().size() != channels ||
      state.running_mean.size() != channels ||
      state.running_var.size() != channels) {
    throw std::invalid_argument("batch_norm parameters do not match " +
                                std::to_string(channels) + " channels");
  }
  auto index = [&](std::size_t s, std::size_t c, std::size_t k) {
    return (s * channels + c) * inner + k;
  };

  std::vector<double> mu(channels);
  std::vector<double> sigma(channels);
  std::vector<bool> floored(channels, false);
  if (mode == Mode::Train) {
    for (std::size_t c = 0; c < channels; ++c) {
      double acc = 0.0;
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t k = 0; k < inner; ++k) acc += xv[index(s, c, k)];
      const double m = acc / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t k = 0; k < inner; ++k) {
          const double dv = xv[index(s, c, k)] - m;
          sq += dv * dv;
        }
      const double var = sq / static_cast<double>(count);
      mu[c] = m;
      floored[c] = var < state.eps;
      sigma[c] = std::sqrt(std::max(var, state.eps));
      if (update != nullptr) {
        const double unbiased =
            count > 1 ? var * static_cast<double>(count) / static_cast<double>(count - 1) : var;
        const double mom = update->momentum;
        update->running_mean[c] = (1.0 - mom) * update->running_mean[c] + mom * m;
        update->running_var[c] = (1.0 - mom) * update->running_var[c] + mom * unbiased;
      }
    }
  } else {
    for (std::size_t c = 0; c < channels; ++c) {
      mu[c] = state.running_mean[c];
      sigma[c] = std::sqrt(std::max(state.running_var[c], state.eps));
    }
  }

  Tensor xhat = Tensor::like(xv);
  Tensor out = Tensor::like(xv);
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t k = 0; k < inner; ++k) {
        const std::size_t i = index(s, c, k);
        xhat[i] = (xv[i] - mu[c]) / sigma[c];
        out[i] = gv[c] * xhat[i] + bv[c];
      }

  const std::size_t ix = x.id;
  const std::size_t ig = gamma.id;
  const std::size_t ib = beta.id;
  return g.record(
      OpKind::BatchNorm, std::move(out), {ix, ig, ib},
      [ix, ig, ib, n, channels, inner, count, mode, sigma, floored,
       xhat = std::move(xhat)](Graph& graph, std::size_t self) {
        const Tensor& go = graph.output_grad(self);
        const Tensor& gv = graph.value(ig);
        auto index = [&](std::size_t s, std::size_t c, std::size_t k) {
          return (s * channels + c) * inner + k;
        };
        Tensor* gx = graph.grad_target(ix);
        Tensor* gg = graph.grad_target(ig);
        Tensor* gb = graph.grad_target(ib);
        for (std::size_t c = 0; c < channels; ++c) {
          double sum_g = 0.0;
          double sum_gx = 0.0;
          for (std::size_t s = 0; s < n; ++s)
            for (std::size_t k = 0; k < inner; ++k) {
              const std::size_t i = index(s, c, k);
              sum_g += go[i];
              sum_gx += go[i] * xhat[i];
            }
          if (gg) (*gg)[c] += sum_gx;
          if (gb) (*gb)[c] += sum_g;
          if (!gx) continue;
          const double scale_c = gv[c] / sigma[c];
          if (mode == Mode::Eval) {
            for (std::size_t s = 0; s < n; ++s)
              for (std::size_t k = 0; k < inner; ++k) {
                const std::size_t i = index(s, c, k);
                (*gx)[i] += go[i] * scale_c;
              }
            continue;
          }
          const double mean_g = sum_g / static_cast<double>(count);
          const double mean_gx = floored[c] ? 0.0 : sum_gx / static_cast<double>(count);
          for (std::size_t s = 0; s < n; ++s)
            for (std::size_t k = 0; k < inner; ++k) {
              const std::size_t i = index(s, c, k);
              (*gx)[i] += scale_c * (go[i] - mean_g - xhat[i] * mean_gx);
            }
        }
      });
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
  Graph& g = graph_of(logits);
  const Tensor& z = logits.value();
  require_rank(z, 2, "softmax_cross_entropy");
  const std::size_t rows = z.dim(0);
  const std::size_t classes = z.dim(1);
  check_labels(labels, rows, classes);
  Tensor probs = softmax_rows(z);
  const std::vector<double> losses = cross_entropy_rows(z, labels);
  double acc = 0.0;
  for (double l : losses) acc += l;
  const std::vector<int> y(labels.begin(), labels.end());
  const std::size_t iz = logits.id;
  return g.record(OpKind::SoftmaxCrossEntropy,
                  Tensor::scalar(acc / static_cast<double>(rows)), {iz},
                  [iz, rows, classes, y, probs = std::move(probs)](Graph& graph,
                                                                   std::size_t self) {
                    Tensor* gz = graph.grad_target(iz);
                    if (!gz) return;
                    const double go = graph.output_grad(self)[0] / static_cast<double>(rows);
                    for (std::size_t i = 0; i < rows; ++i)
                      for (std::size_t k = 0; k < classes; ++k) {
                        const double target = static_cast<int>(k) == y[i] ? 1.0 : 0.0;
                        (*gz)[i * classes + k] += go * (probs[i * classes + k] - target);
                      }
                  });
}

Var softmax(Var logits) {
  Graph& g = graph_of(logits);
  const Tensor& z = logits.value();
  require_rank(z, 2, "softmax");
  const std::size_t rows = z.dim(0);
  const std::size_t classes = z.dim(1);
  const std::size_t iz = logits.id;
  return g.record(OpKind::Softmax, softmax_rows(z), {iz},
                  [iz, rows, classes](Graph& graph, std::size_t self) {
                    Tensor* gz = graph.grad_target(iz);
                    if (!gz) return;
                    const Tensor& p = graph.value(self);
                    const Tensor& go = graph.output_grad(self);
                    for (std::size_t i = 0; i < rows; ++i) {
                      double dot = 0.0;
                      for (std::size_t k = 0; k < classes; ++k)
                        dot += go[i * classes + k] * p[i * classes + k];
                      for (std::size_t k = 0; k < classes; ++k) {
                        const std::size_t idx = i * classes + k;
                        (*gz)[idx] += p[idx] * (go[idx] - dot);
                      }
                    }
                  });
}

Var nll_from_probs(Var probs, std::span<const int> labels) {
  Graph& g = graph_of(probs);
  const Tensor& p = probs.value();
  require_rank(p, 2, "nll_from_probs");
  const std::size_t rows = p.dim(0);
  const std::size_t classes = p.dim(1);
  check_labels(labels, rows, classes);
  static constexpr double kTiny = std::numeric_limits<double>::min();
  double acc = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    acc -= std::log(std::max(p[i * classes + labels[i]], kTiny));
  }
  const std::vector<int> y(labels.begin(), labels.end());
  const std::size_t ip = probs.id;
  return g.record(OpKind::NllFromProbs,
                  Tensor::scalar(acc / static_cast<double>(rows)), {ip},
                  [ip, rows, classes, y](Graph& graph, std::size_t self) {
                    Tensor* gp = graph.grad_target(ip);
                    if (!gp) return;
                    const Tensor& p = graph.value(ip);
                    const double go = graph.output_grad(self)[0] / static_cast<double>(rows);
                    for (std::size_t i = 0; i < rows; ++i) {
                      const std::size_t idx = i * classes + static_cast<std::size_t>(y[i]);
                      (*gp)[idx] -= go / std::max(p[idx], kTiny);
                    }
                  });
}

Var scale_rows(Var x, Var s) {
  Graph& g = graph_of(x, s);
  const Tensor& xv = x.value();
  const Tensor& sv = s.value();
  const std::size_t rows = xv.dim(0);
  if (sv.size() != rows) {
    throw std::invalid_argument("scale_rows: " + shape_string(sv.shape()) +
                                " does not provide one factor per row of " +
                                shape_string(xv.shape()));
  }
  const std::size_t stride = xv.size() / rows;
  Tensor out = Tensor::like(xv);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t k = 0; k < stride; ++k) out[i * stride + k] = sv[i] * xv[i * stride + k];
  const std::size_t ix = x.id;
  const std::size_t is = s.id;
  return g.record(OpKind::ScaleRows, std::move(out), {ix, is},
                  [ix, is, rows, stride](Graph& graph, std::size_t self) {
                    const Tensor& go = graph.output_grad(self);
                    const Tensor& xv = graph.value(ix);
                    const Tensor& sv = graph.value(is);
                    Tensor* gx = graph.grad_target(ix);
                    Tensor* gs = graph.grad_target(is);
                    for (std::size_t i = 0; i < rows; ++i) {
                      double acc = 0.0;
                      for (std::size_t k = 0; k < stride; ++k) {
                        const std::size_t idx = i * stride + k;
                        if (gx) (*gx)[idx] += go[idx] * sv[i];
                        acc += go[idx] * xv[idx];
                      }
                      if (gs) (*gs)[i] += acc;
                    }
                  });
}

Var spatial_mean(Var x) {
  Graph& g = graph_of(x);
  const Tensor& xv = x.value();
  require_rank(xv, 4, "spatial_mean");
  const std::size_t planes = xv.dim(0) * xv.dim(1);
  const std::size_t area = xv.dim(2) * xv.dim(3);
  Tensor out({xv.dim(0), xv.dim(1)});
  for (std::size_t q = 0; q < planes; ++q) {
    double acc = 0.0;
    for (std::size_t k = 0; k < area; ++k) acc += xv[q * area + k];
    out[q] = acc / static_cast<double>(area);
  }
  const std::size_t ix = x.id;
  return g.record(OpKind::SpatialMean, std::move(out), {ix},
                  [ix, planes, area](Graph& graph, std::size_t self) {
                    Tensor* gx = graph.grad_target(ix);
                    if (!gx) return;
                    const Tensor& go = graph.output_grad(self);
                    for (std::size_t q = 0; q < planes; ++q) {
                      const double share = go[q] / static_cast<double>(area);
                      for (std::size_t k = 0; k < area; ++k) (*gx)[q * area + k] += share;
                    }
                  });
}

Var reshape(Var x, Shape shape) {
  Graph& g = graph_of(x);
  Tensor out = x.value().reshaped(std::move(shape));
  const std::size_t ix = x.id;
  return g.record(OpKind::Reshape, std::move(out), {ix},
                  [ix](Graph& graph, std::size_t self) {
                    Tensor* gx = graph.grad_target(ix);
                    if (!gx) return;
                    const Tensor& go = graph.output_grad(self);
                    for (std::size_t i = 0; i < go.size(); ++i) (*gx)[i] += go[i];
                  });
}

Var mean_of(std::span<const Var> xs) {
  if (xs.empty()) throw std::invalid_argument("mean_of needs at least one input");
  Graph& g = graph_of(xs.front());
  const Shape& shape = xs.front().shape();
  Tensor out = xs.front().value();
  std::vector<std::size_t> parents;
  // Running mean: identical inputs give back the input bit for bit.
  for (std::size_t m = 0; m < xs.size(); ++m) {
    const Var& v = xs[m];
    graph_of(xs.front(), v);
    if (v.shape() != shape) {
      throw std::invalid_argument("mean_of shape mismatch: " + shape_string(shape) +
                                  " vs " + shape_string(v.shape()));
    }
    parents.push_back(v.id);
    if (m == 0) continue;
    const Tensor& t = v.value();
    const double count = static_cast<double>(m + 1);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += (t[i] - out[i]) / count;
  }
  const double k = static_cast<double>(xs.size());
  return g.record(OpKind::MeanOf, std::move(out), parents,
                  [parents, k](Graph& graph, std::size_t self) {
                    const Tensor& go = graph.output_grad(self);
                    for (std::size_t p : parents) {
                      Tensor* gp = graph.grad_target(p);
                      if (!gp) continue;
                      for (std::size_t i = 0; i < go.size(); ++i) (*gp)[i] += go[i] / k;
                    }
                  });
}

Tensor softmax_rows(const Tensor& logits) {
  require_rank(logits, 2, "softmax_rows");
  const std::size_t rows = logits.dim(0);
  const std::size_t classes = logits.dim(1);
  Tensor p = Tensor::like(logits);
  for (std::size_t i = 0; i < rows; ++i) {
    const double* z = logits.data().data() + i * classes;
    const double zmax = *std::max_element(z, z + classes);
    double total = 0.0;
    for (std::size_t k = 0; k < classes; ++k) {
      p[i * classes + k] = std::exp(z[k] - zmax);
      total += p[i * classes + k];
    }
    for (std::size_t k = 0; k < classes; ++k) p[i * classes + k] /= total;
  }
  return p;
}

std::vector<double> cross_entropy_rows(const Tensor& logits,
                                       std::span<const int> labels) {
  require_rank(logits, 2, "cross_entropy_rows");
  const std::size_t rows = logits.dim(0);
  const std::size_t classes = logits.dim(1);
  check_labels(labels, rows, classes);
  std::vector<double> out(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const double* z = logits.data().data() + i * classes;
    const double zmax = *std::max_element(z, z + classes);
    double total = 0.0;
    for (std::size_t k = 0; k < classes; ++k) total += std::exp(z[k] - zmax);
    out[i] = zmax + std::log(total) - z[labels[i]];
  }
  return out;
}

std::vector<int> argmax_rows(const Tensor& scores) {
  require_rank(scores, 2, "argmax_rows");
  const std::size_t rows = scores.dim(0);
  const std::size_t classes = scores.dim(1);
  std::vector<int> out(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < classes; ++k) {
      if (scores[i * classes + k] > scores[i * classes + best]) best = k;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

}  // namespace donet
