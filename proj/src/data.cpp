#include "donet/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "donet/rng.hpp"

namespace donet {

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw std::invalid_argument("empty dataset subset");
  Shape shape = x.shape();
  shape[0] = indices.size();
  const std::size_t per = x.size() / size();
  Dataset out{Tensor(shape), {}, classes};
  out.y.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t src = indices[r];
    if (src >= size()) throw std::out_of_range("dataset index out of range");
    std::copy_n(x.data().begin() + src * per, per, out.x.data().begin() + r * per);
    out.y.push_back(y[src]);
  }
  return out;
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > size()) throw std::out_of_range("bad dataset slice");
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  return subset(idx);
}

Dataset Dataset::flattened() const {
  const std::size_t n = size();
  return {x.reshaped({n, x.size() / n}), y, classes};
}

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t at,
                        const std::filesystem::path& path) {
  if (at + 4 > b.size()) throw std::runtime_error(path.string() + ": truncated header");
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto ib = read_file(images);
  const auto lb = read_file(labels);
  if (ib.empty()) throw std::runtime_error(images.string() + ": empty file");
  if (lb.empty()) throw std::runtime_error(labels.string() + ": empty file");

  if (read_be32(ib, 0, images) != 0x00000803) {
    throw std::runtime_error(images.string() + ": bad magic (expected 0x00000803)");
  }
  const std::uint32_t count = read_be32(ib, 4, images);
  const std::uint32_t rows = read_be32(ib, 8, images);
  const std::uint32_t cols = read_be32(ib, 12, images);
  if (read_be32(lb, 0, labels) != 0x00000801) {
    throw std::runtime_error(labels.string() + ": bad magic (expected 0x00000801)");
  }
  const std::uint32_t label_count = read_be32(lb, 4, labels);
  if (count != label_count) {
    throw std::runtime_error("image count " + std::to_string(count) +
                             " differs from label count " + std::to_string(label_count));
  }
  if (count == 0 || rows == 0 || cols == 0) {
    throw std::runtime_error(images.string() + ": empty image set");
  }
  const std::size_t pixels = std::size_t{rows} * cols;
  if (ib.size() != 16 + std::size_t{count} * pixels) {
    throw std::runtime_error(images.string() + ": payload size does not match header");
  }
  if (lb.size() != 8 + std::size_t{count}) {
    throw std::runtime_error(labels.string() + ": payload size does not match header");
  }
  Dataset d{Tensor({count, 1, rows, cols}), std::vector<int>(count), 0};
  for (std::size_t i = 0; i < std::size_t{count} * pixels; ++i) {
    d.x[i] = static_cast<double>(ib[16 + i]) / 255.0;
  }
  int max_label = 0;
  for (std::size_t i = 0; i < count; ++i) {
    d.y[i] = lb[8 + i];
    max_label = std::max(max_label, d.y[i]);
  }
  d.classes = static_cast<std::size_t>(std::max(max_label + 1, 2));
  return d;
}

SynthKind parse_synth_kind(std::string_view name) {
  if (name == "moons") return SynthKind::Moons;
  if (name == "spirals") return SynthKind::Spirals;
  throw std::invalid_argument("unknown synthetic dataset '" + std::string(name) + "'");
}

Dataset synth_dataset(SynthKind kind, std::size_t n, double noise_sd, std::uint64_t seed) {
  if (n < 4) throw std::invalid_argument("synthetic dataset needs n >= 4");
  if (!(noise_sd >= 0.0)) throw std::invalid_argument("noise_sd must be >= 0");
  const std::size_t n0 = n / 2;
  const std::size_t n1 = n - n0;
  Dataset d{Tensor({n, 2}), std::vector<int>(n), 2};
  Rng rng = make_rng(sub_seed(seed, "jitter"));
  std::normal_distribution<double> jitter(0.0, 1.0);
  const double pi = std::numbers::pi;
  auto place = [&](std::size_t row, double px, double py, int label) {
    if (noise_sd > 0.0) {
      px += noise_sd * jitter(rng);
      py += noise_sd * jitter(rng);
    }
    double u, v;
    if (kind == SynthKind::Moons) {
      u = (px + 1.5) / 4.0;
      v = (py + 1.0) / 2.5;
    } else {
      u = (px + 1.0) / 2.0;
      v = (py + 1.0) / 2.0;
    }
    d.x[2 * row] = std::clamp(u, 0.0, 1.0);
    d.x[2 * row + 1] = std::clamp(v, 0.0, 1.0);
    d.y[row] = label;
  };
  auto param = [](std::size_t i, std::size_t count) {
    return count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(count - 1);
  };
  for (std::size_t i = 0; i < n0; ++i) {
    const double s = param(i, n0);
    if (kind == SynthKind::Moons) {
      place(i, std::cos(pi * s), std::sin(pi * s), 0);
    } else {
      const double t = 0.25 + 3.0 * pi * s;
      const double r = t / (3.0 * pi + 0.25);
      place(i, r * std::cos(t), r * std::sin(t), 0);
    }
  }
  for (std::size_t i = 0; i < n1; ++i) {
    const double s = param(i, n1);
    if (kind == SynthKind::Moons) {
      place(n0 + i, 1.0 - std::cos(pi * s), 0.5 - std::sin(pi * s), 1);
    } else {
      const double t = 0.25 + 3.0 * pi * s;
      const double r = t / (3.0 * pi + 0.25);
      place(n0 + i, r * std::cos(t + pi), r * std::sin(t + pi), 1);
    }
  }
  return d;
}

Split split_dataset(const Dataset& data, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw std::invalid_argument("test_fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(sub_seed(seed, "split"));
  // Fisher-Yates with an explicit draw so the permutation does not depend on
  // the standard library's shuffle.
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  const auto n_test = static_cast<std::size_t>(
      std::llround(test_fraction * static_cast<double>(data.size())));
  if (n_test == 0 || n_test >= data.size()) {
    throw std::invalid_argument("split leaves an empty partition");
  }
  std::span<const std::size_t> all(order);
  return {data.subset(all.subspan(n_test)), data.subset(all.first(n_test))};
}

}  // namespace donet
