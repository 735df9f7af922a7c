#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "donet/tensor.hpp"

namespace donet {

struct Dataset {
  Tensor x;  // N × per-sample shape
  std::vector<int> y;
  std::size_t classes = 0;

  std::size_t size() const { return y.size(); }
  Shape sample_shape() const { return Shape(x.shape().begin() + 1, x.shape().end()); }
  Dataset subset(std::span<const std::size_t> indices) const;
  Dataset slice(std::size_t begin, std::size_t end) const;
  // N×C×H×W → N×(C·H·W).
  Dataset flattened() const;
};

// IDX image/label pair. Images become N×1×rows×cols scaled to [0,1].
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

enum class SynthKind { Moons, Spirals };

SynthKind parse_synth_kind(std::string_view name);

// Two-class point clouds in [0,1]². Class 0 holds ⌊n/2⌋ points, listed first.
// Moons are mapped by x' = (x + 1.5)/4, y' = (y + 1)/2.5; spirals by
// v' = (v + 1)/2. Jittered points are clamped to the unit square.
Dataset synth_dataset(SynthKind kind, std::size_t n, double noise_sd, std::uint64_t seed);

struct Split {
  Dataset train;
  Dataset test;
};

// Seeded shuffle, then the first round(test_fraction·N) samples become the
// test set.
Split split_dataset(const Dataset& data, double test_fraction, std::uint64_t seed);

}  // namespace donet
