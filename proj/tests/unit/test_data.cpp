#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <vector>

#include "donet/data.hpp"
#include "donet/harness.hpp"

namespace donet {
namespace {

namespace fs = std::filesystem;

using Bytes = std::vector<std::uint8_t>;

void put_be32(Bytes& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

fs::path write_bytes(const std::string& name, const Bytes& b) {
  const fs::path dir = fs::temp_directory_path() / "donet_test_data";
  fs::create_directories(dir);
  const fs::path p = dir / name;
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  return p;
}

Bytes image_file(std::uint32_t magic, std::uint32_t count, std::uint32_t rows,
                 std::uint32_t cols, const Bytes& pixels) {
  Bytes b;
  put_be32(b, magic);
  put_be32(b, count);
  put_be32(b, rows);
  put_be32(b, cols);
  b.insert(b.end(), pixels.begin(), pixels.end());
  return b;
}

Bytes label_file(std::uint32_t magic, const Bytes& labels) {
  Bytes b;
  put_be32(b, magic);
  put_be32(b, static_cast<std::uint32_t>(labels.size()));
  b.insert(b.end(), labels.begin(), labels.end());
  return b;
}

TEST(Idx, HandBuiltFixture) {
  const fs::path img = write_bytes("img", image_file(0x803, 2, 2, 2, {0, 128, 255, 0, 255, 255, 128, 0}));
  const fs::path lab = write_bytes("lab", label_file(0x801, {3, 7}));
  const Dataset d = load_idx(img, lab);
  ASSERT_EQ(d.x.shape(), (Shape{2, 1, 2, 2}));
  const std::vector<double> expect{0.0, 128.0 / 255.0, 1.0, 0.0, 1.0, 1.0, 128.0 / 255.0, 0.0};
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(d.x[i], expect[i]);
  EXPECT_EQ(d.y, (std::vector<int>{3, 7}));
  EXPECT_EQ(d.classes, 8u);
  const Dataset flat = d.flattened();
  EXPECT_EQ(flat.x.shape(), (Shape{2, 4}));
}

TEST(Idx, Rejections) {
  const Bytes pixels{1, 2, 3, 4};
  const fs::path lab = write_bytes("lab1", label_file(0x801, {0}));
  EXPECT_THROW(load_idx(write_bytes("m802", image_file(0x802, 1, 2, 2, pixels)), lab),
               std::runtime_error);
  EXPECT_THROW(load_idx(write_bytes("empty", {}), lab), std::runtime_error);
  EXPECT_THROW(load_idx(write_bytes("trunc", image_file(0x803, 1, 2, 2, {1, 2, 3})), lab),
               std::runtime_error);
  EXPECT_THROW(load_idx(write_bytes("short_header", {0, 0, 8, 3, 0}), lab), std::runtime_error);
  const fs::path good = write_bytes("good", image_file(0x803, 1, 2, 2, pixels));
  EXPECT_THROW(load_idx(good, write_bytes("lab2", label_file(0x801, {0, 1}))),
               std::runtime_error);
  EXPECT_THROW(load_idx(good, write_bytes("labmagic", label_file(0x803, {0}))),
               std::runtime_error);
  EXPECT_THROW(load_idx(good, "/nonexistent/labels"), std::runtime_error);
  EXPECT_NO_THROW(load_idx(good, lab));
}

TEST(Synth, MoonsOnLociWithoutJitter) {
  const Dataset d = synth_dataset(SynthKind::Moons, 101, 0.0, 3);
  ASSERT_EQ(d.size(), 101u);
  for (std::size_t i = 0; i < d.size(); ++i) {
    // Undo the affine map back to the standard moons plane.
    const double px = d.x[2 * i] * 4.0 - 1.5;
    const double py = d.x[2 * i + 1] * 2.5 - 1.0;
    if (d.y[i] == 0) {
      EXPECT_NEAR(std::hypot(px, py), 1.0, 1e-12);
      EXPECT_GE(py, -1e-12);
    } else {
      EXPECT_NEAR(std::hypot(px - 1.0, py - 0.5), 1.0, 1e-12);
      EXPECT_LE(py, 0.5 + 1e-12);
    }
  }
}

TEST(Synth, BalanceRangeAndDeterminism) {
  for (SynthKind k : {SynthKind::Moons, SynthKind::Spirals}) {
    for (std::size_t n : {4u, 7u, 300u}) {
      const Dataset d = synth_dataset(k, n, 0.2, 9);
      std::size_t zeros = 0;
      for (std::size_t i = 0; i < n; ++i) {
        zeros += d.y[i] == 0 ? 1 : 0;
        if (i < n / 2) {
          EXPECT_EQ(d.y[i], 0);
        }
      }
      EXPECT_EQ(zeros, n / 2);
      for (double v : d.x.data()) {
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 1.0);
      }
      EXPECT_EQ(synth_dataset(k, n, 0.2, 9).x, d.x);
      EXPECT_NE(synth_dataset(k, n, 0.2, 10).x, d.x);
    }
  }
  EXPECT_THROW(synth_dataset(SynthKind::Moons, 3, 0.1, 1), std::invalid_argument);
  EXPECT_THROW(parse_synth_kind("circles"), std::invalid_argument);
}

TEST(Split, PartitionsAreDisjointAndSeeded) {
  Dataset d{Tensor({40, 1}), std::vector<int>(40), 2};
  for (std::size_t i = 0; i < 40; ++i) {
    d.x[i] = static_cast<double>(i);
    d.y[i] = static_cast<int>(i % 2);
  }
  const Split s = split_dataset(d, 0.25, 4);
  ASSERT_EQ(s.test.size(), 10u);
  ASSERT_EQ(s.train.size(), 30u);
  std::set<double> seen;
  for (double v : s.train.x.data()) seen.insert(v);
  for (double v : s.test.x.data()) seen.insert(v);
  EXPECT_EQ(seen.size(), 40u);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(s.test.y[i], static_cast<int>(s.test.x[i]) % 2);
  }
  EXPECT_EQ(split_dataset(d, 0.25, 4).test.x, s.test.x);
  EXPECT_NE(split_dataset(d, 0.25, 5).test.x, s.test.x);
  EXPECT_THROW(split_dataset(d, 1.0, 4), std::invalid_argument);
  EXPECT_THROW(split_dataset(d, 0.001, 4), std::invalid_argument);
}

TEST(Prepare, IdxWithLimitAndSeparateTestFiles) {
  Bytes pixels;
  Bytes labels;
  for (int i = 0; i < 6; ++i) {
    for (int p = 0; p < 4; ++p) pixels.push_back(static_cast<std::uint8_t>(10 * i + p));
    labels.push_back(static_cast<std::uint8_t>(i % 3));
  }
  DataConfig cfg;
  cfg.kind = "idx";
  cfg.images = write_bytes("p_img", image_file(0x803, 6, 2, 2, pixels)).string();
  cfg.labels = write_bytes("p_lab", label_file(0x801, labels)).string();
  cfg.test_images = write_bytes("p_timg", image_file(0x803, 1, 2, 2, {0, 0, 0, 255})).string();
  cfg.test_labels = write_bytes("p_tlab", label_file(0x801, {4})).string();
  cfg.limit = 4;
  const Split s = prepare_data(cfg, MapKind::Dense, 1);
  EXPECT_EQ(s.train.x.shape(), (Shape{4, 4}));
  EXPECT_EQ(s.test.x.shape(), (Shape{1, 4}));
  EXPECT_EQ(s.train.classes, 5u);
  EXPECT_EQ(s.test.classes, 5u);
  EXPECT_EQ(s.train.x[4 * 3 + 1], 31.0 / 255.0);
  const Split c = prepare_data(cfg, MapKind::Conv, 1);
  EXPECT_EQ(c.train.x.shape(), (Shape{4, 1, 2, 2}));

  DataConfig moons;
  EXPECT_THROW(prepare_data(moons, MapKind::Conv, 1), std::invalid_argument);
  const Split m = prepare_data(moons, MapKind::Dense, 1);
  EXPECT_EQ(m.train.size() + m.test.size(), moons.n);
  EXPECT_EQ(prepare_data(moons, MapKind::Dense, 1).train.x, m.train.x);
  DataConfig bad;
  bad.kind = "idx";
  bad.images = "x";
  EXPECT_THROW(prepare_data(bad, MapKind::Dense, 1), std::invalid_argument);
}

TEST(Dataset, SubsetAndSlice) {
  Dataset d{Tensor({5, 2}, std::vector<double>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}),
            {0, 1, 0, 1, 0}, 2};
  const std::vector<std::size_t> idx{4, 0};
  const Dataset s = d.subset(idx);
  EXPECT_EQ(s.x.values(), (std::vector<double>{8, 9, 0, 1}));
  EXPECT_EQ(s.y, (std::vector<int>{0, 0}));
  EXPECT_EQ(d.slice(1, 3).x.values(), (std::vector<double>{2, 3, 4, 5}));
  EXPECT_THROW(d.slice(3, 3), std::out_of_range);
  const std::vector<std::size_t> bad{5};
  EXPECT_THROW(d.subset(bad), std::out_of_range);
}

}  // namespace
}  // namespace donet
