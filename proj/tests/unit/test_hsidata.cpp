#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "rebelhad/error.hpp"
#include "rebelhad/hsidata.hpp"
#include "rebelhad/io.hpp"
#include "rebelhad/rng.hpp"

using namespace rebelhad;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("rebelhad_hsidata_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string hcf_bytes(const char* magic, uint32_t h, uint32_t w, uint32_t b, const std::vector<float>& v) {
  std::string s(magic, 4);
  put_u32le(s, h);
  put_u32le(s, w);
  put_u32le(s, b);
  for (float f : v) put_f32le(s, f);
  return s;
}

HsiCube random_cube(int h, int w, int b, uint64_t seed) {
  SplitMix64 rng(seed);
  HsiCube c(h, w, b);
  for (double& v : c.data()) v = static_cast<float>(rng.uniform(-5.0, 5.0));
  return c;
}

}  // namespace

TEST(Hcf, DecodesHandWrittenFile) {
  const HsiCube c = decode_cube(hcf_bytes("HCF1", 2, 2, 1, {0.f, 0.5f, 0.5f, 1.f}));
  ASSERT_EQ(c.height(), 2);
  ASSERT_EQ(c.width(), 2);
  ASSERT_EQ(c.bands(), 1);
  EXPECT_EQ(c.data(), (std::vector<double>{0.0, 0.5, 0.5, 1.0}));
}

TEST(Hcf, RejectsBadMagic) {
  try {
    decode_cube(hcf_bytes("HCF2", 1, 1, 1, {0.f}));
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("bad magic"), std::string::npos);
  }
}

TEST(Hcf, RejectsTruncatedPayload) {
  try {
    decode_cube(hcf_bytes("HCF1", 2, 2, 1, {0.f, 1.f, 2.f}));
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
  }
}

TEST(Hcf, SingleVoxelIsTwentyBytes) {
  EXPECT_EQ(encode_cube(HsiCube(1, 1, 1, 0.0)).size(), 20u);
}

TEST(Hcf, RoundTripIsBitwiseForRandomDims) {
  const fs::path dir = temp_dir("roundtrip");
  SplitMix64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const int h = 1 + static_cast<int>(rng.below(16));
    const int w = 1 + static_cast<int>(rng.below(16));
    const int b = 1 + static_cast<int>(rng.below(16));
    const HsiCube c = random_cube(h, w, b, rng.next());
    write_cube(c, dir / "c.hcf");
    EXPECT_EQ(read_cube(dir / "c.hcf"), c);
  }
}

TEST(Hcf, UnwritableDirectoryIsIoError) {
  EXPECT_THROW(write_cube(HsiCube(1, 1, 1), "/nonexistent_dir_rebelhad/x.hcf"), IoError);
}

TEST(Mask, PgmRoundTripAndEncoding) {
  const fs::path dir = temp_dir("mask");
  GroundTruthMask m(3, 4);
  m.labels[5] = 1;
  m.labels[11] = 1;
  write_mask(m, dir / "m.pgm");
  EXPECT_EQ(read_mask(dir / "m.pgm"), m);
  const std::string bytes = read_file(dir / "m.pgm");
  EXPECT_EQ(bytes.substr(0, 2), "P5");
  EXPECT_EQ(static_cast<unsigned char>(bytes[bytes.size() - 12 + 5]), 255);
  EXPECT_EQ(m.positives(), 2u);
}

TEST(SelectBands, IdentityAndPrefixAndRange) {
  const HsiCube c = random_cube(3, 2, 4, 9);
  EXPECT_EQ(select_bands(c, 4), c);
  const HsiCube two = select_bands(c, 2);
  ASSERT_EQ(two.bands(), 2);
  for (int b = 0; b < 2; ++b)
    for (size_t p = 0; p < c.pixels(); ++p) EXPECT_EQ(two.at(b, p), c.at(b, p));
  EXPECT_THROW(select_bands(c, 0), RangeError);
}

TEST(Normalize, HandValuesConstantAndIdempotence) {
  const HsiCube n = normalize(HsiCube(1, 3, 1, std::vector<double>{2, 4, 6}));
  EXPECT_EQ(n.data(), (std::vector<double>{0.0, 0.5, 1.0}));
  const HsiCube z = normalize(HsiCube(2, 2, 2, 3.5));
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
  const HsiCube unit(1, 3, 1, std::vector<double>{0.0, 0.25, 1.0});
  EXPECT_EQ(normalize(unit), unit);
}

TEST(Normalize, OrderPreservingIdempotentAndInRange) {
  const HsiCube c = random_cube(6, 5, 3, 21);
  const HsiCube n = normalize(c);
  double lo = 1, hi = 0;
  for (size_t i = 0; i < c.size(); ++i) {
    lo = std::min(lo, n.data()[i]);
    hi = std::max(hi, n.data()[i]);
    for (size_t j = 0; j < c.size(); ++j)
      if (c.data()[i] <= c.data()[j]) EXPECT_LE(n.data()[i], n.data()[j]);
  }
  EXPECT_EQ(lo, 0.0);
  EXPECT_EQ(hi, 1.0);
  const HsiCube nn = normalize(n);
  for (size_t i = 0; i < n.size(); ++i) EXPECT_NEAR(nn.data()[i], n.data()[i], 1e-15);
}

TEST(Synth, NoAnomaliesGivesEmptyMask) {
  SceneSpec s;
  s.height = s.width = 16;
  s.bands = 5;
  s.seed = 4;
  const auto [cube, mask] = synth_scene(s);
  EXPECT_EQ(mask.positives(), 0u);
  EXPECT_EQ(cube.bands(), 5);
}

TEST(Synth, DeterministicAndSurvivesFileRoundTrip) {
  SceneSpec s;
  s.height = s.width = 24;
  s.bands = 6;
  s.anomaly_count = 3;
  s.anomaly_contrast = 0.1;
  s.seed = 77;
  const auto a = synth_scene(s);
  const auto b = synth_scene(s);
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
  const fs::path dir = temp_dir("synth");
  write_cube(a.first, dir / "s.hcf");
  EXPECT_EQ(read_cube(dir / "s.hcf"), a.first);
}

TEST(Synth, MaskCardinalityHasNoOverlapsOrBorder) {
  SceneSpec s;
  s.height = s.width = 32;
  s.bands = 4;
  s.anomaly_count = 6;
  s.anomaly_size = 3;
  s.anomaly_contrast = 0.2;
  for (uint64_t seed = 0; seed < 10; ++seed) {
    s.seed = seed;
    const auto [cube, mask] = synth_scene(s);
    EXPECT_EQ(mask.positives(), 54u);
    for (int x = 0; x < 32; ++x) {
      EXPECT_EQ(mask.labels[x], 0);
      EXPECT_EQ(mask.labels[31 * 32 + x], 0);
      EXPECT_EQ(mask.labels[x * 32], 0);
      EXPECT_EQ(mask.labels[x * 32 + 31], 0);
    }
  }
}

TEST(Synth, ImpossiblePlacementIsSpecError) {
  SceneSpec s;
  s.height = s.width = 8;
  s.bands = 2;
  s.anomaly_count = 50;
  s.anomaly_size = 3;
  EXPECT_THROW(synth_scene(s), Error);
}
