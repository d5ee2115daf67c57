#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "rebelhad/detector.hpp"
#include "rebelhad/error.hpp"

using namespace rebelhad;
namespace fs = std::filesystem;

namespace {

HsiCube random_cube(int h, int w, int b, SplitMix64& rng) {
  HsiCube c(h, w, b);
  for (double& v : c.data()) v = rng.uniform(0.0, 1.0);
  return c;
}

Tensor random_feature(const HsiCube& c, SplitMix64& rng) {
  Tensor f(1, c.bands(), c.height(), c.width());
  for (double& v : f.values()) v = rng.uniform(-0.5, 0.5);
  return f;
}

HsiCube plus(const HsiCube& c, const Tensor& f) {
  HsiCube out = c;
  for (size_t i = 0; i < c.size(); ++i) out.data()[i] += f[i];
  return out;
}

ScoreMap from_scores(std::vector<double> v) {
  ScoreMap s(1, static_cast<int>(v.size()));
  s.scores = std::move(v);
  return s;
}

}  // namespace

TEST(Rx, OneBandHandValue) {
  const HsiCube c(1, 4, 1, std::vector<double>{0, 1, 0, 1});
  const double eps = 1e-6 * 0.25;
  for (double s : rx(c).scores) EXPECT_NEAR(s, 0.25 / (0.25 + eps), 1e-15);
}

TEST(Rx, ConstantCubeScoresZero) {
  for (double s : rx(HsiCube(4, 4, 3, 0.5)).scores) EXPECT_EQ(s, 0.0);
  for (double s : rx(HsiCube(4, 4, 3, 0.7)).scores) EXPECT_LT(s, 1e-15);
  EXPECT_EQ(background_stats(HsiCube(4, 4, 3, 0.7)).epsilon, kRidgeFloor);
}

TEST(Rx, MatchesExplicitInverseOracle) {
  SplitMix64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const HsiCube c = random_cube(8, 8, 1 + trial % 8, rng);
    const ScoreMap s = rx(c);
    const std::vector<double> ref = oracle::rx(c.data(), 64, c.bands());
    for (size_t p = 0; p < 64; ++p) EXPECT_NEAR(s.scores[p], ref[p], 1e-8);
  }
}

TEST(Rx, AffineInvariance) {
  SplitMix64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const HsiCube c = random_cube(10, 9, 5, rng);
    const double a = trial % 2 ? 3.7 : -0.4;
    HsiCube t = c;
    for (int b = 0; b < c.bands(); ++b) {
      const double shift = rng.uniform(-10, 10);
      for (size_t p = 0; p < c.pixels(); ++p) t.at(b, p) = a * c.at(b, p) + shift;
    }
    const ScoreMap s0 = rx(c), s1 = rx(t);
    for (size_t p = 0; p < s0.size(); ++p) EXPECT_NEAR(s0.scores[p], s1.scores[p], 1e-8);
  }
}

TEST(Rx, StatsAreSymmetricAndTooFewPixelsRejected) {
  SplitMix64 rng(3);
  const BackgroundStats st = background_stats(random_cube(6, 6, 6, rng));
  EXPECT_LT((st.cov - st.cov.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(st.chol.info(), Eigen::Success);
  EXPECT_THROW(rx(HsiCube(1, 1, 2)), ShapeError);
}

TEST(RxEnhanced, ZeroConstantAndRandomFeatures) {
  SplitMix64 rng(4);
  const HsiCube c = random_cube(8, 8, 4, rng);
  const Tensor zero(1, 4, 8, 8);
  EXPECT_EQ(rx_enhanced(c, zero), rx(c));
  const ScoreMap shifted = rx_enhanced(c, Tensor(1, 4, 8, 8, 2.5));
  for (size_t p = 0; p < 64; ++p) EXPECT_NEAR(shifted.scores[p], rx(c).scores[p], 1e-8);
  const Tensor f = random_feature(c, rng);
  EXPECT_EQ(rx_enhanced(c, f), rx(plus(c, f)));
  EXPECT_THROW(rx_enhanced(c, Tensor(1, 3, 8, 8)), ShapeError);
}

TEST(Fusion, MultiplicativeHandCaseAndBounds) {
  const ScoreMap m = fuse_multiplicative(from_scores({0, 0.5, 1}), from_scores({1, 0.5, 0}));
  EXPECT_EQ(m.scores, (std::vector<double>{0, 0.25, 0}));
  const ScoreMap a = from_scores({3, 1, 7, 5});
  const ScoreMap sq = fuse_multiplicative(a, a);
  const ScoreMap n = min_max_normalize(a);
  for (size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(sq.scores[i], n.scores[i] * n.scores[i]);
  for (double v : fuse_multiplicative(a, from_scores({2, 2, 2, 2})).scores) EXPECT_EQ(v, 0.0);
  SplitMix64 rng(5);
  ScoreMap x(5, 5), y(5, 5);
  for (auto& v : x.scores) v = rng.uniform(0, 10);
  for (auto& v : y.scores) v = rng.uniform(0, 10);
  const ScoreMap f = fuse_multiplicative(x, y), nx = min_max_normalize(x), ny = min_max_normalize(y);
  for (size_t i = 0; i < f.size(); ++i) {
    EXPECT_GE(f.scores[i], 0.0);
    EXPECT_LE(f.scores[i], std::min(nx.scores[i], ny.scores[i]));
  }
  EXPECT_THROW(fuse_multiplicative(x, from_scores({1})), ShapeError);
}

TEST(Fusion, AdditiveReductions) {
  SplitMix64 rng(6);
  const HsiCube c = random_cube(8, 8, 4, rng);
  const Tensor zero(1, 4, 8, 8);
  EXPECT_EQ(fuse_additive(c, zero, zero), rx(c));
  const Tensor fs = random_feature(c, rng), fp = random_feature(c, rng);
  EXPECT_EQ(fuse_additive(c, Tensor(), fs), rx_enhanced(c, fs));
  EXPECT_EQ(fuse_additive(c, zero, fs), rx_enhanced(c, fs));
  const ScoreMap ab = fuse_additive(c, fp, fs), ba = fuse_additive(c, fs, fp);
  for (size_t p = 0; p < 64; ++p) EXPECT_NEAR(ab.scores[p], ba.scores[p], 1e-12);
}

TEST(Scores, FiniteAndNonnegative) {
  SplitMix64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    HsiCube c = random_cube(6, 7, 3, rng);
    for (double& v : c.data()) v = v * 1e3 - 500;
    for (double s : rx(c).scores) {
      EXPECT_TRUE(std::isfinite(s));
      EXPECT_GE(s, 0.0);
    }
  }
}

TEST(AeBaseline, NoTrainingDeterminismAndConstantCube) {
  SplitMix64 rng(8);
  const HsiCube c = random_cube(8, 8, 6, rng);
  const ScoreMap z = ae_baseline(c, {0, 0.01, 3});
  for (double s : z.scores) EXPECT_TRUE(std::isfinite(s));
  EXPECT_EQ(ae_baseline(c, {20, 0.01, 3}), ae_baseline(c, {20, 0.01, 3}));
  const ScoreMap k = ae_baseline(HsiCube(8, 8, 6, 0.4), {500, 0.01, 3});
  double worst = 0;
  for (double s : k.scores) worst = std::max(worst, s);
  EXPECT_LT(worst, 1e-4);
}

TEST(ScoreFiles, HcfRoundTripAndPgm) {
  const fs::path dir = fs::temp_directory_path() / "rebelhad_detector_files";
  fs::remove_all(dir);
  fs::create_directories(dir);
  ScoreMap s(3, 4);
  for (size_t i = 0; i < s.size(); ++i) s.scores[i] = 0.25 * static_cast<double>(i);
  write_score_map(s, dir / "s.hcf");
  EXPECT_EQ(read_score_map(dir / "s.hcf"), s);
  write_score_pgm(s, dir / "s.pgm");
  EXPECT_TRUE(fs::exists(dir / "s.pgm"));
  write_cube(HsiCube(2, 2, 2), dir / "bad.hcf");
  EXPECT_THROW(read_score_map(dir / "bad.hcf"), FormatError);
}
