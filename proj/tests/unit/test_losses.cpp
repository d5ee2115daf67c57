#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "rebelhad/error.hpp"
#include "rebelhad/gradsuite.hpp"
#include "rebelhad/losses.hpp"
#include "rebelhad/ops.hpp"

using namespace rebelhad;

namespace {

Tensor from_values(int n, int c, int h, int w, std::vector<double> v) {
  Tensor t(n, c, h, w);
  t.storage() = std::move(v);
  return t;
}

std::vector<Tensor> scales(SplitMix64& rng) {
  return {oracle::random_tensor(2, 4, 8, 8, rng), oracle::random_tensor(2, 6, 4, 4, rng),
          oracle::random_tensor(2, 8, 2, 2, rng)};
}

std::vector<Tensor> negate(std::vector<Tensor> v) {
  for (Tensor& t : v) t *= -1.0;
  return v;
}

}  // namespace

TEST(LossSim, AlignedAntiAlignedAndOracle) {
  SplitMix64 rng(1);
  const std::vector<Tensor> f = scales(rng);
  EXPECT_NEAR(loss_sim(f, f), 0.0, 1e-14);
  EXPECT_NEAR(loss_sim(negate(f), f), 2.0, 1e-14);
  const std::vector<Tensor> g = scales(rng);
  const double v = loss_sim(g, f);
  EXPECT_NEAR(v, oracle::loss_sim(g, f), 1e-10);
  EXPECT_GE(v, 0.0);
  EXPECT_LE(v, 2.0);
  std::vector<Tensor> bad = g;
  bad.pop_back();
  EXPECT_THROW(loss_sim(bad, f), ShapeError);
}

TEST(LossMse, HandValueAndSymmetry) {
  const Tensor z(1, 2, 3, 3, 0.0), h(1, 2, 3, 3, 0.5);
  EXPECT_EQ(loss_mse(z, z), 0.0);
  EXPECT_DOUBLE_EQ(loss_mse(z, h), 0.25);
  SplitMix64 rng(2);
  const Tensor a = oracle::random_tensor(2, 3, 4, 4, rng), b = oracle::random_tensor(2, 3, 4, 4, rng);
  EXPECT_EQ(loss_mse(a, b), loss_mse(b, a));
  EXPECT_THROW(loss_mse(a, Tensor(1, 3, 4, 4)), ShapeError);
}

TEST(LossZ, HandValuesLimitsAndMonotonicity) {
  EXPECT_NEAR(loss_z(Tensor(1, 1, 4, 4, 0.0)), std::log(2.0), 1e-12);
  EXPECT_LT(loss_z(Tensor(1, 1, 2, 2, -50.0)), 1e-20);
  const double big = loss_z(Tensor(1, 1, 2, 2, 50.0));
  EXPECT_TRUE(std::isfinite(big));
  EXPECT_NEAR(big, 50.0, 1e-12);
  SplitMix64 rng(3);
  Tensor o = oracle::random_tensor(2, 1, 3, 3, rng, -5, 5);
  double prev = loss_z(o);
  EXPECT_GT(prev, 0.0);
  for (int k = 0; k < 10; ++k) {
    o[7] += 0.5;
    const double now = loss_z(o);
    EXPECT_GT(now, prev);
    prev = now;
  }
  EXPECT_THROW(loss_z(Tensor(1, 2, 2, 2)), ShapeError);
}

TEST(Stage1Total, HandSums) {
  EXPECT_EQ(stage1_total({0, 0, 0}, {}), 0.0);
  EXPECT_NEAR(stage1_total({1, 1, 1}, {0.1, 0.1}), 1.2, 1e-15);
  EXPECT_EQ(stage1_total({0.7, 3, 4}, {0, 0}), 0.7);
  EXPECT_THROW(stage1_total({NAN, 0, 0}, {}), NumericalError);
}

TEST(LossCc, HandCasesAndOracle) {
  const Tensor x = from_values(1, 1, 2, 2, {1, -1, 1, -1});
  const Tensor y = from_values(1, 1, 2, 2, {1, 1, -1, -1});
  EXPECT_NEAR(loss_cc(x, y), 0.0, 1e-15);
  const Tensor p = from_values(1, 1, 1, 2, {1, -1});
  EXPECT_NEAR(loss_cc(p, p, 1e-300), 1.0, 1e-12);
  SplitMix64 rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor t = oracle::random_tensor(2, 5, 6, 6, rng);
    const Tensor s = oracle::random_tensor(2, 3, 6, 6, rng);
    const double v = loss_cc(t, s);
    EXPECT_NEAR(v, oracle::loss_cc(t, s, kWhitenEps), 1e-10);
    EXPECT_GE(v, 0.0);
  }
}

TEST(LossCos, BoundsFromDefinition) {
  SplitMix64 rng(5);
  const Tensor a = oracle::random_tensor(2, 3, 4, 4, rng);
  EXPECT_NEAR(loss_cos(a, a), 2.0, 1e-14);
  EXPECT_NEAR(loss_cos(a, a * -1.0), 0.0, 1e-14);
  EXPECT_EQ(loss_cos(from_values(1, 2, 1, 1, {1, 0}), from_values(1, 2, 1, 1, {0, 1})), 1.0);
  const double v = loss_cos(a, oracle::random_tensor(2, 3, 4, 4, rng));
  EXPECT_GE(v, 0.0);
  EXPECT_LE(v, 2.0);
}

TEST(LossVar, HandCases) {
  EXPECT_NEAR(loss_var(from_values(1, 1, 1, 2, {1, -1}), 1.0), 1.0, 1e-15);
  EXPECT_EQ(loss_var(Tensor(2, 4, 3, 3, 0.0), 1.0), 1.0);
  const Tensor wide = from_values(1, 1, 1, 4, {10, -10, 10, -10});
  EXPECT_DOUBLE_EQ(loss_var(wide, 1.0), 10.0);
  EXPECT_THROW(loss_var(wide, 0.0), RangeError);
}

TEST(LossRecon, IdentityMseReductionAndConstants) {
  SplitMix64 rng(6);
  const Tensor h = oracle::random_tensor(1, 3, 12, 12, rng, 0, 1);
  EXPECT_NEAR(loss_recon(h, h, 0.01), 0.0, 1e-14);
  const Tensor r = oracle::random_tensor(1, 3, 12, 12, rng, 0, 1);
  EXPECT_EQ(loss_recon(h, r, 0.0), loss_mse(h, r));
  const double c1 = kSsimK1 * kSsimK1;
  const double s = c1 / (1.0 + c1);
  EXPECT_NEAR(loss_recon(Tensor(1, 2, 12, 12, 0.0), Tensor(1, 2, 12, 12, 1.0), 0.01), 1.0 + 0.01 * (1.0 - s), 1e-14);
}

TEST(Stage2Total, HandSums) {
  EXPECT_EQ(stage2_total({0, 0, 0, 0}, {}), 0.0);
  EXPECT_NEAR(stage2_total({1, 1, 1, 1}, {}), 2.2, 1e-15);
  Stage2Weights zero;
  zero.recon = zero.cos = zero.var = 0.0;
  EXPECT_EQ(stage2_total({0.3, 5, 6, 7}, zero), 0.3);
  EXPECT_NEAR(loss_decorr({1, 1, 1, 9}, {}), 1.2, 1e-15);
  EXPECT_THROW(stage2_total({0, 0, 0, INFINITY}, {}), NumericalError);
}

TEST(LossRanges, ArbitraryInputs) {
  SplitMix64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor t = oracle::random_tensor(2, 4, 6, 6, rng, -3, 3);
    const Tensor s = oracle::random_tensor(2, 4, 6, 6, rng, -3, 3);
    EXPECT_GE(loss_cc(t, s), 0.0);
    EXPECT_GE(loss_var(s, 1.0), 0.0);
    const double c = loss_cos(t, s);
    EXPECT_GE(c, 0.0);
    EXPECT_LE(c, 2.0);
    EXPECT_GT(loss_z(oracle::random_tensor(1, 1, 4, 4, rng, -20, 20)), 0.0);
  }
}

TEST(LossGradients, StudentGradientIgnoresTeacherPerturbationDirection) {
  // The student gradient depends on teacher values but no gradient is ever
  // returned for the teacher; d_student must equal a finite difference in
  // the student alone.
  SplitMix64 rng(8);
  const Tensor t = oracle::random_tensor(2, 3, 4, 4, rng);
  Tensor s = oracle::random_tensor(2, 3, 4, 4, rng);
  Tensor d;
  loss_cc(t, s, kWhitenEps, &d);
  const double h = 1e-6;
  for (size_t i : {size_t{0}, size_t{17}, size_t{50}}) {
    const double saved = s[i];
    s[i] = saved + h;
    const double fp = loss_cc(t, s);
    s[i] = saved - h;
    const double fm = loss_cc(t, s);
    s[i] = saved;
    EXPECT_NEAR(d[i], (fp - fm) / (2 * h), 1e-6);
  }
}

TEST(GradSuite, EveryLossPassesAtTwentySeeds) {
  GradSuiteOptions opt;
  opt.include_networks = false;
  const auto rows = run_grad_suite(opt);
  EXPECT_EQ(rows.size(), 9u);
  for (const auto& r : rows) {
    EXPECT_TRUE(r.passed) << r.name << " " << r.max_rel_error;
    EXPECT_LT(r.max_rel_error, 1e-4) << r.name;
    EXPECT_EQ(r.seeds, 20) << r.name;
    EXPECT_GE(r.coordinates, 20u) << r.name;
  }
}
