#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "rebelhad/adam.hpp"
#include "rebelhad/error.hpp"
#include "rebelhad/gradcheck.hpp"
#include "rebelhad/ops.hpp"
#include "rebelhad/params.hpp"

using namespace rebelhad;

namespace {

double max_abs_diff(const Tensor& a, const Tensor& b) {
  EXPECT_EQ(a.shape(), b.shape());
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

Tensor from_values(int n, int c, int h, int w, std::vector<double> v) {
  Tensor t(n, c, h, w);
  t.storage() = std::move(v);
  return t;
}

}  // namespace

TEST(Conv2d, IdentityKernel) {
  SplitMix64 rng(1);
  const Tensor x = oracle::random_tensor(2, 1, 5, 4, rng);
  const Tensor w(1, 1, 1, 1, 1.0);
  EXPECT_EQ(max_abs_diff(conv2d(x, w, Tensor(1, 1, 1, 1), 1, 0), x), 0.0);
}

TEST(Conv2d, OnesKernelOnTwoByTwo) {
  const Tensor x = from_values(1, 1, 2, 2, {1, 2, 3, 4});
  const Tensor y = conv2d(x, Tensor(1, 1, 3, 3, 1.0), Tensor(), 1, 1);
  const Tensor ref = oracle::conv2d(x, Tensor(1, 1, 3, 3, 1.0), Tensor(), 1, 1);
  EXPECT_EQ(max_abs_diff(y, ref), 0.0);
  for (size_t i = 0; i < 4; ++i) EXPECT_EQ(y[i], 10.0);
}

TEST(Conv2d, StrideSamplesEvenPositions) {
  Tensor x(1, 1, 4, 4);
  for (size_t i = 0; i < 16; ++i) x[i] = static_cast<double>(i);
  const Tensor y = conv2d(x, Tensor(1, 1, 1, 1, 1.0), Tensor(), 2, 0);
  ASSERT_EQ(y.shape(), (Tensor::Shape{1, 1, 2, 2}));
  EXPECT_EQ(y.storage(), (std::vector<double>{0, 2, 8, 10}));
}

TEST(Conv2d, MatchesNestedLoopOracle) {
  SplitMix64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const int k = trial % 2 ? 3 : 1;
    const int stride = 1 + trial % 2;
    const int pad = k == 3 ? 1 : 0;
    const Tensor x = oracle::random_tensor(2, 3, 6 + trial % 3, 5 + trial % 4, rng);
    const Tensor w = oracle::random_tensor(4, 3, k, k, rng);
    const Tensor b = oracle::random_tensor(4, 1, 1, 1, rng);
    EXPECT_LT(max_abs_diff(conv2d(x, w, b, stride, pad), oracle::conv2d(x, w, b, stride, pad)), 1e-12);
  }
}

TEST(Conv2dTranspose, MatchesScatterOracleAndShape) {
  SplitMix64 rng(3);
  const Tensor x = oracle::random_tensor(2, 3, 2, 2, rng);
  const Tensor w = oracle::random_tensor(3, 5, 2, 2, rng);
  const Tensor b = oracle::random_tensor(5, 1, 1, 1, rng);
  const Tensor y = conv2d_transpose(x, w, b, 2, 0);
  EXPECT_EQ(y.shape(), (Tensor::Shape{2, 5, 4, 4}));
  EXPECT_LT(max_abs_diff(y, oracle::conv2d_transpose(x, w, b, 2, 0)), 1e-12);
}

TEST(Conv2dTranspose, OneByOneIsTransposedChannelConv) {
  SplitMix64 rng(4);
  const Tensor x = oracle::random_tensor(1, 3, 4, 4, rng);
  const Tensor w = oracle::random_tensor(3, 2, 1, 1, rng);
  Tensor wt(2, 3, 1, 1);
  for (int i = 0; i < 3; ++i)
    for (int o = 0; o < 2; ++o) wt.at(o, i, 0, 0) = w.at(i, o, 0, 0);
  EXPECT_LT(max_abs_diff(conv2d_transpose(x, w, Tensor(), 1, 0), conv2d(x, wt, Tensor(), 1, 0)), 1e-14);
}

TEST(Conv2dTranspose, AdjointIdentityOverRandomDraws) {
  SplitMix64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 1 + static_cast<int>(rng.below(3));
    const int stride = 1 + static_cast<int>(rng.below(2));
    const int pad = static_cast<int>(rng.below(k));
    const int cin = 1 + static_cast<int>(rng.below(3)), cout = 1 + static_cast<int>(rng.below(3));
    int h = k + static_cast<int>(rng.below(6)), w = k + static_cast<int>(rng.below(6));
    while ((h + 2 * pad - k) % stride) ++h;
    while ((w + 2 * pad - k) % stride) ++w;
    const Tensor x = oracle::random_tensor(1 + trial % 2, cin, h, w, rng);
    const Tensor wt = oracle::random_tensor(cout, cin, k, k, rng);
    const Tensor y = conv2d(x, wt, Tensor(), stride, pad);
    const Tensor v = oracle::random_tensor(y.n(), y.c(), y.h(), y.w(), rng);
    const Tensor back = conv2d_transpose(v, wt, Tensor(), stride, pad);
    ASSERT_EQ(back.shape(), x.shape());
    EXPECT_NEAR(dot(y, v), dot(x, back), 1e-10);
  }
}

TEST(Conv2d, BackwardMatchesTransposeAndBiasSums) {
  SplitMix64 rng(6);
  const Tensor x = oracle::random_tensor(2, 2, 5, 5, rng);
  const Tensor w = oracle::random_tensor(3, 2, 3, 3, rng);
  const Tensor dy = oracle::random_tensor(2, 3, 3, 3, rng);
  Tensor gw(w.shape()), gb(3, 1, 1, 1);
  const Tensor dx = conv2d_backward(x, w, dy, 2, 1, {&gw, &gb});
  EXPECT_LT(max_abs_diff(dx, oracle::conv2d_transpose(dy, w, Tensor(), 2, 1)), 1e-12);
  for (int co = 0; co < 3; ++co) {
    double s = 0;
    for (int n = 0; n < 2; ++n)
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) s += dy.at(n, co, i, j);
    EXPECT_NEAR(gb[co], s, 1e-12);
  }
  // Weight gradient: the loss <conv(x), dy> is linear in w.
  for (size_t k = 0; k < w.size(); k += 5) {
    Tensor e(w.shape());
    e[k] = 1.0;
    EXPECT_NEAR(gw[k], dot(oracle::conv2d(x, e, Tensor(), 2, 1), dy), 1e-12);
  }
}

TEST(AdaptivePool, HandWindowMeans) {
  Tensor x(1, 1, 4, 4);
  for (size_t i = 0; i < 16; ++i) x[i] = static_cast<double>(i + 1);
  EXPECT_EQ(adaptive_avg_pool(x, 2).storage(), (std::vector<double>{3.5, 5.5, 11.5, 13.5}));
  EXPECT_EQ(max_abs_diff(adaptive_avg_pool(x, 4), x), 0.0);
  const Tensor c(1, 2, 4, 4, 2.5);
  for (int s : {1, 2, 3, 4}) {
    const Tensor p = adaptive_avg_pool(c, s);
    for (double v : p.values()) EXPECT_DOUBLE_EQ(v, 2.5);
  }
}

TEST(ResizeBilinear, HandRowAndIdentityAndConstant) {
  const Tensor row = from_values(1, 1, 1, 2, {0.0, 1.0});
  const Tensor y = resize_bilinear(row, 1, 4);
  const std::vector<double> want{0.0, 0.25, 0.75, 1.0};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(y[i], want[i], 1e-15);
  SplitMix64 rng(7);
  const Tensor x = oracle::random_tensor(1, 2, 5, 3, rng);
  EXPECT_EQ(max_abs_diff(resize_bilinear(x, 5, 3), x), 0.0);
  const Tensor up = resize_bilinear(Tensor(1, 1, 2, 2, 0.7), 8, 8);
  for (double v : up.values()) EXPECT_NEAR(v, 0.7, 1e-15);
}

TEST(ResizeBilinear, BackwardIsAdjoint) {
  SplitMix64 rng(8);
  const Tensor x = oracle::random_tensor(1, 2, 4, 4, rng);
  const Tensor dy = oracle::random_tensor(1, 2, 16, 16, rng);
  EXPECT_NEAR(dot(resize_bilinear(x, 16, 16), dy), dot(x, resize_bilinear_backward(x, 16, 16, dy)), 1e-12);
}

TEST(SeBlock, ZeroExciteHalvesInput) {
  SplitMix64 rng(9);
  const Tensor x = oracle::random_tensor(2, 4, 3, 3, rng);
  const Tensor sw = oracle::random_tensor(1, 4, 1, 1, rng), sb(1, 1, 1, 1);
  const Tensor ew(4, 1, 1, 1), eb(4, 1, 1, 1);
  const Tensor y = se_block(x, {{&sw, &sb}, {&ew, &eb}}, 4);
  for (size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(y[i], 0.5 * x[i]);
  const Tensor z = se_block(Tensor(x.shape()), {{&sw, &sb}, {&ew, &eb}}, 4);
  for (double v : z.values()) EXPECT_EQ(v, 0.0);
}

TEST(SeBlock, GatesInOpenUnitIntervalAndDivisibility) {
  SplitMix64 rng(10);
  const Tensor x = oracle::random_tensor(1, 8, 4, 4, rng, -3, 3);
  const Tensor sw = oracle::random_tensor(2, 8, 1, 1, rng, -3, 3), sb = oracle::random_tensor(2, 1, 1, 1, rng);
  const Tensor ew = oracle::random_tensor(8, 2, 1, 1, rng, -3, 3), eb = oracle::random_tensor(8, 1, 1, 1, rng);
  SeCache cache;
  se_block(x, {{&sw, &sb}, {&ew, &eb}}, 4, &cache);
  for (double g : cache.gate.values()) {
    EXPECT_GT(g, 0.0);
    EXPECT_LT(g, 1.0);
  }
  const Tensor x6 = oracle::random_tensor(1, 6, 2, 2, rng);
  EXPECT_THROW(se_block(x6, {{&sw, &sb}, {&ew, &eb}}, 4), Error);
}

TEST(ResidualBlock, ZeroBranchIsRelu) {
  SplitMix64 rng(11);
  const Tensor x = oracle::random_tensor(2, 3, 5, 5, rng);
  const Tensor w(3, 3, 3, 3), b(3, 1, 1, 1);
  const ResidualWeights p{{{&w, &b}, {&w, &b}, {&w, &b}}};
  EXPECT_EQ(max_abs_diff(residual_block(x, p), oracle::relu(x)), 0.0);
}

TEST(ResidualBlock, MatchesComposedConvOracle) {
  SplitMix64 rng(12);
  const Tensor x = oracle::random_tensor(2, 3, 6, 5, rng);
  std::array<Tensor, 3> w, b;
  for (int i = 0; i < 3; ++i) {
    w[i] = oracle::random_tensor(3, 3, 3, 3, rng, -0.5, 0.5);
    b[i] = oracle::random_tensor(3, 1, 1, 1, rng, -0.1, 0.1);
  }
  const ResidualWeights p{{{&w[0], &b[0]}, {&w[1], &b[1]}, {&w[2], &b[2]}}};
  const Tensor a1 = oracle::relu(oracle::conv2d(x, w[0], b[0], 1, 1));
  const Tensor a2 = oracle::relu(oracle::conv2d(a1, w[1], b[1], 1, 1));
  const Tensor ref = oracle::relu(x + oracle::conv2d(a2, w[2], b[2], 1, 1));
  EXPECT_LT(max_abs_diff(residual_block(x, p), ref), 1e-10);
}

TEST(Whiten, HandCasesAndStatistics) {
  const Tensor a = whiten(from_values(1, 1, 1, 3, {2, 4, 6}), 1e-300);
  EXPECT_NEAR(a[0], -std::sqrt(1.5), 1e-12);
  EXPECT_NEAR(a[1], 0.0, 1e-12);
  EXPECT_NEAR(a[2], std::sqrt(1.5), 1e-12);
  const Tensor b = whiten(from_values(1, 1, 1, 2, {1, -1}), 1e-300);
  EXPECT_NEAR(b[0], 1.0, 1e-12);
  EXPECT_NEAR(b[1], -1.0, 1e-12);
  const Tensor flat = whiten(Tensor(2, 2, 2, 2, 3.0), 1e-5);
  for (double v : flat.values()) EXPECT_EQ(v, 0.0);

  SplitMix64 rng(13);
  const Tensor x = oracle::random_tensor(3, 4, 5, 5, rng, -10, 10);
  const Tensor y = whiten(x, 1e-5);
  for (int c = 0; c < 4; ++c) {
    double m = 0, v = 0;
    for (int n = 0; n < 3; ++n)
      for (size_t p = 0; p < y.plane(); ++p) m += y.sample(n)[c * y.plane() + p];
    m /= 75.0;
    for (int n = 0; n < 3; ++n)
      for (size_t p = 0; p < y.plane(); ++p) v += std::pow(y.sample(n)[c * y.plane() + p] - m, 2);
    v /= 75.0;
    EXPECT_LT(std::fabs(m), 1e-10);
    EXPECT_NEAR(v, 1.0, 1e-6);
  }
}

TEST(CosineSim, Basics) {
  SplitMix64 rng(14);
  const Tensor a = oracle::random_tensor(2, 3, 4, 4, rng);
  EXPECT_NEAR(cosine_sim(a, a), 1.0, 1e-14);
  EXPECT_NEAR(cosine_sim(a, a * -1.0), -1.0, 1e-14);
  EXPECT_EQ(cosine_sim(from_values(1, 2, 1, 1, {1, 0}), from_values(1, 2, 1, 1, {0, 1})), 0.0);
  EXPECT_EQ(cosine_sim(a, Tensor(a.shape())), 0.0);
  const double r = cosine_sim(a, oracle::random_tensor(2, 3, 4, 4, rng));
  EXPECT_LE(std::fabs(r), 1.0);
}

TEST(Ssim, ConstantsIdentitySymmetry) {
  const double c1 = kSsimK1 * kSsimK1, c2 = kSsimK2 * kSsimK2;
  const double want = c1 * c2 / ((1.0 + c1) * c2);
  EXPECT_NEAR(ssim(Tensor(1, 2, 16, 16, 0.0), Tensor(1, 2, 16, 16, 1.0)), want, 1e-15);
  EXPECT_NEAR(want, 9.9e-5, 1e-6);
  SplitMix64 rng(15);
  const Tensor a = oracle::random_tensor(1, 3, 14, 13, rng, 0, 1);
  const Tensor b = oracle::random_tensor(1, 3, 14, 13, rng, 0, 1);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
  EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-14);
  EXPECT_LT(ssim(a, b), 1.0 - 1e-6);
  EXPECT_GE(ssim(a, b), -1.0);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParamTree p;
  p.add("x", Tensor(1, 1, 1, 1, 2.0));
  p.add("f", Tensor(1, 1, 1, 1, 5.0), true);
  AdamState st(p, 0.005, 0.9, 0.95);
  p.entry(0).grad[0] = 1.0;
  p.entry(1).grad[0] = 1.0;
  adam_step(p, st);
  EXPECT_NEAR(p.value("x")[0], 2.0 - 0.005 / (1.0 + 1e-8), 1e-15);
  EXPECT_EQ(p.value("f")[0], 5.0);
  EXPECT_EQ(p.entry(0).grad[0], 0.0);

  ParamTree q;
  q.add("y", Tensor(2, 2, 1, 1, 0.3));
  AdamState fresh(q, 0.005, 0.9, 0.95);
  adam_step(q, fresh);
  for (double v : q.value("y").values()) EXPECT_EQ(v, 0.3);
}

TEST(Adam, DeterministicForIdenticalInputs) {
  auto run = [] {
    ParamTree p;
    SplitMix64 rng(16);
    p.add("w", oracle::random_tensor(2, 3, 1, 1, rng));
    AdamState st(p, 0.01, 0.9, 0.95);
    for (int s = 0; s < 5; ++s) {
      for (double& g : p.entry(0).grad.values()) g = rng.uniform(-1, 1);
      adam_step(p, st);
    }
    return p.value("w").storage();
  };
  EXPECT_EQ(run(), run());
}

TEST(GradCheck, SumOfSquaresConstantAndNonFinite) {
  ParamTree p;
  SplitMix64 rng(17);
  p.add("a", oracle::random_tensor(4, 5, 2, 2, rng));
  const Objective squares = [](ParamTree& t, bool g) {
    double s = 0.0;
    Tensor& v = t.value("a");
    for (size_t i = 0; i < v.size(); ++i) {
      s += v[i] * v[i];
      if (g) (*t.grad("a"))[i] += 2.0 * v[i];
    }
    return s;
  };
  const GradCheckResult r = finite_diff_check(squares, p, 1e-4, 1);
  EXPECT_LT(r.max_rel_error, 1e-8);
  EXPECT_EQ(r.coordinates, 64u);
  EXPECT_EQ(finite_diff_check([](ParamTree&, bool) { return 3.0; }, p, 1e-4, 1).max_rel_error, 0.0);
  EXPECT_THROW(finite_diff_check([](ParamTree&, bool) { return NAN; }, p, 1e-4, 1), NumericalError);
}
