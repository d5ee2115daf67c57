#pragma once

// Independent reference implementations used only by the tests. Each is
// written as the most literal nested-loop reading of its definition.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "rebelhad/rng.hpp"
#include "rebelhad/tensor.hpp"

namespace oracle {

using rebelhad::Tensor;

inline Tensor random_tensor(int n, int c, int h, int w, rebelhad::SplitMix64& rng, double lo = -1.0,
                            double hi = 1.0) {
  Tensor t(n, c, h, w);
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Direct cross-correlation with zero padding.
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  const int cout = w.n(), cin = w.c(), k = w.h();
  const int oh = (x.h() + 2 * pad - k) / stride + 1;
  const int ow = (x.w() + 2 * pad - k) / stride + 1;
  Tensor y(x.n(), cout, oh, ow);
  for (int n = 0; n < x.n(); ++n)
    for (int co = 0; co < cout; ++co)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          double s = b.empty() ? 0.0 : b[co];
          for (int ci = 0; ci < cin; ++ci)
            for (int u = 0; u < k; ++u)
              for (int v = 0; v < k; ++v) {
                const int yy = i * stride - pad + u, xx = j * stride - pad + v;
                if (yy < 0 || yy >= x.h() || xx < 0 || xx >= x.w()) continue;
                s += w.at(co, ci, u, v) * x.at(n, ci, yy, xx);
              }
          y.at(n, co, i, j) = s;
        }
  return y;
}

// Scatter form of the transposed convolution; weight (cin, cout, k, k).
inline Tensor conv2d_transpose(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  const int cin = w.n(), cout = w.c(), k = w.h();
  const int oh = (x.h() - 1) * stride - 2 * pad + k;
  const int ow = (x.w() - 1) * stride - 2 * pad + k;
  Tensor y(x.n(), cout, oh, ow);
  for (int n = 0; n < x.n(); ++n)
    for (int ci = 0; ci < cin; ++ci)
      for (int i = 0; i < x.h(); ++i)
        for (int j = 0; j < x.w(); ++j)
          for (int co = 0; co < cout; ++co)
            for (int u = 0; u < k; ++u)
              for (int v = 0; v < k; ++v) {
                const int yy = i * stride - pad + u, xx = j * stride - pad + v;
                if (yy < 0 || yy >= oh || xx < 0 || xx >= ow) continue;
                y.at(n, co, yy, xx) += x.at(n, ci, i, j) * w.at(ci, co, u, v);
              }
  if (!b.empty())
    for (int n = 0; n < y.n(); ++n)
      for (int co = 0; co < cout; ++co)
        for (int i = 0; i < oh; ++i)
          for (int j = 0; j < ow; ++j) y.at(n, co, i, j) += b[co];
  return y;
}

inline Tensor relu(Tensor t) {
  for (double& v : t.values()) v = std::max(v, 0.0);
  return t;
}

// Per-location channel-vector cosine, averaged per scale, 1 - mean over scales.
inline double loss_sim(const std::vector<Tensor>& g, const std::vector<Tensor>& f) {
  double total = 0.0;
  for (size_t s = 0; s < g.size(); ++s) {
    double acc = 0.0;
    int count = 0;
    for (int n = 0; n < g[s].n(); ++n)
      for (int i = 0; i < g[s].h(); ++i)
        for (int j = 0; j < g[s].w(); ++j) {
          double ab = 0, aa = 0, bb = 0;
          for (int c = 0; c < g[s].c(); ++c) {
            ab += g[s].at(n, c, i, j) * f[s].at(n, c, i, j);
            aa += g[s].at(n, c, i, j) * g[s].at(n, c, i, j);
            bb += f[s].at(n, c, i, j) * f[s].at(n, c, i, j);
          }
          acc += (aa > 0 && bb > 0) ? ab / std::sqrt(aa * bb) : 0.0;
          ++count;
        }
    total += acc / count;
  }
  return 1.0 - total / static_cast<double>(g.size());
}

// Whitening followed by the cross-covariance sum over every (i, j, n, l).
inline double loss_cc(const Tensor& x, const Tensor& y, double eps) {
  auto whiten = [eps](const Tensor& t) {
    Tensor o(t.shape());
    for (int c = 0; c < t.c(); ++c) {
      double mean = 0, var = 0;
      int count = 0;
      for (int n = 0; n < t.n(); ++n)
        for (int i = 0; i < t.h(); ++i)
          for (int j = 0; j < t.w(); ++j) {
            mean += t.at(n, c, i, j);
            ++count;
          }
      mean /= count;
      for (int n = 0; n < t.n(); ++n)
        for (int i = 0; i < t.h(); ++i)
          for (int j = 0; j < t.w(); ++j) var += (t.at(n, c, i, j) - mean) * (t.at(n, c, i, j) - mean);
      var /= count;
      for (int n = 0; n < t.n(); ++n)
        for (int i = 0; i < t.h(); ++i)
          for (int j = 0; j < t.w(); ++j) o.at(n, c, i, j) = (t.at(n, c, i, j) - mean) / std::sqrt(var + eps);
    }
    return o;
  };
  const Tensor wx = whiten(x), wy = whiten(y);
  const double nl = static_cast<double>(x.n()) * x.h() * x.w();
  double loss = 0.0;
  for (int a = 0; a < x.c(); ++a)
    for (int b = 0; b < y.c(); ++b) {
      double c = 0.0;
      for (int n = 0; n < x.n(); ++n)
        for (int i = 0; i < x.h(); ++i)
          for (int j = 0; j < x.w(); ++j) c += wx.at(n, a, i, j) * wy.at(n, b, i, j);
      c /= nl;
      loss += c * c;
    }
  return loss;
}

// Gauss-Jordan inverse with partial pivoting; a is row-major n x n.
inline std::vector<double> inverse(std::vector<double> a, int n) {
  std::vector<double> inv(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) inv[static_cast<size_t>(i) * n + i] = 1.0;
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::fabs(a[static_cast<size_t>(r) * n + col]) > std::fabs(a[static_cast<size_t>(piv) * n + col])) piv = r;
    for (int k = 0; k < n; ++k) {
      std::swap(a[static_cast<size_t>(col) * n + k], a[static_cast<size_t>(piv) * n + k]);
      std::swap(inv[static_cast<size_t>(col) * n + k], inv[static_cast<size_t>(piv) * n + k]);
    }
    const double d = a[static_cast<size_t>(col) * n + col];
    for (int k = 0; k < n; ++k) {
      a[static_cast<size_t>(col) * n + k] /= d;
      inv[static_cast<size_t>(col) * n + k] /= d;
    }
    for (int r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[static_cast<size_t>(r) * n + col];
      for (int k = 0; k < n; ++k) {
        a[static_cast<size_t>(r) * n + k] -= f * a[static_cast<size_t>(col) * n + k];
        inv[static_cast<size_t>(r) * n + k] -= f * inv[static_cast<size_t>(col) * n + k];
      }
    }
  }
  return inv;
}

// Mahalanobis scores with an explicit inverse; cube band-sequential.
inline std::vector<double> rx(const std::vector<double>& cube, int pixels, int bands) {
  std::vector<double> mu(bands, 0.0);
  for (int b = 0; b < bands; ++b) {
    for (int p = 0; p < pixels; ++p) mu[b] += cube[static_cast<size_t>(b) * pixels + p];
    mu[b] /= pixels;
  }
  std::vector<double> cov(static_cast<size_t>(bands) * bands, 0.0);
  for (int i = 0; i < bands; ++i)
    for (int j = 0; j < bands; ++j) {
      double s = 0;
      for (int p = 0; p < pixels; ++p)
        s += (cube[static_cast<size_t>(i) * pixels + p] - mu[i]) * (cube[static_cast<size_t>(j) * pixels + p] - mu[j]);
      cov[static_cast<size_t>(i) * bands + j] = s / pixels;
    }
  double trace = 0;
  for (int i = 0; i < bands; ++i) trace += cov[static_cast<size_t>(i) * bands + i];
  const double eps = std::max(1e-6 * trace / bands, 1e-12);
  for (int i = 0; i < bands; ++i) cov[static_cast<size_t>(i) * bands + i] += eps;
  const std::vector<double> inv = inverse(cov, bands);
  std::vector<double> out(pixels, 0.0);
  for (int p = 0; p < pixels; ++p) {
    double s = 0;
    for (int i = 0; i < bands; ++i)
      for (int j = 0; j < bands; ++j)
        s += (cube[static_cast<size_t>(i) * pixels + p] - mu[i]) * inv[static_cast<size_t>(i) * bands + j] *
             (cube[static_cast<size_t>(j) * pixels + p] - mu[j]);
    out[p] = s;
  }
  return out;
}

// Fraction of (positive, negative) pairs ranked correctly, ties 0.5, as an
// exact rational numerator/denominator pair of integers.
struct PairCount {
  uint64_t twice_wins = 0;
  uint64_t pairs = 0;
  double value() const { return static_cast<double>(twice_wins) / (2.0 * static_cast<double>(pairs)); }
};

inline PairCount pairwise_auc(const std::vector<double>& s, const std::vector<uint8_t>& y) {
  PairCount c;
  for (size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      ++c.pairs;
      c.twice_wins += s[i] > s[j] ? 2 : (s[i] == s[j] ? 1 : 0);
    }
  }
  return c;
}

}  // namespace oracle
