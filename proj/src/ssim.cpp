#include <algorithm>
#include <cmath>
#include <vector>

#include "rebelhad/error.hpp"
#include "rebelhad/ops.hpp"

namespace rebelhad {

namespace {

constexpr double kC1 = (kSsimK1 * 1.0) * (kSsimK1 * 1.0);
constexpr double kC2 = (kSsimK2 * 1.0) * (kSsimK2 * 1.0);

std::vector<double> gaussian_window(int h, int w) {
  int size = std::min({kSsimWindow, h, w});
  if (size % 2 == 0) --size;
  std::vector<double> g(size);
  const double center = (size - 1) / 2.0;
  double total = 0.0;
  for (int i = 0; i < size; ++i) {
    g[i] = std::exp(-(i - center) * (i - center) / (2.0 * kSsimSigma * kSsimSigma));
    total += g[i];
  }
  for (double& v : g) v /= total;
  return g;
}

// Separable "valid" correlation of an h x w plane with the window g x g.
void filter_valid(const double* img, int h, int w, const std::vector<double>& g, double* out) {
  const int k = static_cast<int>(g.size());
  const int oh = h - k + 1, ow = w - k + 1;
  std::vector<double> tmp(static_cast<size_t>(h) * ow);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int j = 0; j < k; ++j) s += g[j] * img[static_cast<size_t>(y) * w + x + j];
      tmp[static_cast<size_t>(y) * ow + x] = s;
    }
  }
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < k; ++i) s += g[i] * tmp[static_cast<size_t>(y + i) * ow + x];
      out[static_cast<size_t>(y) * ow + x] = s;
    }
  }
}

// Adjoint of filter_valid: spreads each valid-position value back over its window.
void filter_valid_adjoint(const double* val, int h, int w, const std::vector<double>& g, double* out) {
  const int k = static_cast<int>(g.size());
  const int oh = h - k + 1, ow = w - k + 1;
  std::vector<double> tmp(static_cast<size_t>(h) * ow, 0.0);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      const double v = val[static_cast<size_t>(y) * ow + x];
      for (int i = 0; i < k; ++i) tmp[static_cast<size_t>(y + i) * ow + x] += g[i] * v;
    }
  }
  std::fill(out, out + static_cast<size_t>(h) * w, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      const double v = tmp[static_cast<size_t>(y) * ow + x];
      for (int j = 0; j < k; ++j) out[static_cast<size_t>(y) * w + x + j] += g[j] * v;
    }
  }
}

struct PlaneStats {
  std::vector<double> mu_a, mu_b, m_aa, m_bb, m_ab;
};

PlaneStats plane_stats(const double* a, const double* b, int h, int w, const std::vector<double>& g) {
  const size_t plane = static_cast<size_t>(h) * w;
  const int k = static_cast<int>(g.size());
  const size_t valid = static_cast<size_t>(h - k + 1) * (w - k + 1);
  std::vector<double> aa(plane), bb(plane), ab(plane);
  for (size_t i = 0; i < plane; ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  PlaneStats s{std::vector<double>(valid), std::vector<double>(valid), std::vector<double>(valid),
               std::vector<double>(valid), std::vector<double>(valid)};
  filter_valid(a, h, w, g, s.mu_a.data());
  filter_valid(b, h, w, g, s.mu_b.data());
  filter_valid(aa.data(), h, w, g, s.m_aa.data());
  filter_valid(bb.data(), h, w, g, s.m_bb.data());
  filter_valid(ab.data(), h, w, g, s.m_ab.data());
  return s;
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "ssim");
  const int h = a.h(), w = a.w();
  const auto g = gaussian_window(h, w);
  const size_t plane = a.plane();
  double total = 0.0;
  size_t count = 0;
  for (int n = 0; n < a.n(); ++n) {
    for (int c = 0; c < a.c(); ++c) {
      const PlaneStats s = plane_stats(a.sample(n) + c * plane, b.sample(n) + c * plane, h, w, g);
      for (size_t i = 0; i < s.mu_a.size(); ++i) {
        const double ma = s.mu_a[i], mb = s.mu_b[i];
        const double va = s.m_aa[i] - ma * ma, vb = s.m_bb[i] - mb * mb;
        const double cov = s.m_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + kC1) * (2.0 * cov + kC2)) /
                 ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
      }
      count += s.mu_a.size();
    }
  }
  return total / static_cast<double>(count);
}

double ssim(const HsiCube& a, const HsiCube& b) {
  if (!a.same_dims(b)) throw ShapeError("ssim: cube dimensions differ");
  return ssim(a.to_tensor(), b.to_tensor());
}

Tensor ssim_grad_b(const Tensor& a, const Tensor& b, double scale) {
  require_same_shape(a, b, "ssim_grad_b");
  const int h = a.h(), w = a.w();
  const auto g = gaussian_window(h, w);
  const int k = static_cast<int>(g.size());
  const size_t plane = a.plane();
  const size_t valid = static_cast<size_t>(h - k + 1) * (w - k + 1);
  const double norm = scale / (static_cast<double>(valid) * a.c() * a.n());
  Tensor grad(b.shape());
  std::vector<double> d_mu(valid), d_mab(valid), d_mbb(valid);
  std::vector<double> f_mu(plane), f_mab(plane), f_mbb(plane);
  for (int n = 0; n < a.n(); ++n) {
    for (int c = 0; c < a.c(); ++c) {
      const double* pa = a.sample(n) + c * plane;
      const double* pb = b.sample(n) + c * plane;
      const PlaneStats s = plane_stats(pa, pb, h, w, g);
      for (size_t i = 0; i < valid; ++i) {
        const double ma = s.mu_a[i], mb = s.mu_b[i];
        const double va = s.m_aa[i] - ma * ma, vb = s.m_bb[i] - mb * mb;
        const double cov = s.m_ab[i] - ma * mb;
        const double a1 = 2.0 * ma * mb + kC1, a2 = 2.0 * cov + kC2;
        const double b1 = ma * ma + mb * mb + kC1, b2 = va + vb + kC2;
        const double den = b1 * b2;
        const double val = a1 * a2 / den;
        // Partial derivatives w.r.t. the filtered moments of b.
        d_mu[i] = norm * ((2.0 * ma * a2 - 2.0 * ma * a1) / den - val * (2.0 * mb / b1 - 2.0 * mb / b2));
        d_mab[i] = norm * (2.0 * a1 / den);
        d_mbb[i] = norm * (-val / b2);
      }
      filter_valid_adjoint(d_mu.data(), h, w, g, f_mu.data());
      filter_valid_adjoint(d_mab.data(), h, w, g, f_mab.data());
      filter_valid_adjoint(d_mbb.data(), h, w, g, f_mbb.data());
      double* out = grad.sample(n) + c * plane;
      for (size_t i = 0; i < plane; ++i) out[i] = f_mu[i] + pa[i] * f_mab[i] + 2.0 * pb[i] * f_mbb[i];
    }
  }
  return grad;
}

}  // namespace rebelhad
