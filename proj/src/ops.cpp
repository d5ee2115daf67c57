#include "rebelhad/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "rebelhad/error.hpp"
#include "rebelhad/parallel.hpp"

namespace rebelhad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

// Geometry of a conv2d from an (C, H, W) image to (Cout, Ho, Wo).
struct ConvGeom {
  int channels, height, width, k, stride, pad, out_h, out_w;

  size_t rows() const { return static_cast<size_t>(channels) * k * k; }
  size_t cols() const { return static_cast<size_t>(out_h) * out_w; }
  bool is_pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

ConvGeom make_geom(int c, int h, int w, int k, int stride, int pad) {
  if (stride < 1 || pad < 0 || k < 1) throw RangeError("conv: invalid stride/pad/kernel");
  ConvGeom g{c, h, w, k, stride, pad, 0, 0};
  const int span_h = h + 2 * pad - k, span_w = w + 2 * pad - k;
  if (span_h < 0 || span_w < 0) throw ShapeError("conv: kernel larger than padded input");
  g.out_h = span_h / stride + 1;
  g.out_w = span_w / stride + 1;
  return g;
}

// cols[(c*k + ky)*k + kx][oy*Wo + ox] = img[c][oy*s - p + ky][ox*s - p + kx]
void im2col(const double* img, const ConvGeom& g, double* cols) {
  for (int c = 0; c < g.channels; ++c) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        double* row = cols + ((static_cast<size_t>(c) * g.k + ky) * g.k + kx) * g.cols();
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          double* dst = row + static_cast<size_t>(oy) * g.out_w;
          if (iy < 0 || iy >= g.height) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* src = img + (static_cast<size_t>(c) * g.height + iy) * g.width;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            dst[ox] = (ix >= 0 && ix < g.width) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters-and-adds columns back into the image.
void col2im(const double* cols, const ConvGeom& g, double* img) {
  for (int c = 0; c < g.channels; ++c) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const double* row = cols + ((static_cast<size_t>(c) * g.k + ky) * g.k + kx) * g.cols();
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.height) continue;
          const double* src = row + static_cast<size_t>(oy) * g.out_w;
          double* dst = img + (static_cast<size_t>(c) * g.height + iy) * g.width;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

void check_conv_args(const Tensor& x, const Tensor& weight, const Tensor& bias, int in_channels,
                     int out_channels, const char* op) {
  if (weight.h() != weight.w()) throw ShapeError(std::string(op) + ": kernel must be square");
  if (x.c() != in_channels) {
    throw ShapeError(std::string(op) + ": input has " + std::to_string(x.c()) +
                     " channels, weight expects " + std::to_string(in_channels));
  }
  if (!bias.empty() && static_cast<int>(bias.size()) != out_channels) {
    throw ShapeError(std::string(op) + ": bias length does not match output channels");
  }
}

void add_bias(Tensor& y, const Tensor& bias) {
  if (bias.empty()) return;
  const size_t plane = y.plane();
  for (int n = 0; n < y.n(); ++n) {
    for (int c = 0; c < y.c(); ++c) {
      double* p = y.sample(n) + c * plane;
      const double b = bias[c];
      for (size_t i = 0; i < plane; ++i) p[i] += b;
    }
  }
}

void accumulate_bias_grad(const Tensor& dy, Tensor* dbias) {
  if (dbias == nullptr) return;
  const size_t plane = dy.plane();
  for (int n = 0; n < dy.n(); ++n) {
    for (int c = 0; c < dy.c(); ++c) {
      const double* p = dy.sample(n) + c * plane;
      double s = 0.0;
      for (size_t i = 0; i < plane; ++i) s += p[i];
      (*dbias)[c] += s;
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int pad) {
  const int cout = weight.n(), cin = weight.c(), k = weight.h();
  check_conv_args(x, weight, bias, cin, cout, "conv2d");
  const ConvGeom g = make_geom(cin, x.h(), x.w(), k, stride, pad);
  Tensor y(x.n(), cout, g.out_h, g.out_w);
  ConstMapMat wm(weight.data(), cout, static_cast<Eigen::Index>(g.rows()));
  parallel_for(static_cast<size_t>(x.n()), [&](size_t n) {
    MapMat ym(y.sample(static_cast<int>(n)), cout, static_cast<Eigen::Index>(g.cols()));
    if (g.is_pointwise()) {
      ym.noalias() = wm * ConstMapMat(x.sample(static_cast<int>(n)), cin,
                                      static_cast<Eigen::Index>(g.cols()));
    } else {
      RowMat cols(g.rows(), g.cols());
      im2col(x.sample(static_cast<int>(n)), g, cols.data());
      ym.noalias() = wm * cols;
    }
  });
  add_bias(y, bias);
  return y;
}

Tensor conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& dy, int stride,
                       int pad, ConvGrads grads, bool need_dx) {
  const int cout = weight.n(), cin = weight.c(), k = weight.h();
  const ConvGeom g = make_geom(cin, x.h(), x.w(), k, stride, pad);
  if (dy.n() != x.n() || dy.c() != cout || dy.h() != g.out_h || dy.w() != g.out_w) {
    throw ShapeError("conv2d_backward: upstream gradient has shape " + dy.shape_string());
  }
  accumulate_bias_grad(dy, grads.bias);
  Tensor dx = need_dx ? Tensor(x.shape()) : Tensor();
  if (!need_dx && grads.weight == nullptr) return dx;
  ConstMapMat wm(weight.data(), cout, static_cast<Eigen::Index>(g.rows()));
  RowMat cols;
  for (int n = 0; n < x.n(); ++n) {
    ConstMapMat dym(dy.sample(n), cout, static_cast<Eigen::Index>(g.cols()));
    if (grads.weight != nullptr) {
      MapMat dwm(grads.weight->data(), cout, static_cast<Eigen::Index>(g.rows()));
      if (g.is_pointwise()) {
        dwm.noalias() += dym * ConstMapMat(x.sample(n), cin, static_cast<Eigen::Index>(g.cols())).transpose();
      } else {
        cols.resize(g.rows(), g.cols());
        im2col(x.sample(n), g, cols.data());
        dwm.noalias() += dym * cols.transpose();
      }
    }
    if (need_dx) {
      if (g.is_pointwise()) {
        MapMat(dx.sample(n), cin, static_cast<Eigen::Index>(g.cols())).noalias() = wm.transpose() * dym;
      } else {
        cols.resize(g.rows(), g.cols());
        cols.noalias() = wm.transpose() * dym;
        col2im(cols.data(), g, dx.sample(n));
      }
    }
  }
  return dx;
}

Tensor conv2d_transpose(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride,
                        int pad) {
  const int cin = weight.n(), cout = weight.c(), k = weight.h();
  check_conv_args(x, weight, bias, cin, cout, "conv2d_transpose");
  if (stride < 1 || pad < 0) throw RangeError("conv2d_transpose: invalid stride/pad");
  const int out_h = (x.h() - 1) * stride - 2 * pad + k;
  const int out_w = (x.w() - 1) * stride - 2 * pad + k;
  if (out_h < 1 || out_w < 1) throw ShapeError("conv2d_transpose: empty output");
  // The forward conv of the adjoint pair maps (cout, out_h, out_w) -> (cin, H, W).
  const ConvGeom g = make_geom(cout, out_h, out_w, k, stride, pad);
  if (g.out_h != x.h() || g.out_w != x.w()) throw ShapeError("conv2d_transpose: inconsistent geometry");
  Tensor y(x.n(), cout, out_h, out_w);
  ConstMapMat wm(weight.data(), cin, static_cast<Eigen::Index>(g.rows()));
  parallel_for(static_cast<size_t>(x.n()), [&](size_t n) {
    ConstMapMat xm(x.sample(static_cast<int>(n)), cin, static_cast<Eigen::Index>(g.cols()));
    if (g.is_pointwise()) {
      MapMat(y.sample(static_cast<int>(n)), cout, static_cast<Eigen::Index>(g.cols())).noalias() =
          wm.transpose() * xm;
    } else {
      RowMat cols = wm.transpose() * xm;
      col2im(cols.data(), g, y.sample(static_cast<int>(n)));
    }
  });
  add_bias(y, bias);
  return y;
}

Tensor conv2d_transpose_backward(const Tensor& x, const Tensor& weight, const Tensor& dy,
                                 int stride, int pad, ConvGrads grads, bool need_dx) {
  const int cin = weight.n(), cout = weight.c(), k = weight.h();
  const ConvGeom g = make_geom(cout, dy.h(), dy.w(), k, stride, pad);
  if (dy.n() != x.n() || dy.c() != cout || g.out_h != x.h() || g.out_w != x.w()) {
    throw ShapeError("conv2d_transpose_backward: upstream gradient has shape " + dy.shape_string());
  }
  accumulate_bias_grad(dy, grads.bias);
  Tensor dx = need_dx ? Tensor(x.shape()) : Tensor();
  if (!need_dx && grads.weight == nullptr) return dx;
  ConstMapMat wm(weight.data(), cin, static_cast<Eigen::Index>(g.rows()));
  RowMat cols;
  for (int n = 0; n < x.n(); ++n) {
    const double* dcols;
    if (g.is_pointwise()) {
      dcols = dy.sample(n);
    } else {
      cols.resize(g.rows(), g.cols());
      im2col(dy.sample(n), g, cols.data());
      dcols = cols.data();
    }
    ConstMapMat dcm(dcols, static_cast<Eigen::Index>(g.rows()), static_cast<Eigen::Index>(g.cols()));
    if (grads.weight != nullptr) {
      MapMat(grads.weight->data(), cin, static_cast<Eigen::Index>(g.rows())).noalias() +=
          ConstMapMat(x.sample(n), cin, static_cast<Eigen::Index>(g.cols())) * dcm.transpose();
    }
    if (need_dx) {
      MapMat(dx.sample(n), cin, static_cast<Eigen::Index>(g.cols())).noalias() = wm * dcm;
    }
  }
  return dx;
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor relu_backward(const Tensor& y, const Tensor& dy) {
  require_same_shape(y, dy, "relu_backward");
  Tensor dx = dy;
  for (size_t i = 0; i < dx.size(); ++i) {
    if (!(y[i] > 0.0)) dx[i] = 0.0;
  }
  return dx;
}

Tensor sigmoid(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.values()) {
    v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return y;
}

Tensor sigmoid_backward(const Tensor& s, const Tensor& dy) {
  require_same_shape(s, dy, "sigmoid_backward");
  Tensor dx = dy;
  for (size_t i = 0; i < dx.size(); ++i) dx[i] *= s[i] * (1.0 - s[i]);
  return dx;
}

Tensor abs(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.values()) v = std::fabs(v);
  return y;
}

Tensor abs_backward(const Tensor& x, const Tensor& dy) {
  require_same_shape(x, dy, "abs_backward");
  Tensor dx = dy;
  for (size_t i = 0; i < dx.size(); ++i) dx[i] *= (x[i] > 0.0) - (x[i] < 0.0);
  return dx;
}

namespace {

struct PoolWindow {
  int lo, hi;
};

PoolWindow pool_window(int i, int in, int out) {
  const int lo = static_cast<int>((static_cast<long long>(i) * in) / out);
  const int hi = static_cast<int>(((static_cast<long long>(i) + 1) * in + out - 1) / out);
  return {lo, hi};
}

}  // namespace

Tensor adaptive_avg_pool(const Tensor& x, int out_hw) {
  if (out_hw < 1) throw RangeError("adaptive_avg_pool: out_hw must be >= 1");
  Tensor y(x.n(), x.c(), out_hw, out_hw);
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      for (int i = 0; i < out_hw; ++i) {
        const PoolWindow r = pool_window(i, x.h(), out_hw);
        for (int j = 0; j < out_hw; ++j) {
          const PoolWindow q = pool_window(j, x.w(), out_hw);
          double s = 0.0;
          for (int yy = r.lo; yy < r.hi; ++yy) {
            for (int xx = q.lo; xx < q.hi; ++xx) s += x.at(n, c, yy, xx);
          }
          y.at(n, c, i, j) = s / ((r.hi - r.lo) * (q.hi - q.lo));
        }
      }
    }
  }
  return y;
}

Tensor adaptive_avg_pool_backward(const Tensor& x, int out_hw, const Tensor& dy) {
  Tensor dx(x.shape());
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      for (int i = 0; i < out_hw; ++i) {
        const PoolWindow r = pool_window(i, x.h(), out_hw);
        for (int j = 0; j < out_hw; ++j) {
          const PoolWindow q = pool_window(j, x.w(), out_hw);
          const double g = dy.at(n, c, i, j) / ((r.hi - r.lo) * (q.hi - q.lo));
          for (int yy = r.lo; yy < r.hi; ++yy) {
            for (int xx = q.lo; xx < q.hi; ++xx) dx.at(n, c, yy, xx) += g;
          }
        }
      }
    }
  }
  return dx;
}

namespace {

struct InterpTap {
  int i0, i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

std::vector<InterpTap> interp_taps(int in, int out) {
  std::vector<InterpTap> taps(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - i0};
  }
  return taps;
}

}  // namespace

Tensor resize_bilinear(const Tensor& x, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw RangeError("resize_bilinear: output dims must be >= 1");
  if (out_h == x.h() && out_w == x.w()) return x;
  const auto ty = interp_taps(x.h(), out_h);
  const auto tx = interp_taps(x.w(), out_w);
  Tensor y(x.n(), x.c(), out_h, out_w);
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      for (int i = 0; i < out_h; ++i) {
        const InterpTap& a = ty[i];
        for (int j = 0; j < out_w; ++j) {
          const InterpTap& b = tx[j];
          const double top = (1.0 - b.w1) * x.at(n, c, a.i0, b.i0) + b.w1 * x.at(n, c, a.i0, b.i1);
          const double bot = (1.0 - b.w1) * x.at(n, c, a.i1, b.i0) + b.w1 * x.at(n, c, a.i1, b.i1);
          y.at(n, c, i, j) = (1.0 - a.w1) * top + a.w1 * bot;
        }
      }
    }
  }
  return y;
}

Tensor resize_bilinear_backward(const Tensor& x, int out_h, int out_w, const Tensor& dy) {
  if (out_h == x.h() && out_w == x.w()) return dy;
  const auto ty = interp_taps(x.h(), out_h);
  const auto tx = interp_taps(x.w(), out_w);
  Tensor dx(x.shape());
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      for (int i = 0; i < out_h; ++i) {
        const InterpTap& a = ty[i];
        for (int j = 0; j < out_w; ++j) {
          const InterpTap& b = tx[j];
          const double g = dy.at(n, c, i, j);
          dx.at(n, c, a.i0, b.i0) += (1.0 - a.w1) * (1.0 - b.w1) * g;
          dx.at(n, c, a.i0, b.i1) += (1.0 - a.w1) * b.w1 * g;
          dx.at(n, c, a.i1, b.i0) += a.w1 * (1.0 - b.w1) * g;
          dx.at(n, c, a.i1, b.i1) += a.w1 * b.w1 * g;
        }
      }
    }
  }
  return dx;
}

Tensor se_block(const Tensor& x, const SeWeights& p, int reduction, SeCache* cache) {
  if (reduction < 1 || x.c() % reduction != 0) {
    throw ShapeError("se_block: " + std::to_string(x.c()) + " channels not divisible by reduction " +
                     std::to_string(reduction));
  }
  if (p.squeeze.weight->n() != x.c() / reduction) {
    throw ShapeError("se_block: squeeze width does not equal C / reduction");
  }
  Tensor pooled = adaptive_avg_pool(x, 1);
  Tensor hidden = relu(conv2d(pooled, *p.squeeze.weight, *p.squeeze.bias, 1, 0));
  Tensor gate = sigmoid(conv2d(hidden, *p.excite.weight, *p.excite.bias, 1, 0));
  Tensor y = x;
  const size_t plane = x.plane();
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const double g = gate.at(n, c, 0, 0);
      double* row = y.sample(n) + c * plane;
      for (size_t i = 0; i < plane; ++i) row[i] *= g;
    }
  }
  if (cache != nullptr) *cache = SeCache{x, std::move(pooled), std::move(hidden), std::move(gate)};
  return y;
}

Tensor se_block_backward(const SeWeights& p, const SeCache& cache, const Tensor& dy,
                         const SeGrads& grads) {
  const Tensor& x = cache.x;
  require_same_shape(x, dy, "se_block_backward");
  const size_t plane = x.plane();
  Tensor dx(x.shape());
  Tensor dgate(x.n(), x.c(), 1, 1);
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const double g = cache.gate.at(n, c, 0, 0);
      const double* xr = x.sample(n) + c * plane;
      const double* dr = dy.sample(n) + c * plane;
      double* out = dx.sample(n) + c * plane;
      double s = 0.0;
      for (size_t i = 0; i < plane; ++i) {
        out[i] = dr[i] * g;
        s += dr[i] * xr[i];
      }
      dgate.at(n, c, 0, 0) = s;
    }
  }
  Tensor dpre2 = sigmoid_backward(cache.gate, dgate);
  Tensor dhidden = conv2d_backward(cache.hidden, *p.excite.weight, dpre2, 1, 0, grads.excite);
  Tensor dpre1 = relu_backward(cache.hidden, dhidden);
  Tensor dpooled = conv2d_backward(cache.pooled, *p.squeeze.weight, dpre1, 1, 0, grads.squeeze);
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const double g = dpooled.at(n, c, 0, 0) / static_cast<double>(plane);
      double* out = dx.sample(n) + c * plane;
      for (size_t i = 0; i < plane; ++i) out[i] += g;
    }
  }
  return dx;
}

Tensor residual_block(const Tensor& x, const ResidualWeights& p, ResidualCache* cache) {
  if (p[0].weight->c() != x.c() || p[2].weight->n() != x.c()) {
    throw ShapeError("residual_block: input channels must equal output channels");
  }
  Tensor a1 = relu(conv2d(x, *p[0].weight, *p[0].bias, 1, 1));
  Tensor a2 = relu(conv2d(a1, *p[1].weight, *p[1].bias, 1, 1));
  Tensor y = conv2d(a2, *p[2].weight, *p[2].bias, 1, 1);
  y += x;
  for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
  if (cache != nullptr) *cache = ResidualCache{x, std::move(a1), std::move(a2), y};
  return y;
}

Tensor residual_block_backward(const ResidualWeights& p, const ResidualCache& cache,
                               const Tensor& dy, const ResidualGrads& grads, bool need_dx) {
  Tensor dsum = relu_backward(cache.y, dy);
  Tensor da2 = conv2d_backward(cache.a2, *p[2].weight, dsum, 1, 1, grads[2]);
  Tensor da1 = conv2d_backward(cache.a1, *p[1].weight, relu_backward(cache.a2, da2), 1, 1, grads[1]);
  Tensor dx = conv2d_backward(cache.x, *p[0].weight, relu_backward(cache.a1, da1), 1, 1, grads[0],
                              need_dx);
  if (need_dx) dx += dsum;
  return dx;
}

Tensor whiten(const Tensor& x, double eps, WhitenCache* cache) {
  if (!(eps > 0.0)) throw RangeError("whiten: eps must be > 0");
  const size_t plane = x.plane();
  const double count = static_cast<double>(plane) * x.n();
  Tensor y(x.shape());
  std::vector<double> inv_std(x.c());
  for (int c = 0; c < x.c(); ++c) {
    double mean = 0.0;
    for (int n = 0; n < x.n(); ++n) {
      const double* r = x.sample(n) + c * plane;
      for (size_t i = 0; i < plane; ++i) mean += r[i];
    }
    mean /= count;
    double var = 0.0;
    for (int n = 0; n < x.n(); ++n) {
      const double* r = x.sample(n) + c * plane;
      for (size_t i = 0; i < plane; ++i) var += (r[i] - mean) * (r[i] - mean);
    }
    var /= count;
    inv_std[c] = 1.0 / std::sqrt(var + eps);
    for (int n = 0; n < x.n(); ++n) {
      const double* r = x.sample(n) + c * plane;
      double* o = y.sample(n) + c * plane;
      for (size_t i = 0; i < plane; ++i) o[i] = (r[i] - mean) * inv_std[c];
    }
  }
  if (cache != nullptr) *cache = WhitenCache{y, inv_std};
  return y;
}

Tensor whiten_backward(const WhitenCache& cache, const Tensor& dy) {
  const Tensor& y = cache.y;
  require_same_shape(y, dy, "whiten_backward");
  const size_t plane = y.plane();
  const double count = static_cast<double>(plane) * y.n();
  Tensor dx(y.shape());
  for (int c = 0; c < y.c(); ++c) {
    double mean_dy = 0.0, mean_dy_y = 0.0;
    for (int n = 0; n < y.n(); ++n) {
      const double* yr = y.sample(n) + c * plane;
      const double* dr = dy.sample(n) + c * plane;
      for (size_t i = 0; i < plane; ++i) {
        mean_dy += dr[i];
        mean_dy_y += dr[i] * yr[i];
      }
    }
    mean_dy /= count;
    mean_dy_y /= count;
    for (int n = 0; n < y.n(); ++n) {
      const double* yr = y.sample(n) + c * plane;
      const double* dr = dy.sample(n) + c * plane;
      double* o = dx.sample(n) + c * plane;
      for (size_t i = 0; i < plane; ++i) {
        o[i] = cache.inv_std[c] * (dr[i] - mean_dy - yr[i] * mean_dy_y);
      }
    }
  }
  return dx;
}

double cosine_sim(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "cosine_sim");
  const size_t m = a.sample_size();
  double total = 0.0;
  for (int n = 0; n < a.n(); ++n) {
    const double* pa = a.sample(n);
    const double* pb = b.sample(n);
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (size_t i = 0; i < m; ++i) {
      ab += pa[i] * pb[i];
      aa += pa[i] * pa[i];
      bb += pb[i] * pb[i];
    }
    if (aa > 0.0 && bb > 0.0) total += ab / (std::sqrt(aa) * std::sqrt(bb));
  }
  return a.n() > 0 ? total / a.n() : 0.0;
}

Tensor cosine_sim_grad_b(const Tensor& a, const Tensor& b, double scale) {
  require_same_shape(a, b, "cosine_sim_grad_b");
  const size_t m = a.sample_size();
  Tensor g(b.shape());
  for (int n = 0; n < a.n(); ++n) {
    const double* pa = a.sample(n);
    const double* pb = b.sample(n);
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (size_t i = 0; i < m; ++i) {
      ab += pa[i] * pb[i];
      aa += pa[i] * pa[i];
      bb += pb[i] * pb[i];
    }
    if (!(aa > 0.0 && bb > 0.0)) continue;
    const double na = std::sqrt(aa), nb = std::sqrt(bb);
    const double cos = ab / (na * nb);
    const double k = scale / a.n();
    double* out = g.sample(n);
    for (size_t i = 0; i < m; ++i) out[i] = k * (pa[i] / (na * nb) - cos * pb[i] / bb);
  }
  return g;
}

}  // namespace rebelhad
