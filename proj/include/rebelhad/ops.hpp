#pragma once

#include <array>

#include "rebelhad/hsidata.hpp"
#include "rebelhad/tensor.hpp"

// Differentiable tensor kernels. Every forward op has a matching
// `*_backward` that maps the upstream gradient to the input gradient and
// accumulates (+=) into any non-null parameter-gradient buffers.

namespace rebelhad {

/// Borrowed weight and bias of one convolution. `bias` may be empty.
struct ConvWeights {
  const Tensor* weight = nullptr;
  const Tensor* bias = nullptr;
};

/// Gradient sinks for one convolution; null means "do not accumulate"
/// (frozen parameter).
struct ConvGrads {
  Tensor* weight = nullptr;
  Tensor* bias = nullptr;
};

// Cross-correlation with zero padding. weight: (Cout, Cin, k, k).
// Output spatial size floor((H + 2*pad - k)/stride) + 1.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int pad);
// Returns dx (empty tensor when need_dx is false).
Tensor conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& dy, int stride,
                       int pad, ConvGrads grads, bool need_dx = true);

// Adjoint of conv2d. weight: (Cin, Cout, k, k), i.e. the weight of the
// conv2d mapping Cout -> Cin. Output size (H - 1)*stride - 2*pad + k.
Tensor conv2d_transpose(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride,
                        int pad);
Tensor conv2d_transpose_backward(const Tensor& x, const Tensor& weight, const Tensor& dy,
                                 int stride, int pad, ConvGrads grads, bool need_dx = true);

Tensor relu(const Tensor& x);
// Gradient through ReLU given its output `y` (y > 0 passes).
Tensor relu_backward(const Tensor& y, const Tensor& dy);
Tensor sigmoid(const Tensor& x);
// Gradient through sigmoid given its output `s`.
Tensor sigmoid_backward(const Tensor& s, const Tensor& dy);
Tensor abs(const Tensor& x);
Tensor abs_backward(const Tensor& x, const Tensor& dy);

// Output (N, C, out_hw, out_hw); cell (i,j) averages rows
// [floor(i*H/s), ceil((i+1)*H/s)) and the analogous columns.
Tensor adaptive_avg_pool(const Tensor& x, int out_hw);
Tensor adaptive_avg_pool_backward(const Tensor& x, int out_hw, const Tensor& dy);

// Bilinear interpolation with half-pixel (align_corners = false) sampling.
Tensor resize_bilinear(const Tensor& x, int out_h, int out_w);
Tensor resize_bilinear_backward(const Tensor& x, int out_h, int out_w, const Tensor& dy);

/// Squeeze-and-excitation: global average pool, 1x1 conv C -> C/r, ReLU,
/// 1x1 conv C/r -> C, sigmoid, channel-wise rescale of the input.
struct SeWeights {
  ConvWeights squeeze;
  ConvWeights excite;
};
struct SeGrads {
  ConvGrads squeeze;
  ConvGrads excite;
};
struct SeCache {
  Tensor x;
  Tensor pooled;  // (N, C, 1, 1)
  Tensor hidden;  // post-ReLU (N, C/r, 1, 1)
  Tensor gate;    // (N, C, 1, 1), in (0,1)
};
Tensor se_block(const Tensor& x, const SeWeights& p, int reduction, SeCache* cache = nullptr);
Tensor se_block_backward(const SeWeights& p, const SeCache& cache, const Tensor& dy,
                         const SeGrads& grads);

/// y = ReLU(x + conv3(ReLU(conv2(ReLU(conv1(x)))))), 3x3 kernels, stride 1, pad 1.
using ResidualWeights = std::array<ConvWeights, 3>;
using ResidualGrads = std::array<ConvGrads, 3>;
struct ResidualCache {
  Tensor x;
  Tensor a1;
  Tensor a2;
  Tensor y;
};
Tensor residual_block(const Tensor& x, const ResidualWeights& p, ResidualCache* cache = nullptr);
Tensor residual_block_backward(const ResidualWeights& p, const ResidualCache& cache,
                               const Tensor& dy, const ResidualGrads& grads, bool need_dx = true);

/// Per-channel standardization over batch and spatial positions using the
/// population variance: (x - mean) / sqrt(var + eps).
struct WhitenCache {
  Tensor y;
  std::vector<double> inv_std;
};
Tensor whiten(const Tensor& x, double eps, WhitenCache* cache = nullptr);
Tensor whiten_backward(const WhitenCache& cache, const Tensor& dy);

// Cosine similarity of each flattened batch item, averaged over the batch.
// A zero-norm operand contributes 0.
double cosine_sim(const Tensor& a, const Tensor& b);
// d cosine_sim / d b, scaled by `scale`.
Tensor cosine_sim_grad_b(const Tensor& a, const Tensor& b, double scale = 1.0);

/// Structural similarity: 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, dynamic range 1, valid positions only, averaged over batch,
/// bands and positions. Images smaller than 11 pixels in a dimension use
/// the largest odd window that fits.
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
double ssim(const Tensor& a, const Tensor& b);
double ssim(const HsiCube& a, const HsiCube& b);
// d ssim(a, b) / d b, scaled by `scale`.
Tensor ssim_grad_b(const Tensor& a, const Tensor& b, double scale = 1.0);

}  // namespace rebelhad
