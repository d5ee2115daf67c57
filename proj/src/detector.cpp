#include "rebelhad/detector.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rebelhad/adam.hpp"
#include "rebelhad/error.hpp"
#include "rebelhad/io.hpp"
#include "rebelhad/ops.hpp"
#include "rebelhad/params.hpp"
#include "rebelhad/rng.hpp"

namespace rebelhad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Bands x pixels copy of the band-sequential payload. Eigen-owned storage
// keeps the vectorized reductions independent of the source alignment.
RowMat band_matrix(const HsiCube& cube) {
  return Eigen::Map<const RowMat>(cube.data().data(), cube.bands(), static_cast<Eigen::Index>(cube.pixels()));
}

BackgroundStats stats_of(const RowMat& x) {
  const double n = static_cast<double>(x.cols());
  BackgroundStats s;
  s.mean = x.rowwise().sum() / n;
  const RowMat centered = x.colwise() - s.mean;
  s.cov = (centered * centered.transpose()) / n;
  s.cov = 0.5 * (s.cov + s.cov.transpose());
  s.epsilon = std::max(kRidgeScale * s.cov.trace() / static_cast<double>(x.rows()), kRidgeFloor);
  Eigen::MatrixXd reg = s.cov;
  reg.diagonal().array() += s.epsilon;
  s.chol.compute(reg);
  if (s.chol.info() != Eigen::Success) {
    throw NumericalError("rx: degenerate input, regularized covariance is not positive definite");
  }
  return s;
}

void require_same_dims(const ScoreMap& a, const ScoreMap& b, const char* what) {
  if (a.height != b.height || a.width != b.width) {
    throw ShapeError(std::string(what) + ": score maps differ in size");
  }
}

HsiCube add_feature(const HsiCube& cube, const Tensor& f, const char* what) {
  if (f.n() != 1 || f.c() != cube.bands() || f.h() != cube.height() || f.w() != cube.width()) {
    throw ShapeError(std::string(what) + ": feature " + f.shape_string() + " does not match cube " +
                     std::to_string(cube.height()) + "x" + std::to_string(cube.width()) + "x" +
                     std::to_string(cube.bands()));
  }
  HsiCube out = cube;
  for (size_t i = 0; i < out.size(); ++i) out.data()[i] += f[i];
  return out;
}

}  // namespace

BackgroundStats background_stats(const HsiCube& cube) {
  if (cube.bands() < 1 || cube.pixels() < 2) throw ShapeError("rx: need at least 2 pixels and 1 band");
  return stats_of(band_matrix(cube));
}

ScoreMap rx(const HsiCube& cube) {
  if (cube.bands() < 1 || cube.pixels() < 2) throw ShapeError("rx: need at least 2 pixels and 1 band");
  const RowMat x = band_matrix(cube);
  const BackgroundStats s = stats_of(x);
  Eigen::MatrixXd y = x.colwise() - s.mean;
  s.chol.matrixL().solveInPlace(y);
  ScoreMap out(cube.height(), cube.width());
  const Eigen::VectorXd d = y.colwise().squaredNorm().transpose();
  for (size_t p = 0; p < out.size(); ++p) {
    if (!std::isfinite(d[static_cast<Eigen::Index>(p)])) throw NumericalError("rx: non-finite score");
    out.scores[p] = d[static_cast<Eigen::Index>(p)];
  }
  return out;
}

ScoreMap rx_enhanced(const HsiCube& cube, const Tensor& f) { return rx(add_feature(cube, f, "rx_enhanced")); }

ScoreMap min_max_normalize(const ScoreMap& s) {
  ScoreMap out(s.height, s.width);
  if (s.scores.empty()) return out;
  const auto [lo, hi] = std::minmax_element(s.scores.begin(), s.scores.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) return out;
  for (size_t i = 0; i < s.size(); ++i) out.scores[i] = (s.scores[i] - *lo) / range;
  return out;
}

ScoreMap fuse_multiplicative(const ScoreMap& s_spa, const ScoreMap& s_spe) {
  require_same_dims(s_spa, s_spe, "fuse_multiplicative");
  const ScoreMap a = min_max_normalize(s_spa);
  const ScoreMap b = min_max_normalize(s_spe);
  ScoreMap out(a.height, a.width);
  for (size_t i = 0; i < out.size(); ++i) out.scores[i] = a.scores[i] * b.scores[i];
  return out;
}

ScoreMap fuse_additive(const HsiCube& cube, const Tensor& f_spa, const Tensor& f_spe) {
  HsiCube sum = add_feature(cube, f_spe, "fuse_additive");
  if (!f_spa.empty()) sum = add_feature(sum, f_spa, "fuse_additive");
  return rx(sum);
}

ScoreMap ae_baseline(const HsiCube& cube, const AeOptions& options) {
  if (cube.bands() < 1) throw ShapeError("ae_baseline: need at least one band");
  if (options.iters < 0) throw RangeError("ae_baseline: iters must be >= 0");
  SplitMix64 rng(derive_seed(options.seed, 0x4145424153454c4eULL));
  ParamTree params;
  std::vector<int> widths = {cube.bands()};
  widths.insert(widths.end(), std::begin(kAeWidths), std::end(kAeWidths));
  widths.push_back(cube.bands());
  const int layers = static_cast<int>(widths.size()) - 1;
  for (int l = 0; l < layers; ++l) {
    add_conv(params, "ae" + std::to_string(l), widths[l + 1], widths[l], 1, false, rng);
  }
  const Tensor x = cube.to_tensor();

  auto forward = [&](std::vector<Tensor>& acts) {
    acts.assign(1, x);
    for (int l = 0; l < layers; ++l) {
      const std::string name = "ae" + std::to_string(l);
      Tensor y = conv2d(acts.back(), params.value(name + ".w"), params.value(name + ".b"), 1, 0);
      if (l + 1 < layers) y = relu(y);
      acts.push_back(std::move(y));
    }
  };

  AdamState adam(params, options.lr, 0.9, 0.999);
  std::vector<Tensor> acts;
  const double count = static_cast<double>(x.size());
  for (int it = 0; it < options.iters; ++it) {
    forward(acts);
    Tensor d(x.shape());
    for (size_t i = 0; i < x.size(); ++i) d[i] = 2.0 * (acts.back()[i] - x[i]) / count;
    for (int l = layers - 1; l >= 0; --l) {
      const std::string name = "ae" + std::to_string(l);
      if (l + 1 < layers) d = relu_backward(acts[l + 1], d);
      d = conv2d_backward(acts[l], params.value(name + ".w"), d, 1, 0,
                          {params.grad(name + ".w"), params.grad(name + ".b")}, l > 0);
    }
    if (!params.grads_finite()) throw NumericalError("ae_baseline: non-finite gradient");
    adam_step(params, adam);
  }
  forward(acts);
  const Tensor& r = acts.back();
  ScoreMap out(cube.height(), cube.width());
  const size_t plane = cube.pixels();
  for (int b = 0; b < cube.bands(); ++b) {
    for (size_t p = 0; p < plane; ++p) {
      const double e = r[b * plane + p] - x[b * plane + p];
      out.scores[p] += e * e;
    }
  }
  return out;
}

void write_score_map(const ScoreMap& s, const std::filesystem::path& path) {
  HsiCube cube(s.height, s.width, 1, s.scores);
  write_cube(cube, path);
}

ScoreMap read_score_map(const std::filesystem::path& path) {
  const HsiCube cube = read_cube(path);
  if (cube.bands() != 1) throw FormatError(path.string() + ": score map must have exactly one band");
  ScoreMap s(cube.height(), cube.width());
  s.scores = cube.data();
  return s;
}

void write_score_pgm(const ScoreMap& s, const std::filesystem::path& path) {
  const ScoreMap n = min_max_normalize(s);
  std::string out = "P5\n" + std::to_string(s.width) + " " + std::to_string(s.height) + "\n255\n";
  for (double v : n.scores) out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
  write_file_atomic(path, out);
}

}  // namespace rebelhad
