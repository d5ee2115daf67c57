#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "rebelhad/hsidata.hpp"
#include "rebelhad/tensor.hpp"

namespace rebelhad {

/// Per-pixel anomaly scores, row-major.
struct ScoreMap {
  int height = 0;
  int width = 0;
  std::vector<double> scores;

  ScoreMap() = default;
  ScoreMap(int h, int w) : height(h), width(w), scores(static_cast<size_t>(h) * w, 0.0) {}
  size_t size() const { return scores.size(); }
  bool operator==(const ScoreMap&) const = default;
};

/// Global background statistics of a cube.
struct BackgroundStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;      // population covariance
  double epsilon = 0.0;     // ridge added to the diagonal
  Eigen::LLT<Eigen::MatrixXd> chol;  // of cov + epsilon * I
};

inline constexpr double kRidgeScale = 1e-6;
inline constexpr double kRidgeFloor = 1e-12;

// Throws NumericalError if the regularized covariance is not positive definite.
BackgroundStats background_stats(const HsiCube& cube);

// Mahalanobis distance of every pixel from the global background.
ScoreMap rx(const HsiCube& cube);
// rx(cube + f); f is (1, B, H, W).
ScoreMap rx_enhanced(const HsiCube& cube, const Tensor& f);

// Min-max scaling to [0,1]; a constant map becomes all zeros.
ScoreMap min_max_normalize(const ScoreMap& s);
ScoreMap fuse_multiplicative(const ScoreMap& s_spa, const ScoreMap& s_spe);
// rx(cube + f_spa + f_spe). An empty f_spa is treated as zero.
ScoreMap fuse_additive(const HsiCube& cube, const Tensor& f_spa, const Tensor& f_spe);

struct AeOptions {
  int iters = 500;
  double lr = 0.01;
  uint64_t seed = 0;
};

inline constexpr int kAeWidths[] = {32, 16, 8, 16, 32};

// Per-scene 1x1-conv autoencoder; score = squared reconstruction error
// summed over bands.
ScoreMap ae_baseline(const HsiCube& cube, const AeOptions& options);

// HCF1 with one band.
void write_score_map(const ScoreMap& s, const std::filesystem::path& path);
ScoreMap read_score_map(const std::filesystem::path& path);
// 8-bit PGM after min-max scaling.
void write_score_pgm(const ScoreMap& s, const std::filesystem::path& path);

}  // namespace rebelhad
