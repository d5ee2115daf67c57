#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rebelhad/detector.hpp"
#include "rebelhad/hsidata.hpp"

namespace rebelhad {

struct RocPoint {
  double threshold = 0.0;  // scores >= threshold are declared anomalous
  double pf = 0.0;         // false alarm rate
  double pd = 0.0;         // detection probability
};

// Rank-based (Mann-Whitney) AUC, ties credited 0.5. Throws RangeError when
// either class is absent.
double auc(std::span<const double> scores, std::span<const uint8_t> labels);
double auc(const ScoreMap& scores, const GroundTruthMask& truth);

// (0,0) at threshold +inf, then one point per distinct score in
// decreasing order; the last point is (1,1).
std::vector<RocPoint> roc(std::span<const double> scores, std::span<const uint8_t> labels);
std::vector<RocPoint> roc(const ScoreMap& scores, const GroundTruthMask& truth);
double trapezoid_area(std::span<const RocPoint> curve);

struct SceneResult {
  std::string scene_id;
  double auc = 0.0;
  double seconds = 0.0;
  std::vector<RocPoint> roc;
};

struct EvalReport {
  std::vector<SceneResult> scenes;
  double mauc = 0.0;
};

// Arithmetic mean; throws RangeError on an empty list.
double mauc(std::span<const double> aucs);
double mauc(std::span<const SceneResult> scenes);

// "scene_id,auc,seconds" rows and a final "mAUC,<value>," footer.
std::string report_csv(const EvalReport& report);
std::string roc_csv(std::span<const RocPoint> curve);

struct SymmetricEigen {
  Eigen::VectorXd values;   // nonincreasing
  Eigen::MatrixXd vectors;  // columns, largest-magnitude component positive
  int sweeps = 0;
};

// Cyclic Jacobi rotations until the off-diagonal mass is negligible.
SymmetricEigen jacobi_eigen(const Eigen::MatrixXd& a, int max_sweeps = 100);

struct PcaResult {
  Eigen::VectorXd eigenvalues;  // top components, nonincreasing
  Eigen::MatrixXd components;   // bands x k
  Eigen::MatrixXd projections;  // pixels x k
  int requested = 3;
  bool degenerate = false;      // fewer than `requested` nonzero eigenvalues
};

PcaResult pca_diag(const HsiCube& cube, int k = 3);
// Header "pc1,...,pck,label" (prefixed by "# warning: rank-deficient" when
// degenerate), then one row per pixel.
std::string pca_csv(const PcaResult& pca, const GroundTruthMask& truth);

}  // namespace rebelhad
