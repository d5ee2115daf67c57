#include "rebelhad/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "rebelhad/error.hpp"

namespace rebelhad {

namespace {

struct Counts {
  uint64_t pos = 0;
  uint64_t neg = 0;
};

Counts count_classes(std::span<const double> scores, std::span<const uint8_t> labels) {
  if (scores.size() != labels.size()) throw ShapeError("auc: scores and labels differ in length");
  Counts c;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw NumericalError("auc: non-finite score");
    (labels[i] ? c.pos : c.neg) += 1;
  }
  if (c.pos == 0 || c.neg == 0) throw RangeError("auc: both classes must be present");
  return c;
}

// Indices ordered by decreasing score.
std::vector<size_t> descending_order(std::span<const double> scores) {
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });
  return order;
}

void require_mask(const ScoreMap& s, const GroundTruthMask& t) {
  if (s.height != t.height || s.width != t.width) throw ShapeError("score map and mask differ in size");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double auc(std::span<const double> scores, std::span<const uint8_t> labels) {
  const Counts c = count_classes(scores, labels);
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  // Twice the Mann-Whitney statistic, kept integral.
  uint64_t twice_wins = 0, neg_below = 0;
  for (size_t i = 0; i < order.size();) {
    size_t j = i;
    uint64_t p = 0, n = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? p : n) += 1;
      ++j;
    }
    twice_wins += 2 * p * neg_below + p * n;
    neg_below += n;
    i = j;
  }
  return static_cast<double>(twice_wins) / (2.0 * static_cast<double>(c.pos) * static_cast<double>(c.neg));
}

double auc(const ScoreMap& scores, const GroundTruthMask& truth) {
  require_mask(scores, truth);
  return auc(scores.scores, truth.labels);
}

std::vector<RocPoint> roc(std::span<const double> scores, std::span<const uint8_t> labels) {
  const Counts c = count_classes(scores, labels);
  const std::vector<size_t> order = descending_order(scores);
  std::vector<RocPoint> curve;
  curve.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  uint64_t tp = 0, fp = 0;
  for (size_t i = 0; i < order.size();) {
    const double t = scores[order[i]];
    while (i < order.size() && scores[order[i]] == t) {
      (labels[order[i]] ? tp : fp) += 1;
      ++i;
    }
    curve.push_back({t, static_cast<double>(fp) / static_cast<double>(c.neg),
                     static_cast<double>(tp) / static_cast<double>(c.pos)});
  }
  return curve;
}

std::vector<RocPoint> roc(const ScoreMap& scores, const GroundTruthMask& truth) {
  require_mask(scores, truth);
  return roc(scores.scores, truth.labels);
}

double trapezoid_area(std::span<const RocPoint> curve) {
  double area = 0.0;
  for (size_t i = 1; i < curve.size(); ++i) {
    area += (curve[i].pf - curve[i - 1].pf) * (curve[i].pd + curve[i - 1].pd) * 0.5;
  }
  return area;
}

double mauc(std::span<const double> aucs) {
  if (aucs.empty()) throw RangeError("mauc: empty list");
  return std::accumulate(aucs.begin(), aucs.end(), 0.0) / static_cast<double>(aucs.size());
}

double mauc(std::span<const SceneResult> scenes) {
  std::vector<double> v;
  v.reserve(scenes.size());
  for (const auto& s : scenes) v.push_back(s.auc);
  return mauc(v);
}

std::string report_csv(const EvalReport& report) {
  std::string out = "scene_id,auc,seconds\n";
  for (const auto& s : report.scenes) out += s.scene_id + "," + fmt(s.auc) + "," + fmt(s.seconds) + "\n";
  out += "mAUC," + fmt(report.mauc) + ",\n";
  return out;
}

std::string roc_csv(std::span<const RocPoint> curve) {
  std::string out = "threshold,pf,pd\n";
  for (const auto& p : curve) {
    out += (std::isinf(p.threshold) ? std::string("inf") : fmt(p.threshold)) + "," + fmt(p.pf) + "," + fmt(p.pd) + "\n";
  }
  return out;
}

SymmetricEigen jacobi_eigen(const Eigen::MatrixXd& input, int max_sweeps) {
  const Eigen::Index n = input.rows();
  if (n != input.cols()) throw ShapeError("jacobi_eigen: matrix must be square");
  Eigen::MatrixXd a = 0.5 * (input + input.transpose());
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  SymmetricEigen out;
  const double scale = std::max(a.norm(), std::numeric_limits<double>::min());
  for (; out.sweeps < max_sweeps; ++out.sweeps) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    }
    if (std::sqrt(off) <= 1e-15 * scale) break;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<Eigen::Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) { return a(i, i) > a(j, j); });
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index src = order[static_cast<size_t>(i)];
    out.values[i] = a(src, src);
    Eigen::VectorXd col = v.col(src);
    Eigen::Index arg = 0;
    col.cwiseAbs().maxCoeff(&arg);
    if (col[arg] < 0.0) col = -col;
    out.vectors.col(i) = col;
  }
  return out;
}

PcaResult pca_diag(const HsiCube& cube, int k) {
  if (k < 1) throw RangeError("pca_diag: k must be >= 1");
  const auto pixels = static_cast<Eigen::Index>(cube.pixels());
  if (pixels < k || cube.bands() < k) throw ShapeError("pca_diag: need at least k pixels and k bands");
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const RowMat x = Eigen::Map<const RowMat>(cube.data().data(), cube.bands(), pixels);
  const Eigen::VectorXd mean = x.rowwise().sum() / static_cast<double>(pixels);
  const Eigen::MatrixXd centered = x.colwise() - mean;
  const Eigen::MatrixXd cov = centered * centered.transpose() / static_cast<double>(pixels);
  const SymmetricEigen eig = jacobi_eigen(cov);

  const double tol = 1e-12 * std::max(1.0, std::fabs(eig.values[0]));
  int rank = 0;
  while (rank < eig.values.size() && eig.values[rank] > tol) ++rank;
  const int kept = std::min(k, rank);
  PcaResult out;
  out.requested = k;
  out.degenerate = kept < k;
  out.eigenvalues = eig.values.head(kept);
  out.components = eig.vectors.leftCols(kept);
  out.projections = centered.transpose() * out.components;
  return out;
}

std::string pca_csv(const PcaResult& pca, const GroundTruthMask& truth) {
  if (static_cast<size_t>(pca.projections.rows()) != truth.labels.size()) {
    throw ShapeError("pca_csv: mask size does not match projected pixels");
  }
  std::string out;
  if (pca.degenerate) {
    out += "# warning: rank-deficient, " + std::to_string(pca.projections.cols()) + " of " +
           std::to_string(pca.requested) + " components\n";
  }
  for (Eigen::Index j = 0; j < pca.projections.cols(); ++j) out += "pc" + std::to_string(j + 1) + ",";
  out += "label\n";
  for (Eigen::Index i = 0; i < pca.projections.rows(); ++i) {
    for (Eigen::Index j = 0; j < pca.projections.cols(); ++j) out += fmt(pca.projections(i, j)) + ",";
    out += std::to_string(truth.labels[static_cast<size_t>(i)]) + "\n";
  }
  return out;
}

}  // namespace rebelhad
