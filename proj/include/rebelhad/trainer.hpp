#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rebelhad/detector.hpp"
#include "rebelhad/hsidata.hpp"
#include "rebelhad/losses.hpp"
#include "rebelhad/model_io.hpp"
#include "rebelhad/networks.hpp"

namespace rebelhad {

// Loss names accepted in TrainConfig::enabled_losses.
inline const std::set<std::string> kStage1Losses = {"sim", "mse", "z"};
inline const std::set<std::string> kStage2Losses = {"cc", "cos", "var", "recon"};

struct TrainConfig {
  double lr = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.95;
  int batch = 16;
  int epochs = 60;
  uint64_t seed = 0;
  Stage1Weights stage1;
  Stage2Weights stage2;
  NetworkWidths widths;
  std::set<std::string> enabled_losses = {"sim", "mse", "z", "cc", "cos", "var", "recon"};

  bool enabled(const std::string& loss) const { return enabled_losses.contains(loss); }
};

// Throws RangeError on out-of-range fields or unknown loss names.
void validate(const TrainConfig& cfg);
nlohmann::json to_json(const TrainConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

struct EpochRecord {
  int epoch = 0;
  double total = 0.0;
  std::vector<std::pair<std::string, double>> components;  // unweighted, batch-averaged
  double seconds = 0.0;
  double param_norm = 0.0;  // L2 norm of all trainable parameters
  long steps = 0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::string to_csv() const;
};

struct Stage1Result {
  SpectralStageModel model;
  SpeFen fen;
  TrainLog log;
  long steps = 0;
};

struct Stage2Result {
  SpatialModel model;
  TrainLog log;
  long steps = 0;
};

// Throws ShapeError/RangeError for an empty corpus, mixed dimensions or
// spatial sizes not divisible by 4.
Stage1Result train_stage1(std::span<const HsiCube> corpus, const TrainConfig& cfg);
Stage2Result train_stage2(std::span<const HsiCube> corpus, const SpeFen& teacher, const TrainConfig& cfg);

// Mean over scenes of |cosine_sim(F_spe, F_spa)|.
double mean_abs_cosine(std::span<const HsiCube> corpus, const SpeFen& teacher, const SpaFen& student);

enum class Fusion { none, add, mult };
Fusion parse_fusion(std::string_view name);
std::string_view fusion_name(Fusion f);

// none: rx(H + F_spe); add: rx(H + F_spa + F_spe) with F_spa = 0 when no
// spatial model is given; mult: product of normalized rx(H + F_spa) and
// rx(H + F_spe). A null teacher yields plain rx(H).
ScoreMap detect_scene(const HsiCube& cube, const SpeFen* teacher, const SpatialModel* spatial, Fusion fusion);

struct LabeledScene {
  HsiCube cube;
  GroundTruthMask truth;
};

struct AblationRow {
  std::set<std::string> losses;
  double mauc = 0.0;
};

enum class AblationStage { spectral, spatial };

// Named grids mirroring the two loss ablation tables.
std::vector<std::set<std::string>> stage1_ablation_grid();
std::vector<std::set<std::string>> stage2_ablation_grid();
// "z;mse+sim;..." -> sets. Throws RangeError on unknown names.
std::vector<std::set<std::string>> parse_grid(std::string_view text);

// Spectral rows train Stage 1 with the row's losses and score with
// fusion none. Spatial rows share one fully-trained teacher and score with
// `fusion`. One row per grid entry, duplicates kept.
std::vector<AblationRow> run_ablation(std::span<const HsiCube> corpus, std::span<const LabeledScene> test,
                                      const TrainConfig& cfg, std::span<const std::set<std::string>> grid,
                                      AblationStage stage, Fusion fusion = Fusion::mult);
std::string ablation_csv(std::span<const AblationRow> rows, AblationStage stage);

}  // namespace rebelhad
