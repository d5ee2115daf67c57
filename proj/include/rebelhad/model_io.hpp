#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "rebelhad/networks.hpp"
#include "rebelhad/params.hpp"

// RSM1 model files: one JSON header line
//   {"format":"RSM1","stage":...,"B":...,"widths":{...},"seed":...,
//    "entries":[{"name":...,"shape":[n,c,h,w],"frozen":...}, ...]}
// followed by '\n' and the float64 little-endian payloads in entry order.

namespace rebelhad {

inline constexpr std::string_view kStageSpectral = "spectral";
inline constexpr std::string_view kStageSpatial = "spatial";

struct ModelFile {
  std::string stage;
  int bands = 0;
  NetworkWidths widths;
  uint64_t seed = 0;
  ParamTree params;
};

std::string encode_model(const ModelFile& model);
// Throws FormatError on malformed headers or payload length mismatch.
ModelFile decode_model(std::string_view bytes);

void save_model(const ModelFile& model, const std::filesystem::path& path);
// Throws ModelError when the stored stage differs from `expected_stage`.
ModelFile load_model(const std::filesystem::path& path, std::string_view expected_stage);

/// Stage-2 networks stored together.
struct SpatialModel {
  SpaFen spa;
  Frn frn;
};

ModelFile to_model_file(const SpeFen& fen);
ModelFile to_model_file(const SpatialModel& model);
SpeFen spe_fen_from(const ModelFile& file);
SpatialModel spatial_from(const ModelFile& file);

void save_spe_fen(const SpeFen& fen, const std::filesystem::path& path);
SpeFen load_spe_fen(const std::filesystem::path& path);
void save_spatial(const SpatialModel& model, const std::filesystem::path& path);
SpatialModel load_spatial(const std::filesystem::path& path);

}  // namespace rebelhad
