#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rebelhad/tensor.hpp"

namespace rebelhad {

/// Height x width x bands radiance cube, stored band-sequential: one full
/// row-major height*width plane per band. Values are held in double; the
/// HCF1 file payload is float32.
class HsiCube {
 public:
  HsiCube() = default;
  HsiCube(int height, int width, int bands, double fill = 0.0);
  HsiCube(int height, int width, int bands, std::vector<double> data);

  int height() const { return height_; }
  int width() const { return width_; }
  int bands() const { return bands_; }
  size_t pixels() const { return static_cast<size_t>(height_) * width_; }
  size_t size() const { return data_.size(); }

  double& at(int band, int y, int x) { return data_[(band * pixels()) + y * width_ + x]; }
  double at(int band, int y, int x) const { return data_[(band * pixels()) + y * width_ + x]; }
  // Value of `band` at flat pixel index p = y*width + x.
  double& at(int band, size_t p) { return data_[band * pixels() + p]; }
  double at(int band, size_t p) const { return data_[band * pixels() + p]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_dims(const HsiCube& o) const {
    return height_ == o.height_ && width_ == o.width_ && bands_ == o.bands_;
  }
  bool operator==(const HsiCube& o) const = default;

  // (1, bands, height, width) tensor with the same layout.
  Tensor to_tensor() const;
  // Builds a cube from sample `index` of an NCHW tensor.
  static HsiCube from_tensor(const Tensor& t, int index = 0);

 private:
  int height_ = 0;
  int width_ = 0;
  int bands_ = 0;
  std::vector<double> data_;
};

/// One label per pixel, 1 = anomaly.
struct GroundTruthMask {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> labels;

  GroundTruthMask() = default;
  GroundTruthMask(int h, int w) : height(h), width(w), labels(static_cast<size_t>(h) * w, 0) {}

  size_t positives() const;
  bool operator==(const GroundTruthMask& o) const = default;
};

/// Parameters of one synthetic scene.
struct SceneSpec {
  int height = 64;
  int width = 64;
  int bands = 20;
  int endmembers = 4;
  int anomaly_count = 0;
  int anomaly_size = 3;       // pixels per side
  double anomaly_contrast = 0.0;
  double noise_sigma = 0.01;
  int smoothness = 4;         // box-blur radius of abundance fields
  uint64_t seed = 0;
};

HsiCube read_cube(const std::filesystem::path& path);
void write_cube(const HsiCube& cube, const std::filesystem::path& path);
// Serialized HCF1 bytes; exposed for byte-level checks.
std::string encode_cube(const HsiCube& cube);
HsiCube decode_cube(std::string_view bytes);

GroundTruthMask read_mask(const std::filesystem::path& path);
void write_mask(const GroundTruthMask& mask, const std::filesystem::path& path);

HsiCube select_bands(const HsiCube& cube, int first_k);

// Global min-max scaling to [0,1]; a constant cube maps to zeros.
HsiCube normalize(const HsiCube& cube);

// Background mixture scene plus implanted square anomalies. Output values
// are rounded to float32 precision so that writing and re-reading the
// cube reproduces it exactly.
std::pair<HsiCube, GroundTruthMask> synth_scene(const SceneSpec& spec);

}  // namespace rebelhad
