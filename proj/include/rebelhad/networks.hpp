#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "rebelhad/hsidata.hpp"
#include "rebelhad/ops.hpp"
#include "rebelhad/params.hpp"

namespace rebelhad {

/// Channel widths of the desk-scale networks.
struct NetworkWidths {
  int c1 = 16;  // encoder level 1 (full resolution)
  int c2 = 32;  // level 2 (1/2)
  int c3 = 64;  // level 3 (1/4)
  int ds = 32;  // spatial backbone output
  bool operator==(const NetworkWidths&) const = default;
};

inline constexpr int kSpatialScales[3] = {1, 2, 4};
inline constexpr int kSeReduction = 4;
inline constexpr int kCompressHidden = 8;

// ---------------------------------------------------------------------------
// Stage 1: reverse-distillation encoder/decoder with the spectral alignment
// head. Parameter names:
//   cwl_enc            1x1  B -> c1            trainable
//   enc1.block{0,1}    residual at c1          frozen
//   enc2.down, enc2.block0  3x3/2 c1 -> c2 + residual   frozen
//   enc3.down, enc3.block0  3x3/2 c2 -> c3 + residual   frozen
//   mffm.down1a, mffm.down1b, mffm.down2, mffm.fuse     trainable
//   dec3.block0, dec2.up, dec2.block0, dec1.up, dec1.block0   trainable
//   cwl_dec            1x1 c1 -> B             trainable
//   fpl                1x1 c1 -> B (shared)    trainable
//   zcl                1x1 B -> 1              trainable
// ---------------------------------------------------------------------------
struct SpectralStageModel {
  int bands = 0;
  NetworkWidths widths;
  uint64_t seed = 0;
  ParamTree params;
};

SpectralStageModel make_spectral_model(int bands, uint64_t seed, NetworkWidths widths = {});

struct SpectralTrace {
  Tensor input;
  Tensor x1;  // cwl_enc output
  ResidualCache enc1a, enc1b, enc2, enc3;
  Tensor enc2_down, enc3_down;  // post-ReLU strided conv outputs
  std::array<Tensor, 3> enc;    // f_E^1..3
  Tensor m1a, m1b, m2, cat;     // MFFM internals
  Tensor phi;
  ResidualCache dec3, dec2, dec1;
  Tensor up2, up1;              // transposed-conv outputs
  std::array<Tensor, 3> dec;    // g_D^1..3 (index 0 = level 1)
  Tensor recon;                 // H_R
  Tensor enc_proj, dec_proj;    // f_E^P, g_D^P
  Tensor diff;                  // f_E^P - g_D^P
  Tensor o;                     // ZCL output, one channel
};

SpectralTrace spectral_forward(const SpectralStageModel& model, const Tensor& h);

/// Upstream gradients for spectral_backward; empty tensors contribute nothing.
struct SpectralUpstream {
  std::array<Tensor, 3> d_enc;
  std::array<Tensor, 3> d_dec;
  Tensor d_recon;
  Tensor d_o;
};

// Accumulates parameter gradients of every non-frozen entry.
void spectral_backward(SpectralStageModel& model, const SpectralTrace& trace,
                       const SpectralUpstream& up);

/// Pruned spectral enhancement network: cwl_enc -> enc1 -> fpl.
struct SpeFen {
  int bands = 0;
  NetworkWidths widths;
  uint64_t seed = 0;
  ParamTree params;
};

SpeFen prune_to_spe_fen(const SpectralStageModel& model);
Tensor spe_fen_forward(const SpeFen& fen, const Tensor& h);
Tensor spe_fen_forward(const SpeFen& fen, const HsiCube& h);

// ---------------------------------------------------------------------------
// Stage 2 student. Parameter names:
//   compress1 (1x1 B -> 8), compress2 (1x1 8 -> 3)          trainable
//   bb.stem1 (3x3/2 3 -> c1), bb.block1, bb.stem2 (3x3/2 c1 -> ds), bb.block2   frozen
//   spp.fuse (1x1 3*ds -> ds)                                trainable
//   se.squeeze, se.excite (reduction 4)                      trainable
//   proj (1x1 ds -> B, after bilinear resize to H x W)       trainable
// ---------------------------------------------------------------------------
struct SpaFen {
  int bands = 0;
  NetworkWidths widths;
  uint64_t seed = 0;
  ParamTree params;
};

SpaFen make_spa_fen(int bands, uint64_t seed, NetworkWidths widths = {});

struct SpaTrace {
  Tensor input;
  Tensor a1;      // ReLU(compress1)
  Tensor h3c;     // sigmoid(compress2), three channels
  Tensor s1;      // ReLU(stem1)
  ResidualCache block1;
  Tensor s2;      // ReLU(stem2)
  ResidualCache block2;
  Tensor f_res;
  std::array<Tensor, 3> pooled;
  std::array<Tensor, 3> upsampled;  // f_avp^s
  Tensor cat;     // f_cat
  Tensor fuse;    // f_fuse
  SeCache se;
  Tensor se_out;
  Tensor up;      // resized to H x W
  Tensor out;     // F_spa
};

SpaTrace spa_fen_trace(const SpaFen& fen, const Tensor& h);
Tensor spa_fen_forward(const SpaFen& fen, const Tensor& h);
Tensor spa_fen_forward(const SpaFen& fen, const HsiCube& h);
void spa_fen_backward(SpaFen& fen, const SpaTrace& trace, const Tensor& d_out);

/// Feature restoration network: [SE -> residual] x 2 at B channels, then 1x1 B -> B.
/// Names: frn.se{0,1}.{squeeze,excite}, frn.res{0,1}, frn.out.
struct Frn {
  int bands = 0;
  int reduction = kSeReduction;
  uint64_t seed = 0;
  ParamTree params;
};

// SE reduction used by the FRN: the largest divisor of `bands` not above 4.
int frn_reduction(int bands);
Frn make_frn(int bands, uint64_t seed);

struct FrnTrace {
  std::array<SeCache, 2> se;
  std::array<ResidualCache, 2> res;
  Tensor last;
  Tensor out;
};

FrnTrace frn_trace(const Frn& frn, const Tensor& fused);
Tensor frn_forward(const Frn& frn, const Tensor& fused);
// Returns the gradient with respect to the fused input.
Tensor frn_backward(Frn& frn, const FrnTrace& trace, const Tensor& d_out);

}  // namespace rebelhad
