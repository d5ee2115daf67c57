#include "rebelhad/networks.hpp"

#include <algorithm>
#include <string>

#include "rebelhad/error.hpp"
#include "rebelhad/rng.hpp"

namespace rebelhad {

namespace {

constexpr uint64_t kTagSpectral = 0x5350454354524131ULL;
constexpr uint64_t kTagSpatialHead = 0x5350415449414c31ULL;
constexpr uint64_t kTagBackbone = 0x4241434b424f4e45ULL;
constexpr uint64_t kTagFrn = 0x46524e3030303031ULL;

ConvWeights cw(const ParamTree& t, const std::string& name) {
  return {&t.value(name + ".w"), &t.value(name + ".b")};
}

ConvGrads cg(ParamTree& t, const std::string& name) { return {t.grad(name + ".w"), t.grad(name + ".b")}; }

ResidualWeights rw(const ParamTree& t, const std::string& name) {
  return {cw(t, name + ".conv1"), cw(t, name + ".conv2"), cw(t, name + ".conv3")};
}

ResidualGrads rg(ParamTree& t, const std::string& name) {
  return {cg(t, name + ".conv1"), cg(t, name + ".conv2"), cg(t, name + ".conv3")};
}

SeWeights sw(const ParamTree& t, const std::string& name) {
  return {cw(t, name + ".squeeze"), cw(t, name + ".excite")};
}

SeGrads sg(ParamTree& t, const std::string& name) {
  return {cg(t, name + ".squeeze"), cg(t, name + ".excite")};
}

void add_residual(ParamTree& t, const std::string& name, int channels, bool frozen, SplitMix64& rng) {
  for (const char* conv : {".conv1", ".conv2", ".conv3"}) {
    add_conv(t, name + conv, channels, channels, 3, frozen, rng);
  }
}

void add_se(ParamTree& t, const std::string& name, int channels, int reduction, SplitMix64& rng) {
  add_conv(t, name + ".squeeze", channels / reduction, channels, 1, false, rng);
  add_conv(t, name + ".excite", channels, channels / reduction, 1, false, rng);
}

Tensor conv(const Tensor& x, const ConvWeights& p, int stride, int pad) {
  return conv2d(x, *p.weight, *p.bias, stride, pad);
}

// 1x1 conv, pad 0.
Tensor pw(const ParamTree& t, const std::string& name, const Tensor& x) { return conv(x, cw(t, name), 1, 0); }

// Accumulates `g` into `acc` (moves when acc is empty).
void accumulate(Tensor& acc, Tensor g) {
  if (g.empty()) return;
  if (acc.empty()) {
    acc = std::move(g);
  } else {
    acc += g;
  }
}

void check_input(const Tensor& h, int bands, const char* what, bool need_div4) {
  if (h.c() != bands) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(bands) + " bands, got " +
                     std::to_string(h.c()));
  }
  if (h.h() <= 0 || h.w() <= 0) throw ShapeError(std::string(what) + ": empty input");
  if (need_div4 && (h.h() % 4 != 0 || h.w() % 4 != 0)) {
    throw ShapeError(std::string(what) + ": spatial dims " + std::to_string(h.h()) + "x" +
                     std::to_string(h.w()) + " not divisible by 4");
  }
}

void expect_shape(const Tensor& t, int c, int h, int w, const char* what) {
  if (t.c() != c || t.h() != h || t.w() != w) {
    throw ShapeError(std::string(what) + ": unexpected shape " + t.shape_string());
  }
}

Tensor cube_tensor(const HsiCube& h) { return h.to_tensor(); }

}  // namespace

// ---------------------------------------------------------------------------
// Stage 1
// ---------------------------------------------------------------------------

SpectralStageModel make_spectral_model(int bands, uint64_t seed, NetworkWidths widths) {
  if (bands <= 0) throw RangeError("make_spectral_model: bands must be positive");
  SpectralStageModel m;
  m.bands = bands;
  m.widths = widths;
  m.seed = seed;
  SplitMix64 rng(derive_seed(seed, kTagSpectral));
  const int c1 = widths.c1, c2 = widths.c2, c3 = widths.c3;
  ParamTree& t = m.params;
  add_conv(t, "cwl_enc", c1, bands, 1, false, rng);
  add_residual(t, "enc1.block0", c1, true, rng);
  add_residual(t, "enc1.block1", c1, true, rng);
  add_conv(t, "enc2.down", c2, c1, 3, true, rng);
  add_residual(t, "enc2.block0", c2, true, rng);
  add_conv(t, "enc3.down", c3, c2, 3, true, rng);
  add_residual(t, "enc3.block0", c3, true, rng);
  add_conv(t, "mffm.down1a", c1, c1, 3, false, rng);
  add_conv(t, "mffm.down1b", c1, c1, 3, false, rng);
  add_conv(t, "mffm.down2", c2, c2, 3, false, rng);
  add_conv(t, "mffm.fuse", c3, c1 + c2 + c3, 1, false, rng);
  add_residual(t, "dec3.block0", c3, false, rng);
  add_conv_transpose(t, "dec2.up", c3, c2, 2, 2, false, rng);
  add_residual(t, "dec2.block0", c2, false, rng);
  add_conv_transpose(t, "dec1.up", c2, c1, 2, 2, false, rng);
  add_residual(t, "dec1.block0", c1, false, rng);
  add_conv(t, "cwl_dec", bands, c1, 1, false, rng);
  add_conv(t, "fpl", bands, c1, 1, false, rng);
  add_conv(t, "zcl", 1, bands, 1, false, rng);
  return m;
}

SpectralTrace spectral_forward(const SpectralStageModel& model, const Tensor& h) {
  check_input(h, model.bands, "spectral_forward", true);
  const ParamTree& t = model.params;
  const int H = h.h(), W = h.w();
  const NetworkWidths& wd = model.widths;
  SpectralTrace tr;
  tr.input = h;
  tr.x1 = pw(t, "cwl_enc", h);
  Tensor e = residual_block(tr.x1, rw(t, "enc1.block0"), &tr.enc1a);
  tr.enc[0] = residual_block(e, rw(t, "enc1.block1"), &tr.enc1b);
  tr.enc2_down = relu(conv(tr.enc[0], cw(t, "enc2.down"), 2, 1));
  tr.enc[1] = residual_block(tr.enc2_down, rw(t, "enc2.block0"), &tr.enc2);
  tr.enc3_down = relu(conv(tr.enc[1], cw(t, "enc3.down"), 2, 1));
  tr.enc[2] = residual_block(tr.enc3_down, rw(t, "enc3.block0"), &tr.enc3);
  expect_shape(tr.enc[0], wd.c1, H, W, "f_E^1");
  expect_shape(tr.enc[1], wd.c2, H / 2, W / 2, "f_E^2");
  expect_shape(tr.enc[2], wd.c3, H / 4, W / 4, "f_E^3");

  tr.m1a = relu(conv(tr.enc[0], cw(t, "mffm.down1a"), 2, 1));
  tr.m1b = relu(conv(tr.m1a, cw(t, "mffm.down1b"), 2, 1));
  tr.m2 = relu(conv(tr.enc[1], cw(t, "mffm.down2"), 2, 1));
  const Tensor* parts[] = {&tr.m1b, &tr.m2, &tr.enc[2]};
  tr.cat = concat_channels(parts);
  tr.phi = pw(t, "mffm.fuse", tr.cat);
  expect_shape(tr.phi, wd.c3, H / 4, W / 4, "phi");

  tr.dec[2] = residual_block(tr.phi, rw(t, "dec3.block0"), &tr.dec3);
  tr.up2 = conv2d_transpose(tr.dec[2], t.value("dec2.up.w"), t.value("dec2.up.b"), 2, 0);
  tr.dec[1] = residual_block(tr.up2, rw(t, "dec2.block0"), &tr.dec2);
  tr.up1 = conv2d_transpose(tr.dec[1], t.value("dec1.up.w"), t.value("dec1.up.b"), 2, 0);
  tr.dec[0] = residual_block(tr.up1, rw(t, "dec1.block0"), &tr.dec1);
  expect_shape(tr.dec[2], wd.c3, H / 4, W / 4, "g_D^3");
  expect_shape(tr.dec[1], wd.c2, H / 2, W / 2, "g_D^2");
  expect_shape(tr.dec[0], wd.c1, H, W, "g_D^1");

  tr.recon = pw(t, "cwl_dec", tr.dec[0]);
  tr.enc_proj = pw(t, "fpl", tr.enc[0]);
  tr.dec_proj = pw(t, "fpl", tr.dec[0]);
  tr.diff = tr.enc_proj - tr.dec_proj;
  tr.o = pw(t, "zcl", abs(tr.diff));
  expect_shape(tr.recon, model.bands, H, W, "H_R");
  expect_shape(tr.o, 1, H, W, "O");
  return tr;
}

void spectral_backward(SpectralStageModel& model, const SpectralTrace& tr, const SpectralUpstream& up) {
  ParamTree& t = model.params;
  Tensor d_enc[3], d_dec[3];
  for (int i = 0; i < 3; ++i) {
    if (!up.d_enc[i].empty()) d_enc[i] = up.d_enc[i];
    if (!up.d_dec[i].empty()) d_dec[i] = up.d_dec[i];
  }

  // Spectral alignment head.
  if (!up.d_o.empty()) {
    const Tensor absdiff = abs(tr.diff);
    const Tensor d_abs = conv2d_backward(absdiff, t.value("zcl.w"), up.d_o, 1, 0, cg(t, "zcl"));
    const Tensor d_diff = abs_backward(tr.diff, d_abs);
    accumulate(d_enc[0], conv2d_backward(tr.enc[0], t.value("fpl.w"), d_diff, 1, 0, cg(t, "fpl")));
    accumulate(d_dec[0],
               conv2d_backward(tr.dec[0], t.value("fpl.w"), d_diff * -1.0, 1, 0, cg(t, "fpl")));
  }
  if (!up.d_recon.empty()) {
    accumulate(d_dec[0], conv2d_backward(tr.dec[0], t.value("cwl_dec.w"), up.d_recon, 1, 0, cg(t, "cwl_dec")));
  }

  // Decoder, level 1 up to level 3.
  Tensor d_phi;
  if (!d_dec[0].empty()) {
    const Tensor d_up1 = residual_block_backward(rw(t, "dec1.block0"), tr.dec1, d_dec[0], rg(t, "dec1.block0"));
    accumulate(d_dec[1], conv2d_transpose_backward(tr.dec[1], t.value("dec1.up.w"), d_up1, 2, 0, cg(t, "dec1.up")));
  }
  if (!d_dec[1].empty()) {
    const Tensor d_up2 = residual_block_backward(rw(t, "dec2.block0"), tr.dec2, d_dec[1], rg(t, "dec2.block0"));
    accumulate(d_dec[2], conv2d_transpose_backward(tr.dec[2], t.value("dec2.up.w"), d_up2, 2, 0, cg(t, "dec2.up")));
  }
  if (!d_dec[2].empty()) {
    d_phi = residual_block_backward(rw(t, "dec3.block0"), tr.dec3, d_dec[2], rg(t, "dec3.block0"));
  }

  // MFFM.
  if (!d_phi.empty()) {
    const Tensor d_cat = conv2d_backward(tr.cat, t.value("mffm.fuse.w"), d_phi, 1, 0, cg(t, "mffm.fuse"));
    const int c1 = tr.m1b.c(), c2 = tr.m2.c(), c3 = tr.enc[2].c();
    const int n = d_cat.n(), hw = static_cast<int>(d_cat.plane());
    Tensor d_m1b(n, c1, d_cat.h(), d_cat.w()), d_m2(n, c2, d_cat.h(), d_cat.w()),
        d_f3(n, c3, d_cat.h(), d_cat.w());
    for (int b = 0; b < n; ++b) {
      const double* src = d_cat.sample(b);
      std::copy(src, src + static_cast<size_t>(c1) * hw, d_m1b.sample(b));
      std::copy(src + static_cast<size_t>(c1) * hw, src + static_cast<size_t>(c1 + c2) * hw, d_m2.sample(b));
      std::copy(src + static_cast<size_t>(c1 + c2) * hw, src + static_cast<size_t>(c1 + c2 + c3) * hw,
                d_f3.sample(b));
    }
    const Tensor d_m1a = conv2d_backward(tr.m1a, t.value("mffm.down1b.w"), relu_backward(tr.m1b, d_m1b), 2, 1,
                                         cg(t, "mffm.down1b"));
    accumulate(d_enc[0], conv2d_backward(tr.enc[0], t.value("mffm.down1a.w"), relu_backward(tr.m1a, d_m1a), 2,
                                         1, cg(t, "mffm.down1a")));
    accumulate(d_enc[1], conv2d_backward(tr.enc[1], t.value("mffm.down2.w"), relu_backward(tr.m2, d_m2), 2, 1,
                                         cg(t, "mffm.down2")));
    accumulate(d_enc[2], std::move(d_f3));
  }

  // Encoder: only cwl_enc is trainable, but gradients must pass through the
  // frozen layers to reach it.
  if (!d_enc[2].empty()) {
    const Tensor d = residual_block_backward(rw(t, "enc3.block0"), tr.enc3, d_enc[2], rg(t, "enc3.block0"));
    accumulate(d_enc[1], conv2d_backward(tr.enc[1], t.value("enc3.down.w"), relu_backward(tr.enc3_down, d), 2, 1,
                                         cg(t, "enc3.down")));
  }
  if (!d_enc[1].empty()) {
    const Tensor d = residual_block_backward(rw(t, "enc2.block0"), tr.enc2, d_enc[1], rg(t, "enc2.block0"));
    accumulate(d_enc[0], conv2d_backward(tr.enc[0], t.value("enc2.down.w"), relu_backward(tr.enc2_down, d), 2, 1,
                                         cg(t, "enc2.down")));
  }
  if (!d_enc[0].empty()) {
    Tensor d = residual_block_backward(rw(t, "enc1.block1"), tr.enc1b, d_enc[0], rg(t, "enc1.block1"));
    d = residual_block_backward(rw(t, "enc1.block0"), tr.enc1a, d, rg(t, "enc1.block0"));
    conv2d_backward(tr.input, t.value("cwl_enc.w"), d, 1, 0, cg(t, "cwl_enc"), false);
  }
}

SpeFen prune_to_spe_fen(const SpectralStageModel& model) {
  SpeFen fen;
  fen.bands = model.bands;
  fen.widths = model.widths;
  fen.seed = model.seed;
  for (const ParamEntry& e : model.params.entries()) {
    if (e.name.starts_with("cwl_enc.") || e.name.starts_with("enc1.") || e.name.starts_with("fpl.")) {
      fen.params.add(e.name, e.value, e.frozen);
    }
  }
  return fen;
}

Tensor spe_fen_forward(const SpeFen& fen, const Tensor& h) {
  check_input(h, fen.bands, "spe_fen_forward", false);
  const ParamTree& t = fen.params;
  const Tensor x1 = pw(t, "cwl_enc", h);
  const Tensor a = residual_block(x1, rw(t, "enc1.block0"));
  const Tensor f1 = residual_block(a, rw(t, "enc1.block1"));
  Tensor out = pw(t, "fpl", f1);
  expect_shape(out, fen.bands, h.h(), h.w(), "F_spe");
  return out;
}

Tensor spe_fen_forward(const SpeFen& fen, const HsiCube& h) { return spe_fen_forward(fen, cube_tensor(h)); }

// ---------------------------------------------------------------------------
// Stage 2: spatial enhancement network
// ---------------------------------------------------------------------------

SpaFen make_spa_fen(int bands, uint64_t seed, NetworkWidths widths) {
  if (bands <= 0) throw RangeError("make_spa_fen: bands must be positive");
  if (widths.ds % kSeReduction != 0) throw RangeError("make_spa_fen: ds must be divisible by 4");
  SpaFen f;
  f.bands = bands;
  f.widths = widths;
  f.seed = seed;
  SplitMix64 head(derive_seed(seed, kTagSpatialHead));
  SplitMix64 bb(derive_seed(seed, kTagBackbone));
  ParamTree& t = f.params;
  add_conv(t, "compress1", kCompressHidden, bands, 1, false, head);
  add_conv(t, "compress2", 3, kCompressHidden, 1, false, head);
  add_conv(t, "bb.stem1", widths.c1, 3, 3, true, bb);
  add_residual(t, "bb.block1", widths.c1, true, bb);
  add_conv(t, "bb.stem2", widths.ds, widths.c1, 3, true, bb);
  add_residual(t, "bb.block2", widths.ds, true, bb);
  add_conv(t, "spp.fuse", widths.ds, 3 * widths.ds, 1, false, head);
  add_se(t, "se", widths.ds, kSeReduction, head);
  add_conv(t, "proj", bands, widths.ds, 1, false, head);
  return f;
}

SpaTrace spa_fen_trace(const SpaFen& fen, const Tensor& h) {
  check_input(h, fen.bands, "spa_fen_forward", true);
  const ParamTree& t = fen.params;
  const int H = h.h(), W = h.w(), ds = fen.widths.ds;
  SpaTrace tr;
  tr.input = h;
  tr.a1 = relu(pw(t, "compress1", h));
  tr.h3c = sigmoid(pw(t, "compress2", tr.a1));
  tr.s1 = relu(conv(tr.h3c, cw(t, "bb.stem1"), 2, 1));
  const Tensor r1 = residual_block(tr.s1, rw(t, "bb.block1"), &tr.block1);
  tr.s2 = relu(conv(r1, cw(t, "bb.stem2"), 2, 1));
  tr.f_res = residual_block(tr.s2, rw(t, "bb.block2"), &tr.block2);
  expect_shape(tr.f_res, ds, H / 4, W / 4, "f_res");
  for (int i = 0; i < 3; ++i) {
    tr.pooled[i] = adaptive_avg_pool(tr.f_res, kSpatialScales[i]);
    tr.upsampled[i] = resize_bilinear(tr.pooled[i], tr.f_res.h(), tr.f_res.w());
  }
  const Tensor* parts[] = {&tr.upsampled[0], &tr.upsampled[1], &tr.upsampled[2]};
  tr.cat = concat_channels(parts);
  expect_shape(tr.cat, 3 * ds, H / 4, W / 4, "f_cat");
  tr.fuse = pw(t, "spp.fuse", tr.cat);
  tr.se_out = se_block(tr.fuse, sw(t, "se"), kSeReduction, &tr.se);
  tr.up = resize_bilinear(tr.se_out, H, W);
  tr.out = pw(t, "proj", tr.up);
  expect_shape(tr.out, fen.bands, H, W, "F_spa");
  return tr;
}

Tensor spa_fen_forward(const SpaFen& fen, const Tensor& h) { return spa_fen_trace(fen, h).out; }

Tensor spa_fen_forward(const SpaFen& fen, const HsiCube& h) { return spa_fen_forward(fen, cube_tensor(h)); }

void spa_fen_backward(SpaFen& fen, const SpaTrace& tr, const Tensor& d_out) {
  ParamTree& t = fen.params;
  require_same_shape(tr.out, d_out, "spa_fen_backward");
  const Tensor d_up = conv2d_backward(tr.up, t.value("proj.w"), d_out, 1, 0, cg(t, "proj"));
  const Tensor d_se_out = resize_bilinear_backward(tr.se_out, tr.up.h(), tr.up.w(), d_up);
  const Tensor d_fuse = se_block_backward(sw(t, "se"), tr.se, d_se_out, sg(t, "se"));
  const Tensor d_cat = conv2d_backward(tr.cat, t.value("spp.fuse.w"), d_fuse, 1, 0, cg(t, "spp.fuse"));

  const int ds = tr.f_res.c();
  const size_t chunk = static_cast<size_t>(ds) * tr.f_res.plane();
  Tensor d_res(tr.f_res.shape());
  for (int i = 0; i < 3; ++i) {
    Tensor d_u(tr.f_res.shape());
    for (int b = 0; b < d_cat.n(); ++b) {
      const double* src = d_cat.sample(b) + i * chunk;
      std::copy(src, src + chunk, d_u.sample(b));
    }
    const Tensor d_p = resize_bilinear_backward(tr.pooled[i], tr.f_res.h(), tr.f_res.w(), d_u);
    d_res += adaptive_avg_pool_backward(tr.f_res, kSpatialScales[i], d_p);
  }

  Tensor d = residual_block_backward(rw(t, "bb.block2"), tr.block2, d_res, rg(t, "bb.block2"));
  d = conv2d_backward(tr.block1.y, t.value("bb.stem2.w"), relu_backward(tr.s2, d), 2, 1, cg(t, "bb.stem2"));
  d = residual_block_backward(rw(t, "bb.block1"), tr.block1, d, rg(t, "bb.block1"));
  d = conv2d_backward(tr.h3c, t.value("bb.stem1.w"), relu_backward(tr.s1, d), 2, 1, cg(t, "bb.stem1"));
  d = conv2d_backward(tr.a1, t.value("compress2.w"), sigmoid_backward(tr.h3c, d), 1, 0, cg(t, "compress2"));
  conv2d_backward(tr.input, t.value("compress1.w"), relu_backward(tr.a1, d), 1, 0, cg(t, "compress1"), false);
}

// ---------------------------------------------------------------------------
// Feature restoration network
// ---------------------------------------------------------------------------

int frn_reduction(int bands) {
  for (int r = kSeReduction; r > 1; --r) {
    if (bands % r == 0) return r;
  }
  return 1;
}

Frn make_frn(int bands, uint64_t seed) {
  if (bands <= 0) throw RangeError("make_frn: bands must be positive");
  Frn f;
  f.bands = bands;
  f.reduction = frn_reduction(bands);
  f.seed = seed;
  SplitMix64 rng(derive_seed(seed, kTagFrn));
  for (int i = 0; i < 2; ++i) {
    add_se(f.params, "frn.se" + std::to_string(i), bands, f.reduction, rng);
    add_residual(f.params, "frn.res" + std::to_string(i), bands, false, rng);
  }
  add_conv(f.params, "frn.out", bands, bands, 1, false, rng);
  return f;
}

FrnTrace frn_trace(const Frn& frn, const Tensor& fused) {
  check_input(fused, frn.bands, "frn_forward", false);
  const ParamTree& t = frn.params;
  FrnTrace tr;
  Tensor x = fused;
  for (int i = 0; i < 2; ++i) {
    const std::string k = std::to_string(i);
    x = se_block(x, sw(t, "frn.se" + k), frn.reduction, &tr.se[i]);
    x = residual_block(x, rw(t, "frn.res" + k), &tr.res[i]);
  }
  tr.last = std::move(x);
  tr.out = pw(t, "frn.out", tr.last);
  require_same_shape(tr.out, fused, "frn_forward");
  return tr;
}

Tensor frn_forward(const Frn& frn, const Tensor& fused) { return frn_trace(frn, fused).out; }

Tensor frn_backward(Frn& frn, const FrnTrace& tr, const Tensor& d_out) {
  ParamTree& t = frn.params;
  require_same_shape(tr.out, d_out, "frn_backward");
  Tensor d = conv2d_backward(tr.last, t.value("frn.out.w"), d_out, 1, 0, cg(t, "frn.out"));
  for (int i = 1; i >= 0; --i) {
    const std::string k = std::to_string(i);
    d = residual_block_backward(rw(t, "frn.res" + k), tr.res[i], d, rg(t, "frn.res" + k));
    d = se_block_backward(sw(t, "frn.se" + k), tr.se[i], d, sg(t, "frn.se" + k));
  }
  return d;
}

}  // namespace rebelhad
