#include "rebelhad/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "rebelhad/adam.hpp"
#include "rebelhad/error.hpp"
#include "rebelhad/eval.hpp"
#include "rebelhad/rng.hpp"

namespace rebelhad {

namespace {

constexpr uint64_t kTagShuffle1 = 0x5348554646310001ULL;
constexpr uint64_t kTagShuffle2 = 0x5348554646320002ULL;

using Clock = std::chrono::steady_clock;

void check_corpus(std::span<const HsiCube> corpus, const char* what) {
  if (corpus.empty()) throw RangeError(std::string(what) + ": empty corpus");
  const HsiCube& first = corpus.front();
  for (const HsiCube& c : corpus) {
    if (!c.same_dims(first)) throw ShapeError(std::string(what) + ": corpus scenes differ in dimensions");
  }
  if (first.height() % 4 != 0 || first.width() % 4 != 0 || first.height() == 0 || first.width() == 0) {
    throw ShapeError(std::string(what) + ": spatial dims must be positive multiples of 4");
  }
}

std::vector<size_t> shuffled(size_t n, SplitMix64& rng) {
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  for (size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

Tensor gather(std::span<const Tensor> items, std::span<const size_t> idx) {
  std::vector<Tensor> picked;
  picked.reserve(idx.size());
  for (size_t i : idx) picked.push_back(items[i]);
  return stack_batch(picked);
}

std::vector<Tensor> to_tensors(std::span<const HsiCube> corpus) {
  std::vector<Tensor> out;
  out.reserve(corpus.size());
  for (const HsiCube& c : corpus) out.push_back(c.to_tensor());
  return out;
}

double trainable_param_norm(std::initializer_list<const ParamTree*> trees) {
  double s = 0.0;
  for (const ParamTree* t : trees) {
    const double n = t->trainable_norm();
    s += n * n;
  }
  return std::sqrt(s);
}

void scale_in_place(Tensor& t, double s) {
  if (!t.empty()) t *= s;
}

std::string join(const std::set<std::string>& s, char sep) {
  std::string out;
  for (const auto& x : s) {
    if (!out.empty()) out.push_back(sep);
    out += x;
  }
  return out;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

void validate(const TrainConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw RangeError("lr must be > 0");
  if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0)) {
    throw RangeError("betas must lie in [0, 1)");
  }
  if (cfg.batch < 1) throw RangeError("batch must be >= 1");
  if (cfg.epochs < 1) throw RangeError("epochs must be >= 1");
  const Stage1Weights& a = cfg.stage1;
  const Stage2Weights& b = cfg.stage2;
  if (a.mse < 0 || a.z < 0 || b.recon < 0 || b.cos < 0 || b.var < 0 || b.ssim < 0) {
    throw RangeError("loss weights must be nonnegative");
  }
  if (!(b.tau > 0.0)) throw RangeError("tau must be > 0");
  for (const auto& name : cfg.enabled_losses) {
    if (!kStage1Losses.contains(name) && !kStage2Losses.contains(name)) {
      throw RangeError("unknown loss name '" + name + "'");
    }
  }
  const NetworkWidths& w = cfg.widths;
  if (w.c1 < 1 || w.c2 < 1 || w.c3 < 1 || w.ds < kSeReduction || w.ds % kSeReduction != 0) {
    throw RangeError("invalid network widths");
  }
}

nlohmann::json to_json(const TrainConfig& cfg) {
  return {
      {"lr", cfg.lr},
      {"beta1", cfg.beta1},
      {"beta2", cfg.beta2},
      {"batch", cfg.batch},
      {"epochs", cfg.epochs},
      {"seed", cfg.seed},
      {"stage1", {{"lambda_mse", cfg.stage1.mse}, {"lambda_z", cfg.stage1.z}}},
      {"stage2",
       {{"lambda_recon", cfg.stage2.recon},
        {"lambda_cos", cfg.stage2.cos},
        {"lambda_var", cfg.stage2.var},
        {"lambda_ssim", cfg.stage2.ssim},
        {"tau", cfg.stage2.tau}}},
      {"widths", {{"c1", cfg.widths.c1}, {"c2", cfg.widths.c2}, {"c3", cfg.widths.c3}, {"ds", cfg.widths.ds}}},
      {"enabled_losses", cfg.enabled_losses},
  };
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig cfg) {
  if (!j.is_object()) throw FormatError("config: expected a JSON object");
  auto reject_unknown = [](const nlohmann::json& obj, std::initializer_list<const char*> keys, const char* where) {
    for (const auto& [k, v] : obj.items()) {
      bool ok = false;
      for (const char* key : keys) ok = ok || k == key;
      if (!ok) throw FormatError(std::string("config: unknown key '") + k + "' in " + where);
    }
  };
  try {
    reject_unknown(j, {"lr", "beta1", "beta2", "batch", "epochs", "seed", "stage1", "stage2", "widths", "enabled_losses"},
                   "top level");
    if (j.contains("lr")) cfg.lr = j["lr"].get<double>();
    if (j.contains("beta1")) cfg.beta1 = j["beta1"].get<double>();
    if (j.contains("beta2")) cfg.beta2 = j["beta2"].get<double>();
    if (j.contains("batch")) cfg.batch = j["batch"].get<int>();
    if (j.contains("epochs")) cfg.epochs = j["epochs"].get<int>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<uint64_t>();
    if (j.contains("stage1")) {
      const auto& s = j["stage1"];
      reject_unknown(s, {"lambda_mse", "lambda_z"}, "stage1");
      if (s.contains("lambda_mse")) cfg.stage1.mse = s["lambda_mse"].get<double>();
      if (s.contains("lambda_z")) cfg.stage1.z = s["lambda_z"].get<double>();
    }
    if (j.contains("stage2")) {
      const auto& s = j["stage2"];
      reject_unknown(s, {"lambda_recon", "lambda_cos", "lambda_var", "lambda_ssim", "tau"}, "stage2");
      if (s.contains("lambda_recon")) cfg.stage2.recon = s["lambda_recon"].get<double>();
      if (s.contains("lambda_cos")) cfg.stage2.cos = s["lambda_cos"].get<double>();
      if (s.contains("lambda_var")) cfg.stage2.var = s["lambda_var"].get<double>();
      if (s.contains("lambda_ssim")) cfg.stage2.ssim = s["lambda_ssim"].get<double>();
      if (s.contains("tau")) cfg.stage2.tau = s["tau"].get<double>();
    }
    if (j.contains("widths")) {
      const auto& w = j["widths"];
      reject_unknown(w, {"c1", "c2", "c3", "ds"}, "widths");
      if (w.contains("c1")) cfg.widths.c1 = w["c1"].get<int>();
      if (w.contains("c2")) cfg.widths.c2 = w["c2"].get<int>();
      if (w.contains("c3")) cfg.widths.c3 = w["c3"].get<int>();
      if (w.contains("ds")) cfg.widths.ds = w["ds"].get<int>();
    }
    if (j.contains("enabled_losses")) cfg.enabled_losses = j["enabled_losses"].get<std::set<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  validate(cfg);
  return cfg;
}

std::string TrainLog::to_csv() const {
  std::string out = "epoch,total";
  if (!epochs.empty()) {
    for (const auto& [name, v] : epochs.front().components) out += "," + name;
  }
  out += ",seconds,param_norm,steps\n";
  for (const auto& r : epochs) {
    out += std::to_string(r.epoch) + "," + fmt(r.total);
    for (const auto& [name, v] : r.components) out += "," + fmt(v);
    out += "," + fmt(r.seconds) + "," + fmt(r.param_norm) + "," + std::to_string(r.steps) + "\n";
  }
  return out;
}

Stage1Result train_stage1(std::span<const HsiCube> corpus, const TrainConfig& cfg) {
  validate(cfg);
  check_corpus(corpus, "train_stage1");
  const int bands = corpus.front().bands();
  Stage1Result res{make_spectral_model(bands, cfg.seed, cfg.widths), {}, {}, 0};
  SpectralStageModel& model = res.model;
  AdamState adam(model.params, cfg.lr, cfg.beta1, cfg.beta2);
  SplitMix64 rng(derive_seed(cfg.seed, kTagShuffle1));
  const std::vector<Tensor> items = to_tensors(corpus);
  const bool use_sim = cfg.enabled("sim"), use_mse = cfg.enabled("mse"), use_z = cfg.enabled("z");
  const Stage1Weights w{use_mse ? cfg.stage1.mse : 0.0, use_z ? cfg.stage1.z : 0.0};
  const double w_sim = use_sim ? 1.0 : 0.0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = Clock::now();
    const std::vector<size_t> order = shuffled(items.size(), rng);
    Stage1Parts sum;
    double total = 0.0;
    long batches = 0;
    for (size_t first = 0; first < order.size(); first += static_cast<size_t>(cfg.batch)) {
      const size_t count = std::min(order.size() - first, static_cast<size_t>(cfg.batch));
      const Tensor x = gather(items, std::span(order).subspan(first, count));
      const SpectralTrace tr = spectral_forward(model, x);

      SpectralUpstream up;
      std::vector<Tensor> d_dec, d_enc;
      Stage1Parts parts;
      parts.sim = loss_sim(tr.dec, tr.enc, use_sim ? &d_dec : nullptr, use_sim ? &d_enc : nullptr);
      parts.mse = loss_mse(x, tr.recon, use_mse ? &up.d_recon : nullptr);
      parts.z = loss_z(tr.o, use_z ? &up.d_o : nullptr);
      const double step_total = w_sim * parts.sim + stage1_total({0.0, parts.mse, parts.z}, w);
      if (!std::isfinite(parts.sim)) throw NumericalError("train_stage1: non-finite sim loss");
      if (use_sim) {
        for (int i = 0; i < 3; ++i) {
          up.d_dec[i] = std::move(d_dec[i]);
          up.d_enc[i] = std::move(d_enc[i]);
        }
      }
      scale_in_place(up.d_recon, w.mse);
      scale_in_place(up.d_o, w.z);
      spectral_backward(model, tr, up);
      if (!model.params.grads_finite()) throw NumericalError("train_stage1: non-finite gradient");
      adam_step(model.params, adam);
      ++res.steps;
      ++batches;
      sum.sim += parts.sim;
      sum.mse += parts.mse;
      sum.z += parts.z;
      total += step_total;
    }
    const double nb = static_cast<double>(batches);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.total = total / nb;
    rec.components = {{"sim", sum.sim / nb}, {"mse", sum.mse / nb}, {"z", sum.z / nb}};
    rec.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    rec.param_norm = trainable_param_norm({&model.params});
    rec.steps = res.steps;
    res.log.epochs.push_back(std::move(rec));
  }
  res.fen = prune_to_spe_fen(model);
  return res;
}

Stage2Result train_stage2(std::span<const HsiCube> corpus, const SpeFen& teacher, const TrainConfig& cfg) {
  validate(cfg);
  check_corpus(corpus, "train_stage2");
  const int bands = corpus.front().bands();
  if (teacher.bands != bands) {
    throw ShapeError("train_stage2: teacher expects " + std::to_string(teacher.bands) + " bands, corpus has " +
                     std::to_string(bands));
  }
  Stage2Result res{{make_spa_fen(bands, cfg.seed, cfg.widths), make_frn(bands, cfg.seed)}, {}, 0};
  SpaFen& spa = res.model.spa;
  Frn& frn = res.model.frn;
  AdamState adam_spa(spa.params, cfg.lr, cfg.beta1, cfg.beta2);
  AdamState adam_frn(frn.params, cfg.lr, cfg.beta1, cfg.beta2);
  SplitMix64 rng(derive_seed(cfg.seed, kTagShuffle2));
  const std::vector<Tensor> items = to_tensors(corpus);
  std::vector<Tensor> teacher_out;
  teacher_out.reserve(items.size());
  for (const Tensor& x : items) teacher_out.push_back(spe_fen_forward(teacher, x));

  const bool use_cc = cfg.enabled("cc"), use_cos = cfg.enabled("cos"), use_var = cfg.enabled("var"),
             use_recon = cfg.enabled("recon");
  const Stage2Weights& sw = cfg.stage2;
  const Stage2Weights w{use_recon ? sw.recon : 0.0, use_cos ? sw.cos : 0.0, use_var ? sw.var : 0.0, sw.ssim, sw.tau};
  const double w_cc = use_cc ? 1.0 : 0.0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = Clock::now();
    const std::vector<size_t> order = shuffled(items.size(), rng);
    Stage2Parts sum;
    double total = 0.0;
    long batches = 0;
    for (size_t first = 0; first < order.size(); first += static_cast<size_t>(cfg.batch)) {
      const size_t count = std::min(order.size() - first, static_cast<size_t>(cfg.batch));
      const auto idx = std::span(order).subspan(first, count);
      const Tensor x = gather(items, idx);
      const Tensor f_spe = gather(teacher_out, idx);
      const SpaTrace st = spa_fen_trace(spa, x);
      const Tensor& f_spa = st.out;
      const FrnTrace ft = frn_trace(frn, f_spe + f_spa);

      Stage2Parts parts;
      Tensor d_cc, d_cos, d_var, d_hat;
      parts.cc = loss_cc(f_spe, f_spa, kWhitenEps, use_cc ? &d_cc : nullptr);
      parts.cos = loss_cos(f_spe, f_spa, use_cos ? &d_cos : nullptr);
      parts.var = loss_var(f_spa, sw.tau, use_var ? &d_var : nullptr);
      parts.recon = loss_recon(x, ft.out, sw.ssim, use_recon ? &d_hat : nullptr);
      if (!std::isfinite(parts.cc)) throw NumericalError("train_stage2: non-finite cc loss");
      const double step_total = w_cc * parts.cc + stage2_total({0.0, parts.cos, parts.var, parts.recon}, w);

      Tensor d_spa(f_spa.shape());
      if (use_cc) d_spa += d_cc;
      if (use_cos) d_spa += d_cos * w.cos;
      if (use_var) d_spa += d_var * w.var;
      if (use_recon) {
        d_hat *= w.recon;
        d_spa += frn_backward(frn, ft, d_hat);
      }
      spa_fen_backward(spa, st, d_spa);
      if (!spa.params.grads_finite() || !frn.params.grads_finite()) {
        throw NumericalError("train_stage2: non-finite gradient");
      }
      adam_step(spa.params, adam_spa);
      adam_step(frn.params, adam_frn);
      ++res.steps;
      ++batches;
      sum.cc += parts.cc;
      sum.cos += parts.cos;
      sum.var += parts.var;
      sum.recon += parts.recon;
      total += step_total;
    }
    const double nb = static_cast<double>(batches);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.total = total / nb;
    rec.components = {{"cc", sum.cc / nb}, {"cos", sum.cos / nb}, {"var", sum.var / nb}, {"recon", sum.recon / nb}};
    rec.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    rec.param_norm = trainable_param_norm({&spa.params, &frn.params});
    rec.steps = res.steps;
    res.log.epochs.push_back(std::move(rec));
  }
  return res;
}

double mean_abs_cosine(std::span<const HsiCube> corpus, const SpeFen& teacher, const SpaFen& student) {
  if (corpus.empty()) throw RangeError("mean_abs_cosine: empty corpus");
  double s = 0.0;
  for (const HsiCube& c : corpus) {
    const Tensor x = c.to_tensor();
    s += std::fabs(cosine_sim(spe_fen_forward(teacher, x), spa_fen_forward(student, x)));
  }
  return s / static_cast<double>(corpus.size());
}

Fusion parse_fusion(std::string_view name) {
  if (name == "none") return Fusion::none;
  if (name == "add") return Fusion::add;
  if (name == "mult") return Fusion::mult;
  throw RangeError("unknown fusion '" + std::string(name) + "' (expected none, add or mult)");
}

std::string_view fusion_name(Fusion f) {
  switch (f) {
    case Fusion::none: return "none";
    case Fusion::add: return "add";
    case Fusion::mult: return "mult";
  }
  return "none";
}

ScoreMap detect_scene(const HsiCube& cube, const SpeFen* teacher, const SpatialModel* spatial, Fusion fusion) {
  if (teacher == nullptr) {
    if (spatial != nullptr) throw RangeError("detect: a spatial model requires the spectral teacher");
    return rx(cube);
  }
  const Tensor x = cube.to_tensor();
  const Tensor f_spe = spe_fen_forward(*teacher, x);
  switch (fusion) {
    case Fusion::none:
      return rx_enhanced(cube, f_spe);
    case Fusion::add:
      return fuse_additive(cube, spatial ? spa_fen_forward(spatial->spa, x) : Tensor(), f_spe);
    case Fusion::mult:
      if (spatial == nullptr) throw RangeError("detect: multiplicative fusion needs a spatial model");
      return fuse_multiplicative(rx_enhanced(cube, spa_fen_forward(spatial->spa, x)), rx_enhanced(cube, f_spe));
  }
  throw RangeError("detect: invalid fusion");
}

std::vector<std::set<std::string>> stage1_ablation_grid() {
  return {{"z"}, {"mse", "sim"}, {"z", "mse"}, {"z", "sim"}, {"z", "mse", "sim"}};
}

std::vector<std::set<std::string>> stage2_ablation_grid() {
  return {{"cc", "cos", "var"}, {"recon"}, {"cc", "cos", "recon"}, {"cc", "var", "recon"}, {"cos", "var", "recon"},
          {"cc", "cos", "var", "recon"}};
}

std::vector<std::set<std::string>> parse_grid(std::string_view text) {
  std::vector<std::set<std::string>> grid;
  size_t pos = 0;
  while (pos <= text.size()) {
    const size_t end = std::min(text.find(';', pos), text.size());
    const std::string_view row = text.substr(pos, end - pos);
    std::set<std::string> set;
    size_t p = 0;
    while (p <= row.size()) {
      const size_t e = std::min(row.find('+', p), row.size());
      const std::string name(row.substr(p, e - p));
      if (name.empty()) throw RangeError("grid: empty loss name in '" + std::string(row) + "'");
      if (!kStage1Losses.contains(name) && !kStage2Losses.contains(name)) {
        throw RangeError("grid: unknown loss '" + name + "'");
      }
      set.insert(name);
      p = e + 1;
    }
    grid.push_back(std::move(set));
    pos = end + 1;
  }
  return grid;
}

std::vector<AblationRow> run_ablation(std::span<const HsiCube> corpus, std::span<const LabeledScene> test,
                                      const TrainConfig& cfg, std::span<const std::set<std::string>> grid,
                                      AblationStage stage, Fusion fusion) {
  if (test.empty()) throw RangeError("run_ablation: empty test set");
  const std::set<std::string>& allowed = stage == AblationStage::spectral ? kStage1Losses : kStage2Losses;
  for (const auto& row : grid) {
    if (row.empty()) throw RangeError("run_ablation: empty loss set");
    for (const auto& name : row) {
      if (!allowed.contains(name)) throw RangeError("run_ablation: loss '" + name + "' does not belong to this stage");
    }
  }
  auto score = [&](const SpeFen& fen, const SpatialModel* spatial, Fusion f) {
    std::vector<double> aucs;
    for (const LabeledScene& s : test) aucs.push_back(auc(detect_scene(s.cube, &fen, spatial, f), s.truth));
    return mauc(aucs);
  };

  std::vector<AblationRow> rows;
  if (stage == AblationStage::spectral) {
    for (const auto& set : grid) {
      TrainConfig c = cfg;
      c.enabled_losses = set;
      const Stage1Result r = train_stage1(corpus, c);
      rows.push_back({set, score(r.fen, nullptr, Fusion::none)});
    }
    return rows;
  }
  TrainConfig c1 = cfg;
  c1.enabled_losses = kStage1Losses;
  const SpeFen teacher = train_stage1(corpus, c1).fen;
  for (const auto& set : grid) {
    TrainConfig c = cfg;
    c.enabled_losses = set;
    const Stage2Result r = train_stage2(corpus, teacher, c);
    rows.push_back({set, score(teacher, &r.model, fusion)});
  }
  return rows;
}

std::string ablation_csv(std::span<const AblationRow> rows, AblationStage stage) {
  const std::vector<std::string> cols = stage == AblationStage::spectral
                                            ? std::vector<std::string>{"z", "mse", "sim"}
                                            : std::vector<std::string>{"cc", "cos", "var", "recon"};
  std::string out;
  for (const auto& c : cols) out += "L_" + c + ",";
  out += "losses,mauc\n";
  for (const auto& r : rows) {
    for (const auto& c : cols) out += r.losses.contains(c) ? "1," : "0,";
    out += join(r.losses, '+') + "," + fmt(r.mauc) + "\n";
  }
  return out;
}

}  // namespace rebelhad
