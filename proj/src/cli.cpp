#include "rebelhad/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rebelhad/detector.hpp"
#include "rebelhad/error.hpp"
#include "rebelhad/eval.hpp"
#include "rebelhad/gradsuite.hpp"
#include "rebelhad/hsidata.hpp"
#include "rebelhad/io.hpp"
#include "rebelhad/model_io.hpp"
#include "rebelhad/parallel.hpp"
#include "rebelhad/rng.hpp"
#include "rebelhad/trainer.hpp"

namespace rebelhad {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class UsageError : public Error {
 public:
  using Error::Error;
};

struct CommonOpts {
  int threads = 1;
  int bands = 0;  // 0 = keep all
};

struct TrainOpts {
  std::string data;
  std::string out;
  std::string log;
  std::string config;
  std::string teacher;
  std::string losses;
  TrainConfig cfg;
};

HsiCube prepare(HsiCube cube, int bands) {
  if (bands > 0) cube = select_bands(cube, bands);
  return normalize(cube);
}

std::vector<fs::path> cube_files(const std::string& dir) {
  auto files = list_files(dir, ".hcf");
  if (files.empty()) throw IoError("no .hcf files in " + dir);
  return files;
}

std::vector<HsiCube> load_corpus(const std::string& dir, int bands) {
  std::vector<HsiCube> corpus;
  for (const auto& f : cube_files(dir)) corpus.push_back(prepare(read_cube(f), bands));
  return corpus;
}

std::vector<LabeledScene> load_labeled(const std::string& dir, int bands) {
  std::vector<LabeledScene> out;
  for (const auto& f : cube_files(dir)) {
    fs::path mask = f;
    mask.replace_extension(".pgm");
    out.push_back({prepare(read_cube(f), bands), read_mask(mask)});
  }
  return out;
}

void apply_seed_override(uint64_t& seed) {
  if (const char* env = std::getenv("REBELHAD_SEED")) {
    try {
      size_t used = 0;
      const std::string s(env);
      seed = std::stoull(s, &used);
      if (used != s.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw UsageError(std::string("REBELHAD_SEED is not an unsigned integer: '") + env + "'");
    }
  }
}

void add_common(CLI::App* cmd, CommonOpts& c) {
  cmd->add_option("--threads", c.threads, "Worker threads for batch/pixel parallelism")
      ->check(CLI::Range(1, 256))
      ->capture_default_str();
  cmd->add_option("--bands", c.bands, "Keep only the first K bands (0 = all)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
}

void add_train_flags(CLI::App* cmd, TrainOpts& t) {
  TrainConfig& c = t.cfg;
  cmd->add_option("--config", t.config, "JSON training configuration (flags override it)")->check(CLI::ExistingFile);
  cmd->add_option("--epochs", c.epochs, "Training epochs")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--batch", c.batch, "Batch size")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--lr", c.lr, "Adam learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--beta1", c.beta1, "Adam beta1")->check(CLI::Range(0.0, 0.999999))->capture_default_str();
  cmd->add_option("--beta2", c.beta2, "Adam beta2")->check(CLI::Range(0.0, 0.999999))->capture_default_str();
  cmd->add_option("--seed", c.seed, "Seed (REBELHAD_SEED overrides)")->capture_default_str();
  cmd->add_option("--losses", t.losses, "Enabled losses joined by '+', e.g. sim+mse+z");
}

// Loads --config, then re-applies any explicitly given flags on top.
TrainConfig resolve_train_config(CLI::App* cmd, const TrainOpts& t) {
  TrainConfig cfg = t.cfg;
  if (!t.config.empty()) {
    json j;
    try {
      j = json::parse(read_file(t.config));
    } catch (const json::exception& e) {
      throw FormatError(t.config + ": " + e.what());
    }
    TrainConfig from_file = train_config_from_json(j);
    auto given = [&](const char* flag) { return cmd->get_option(flag)->count() > 0; };
    if (given("--epochs")) from_file.epochs = cfg.epochs;
    if (given("--batch")) from_file.batch = cfg.batch;
    if (given("--lr")) from_file.lr = cfg.lr;
    if (given("--beta1")) from_file.beta1 = cfg.beta1;
    if (given("--beta2")) from_file.beta2 = cfg.beta2;
    if (given("--seed")) from_file.seed = cfg.seed;
    cfg = from_file;
  }
  if (!t.losses.empty()) {
    const auto grid = parse_grid(t.losses);
    if (grid.size() != 1) throw UsageError("--losses takes one '+'-joined set");
    cfg.enabled_losses = grid.front();
  }
  apply_seed_override(cfg.seed);
  validate(cfg);
  return cfg;
}

// Options of `cmd` as JSON, with defaults for options not given.
json resolved_options(const CLI::App* cmd) {
  json j = json::object();
  for (const CLI::Option* opt : cmd->get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "help-all") continue;
    if (opt->count() > 0) {
      const auto& r = opt->results();
      j[name] = r.size() == 1 ? json(r.front()) : json(r);
    } else {
      j[name] = opt->get_default_str();
    }
  }
  return j;
}

void print_resolved(std::ostream& err, const CLI::App* cmd, const json& extra) {
  json j = {{"command", cmd->get_name()}, {"options", resolved_options(cmd)}};
  for (const auto& [k, v] : extra.items()) j[k] = v;
  err << "resolved config: " << j.dump() << "\n";
}

void write_text(const std::string& path, const std::string& text) { write_file_atomic(path, text); }

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-stage spectral/spatial background enhancement for hyperspectral anomaly detection"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  CommonOpts common;

  // synth
  auto* synth = app.add_subcommand("synth", "Generate synthetic scenes (HCF1 cubes + PGM masks)");
  std::string synth_out;
  int scenes = 1;
  SceneSpec spec;
  std::string prefix = "scene";
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--scenes", scenes, "Number of scenes")->check(CLI::PositiveNumber)->capture_default_str();
  synth->add_option("--seed", spec.seed, "Base seed (REBELHAD_SEED overrides)")->capture_default_str();
  synth->add_option("--height", spec.height, "Rows")->check(CLI::PositiveNumber)->capture_default_str();
  synth->add_option("--width", spec.width, "Columns")->check(CLI::PositiveNumber)->capture_default_str();
  synth->add_option("--scene-bands", spec.bands, "Bands")->check(CLI::PositiveNumber)->capture_default_str();
  synth->add_option("--endmembers", spec.endmembers, "Background endmembers")->check(CLI::PositiveNumber)->capture_default_str();
  synth->add_option("--anomalies", spec.anomaly_count, "Anomalies per scene")->check(CLI::NonNegativeNumber)->capture_default_str();
  synth->add_option("--anomaly-size", spec.anomaly_size, "Anomaly side length")->check(CLI::PositiveNumber)->capture_default_str();
  synth->add_option("--contrast", spec.anomaly_contrast, "Anomaly spectral displacement")->check(CLI::NonNegativeNumber)->capture_default_str();
  synth->add_option("--noise", spec.noise_sigma, "Gaussian noise sigma")->check(CLI::NonNegativeNumber)->capture_default_str();
  synth->add_option("--smoothness", spec.smoothness, "Abundance blur radius")->check(CLI::NonNegativeNumber)->capture_default_str();
  synth->add_option("--prefix", prefix, "File name prefix")->capture_default_str();

  // train-spectral
  auto* train1 = app.add_subcommand("train-spectral", "Stage 1: train the spectral network and save the pruned teacher");
  TrainOpts t1;
  train1->add_option("--data", t1.data, "Directory of background .hcf cubes")->required()->check(CLI::ExistingDirectory);
  train1->add_option("--out", t1.out, "Output model file")->required();
  train1->add_option("--log", t1.log, "Per-epoch loss CSV");
  add_train_flags(train1, t1);
  add_common(train1, common);

  // train-spatial
  auto* train2 = app.add_subcommand("train-spatial", "Stage 2: train the spatial student and restoration network");
  TrainOpts t2;
  train2->add_option("--data", t2.data, "Directory of background .hcf cubes")->required()->check(CLI::ExistingDirectory);
  train2->add_option("--teacher", t2.teacher, "Stage-1 model file")->required()->check(CLI::ExistingFile);
  train2->add_option("--out", t2.out, "Output model file")->required();
  train2->add_option("--log", t2.log, "Per-epoch loss CSV");
  add_train_flags(train2, t2);
  add_common(train2, common);

  // detect
  auto* detect = app.add_subcommand("detect", "Score scenes with RX, enhanced RX or a fusion");
  std::string scene, scene_dir, spe, spa, det_out, pgm, fusion = "add", method = "rx";
  AeOptions ae;
  auto* scene_opt = detect->add_option("--scene", scene, "Input cube")->check(CLI::ExistingFile);
  auto* dir_opt = detect->add_option("--scene-dir", scene_dir, "Directory of input cubes")->check(CLI::ExistingDirectory);
  scene_opt->excludes(dir_opt);
  detect->add_option("--spe", spe, "Stage-1 model file")->check(CLI::ExistingFile);
  detect->add_option("--spa", spa, "Stage-2 model file")->check(CLI::ExistingFile);
  detect->add_option("--fusion", fusion, "none | add | mult")
      ->check(CLI::IsMember({"none", "add", "mult"}))
      ->capture_default_str();
  detect->add_option("--method", method, "rx | ae (ae ignores models)")->check(CLI::IsMember({"rx", "ae"}))->capture_default_str();
  detect->add_option("--ae-iters", ae.iters, "AE baseline Adam steps")->check(CLI::NonNegativeNumber)->capture_default_str();
  detect->add_option("--ae-lr", ae.lr, "AE baseline learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  detect->add_option("--seed", ae.seed, "AE seed (REBELHAD_SEED overrides)")->capture_default_str();
  detect->add_option("--out", det_out, "Output score file (or directory with --scene-dir)")->required();
  detect->add_option("--pgm", pgm, "Also write an 8-bit PGM preview (single scene)");
  add_common(detect, common);

  // eval
  auto* evalc = app.add_subcommand("eval", "AUC per scene and mAUC");
  std::string scores_dir, truth_dir, report, roc_dir;
  bool timing = false;
  evalc->add_option("--scores-dir", scores_dir, "Directory of .hcf score maps")->required()->check(CLI::ExistingDirectory);
  evalc->add_option("--truth-dir", truth_dir, "Directory of .pgm masks")->required()->check(CLI::ExistingDirectory);
  evalc->add_option("--out", report, "Report CSV")->required();
  evalc->add_option("--roc-dir", roc_dir, "Write one ROC CSV per scene here");
  evalc->add_flag("--timing", timing, "Record wall-clock seconds (makes the report non-reproducible)");

  // diag-pca
  auto* pca = app.add_subcommand("diag-pca", "Project pixels on the leading principal components");
  std::string pca_scene, pca_truth, pca_out, pca_spe;
  int pca_k = 3;
  pca->add_option("--scene", pca_scene, "Input cube")->required()->check(CLI::ExistingFile);
  pca->add_option("--truth", pca_truth, "Mask (.pgm)")->required()->check(CLI::ExistingFile);
  pca->add_option("--out", pca_out, "Output CSV")->required();
  pca->add_option("--k", pca_k, "Components")->check(CLI::PositiveNumber)->capture_default_str();
  pca->add_option("--spe", pca_spe, "Project H + F_spe instead of H")->check(CLI::ExistingFile);
  add_common(pca, common);

  // gradcheck
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every loss and both stage objectives");
  GradSuiteOptions gopt;
  std::string grad_out;
  bool losses_only = false;
  grad->add_option("--seeds", gopt.seeds, "Random seeds per check")->check(CLI::PositiveNumber)->capture_default_str();
  grad->add_option("--seed", gopt.base_seed, "Base seed (REBELHAD_SEED overrides)")->capture_default_str();
  grad->add_option("--step", gopt.h, "Finite-difference step for the loss checks")->check(CLI::PositiveNumber)->capture_default_str();
  grad->add_option("--out", grad_out, "Also write the table as CSV");
  grad->add_flag("--losses-only", losses_only, "Skip the network-parameter checks");

  // ablate
  auto* abl = app.add_subcommand("ablate", "Loss ablation table");
  TrainOpts ta;
  std::string grid = "table3", test_dir, abl_out, stage_name, abl_fusion = "mult";
  abl->add_option("--grid", grid, "table3 | table4 | custom list like 'z;mse+sim'")->capture_default_str();
  abl->add_option("--stage", stage_name, "spectral | spatial (required for custom grids)")
      ->check(CLI::IsMember({"spectral", "spatial"}));
  abl->add_option("--data", ta.data, "Directory of background training cubes")->required()->check(CLI::ExistingDirectory);
  abl->add_option("--test", test_dir, "Directory of labeled test cubes (.hcf + .pgm)")->required()->check(CLI::ExistingDirectory);
  abl->add_option("--out", abl_out, "Output CSV")->required();
  abl->add_option("--fusion", abl_fusion, "Scoring for spatial rows: none | add | mult")
      ->check(CLI::IsMember({"none", "add", "mult"}))
      ->capture_default_str();
  add_train_flags(abl, ta);
  add_common(abl, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    CLI::App* failed = &app;
    for (CLI::App* sub : app.get_subcommands()) failed = sub;
    err << failed->help();
    return kExitUsage;
  }

  CLI::App* cmd = app.get_subcommands().front();
  try {
    set_num_threads(common.threads);
    if (cmd == synth) {
      apply_seed_override(spec.seed);
      print_resolved(err, cmd, {{"seed", spec.seed}});
      fs::create_directories(synth_out);
      for (int i = 0; i < scenes; ++i) {
        SceneSpec s = spec;
        s.seed = derive_seed(spec.seed, static_cast<uint64_t>(i));
        const auto [cube, mask] = synth_scene(s);
        char name[64];
        std::snprintf(name, sizeof name, "%s_%03d", prefix.c_str(), i);
        write_cube(cube, fs::path(synth_out) / (std::string(name) + ".hcf"));
        write_mask(mask, fs::path(synth_out) / (std::string(name) + ".pgm"));
      }
      out << "wrote " << scenes << " scenes to " << synth_out << "\n";
      return kExitOk;
    }

    if (cmd == train1 || cmd == train2) {
      TrainOpts& t = cmd == train1 ? t1 : t2;
      const TrainConfig cfg = resolve_train_config(cmd, t);
      print_resolved(err, cmd, {{"train", to_json(cfg)}});
      const std::vector<HsiCube> corpus = load_corpus(t.data, common.bands);
      TrainLog log;
      if (cmd == train1) {
        Stage1Result r = train_stage1(corpus, cfg);
        save_spe_fen(r.fen, t.out);
        log = std::move(r.log);
      } else {
        const SpeFen teacher = load_spe_fen(t.teacher);
        Stage2Result r = train_stage2(corpus, teacher, cfg);
        save_spatial(r.model, t.out);
        out << "mean |cos(F_spe, F_spa)| = " << mean_abs_cosine(corpus, teacher, r.model.spa) << "\n";
        log = std::move(r.log);
      }
      if (!t.log.empty()) write_text(t.log, log.to_csv());
      const EpochRecord& first = log.epochs.front();
      const EpochRecord& last = log.epochs.back();
      out << "epoch 1 total " << first.total << ", epoch " << last.epoch << " total " << last.total << ", "
          << last.steps << " steps\n";
      return kExitOk;
    }

    if (cmd == detect) {
      apply_seed_override(ae.seed);
      print_resolved(err, cmd, {{"seed", ae.seed}});
      if (scene.empty() && scene_dir.empty()) throw UsageError("detect: one of --scene or --scene-dir is required");
      if (!spa.empty() && spe.empty()) throw UsageError("detect: --spa requires --spe");
      if (fusion == "mult" && spa.empty() && method == "rx" && !spe.empty()) {
        throw UsageError("detect: --fusion mult requires --spa");
      }
      std::optional<SpeFen> teacher;
      std::optional<SpatialModel> spatial;
      if (method == "rx" && !spe.empty()) teacher = load_spe_fen(spe);
      if (method == "rx" && !spa.empty()) spatial = load_spatial(spa);
      const Fusion f = parse_fusion(fusion);
      auto score = [&](const HsiCube& cube) {
        if (method == "ae") return ae_baseline(cube, ae);
        return detect_scene(cube, teacher ? &*teacher : nullptr, spatial ? &*spatial : nullptr, f);
      };
      if (!scene.empty()) {
        const ScoreMap s = score(prepare(read_cube(scene), common.bands));
        write_score_map(s, det_out);
        if (!pgm.empty()) write_score_pgm(s, pgm);
        out << "wrote " << det_out << "\n";
      } else {
        fs::create_directories(det_out);
        const auto files = cube_files(scene_dir);
        for (const auto& file : files) {
          write_score_map(score(prepare(read_cube(file), common.bands)), fs::path(det_out) / file.filename());
        }
        out << "wrote " << files.size() << " score maps to " << det_out << "\n";
      }
      return kExitOk;
    }

    if (cmd == evalc) {
      print_resolved(err, cmd, json::object());
      EvalReport rep;
      if (!roc_dir.empty()) fs::create_directories(roc_dir);
      for (const auto& file : cube_files(scores_dir)) {
        const auto t0 = std::chrono::steady_clock::now();
        const ScoreMap s = read_score_map(file);
        fs::path mask = fs::path(truth_dir) / file.filename();
        mask.replace_extension(".pgm");
        const GroundTruthMask truth = read_mask(mask);
        SceneResult r;
        r.scene_id = file.stem().string();
        r.roc = roc(s, truth);
        r.auc = auc(s, truth);
        if (timing) r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (!roc_dir.empty()) write_text((fs::path(roc_dir) / (r.scene_id + ".csv")).string(), roc_csv(r.roc));
        rep.scenes.push_back(std::move(r));
      }
      rep.mauc = mauc(rep.scenes);
      write_text(report, report_csv(rep));
      out << "mAUC " << rep.mauc << " over " << rep.scenes.size() << " scenes\n";
      return kExitOk;
    }

    if (cmd == pca) {
      print_resolved(err, cmd, json::object());
      HsiCube cube = prepare(read_cube(pca_scene), common.bands);
      if (!pca_spe.empty()) {
        const Tensor f = spe_fen_forward(load_spe_fen(pca_spe), cube);
        for (size_t i = 0; i < cube.size(); ++i) cube.data()[i] += f[i];
      }
      const PcaResult r = pca_diag(cube, pca_k);
      write_text(pca_out, pca_csv(r, read_mask(pca_truth)));
      if (r.degenerate) err << "warning: rank-deficient cube, " << r.projections.cols() << " components written\n";
      out << "eigenvalues:";
      for (Eigen::Index i = 0; i < r.eigenvalues.size(); ++i) out << " " << r.eigenvalues[i];
      out << "\n";
      return kExitOk;
    }

    if (cmd == grad) {
      apply_seed_override(gopt.base_seed);
      gopt.include_networks = !losses_only;
      print_resolved(err, cmd, {{"seed", gopt.base_seed}, {"h", gopt.h}, {"network_h", gopt.network_h}, {"tolerance", gopt.tolerance}});
      const auto rows = run_grad_suite(gopt);
      const std::string table = grad_suite_csv(rows);
      out << table;
      if (!grad_out.empty()) write_text(grad_out, table);
      for (const auto& r : rows) {
        if (!r.passed) {
          err << "gradient check failed: " << r.name << "\n";
          return kExitNumerical;
        }
      }
      return kExitOk;
    }

    if (cmd == abl) {
      TrainConfig cfg = resolve_train_config(cmd, ta);
      std::vector<std::set<std::string>> g;
      AblationStage stage;
      if (grid == "table3") {
        g = stage1_ablation_grid();
        stage = AblationStage::spectral;
      } else if (grid == "table4") {
        g = stage2_ablation_grid();
        stage = AblationStage::spatial;
      } else {
        if (stage_name.empty()) throw UsageError("ablate: --stage is required with a custom grid");
        g = parse_grid(grid);
        stage = stage_name == "spectral" ? AblationStage::spectral : AblationStage::spatial;
      }
      if (!stage_name.empty() && (stage_name == "spectral") != (stage == AblationStage::spectral)) {
        throw UsageError("ablate: --stage contradicts the named grid");
      }
      print_resolved(err, cmd, {{"train", to_json(cfg)}});
      const auto corpus = load_corpus(ta.data, common.bands);
      const auto test = load_labeled(test_dir, common.bands);
      const auto rows = run_ablation(corpus, test, cfg, g, stage, parse_fusion(abl_fusion));
      const std::string csv = ablation_csv(rows, stage);
      write_text(abl_out, csv);
      out << csv;
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n" << cmd->help();
    return kExitUsage;
  } catch (const SpecError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace rebelhad
