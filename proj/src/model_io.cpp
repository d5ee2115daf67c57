#include "rebelhad/model_io.hpp"

#include <json.hpp>

#include "rebelhad/error.hpp"
#include "rebelhad/io.hpp"

namespace rebelhad {

namespace {

using nlohmann::json;

constexpr std::string_view kMagic = "RSM1";
constexpr std::string_view kSpaPrefix = "spa.";

// Copies the values of `src` into `dst`, requiring identical names, order,
// shapes and freeze flags.
void copy_checked(const ParamTree& src, ParamTree& dst, std::string_view what) {
  if (src.size() != dst.size()) {
    throw ModelError(std::string(what) + ": expected " + std::to_string(dst.size()) + " entries, found " +
                     std::to_string(src.size()));
  }
  for (size_t i = 0; i < src.size(); ++i) {
    const ParamEntry& s = src.entry(i);
    ParamEntry& d = dst.entry(i);
    if (s.name != d.name) throw ModelError(std::string(what) + ": unexpected entry '" + s.name + "'");
    if (!s.value.same_shape(d.value)) {
      throw ModelError(std::string(what) + ": shape mismatch for '" + s.name + "': " + s.value.shape_string() +
                       " vs " + d.value.shape_string());
    }
    if (s.frozen != d.frozen) throw ModelError(std::string(what) + ": freeze flag mismatch for '" + s.name + "'");
    d.value = s.value;
  }
}

}  // namespace

std::string encode_model(const ModelFile& model) {
  json entries = json::array();
  size_t payload = 0;
  for (const ParamEntry& e : model.params.entries()) {
    const auto& s = e.value.shape();
    entries.push_back({{"name", e.name}, {"shape", {s[0], s[1], s[2], s[3]}}, {"frozen", e.frozen}});
    payload += e.value.size();
  }
  const json header = {
      {"format", kMagic},
      {"stage", model.stage},
      {"B", model.bands},
      {"widths", {{"c1", model.widths.c1}, {"c2", model.widths.c2}, {"c3", model.widths.c3}, {"ds", model.widths.ds}}},
      {"seed", model.seed},
      {"entries", entries},
  };
  std::string out = header.dump();
  out.push_back('\n');
  out.reserve(out.size() + payload * 8);
  for (const ParamEntry& e : model.params.entries()) {
    for (double v : e.value.values()) put_f64le(out, v);
  }
  return out;
}

ModelFile decode_model(std::string_view bytes) {
  const size_t nl = bytes.find('\n');
  if (nl == std::string_view::npos) throw FormatError("model: missing header terminator");
  json header;
  try {
    header = json::parse(bytes.substr(0, nl));
  } catch (const json::exception& e) {
    throw FormatError(std::string("model: malformed header: ") + e.what());
  }
  ModelFile m;
  size_t offset = nl + 1;
  try {
    if (header.at("format").get<std::string>() != kMagic) throw FormatError("model: bad format tag");
    m.stage = header.at("stage").get<std::string>();
    m.bands = header.at("B").get<int>();
    const json& w = header.at("widths");
    m.widths = {w.at("c1").get<int>(), w.at("c2").get<int>(), w.at("c3").get<int>(), w.at("ds").get<int>()};
    m.seed = header.at("seed").get<uint64_t>();
    for (const json& e : header.at("entries")) {
      const auto shape = e.at("shape").get<std::vector<int>>();
      if (shape.size() != 4) throw FormatError("model: entry shape must have 4 axes");
      size_t count = 1;
      for (int d : shape) {
        if (d <= 0 || d > (1 << 20)) throw FormatError("model: invalid entry shape");
        count *= static_cast<size_t>(d);
      }
      if (count > (bytes.size() - offset) / 8) throw FormatError("model: truncated payload");
      Tensor t(shape[0], shape[1], shape[2], shape[3]);
      for (size_t i = 0; i < count; ++i) t[i] = get_f64le(bytes.data() + offset + 8 * i);
      offset += 8 * count;
      m.params.add(e.at("name").get<std::string>(), std::move(t), e.at("frozen").get<bool>());
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("model: malformed header: ") + e.what());
  } catch (const SpecError& e) {
    throw FormatError(std::string("model: ") + e.what());
  }
  if (offset != bytes.size()) throw FormatError("model: trailing bytes after payload");
  if (m.bands <= 0) throw FormatError("model: invalid band count");
  return m;
}

void save_model(const ModelFile& model, const std::filesystem::path& path) {
  write_file_atomic(path, encode_model(model));
}

ModelFile load_model(const std::filesystem::path& path, std::string_view expected_stage) {
  ModelFile m;
  try {
    m = decode_model(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (m.stage != expected_stage) {
    throw ModelError(path.string() + ": stage '" + m.stage + "' where '" + std::string(expected_stage) +
                     "' was expected");
  }
  return m;
}

ModelFile to_model_file(const SpeFen& fen) {
  return {std::string(kStageSpectral), fen.bands, fen.widths, fen.seed, fen.params};
}

ModelFile to_model_file(const SpatialModel& model) {
  if (model.spa.bands != model.frn.bands) throw ModelError("spatial model: band count mismatch");
  ModelFile m{std::string(kStageSpatial), model.spa.bands, model.spa.widths, model.spa.seed, {}};
  m.params.merge(model.spa.params, kSpaPrefix);
  m.params.merge(model.frn.params, "");
  return m;
}

SpeFen spe_fen_from(const ModelFile& file) {
  if (file.stage != kStageSpectral) throw ModelError("expected a spectral model, got '" + file.stage + "'");
  SpeFen fen = prune_to_spe_fen(make_spectral_model(file.bands, file.seed, file.widths));
  copy_checked(file.params, fen.params, "spectral model");
  return fen;
}

SpatialModel spatial_from(const ModelFile& file) {
  if (file.stage != kStageSpatial) throw ModelError("expected a spatial model, got '" + file.stage + "'");
  SpatialModel m{make_spa_fen(file.bands, file.seed, file.widths), make_frn(file.bands, file.seed)};
  ParamTree spa, frn;
  for (const ParamEntry& e : file.params.entries()) {
    if (e.name.starts_with(kSpaPrefix)) {
      spa.add(e.name.substr(kSpaPrefix.size()), e.value, e.frozen);
    } else {
      frn.add(e.name, e.value, e.frozen);
    }
  }
  copy_checked(spa, m.spa.params, "spatial model");
  copy_checked(frn, m.frn.params, "restoration model");
  return m;
}

void save_spe_fen(const SpeFen& fen, const std::filesystem::path& path) { save_model(to_model_file(fen), path); }

SpeFen load_spe_fen(const std::filesystem::path& path) {
  return spe_fen_from(load_model(path, kStageSpectral));
}

void save_spatial(const SpatialModel& model, const std::filesystem::path& path) {
  save_model(to_model_file(model), path);
}

SpatialModel load_spatial(const std::filesystem::path& path) {
  return spatial_from(load_model(path, kStageSpatial));
}

}  // namespace rebelhad
