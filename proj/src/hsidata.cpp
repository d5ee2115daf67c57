#include "rebelhad/hsidata.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <string>

#include "rebelhad/error.hpp"
#include "rebelhad/io.hpp"
#include "rebelhad/rng.hpp"

namespace rebelhad {

namespace {

constexpr char kCubeMagic[4] = {'H', 'C', 'F', '1'};
constexpr size_t kCubeHeaderBytes = 16;
constexpr int kEndmemberSmoothing = 2;
constexpr int kPlacementRetries = 1000;

void check_dims(int h, int w, int b) {
  if (h < 1) throw ShapeError("cube height must be >= 1");
  if (w < 1) throw ShapeError("cube width must be >= 1");
  if (b < 1) throw ShapeError("cube bands must be >= 1");
}

// Box filter of radius r along a strided line; the window is clipped at the
// borders and the mean is taken over the in-range samples.
void box_blur_line(const double* src, double* dst, int len, size_t stride, int r) {
  for (int i = 0; i < len; ++i) {
    const int lo = std::max(0, i - r);
    const int hi = std::min(len - 1, i + r);
    double s = 0.0;
    for (int j = lo; j <= hi; ++j) s += src[j * stride];
    dst[i * stride] = s / (hi - lo + 1);
  }
}

void box_blur_2d(std::vector<double>& field, int h, int w, int r) {
  if (r <= 0) return;
  std::vector<double> tmp(field.size());
  for (int y = 0; y < h; ++y) {
    box_blur_line(field.data() + static_cast<size_t>(y) * w, tmp.data() + static_cast<size_t>(y) * w,
                  w, 1, r);
  }
  for (int x = 0; x < w; ++x) box_blur_line(tmp.data() + x, field.data() + x, h, w, r);
}

}  // namespace

HsiCube::HsiCube(int height, int width, int bands, double fill)
    : height_(height), width_(width), bands_(bands) {
  check_dims(height, width, bands);
  data_.assign(static_cast<size_t>(height) * width * bands, fill);
}

HsiCube::HsiCube(int height, int width, int bands, std::vector<double> data)
    : height_(height), width_(width), bands_(bands), data_(std::move(data)) {
  check_dims(height, width, bands);
  if (data_.size() != static_cast<size_t>(height) * width * bands) {
    throw ShapeError("cube data length does not equal height*width*bands");
  }
}

Tensor HsiCube::to_tensor() const {
  Tensor t(1, bands_, height_, width_);
  std::copy(data_.begin(), data_.end(), t.data());
  return t;
}

HsiCube HsiCube::from_tensor(const Tensor& t, int index) {
  if (index < 0 || index >= t.n()) throw RangeError("from_tensor: sample index out of range");
  std::vector<double> data(t.sample(index), t.sample(index) + t.sample_size());
  return HsiCube(t.h(), t.w(), t.c(), std::move(data));
}

size_t GroundTruthMask::positives() const {
  return static_cast<size_t>(std::count_if(labels.begin(), labels.end(), [](uint8_t v) { return v != 0; }));
}

std::string encode_cube(const HsiCube& cube) {
  std::string out;
  out.reserve(kCubeHeaderBytes + cube.size() * 4);
  out.append(kCubeMagic, 4);
  put_u32le(out, static_cast<uint32_t>(cube.height()));
  put_u32le(out, static_cast<uint32_t>(cube.width()));
  put_u32le(out, static_cast<uint32_t>(cube.bands()));
  for (double v : cube.data()) put_f32le(out, static_cast<float>(v));
  return out;
}

HsiCube decode_cube(std::string_view bytes) {
  if (bytes.size() < 4 || !std::equal(kCubeMagic, kCubeMagic + 4, bytes.begin())) {
    throw FormatError("HCF1: bad magic");
  }
  if (bytes.size() < kCubeHeaderBytes) throw FormatError("HCF1: truncated header");
  const uint32_t h = get_u32le(bytes.data() + 4);
  const uint32_t w = get_u32le(bytes.data() + 8);
  const uint32_t b = get_u32le(bytes.data() + 12);
  constexpr uint32_t kMaxDim = static_cast<uint32_t>(std::numeric_limits<int>::max());
  if (h == 0 || h > kMaxDim) throw FormatError("HCF1: invalid height " + std::to_string(h));
  if (w == 0 || w > kMaxDim) throw FormatError("HCF1: invalid width " + std::to_string(w));
  if (b == 0 || b > kMaxDim) throw FormatError("HCF1: invalid bands " + std::to_string(b));
  const uint64_t pixels = static_cast<uint64_t>(h) * w;
  constexpr uint64_t kMaxValues = (uint64_t{1} << 40);
  if (pixels > kMaxValues) throw FormatError("HCF1: dimension overflow in width");
  if (pixels * b > kMaxValues) throw FormatError("HCF1: dimension overflow in bands");
  const uint64_t count = pixels * b;
  const uint64_t need = kCubeHeaderBytes + count * 4;
  if (bytes.size() < need) throw FormatError("HCF1: truncated payload");
  if (bytes.size() > need) throw FormatError("HCF1: trailing bytes after payload");
  std::vector<double> data(count);
  const char* p = bytes.data() + kCubeHeaderBytes;
  for (uint64_t i = 0; i < count; ++i, p += 4) data[i] = get_f32le(p);
  return HsiCube(static_cast<int>(h), static_cast<int>(w), static_cast<int>(b), std::move(data));
}

HsiCube read_cube(const std::filesystem::path& path) {
  try {
    return decode_cube(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_cube(const HsiCube& cube, const std::filesystem::path& path) {
  write_file_atomic(path, encode_cube(cube));
}

GroundTruthMask read_mask(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  size_t pos = 0;
  auto fail = [&](const std::string& why) { throw FormatError(path.string() + ": PGM " + why); };
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&](const char* field) {
    skip_space();
    size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos || pos - start > 9) fail(std::string("bad ") + field);
    return std::stoi(bytes.substr(start, pos - start));
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') fail("bad magic");
  pos = 2;
  const int w = read_int("width");
  const int h = read_int("height");
  const int maxval = read_int("maxval");
  if (w < 1 || h < 1) fail("zero dimension");
  if (maxval != 255) fail("maxval must be 255");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) fail("bad header");
  ++pos;
  const size_t count = static_cast<size_t>(w) * h;
  if (bytes.size() - pos < count) fail("truncated payload");
  GroundTruthMask mask(h, w);
  for (size_t i = 0; i < count; ++i) mask.labels[i] = bytes[pos + i] != 0 ? 1 : 0;
  return mask;
}

void write_mask(const GroundTruthMask& mask, const std::filesystem::path& path) {
  std::string out = "P5\n" + std::to_string(mask.width) + " " + std::to_string(mask.height) + "\n255\n";
  for (uint8_t v : mask.labels) out.push_back(static_cast<char>(v ? 255 : 0));
  write_file_atomic(path, out);
}

HsiCube select_bands(const HsiCube& cube, int first_k) {
  if (first_k < 1 || first_k > cube.bands()) {
    throw RangeError("select_bands: k=" + std::to_string(first_k) + " outside [1, " +
                     std::to_string(cube.bands()) + "]");
  }
  std::vector<double> data(cube.data().begin(),
                           cube.data().begin() + static_cast<std::ptrdiff_t>(cube.pixels() * first_k));
  return HsiCube(cube.height(), cube.width(), first_k, std::move(data));
}

HsiCube normalize(const HsiCube& cube) {
  HsiCube out = cube;
  if (out.size() == 0) return out;
  const auto [lo_it, hi_it] = std::minmax_element(out.data().begin(), out.data().end());
  const double lo = *lo_it;
  const double range = *hi_it - lo;
  for (double& v : out.data()) v = range > 0.0 ? (v - lo) / range : 0.0;
  return out;
}

std::pair<HsiCube, GroundTruthMask> synth_scene(const SceneSpec& spec) {
  const int h = spec.height, w = spec.width, nb = spec.bands, ne = spec.endmembers;
  if (h < 1 || w < 1 || nb < 1) throw SpecError("scene dimensions must be >= 1");
  if (ne < 2) throw SpecError("scene needs at least 2 endmembers");
  if (spec.anomaly_count < 0) throw SpecError("anomaly_count must be >= 0");
  if (spec.anomaly_contrast < 0.0 || spec.noise_sigma < 0.0) {
    throw SpecError("anomaly_contrast and noise_sigma must be >= 0");
  }
  if (spec.smoothness < 0) throw SpecError("smoothness must be >= 0");
  if (spec.anomaly_count > 0 &&
      (spec.anomaly_size < 1 || spec.anomaly_size > h - 2 || spec.anomaly_size > w - 2)) {
    throw SpecError("anomaly of size " + std::to_string(spec.anomaly_size) +
                    " does not fit inside the 1-pixel border");
  }

  SplitMix64 rng(spec.seed);
  const size_t npix = static_cast<size_t>(h) * w;

  // Endmember spectra: uniform draws smoothed along the band axis.
  std::vector<std::vector<double>> endmembers(ne, std::vector<double>(nb));
  for (auto& s : endmembers) {
    std::vector<double> raw(nb);
    for (double& v : raw) v = rng.uniform();
    box_blur_line(raw.data(), s.data(), nb, 1, kEndmemberSmoothing);
  }

  // Abundance fields: blurred uniform noise, stretched to [0,1], then
  // normalized to sum to one per pixel.
  std::vector<std::vector<double>> abundance(ne, std::vector<double>(npix));
  for (auto& field : abundance) {
    for (double& v : field) v = rng.uniform();
    box_blur_2d(field, h, w, spec.smoothness);
    const auto [lo, hi] = std::minmax_element(field.begin(), field.end());
    const double l = *lo, range = *hi - *lo;
    for (double& v : field) v = range > 0.0 ? (v - l) / range : 0.5;
  }
  for (size_t p = 0; p < npix; ++p) {
    double total = 0.0;
    for (int e = 0; e < ne; ++e) total += abundance[e][p] + 1e-3;
    for (int e = 0; e < ne; ++e) abundance[e][p] = (abundance[e][p] + 1e-3) / total;
  }

  HsiCube cube(h, w, nb);
  for (int b = 0; b < nb; ++b) {
    for (size_t p = 0; p < npix; ++p) {
      double v = 0.0;
      for (int e = 0; e < ne; ++e) v += abundance[e][p] * endmembers[e][b];
      cube.at(b, p) = v;
    }
  }
  for (double& v : cube.data()) v += spec.noise_sigma * rng.normal();

  // Square implants: the local background spectrum displaced by
  // anomaly_contrast along a random unit direction, one direction per square.
  GroundTruthMask mask(h, w);
  const int s = spec.anomaly_size;
  for (int k = 0; k < spec.anomaly_count; ++k) {
    int top = -1, left = -1;
    for (int attempt = 0; attempt < kPlacementRetries; ++attempt) {
      const int ty = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(h - 1 - s)));
      const int tx = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(w - 1 - s)));
      bool clash = false;
      for (int y = ty; y < ty + s && !clash; ++y) {
        for (int x = tx; x < tx + s; ++x) {
          if (mask.labels[static_cast<size_t>(y) * w + x]) {
            clash = true;
            break;
          }
        }
      }
      if (!clash) {
        top = ty;
        left = tx;
        break;
      }
    }
    if (top < 0) {
      throw SpecError("could not place anomaly " + std::to_string(k) + " without overlap after " +
                      std::to_string(kPlacementRetries) + " attempts");
    }
    std::vector<double> dir(nb);
    double norm = 0.0;
    for (double& v : dir) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : dir) v = norm > 0.0 ? v / norm : 0.0;
    for (int y = top; y < top + s; ++y) {
      for (int x = left; x < left + s; ++x) {
        const size_t p = static_cast<size_t>(y) * w + x;
        mask.labels[p] = 1;
        for (int b = 0; b < nb; ++b) cube.at(b, p) += spec.anomaly_contrast * dir[b];
      }
    }
  }

  HsiCube out = normalize(cube);
  for (double& v : out.data()) v = static_cast<double>(static_cast<float>(v));
  return {std::move(out), std::move(mask)};
}

}  // namespace rebelhad
