#pragma once

// Feature files, dataset manifests, PPM/PGM images, augmentation, the frozen
// toy feature extractor and the planted-location synthetic generator.

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "amnet/numerics.hpp"

namespace amnet {

namespace fs = std::filesystem;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Little-endian byte helpers.

namespace le {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint64_t get_u64(const unsigned char* p) {
  return static_cast<std::uint64_t>(get_u32(p)) | (static_cast<std::uint64_t>(get_u32(p + 4)) << 32);
}

inline float get_f32(const unsigned char* p) { return std::bit_cast<float>(get_u32(p)); }
inline double get_f64(const unsigned char* p) { return std::bit_cast<double>(get_u64(p)); }

}  // namespace le

inline std::string read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Feature files: "AMFT", u32 version=1, u32 W, u32 H, u32 D, then W·H·D f32,
// location-major (all D channels of location 0, then location 1, ...).

inline constexpr std::array<char, 4> kFeatureMagic{'A', 'M', 'F', 'T'};
inline constexpr std::uint32_t kFeatureVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 20;

struct GridDims {
  std::size_t W = 0, H = 0, D = 0;
  std::size_t L() const { return W * H; }
  friend bool operator==(const GridDims&, const GridDims&) = default;
};

/// Encodes an L×D tensor; values are narrowed to f32.
inline std::string encode_features(const Tensor& x, GridDims dims) {
  if (x.size() != dims.L() * dims.D)
    throw DimensionError("feature tensor " + shape_str(x.shape()) + " does not match grid " +
                         std::to_string(dims.W) + "x" + std::to_string(dims.H) + "x" + std::to_string(dims.D));
  std::string out(kFeatureMagic.begin(), kFeatureMagic.end());
  le::put_u32(out, kFeatureVersion);
  le::put_u32(out, static_cast<std::uint32_t>(dims.W));
  le::put_u32(out, static_cast<std::uint32_t>(dims.H));
  le::put_u32(out, static_cast<std::uint32_t>(dims.D));
  out.reserve(out.size() + 4 * x.size());
  for (double v : x.values()) le::put_f32(out, static_cast<float>(v));
  return out;
}

inline Tensor decode_features(const std::string& bytes, GridDims* dims_out = nullptr) {
  if (bytes.size() < kFeatureHeaderBytes) {
    throw FormatError("feature file header truncated: expected " + std::to_string(kFeatureHeaderBytes) +
                      " bytes, got " + std::to_string(bytes.size()));
  }
  if (!std::equal(kFeatureMagic.begin(), kFeatureMagic.end(), bytes.begin()))
    throw FormatError("bad feature file magic '" + bytes.substr(0, 4) + "'");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t version = le::get_u32(p + 4);
  if (version != kFeatureVersion) throw FormatError("unsupported feature file version " + std::to_string(version));
  GridDims dims{le::get_u32(p + 8), le::get_u32(p + 12), le::get_u32(p + 16)};
  const std::size_t count = dims.L() * dims.D;
  const std::size_t expected = kFeatureHeaderBytes + 4 * count;
  if (bytes.size() != expected)
    throw FormatError("feature payload length mismatch: expected " + std::to_string(expected) + " bytes, got " +
                      std::to_string(bytes.size()));
  Tensor x({dims.L(), dims.D});
  for (std::size_t i = 0; i < count; ++i) x[i] = le::get_f32(p + kFeatureHeaderBytes + 4 * i);
  if (dims_out) *dims_out = dims;
  return x;
}

inline void write_feature_file(const fs::path& path, const Tensor& x, GridDims dims) {
  write_file_bytes(path, encode_features(x, dims));
}

inline Tensor load_feature_file(const fs::path& path, GridDims* dims_out = nullptr) {
  return decode_features(read_file_bytes(path), dims_out);
}

// ---------------------------------------------------------------------------
// Manifest.

enum class Split { train, val, test };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw FormatError("unknown split '" + s + "'");
}

struct ManifestRecord {
  std::string id;
  std::string path;
  std::optional<double> score;
  Split split = Split::train;
};

struct DatasetManifest {
  GridDims dims;
  std::vector<ManifestRecord> records;

  std::size_t count(Split s) const {
    return static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(), [s](const ManifestRecord& r) { return r.split == s; }));
  }

  /// Unique ids, scores in [0,1].
  void validate() const {
    std::set<std::string> seen;
    for (const auto& r : records) {
      if (!seen.insert(r.id).second) throw FormatError("duplicate record id '" + r.id + "'");
      if (r.score && !(*r.score >= 0.0 && *r.score <= 1.0))
        throw FormatError("record '" + r.id + "' has score outside [0,1]");
    }
  }
};

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : m.records) {
    nlohmann::json j{{"id", r.id}, {"path", r.path}, {"split", to_string(r.split)}};
    if (r.score) j["score"] = *r.score;
    records.push_back(std::move(j));
  }
  return {{"w", m.dims.W}, {"h", m.dims.H}, {"d", m.dims.D}, {"records", std::move(records)}};
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  try {
    DatasetManifest m;
    m.dims = {j.at("w").get<std::size_t>(), j.at("h").get<std::size_t>(), j.at("d").get<std::size_t>()};
    for (const auto& r : j.at("records")) {
      ManifestRecord rec;
      rec.id = r.at("id").get<std::string>();
      rec.path = r.at("path").get<std::string>();
      rec.split = parse_split(r.at("split").get<std::string>());
      if (r.contains("score") && !r.at("score").is_null()) rec.score = r.at("score").get<double>();
      m.records.push_back(std::move(rec));
    }
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
}

inline DatasetManifest load_manifest(const fs::path& path) {
  const std::string text = read_file_bytes(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  return manifest_from_json(j);
}

inline void save_manifest(const fs::path& path, const DatasetManifest& m) {
  write_file_bytes(path, manifest_to_json(m).dump(1) + "\n");
}

struct FeatureRecord {
  std::string id;
  Tensor features;  // L×D
  std::optional<double> score;
};

/// Loads every record of `split`; relative paths resolve against `base_dir`.
inline std::vector<FeatureRecord> load_split(const DatasetManifest& m, const fs::path& base_dir, Split split) {
  std::vector<FeatureRecord> out;
  for (const auto& r : m.records) {
    if (r.split != split) continue;
    const fs::path p = fs::path(r.path).is_absolute() ? fs::path(r.path) : base_dir / r.path;
    GridDims dims;
    Tensor x = load_feature_file(p, &dims);
    if (!(dims == m.dims))
      throw FormatError("feature file " + p.string() + " has grid " + std::to_string(dims.W) + "x" +
                        std::to_string(dims.H) + "x" + std::to_string(dims.D) + ", manifest declares " +
                        std::to_string(m.dims.W) + "x" + std::to_string(m.dims.H) + "x" + std::to_string(m.dims.D));
    out.push_back({r.id, std::move(x), r.score});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Images.

/// 8-bit RGB, row-major, interleaved.
struct ImageTensor {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;

  ImageTensor() = default;
  ImageTensor(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), pixels(h * w * 3, fill) {}

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t ch) { return pixels[(y * width + x) * 3 + ch]; }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t ch) const { return pixels[(y * width + x) * 3 + ch]; }

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;
};

struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
};

namespace detail {

// Reads the whitespace/comment separated header fields of a binary PNM.
inline std::size_t pnm_header(const std::string& bytes, std::size_t pos, std::array<std::size_t, 3>& fields) {
  for (std::size_t& f : fields) {
    for (;;) {
      while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    if (pos >= bytes.size() || !std::isdigit(static_cast<unsigned char>(bytes[pos])))
      throw FormatError("malformed PNM header");
    f = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) f = f * 10 + (bytes[pos++] - '0');
  }
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw FormatError("malformed PNM header");
  return pos + 1;
}

}  // namespace detail

inline ImageTensor decode_ppm(const std::string& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw FormatError("not a binary PPM (P6)");
  std::array<std::size_t, 3> f{};
  const std::size_t pos = detail::pnm_header(bytes, 2, f);
  const auto [w, h, maxval] = f;
  if (w == 0 || h == 0) throw FormatError("PPM has zero size");
  if (maxval != 255) throw FormatError("only 8-bit PPM (maxval 255) is supported");
  if (bytes.size() - pos < w * h * 3)
    throw FormatError("PPM payload truncated: expected " + std::to_string(w * h * 3) + " bytes, got " +
                      std::to_string(bytes.size() - pos));
  ImageTensor img(h, w);
  std::memcpy(img.pixels.data(), bytes.data() + pos, w * h * 3);
  return img;
}

inline std::string encode_ppm(const ImageTensor& img) {
  std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
  return out;
}

inline ImageTensor read_ppm(const fs::path& path) { return decode_ppm(read_file_bytes(path)); }
inline void write_ppm(const fs::path& path, const ImageTensor& img) { write_file_bytes(path, encode_ppm(img)); }

inline std::string encode_pgm(const GrayImage& img) {
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
  return out;
}

inline GrayImage decode_pgm(const std::string& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw FormatError("not a binary PGM (P5)");
  std::array<std::size_t, 3> f{};
  const std::size_t pos = detail::pnm_header(bytes, 2, f);
  const auto [w, h, maxval] = f;
  if (maxval != 255) throw FormatError("only 8-bit PGM (maxval 255) is supported");
  if (bytes.size() - pos < w * h) throw FormatError("PGM payload truncated");
  GrayImage img{h, w, std::vector<std::uint8_t>(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                                bytes.begin() + static_cast<std::ptrdiff_t>(pos + w * h))};
  return img;
}

inline void write_pgm(const fs::path& path, const GrayImage& img) { write_file_bytes(path, encode_pgm(img)); }
inline GrayImage read_pgm(const fs::path& path) { return decode_pgm(read_file_bytes(path)); }

/// Source coordinate for output index `i` under half-pixel-center sampling.
inline double bilinear_source(std::size_t i, std::size_t in, std::size_t out) {
  const double s = (static_cast<double>(i) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
  return std::clamp(s, 0.0, static_cast<double>(in - 1));
}

/// Bilinear resize of a channels-interleaved double grid.
inline std::vector<double> resize_bilinear(const std::vector<double>& src, std::size_t h, std::size_t w,
                                           std::size_t channels, std::size_t out_h, std::size_t out_w) {
  std::vector<double> out(out_h * out_w * channels);
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    const double sy = bilinear_source(oy, h, out_h);
    const auto y0 = static_cast<std::size_t>(sy);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      const double sx = bilinear_source(ox, w, out_w);
      const auto x0 = static_cast<std::size_t>(sx);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double fx = sx - static_cast<double>(x0);
      for (std::size_t c = 0; c < channels; ++c) {
        auto px = [&](std::size_t y, std::size_t x) { return src[(y * w + x) * channels + c]; };
        const double top = px(y0, x0) * (1.0 - fx) + px(y0, x1) * fx;
        const double bot = px(y1, x0) * (1.0 - fx) + px(y1, x1) * fx;
        out[(oy * out_w + ox) * channels + c] = top * (1.0 - fy) + bot * fy;
      }
    }
  }
  return out;
}

struct CropRect {
  std::size_t y = 0, x = 0, height = 0, width = 0;
  friend bool operator==(const CropRect&, const CropRect&) = default;
};

/// Crops `rect` and resizes to out_h×out_w bilinearly.
inline ImageTensor crop_and_resize(const ImageTensor& img, CropRect rect, std::size_t out_h, std::size_t out_w) {
  if (rect.height == 0 || rect.width == 0 || rect.y + rect.height > img.height || rect.x + rect.width > img.width)
    throw DimensionError("crop rectangle lies outside the image");
  std::vector<double> src(rect.height * rect.width * 3);
  for (std::size_t y = 0; y < rect.height; ++y)
    for (std::size_t x = 0; x < rect.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) src[(y * rect.width + x) * 3 + c] = img.at(rect.y + y, rect.x + x, c);
  const auto dst = resize_bilinear(src, rect.height, rect.width, 3, out_h, out_w);
  ImageTensor out(out_h, out_w);
  for (std::size_t i = 0; i < dst.size(); ++i) out.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(dst[i], 0.0, 255.0)));
  return out;
}

inline ImageTensor resize_image(const ImageTensor& img, std::size_t out_h, std::size_t out_w) {
  return crop_and_resize(img, {0, 0, img.height, img.width}, out_h, out_w);
}

inline constexpr std::size_t kCropSize = 224;

struct CropRange {
  double area_min = 0.08, area_max = 1.0;
  double aspect_min = 3.0 / 4.0, aspect_max = 4.0 / 3.0;
  int attempts = 10;
};

/// Crop of `area_fraction` of the image with width/height ratio `aspect`,
/// or nullopt when it does not fit.
inline std::optional<std::pair<std::size_t, std::size_t>> crop_extent(std::size_t h, std::size_t w,
                                                                     double area_fraction, double aspect) {
  const double area = area_fraction * static_cast<double>(h * w);
  const auto cw = static_cast<std::size_t>(std::lround(std::sqrt(area * aspect)));
  const auto ch = static_cast<std::size_t>(std::lround(std::sqrt(area / aspect)));
  if (cw == 0 || ch == 0 || cw > w || ch > h) return std::nullopt;
  return std::pair{ch, cw};
}

/// Central window of at most size×size.
inline CropRect center_rect(std::size_t h, std::size_t w, std::size_t size) {
  const std::size_t ch = std::min(h, size), cw = std::min(w, size);
  return {(h - ch) / 2, (w - cw) / 2, ch, cw};
}

/// Area fraction uniform, aspect log-uniform; falls back to the largest
/// central square after `attempts` misses.
template <class Rng>
CropRect sample_crop_rect(std::size_t h, std::size_t w, Rng& rng, const CropRange& range = {}) {
  std::uniform_real_distribution<double> area(range.area_min, range.area_max);
  std::uniform_real_distribution<double> log_aspect(std::log(range.aspect_min), std::log(range.aspect_max));
  for (int i = 0; i < range.attempts; ++i) {
    const double a = area(rng);
    const double r = std::exp(log_aspect(rng));
    if (auto ext = crop_extent(h, w, a, r)) {
      const auto [ch, cw] = *ext;
      std::uniform_int_distribution<std::size_t> oy(0, h - ch), ox(0, w - cw);
      const std::size_t y = oy(rng);
      return {y, ox(rng), ch, cw};
    }
  }
  return center_rect(h, w, std::min(h, w));
}

template <class Rng>
ImageTensor random_resized_crop(const ImageTensor& img, Rng& rng, std::size_t out = kCropSize,
                                const CropRange& range = {}) {
  if (img.height == 0 || img.width == 0) throw DimensionError("random_resized_crop: empty image");
  return crop_and_resize(img, sample_crop_rect(img.height, img.width, rng, range), out, out);
}

inline ImageTensor flip_columns(const ImageTensor& img) {
  ImageTensor out = img;
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) out.at(y, img.width - 1 - x, c) = img.at(y, x, c);
  return out;
}

/// Mirrors columns with probability 0.5.
template <class Rng>
ImageTensor horizontal_flip(const ImageTensor& img, Rng& rng) {
  std::bernoulli_distribution coin(0.5);
  return coin(rng) ? flip_columns(img) : img;
}

/// Resizes the shorter side to `size` when it differs, then takes the
/// central size×size window; odd excess is split with the smaller half first.
inline ImageTensor center_crop(const ImageTensor& img, std::size_t size = kCropSize) {
  if (img.height == 0 || img.width == 0) throw DimensionError("center_crop: empty image");
  ImageTensor src = img;
  const std::size_t shortest = std::min(img.height, img.width);
  if (shortest != size) {
    const double s = static_cast<double>(size) / static_cast<double>(shortest);
    const auto nh = std::max(size, static_cast<std::size_t>(std::lround(static_cast<double>(img.height) * s)));
    const auto nw = std::max(size, static_cast<std::size_t>(std::lround(static_cast<double>(img.width) * s)));
    src = resize_image(img, nh, nw);
  }
  const CropRect r = center_rect(src.height, src.width, size);
  ImageTensor out(size, size);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x)
      for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = src.at(r.y + y, r.x + x, c);
  return out;
}

/// Training path: random resized crop then random flip.
template <class Rng>
ImageTensor augment_train(const ImageTensor& img, Rng& rng) {
  return horizontal_flip(random_resized_crop(img, rng), rng);
}

// ---------------------------------------------------------------------------
// Frozen toy extractor: per-pixel random 3→D projection with bias, ReLU, then
// 16×16 average pooling of a 224×224 image to a 14×14 grid.

inline constexpr std::size_t kToyGrid = 14;
inline constexpr std::size_t kToyPool = 16;
inline constexpr std::size_t kToyDefaultChannels = 32;

struct ToyExtractor {
  std::size_t channels = kToyDefaultChannels;
  std::vector<double> weights;  // channels×3
  std::vector<double> bias;     // channels

  explicit ToyExtractor(std::uint64_t seed, std::size_t d = kToyDefaultChannels) : channels(d) {
    if (d == 0) throw std::invalid_argument("toy extractor needs at least one channel");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    weights.resize(d * 3);
    bias.resize(d);
    for (double& w : weights) w = n(rng);
    for (double& b : bias) b = 0.5 * n(rng);
  }

  GridDims dims() const { return {kToyGrid, kToyGrid, channels}; }

  /// L×D features with L = 14·14, location index y·14 + x.
  Tensor operator()(const ImageTensor& img) const {
    if (img.height != kToyGrid * kToyPool || img.width != kToyGrid * kToyPool)
      throw DimensionError("toy_extract expects a 224x224 image, got " + std::to_string(img.height) + "x" +
                           std::to_string(img.width));
    Tensor out({kToyGrid * kToyGrid, channels});
    const double inv = 1.0 / static_cast<double>(kToyPool * kToyPool);
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x) {
        const std::size_t loc = (y / kToyPool) * kToyGrid + x / kToyPool;
        const double r = img.at(y, x, 0) / 255.0, g = img.at(y, x, 1) / 255.0, b = img.at(y, x, 2) / 255.0;
        for (std::size_t c = 0; c < channels; ++c) {
          const double v = weights[c * 3] * r + weights[c * 3 + 1] * g + weights[c * 3 + 2] * b + bias[c];
          if (v > 0.0) out[loc * channels + c] += v * inv;
        }
      }
    return out;
  }
};

inline Tensor toy_extract(const ImageTensor& img, std::uint64_t extractor_seed, std::size_t d = kToyDefaultChannels) {
  return ToyExtractor(extractor_seed, d)(img);
}

// ---------------------------------------------------------------------------
// Synthetic planted-location data.
//
// Channel 0 of every location is a marker: small noise everywhere except the
// planted location, where it is set high. The score depends only on the
// remaining channels at the planted location, through a fixed random
// direction, so averaging over locations dilutes the signal L-fold.

struct SynthOptions {
  GridDims dims{14, 14, 32};
  double noise = 0.02;
  double marker = 4.0;
  double marker_spread = 0.5;
  /// Channels 1..k carry the score; 0 means all D-1 non-marker channels.
  std::size_t signal_channels = 0;
};

struct SynthSample {
  std::string id;
  Tensor features;
  double score = 0.0;
  Split split = Split::train;
  std::size_t planted = 0;
};

struct SynthDataset {
  GridDims dims;
  std::vector<double> direction;  // weights over channels 1..k
  std::vector<SynthSample> samples;

  std::vector<FeatureRecord> records(Split s) const {
    std::vector<FeatureRecord> out;
    for (const auto& x : samples)
      if (x.split == s) out.push_back({x.id, x.features, x.score});
    return out;
  }
};

/// Noise-free score of a planted feature vector.
inline double planted_signal(const double* location, const std::vector<double>& direction) {
  double dot = 0.0;
  for (std::size_t c = 0; c < direction.size(); ++c) dot += direction[c] * location[c + 1];
  return 0.5 + 0.45 * std::tanh(dot / std::sqrt(static_cast<double>(direction.size())));
}

/// Split sizes for n samples: 15% validation and 15% test (at least one
/// each), remainder train.
inline std::array<std::size_t, 3> split_counts(std::size_t n) {
  const std::size_t val = std::max<std::size_t>(1, n * 15 / 100);
  const std::size_t test = std::max<std::size_t>(1, n * 15 / 100);
  return {n - val - test, val, test};
}

inline SynthDataset synth_dataset(std::size_t n, std::uint64_t seed, const SynthOptions& opt = {}) {
  if (n < 4) throw std::invalid_argument("synth_dataset: need at least 4 samples");
  if (opt.dims.D < 2 || opt.dims.L() == 0) throw std::invalid_argument("synth_dataset: need D >= 2 and L >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t L = opt.dims.L(), D = opt.dims.D;

  SynthDataset ds;
  ds.dims = opt.dims;
  const std::size_t k = opt.signal_channels == 0 ? D - 1 : std::min(opt.signal_channels, D - 1);
  ds.direction.resize(k);
  for (double& v : ds.direction) v = normal(rng);
  const auto [n_train, n_val, n_test] = split_counts(n);
  std::uniform_int_distribution<std::size_t> pick(0, L - 1);
  auto f32 = [](double v) { return static_cast<double>(static_cast<float>(v)); };
  for (std::size_t idx = 0; idx < n; ++idx) {
    SynthSample s;
    char id[32];
    std::snprintf(id, sizeof id, "s%06zu", idx);
    s.id = id;
    s.features = Tensor({L, D});
    for (std::size_t i = 0; i < L; ++i) {
      s.features[i * D] = f32(opt.marker_spread * normal(rng));
      for (std::size_t c = 1; c < D; ++c) s.features[i * D + c] = f32(normal(rng));
    }
    s.planted = pick(rng);
    s.features[s.planted * D] = f32(opt.marker);
    const double clean = planted_signal(s.features.data() + s.planted * D, ds.direction);
    s.score = std::clamp(clean + opt.noise * normal(rng), 0.0, 1.0);
    s.split = idx < n_train ? Split::train : (idx < n_train + n_val ? Split::val : Split::test);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

/// Writes one feature file per sample plus manifest.json into `dir`.
inline DatasetManifest write_synth_dataset(const SynthDataset& ds, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "features", ec);
  if (ec) throw IoError("cannot create " + (dir / "features").string() + ": " + ec.message());
  DatasetManifest m;
  m.dims = ds.dims;
  for (const auto& s : ds.samples) {
    const std::string rel = "features/" + s.id + ".amft";
    write_feature_file(dir / rel, s.features, ds.dims);
    m.records.push_back({s.id, rel, s.score, s.split});
  }
  save_manifest(dir / "manifest.json", m);
  return m;
}

}  // namespace amnet
