#pragma once

// Feature-map data model, the FMAP binary format, and the resampling /
// normalization primitives shared by the rest of the library.
//
// FMAP layout (all integers u32 little-endian):
//   "FMAP" | version = 1 | H | W | C | meta_len | meta (UTF-8 JSON) |
//   H*W*C float32 LE payload, row-major, channel-last.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "corrfuse/error.hpp"

namespace corrfuse {

struct MapMeta {
  int source_image_width = 1;
  int source_image_height = 1;
  std::string model_tag;
  std::map<std::string, std::string> extraction_params;

  bool operator==(const MapMeta&) const = default;
};

inline nlohmann::json to_json(const MapMeta& meta) {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [key, value] : meta.extraction_params) params[key] = value;
  return {{"source_image_width", meta.source_image_width},
          {"source_image_height", meta.source_image_height},
          {"model_tag", meta.model_tag},
          {"extraction_params", params}};
}

inline MapMeta meta_from_json(const nlohmann::json& j) {
  MapMeta meta;
  try {
    meta.source_image_width = j.at("source_image_width").get<int>();
    meta.source_image_height = j.at("source_image_height").get<int>();
    meta.model_tag = j.value("model_tag", std::string{});
    if (j.contains("extraction_params")) {
      for (const auto& [key, value] : j.at("extraction_params").items()) {
        meta.extraction_params[key] = value.is_string() ? value.get<std::string>() : value.dump();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("bad FMAP meta: ") + e.what());
  }
  if (meta.source_image_width < 1 || meta.source_image_height < 1) {
    fail(ErrorKind::kValidation, "FMAP meta: source image dims must be >= 1");
  }
  return meta;
}

class FeatureMap {
 public:
  FeatureMap(int height, int width, int channels, std::vector<float> data, MapMeta meta = {})
      : height_(height), width_(width), channels_(channels), data_(std::move(data)), meta_(std::move(meta)) {
    require(height >= 1 && width >= 1 && channels >= 1, "feature map dims must be >= 1");
    require(data_.size() == static_cast<std::size_t>(height) * width * channels,
            "feature map payload length does not match H*W*C");
    require(meta_.source_image_width >= 1 && meta_.source_image_height >= 1,
            "source image dims must be >= 1");
  }

  static FeatureMap zeros(int height, int width, int channels, MapMeta meta = {}) {
    require(height >= 1 && width >= 1 && channels >= 1, "feature map dims must be >= 1");
    return FeatureMap(height, width, channels,
                      std::vector<float>(static_cast<std::size_t>(height) * width * channels, 0.0f),
                      std::move(meta));
  }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  int tokens() const noexcept { return height_ * width_; }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }

  std::span<const float> token(int index) const noexcept {
    return {data_.data() + static_cast<std::size_t>(index) * channels_, static_cast<std::size_t>(channels_)};
  }
  std::span<float> token(int index) noexcept {
    return {data_.data() + static_cast<std::size_t>(index) * channels_, static_cast<std::size_t>(channels_)};
  }
  std::span<const float> token(int row, int col) const noexcept { return token(row * width_ + col); }
  std::span<float> token(int row, int col) noexcept { return token(row * width_ + col); }

  float at(int row, int col, int channel) const noexcept {
    return data_[(static_cast<std::size_t>(row) * width_ + col) * channels_ + channel];
  }

  const MapMeta& meta() const noexcept { return meta_; }
  MapMeta& meta() noexcept { return meta_; }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
  }

  bool operator==(const FeatureMap& other) const = default;

 private:
  int height_;
  int width_;
  int channels_;
  std::vector<float> data_;
  MapMeta meta_;
};

struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(int h, int w, bool fill = false)
      : height(h), width(w), bits(static_cast<std::size_t>(h) * w, fill ? 1 : 0) {
    require(h >= 1 && w >= 1, "mask dims must be >= 1");
  }

  bool at(int row, int col) const noexcept { return bits[static_cast<std::size_t>(row) * width + col] != 0; }
  bool at(int index) const noexcept { return bits[static_cast<std::size_t>(index)] != 0; }
  void set(int row, int col, bool value) noexcept { bits[static_cast<std::size_t>(row) * width + col] = value ? 1 : 0; }

  std::size_t count() const noexcept {
    return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; }));
  }
  bool same_dims(int h, int w) const noexcept { return height == h && width == w; }

  bool operator==(const Mask&) const = default;
};

// Nearest-neighbour resampling with pixel-center alignment.
inline Mask resample_mask(const Mask& mask, int new_h, int new_w) {
  require(new_h >= 1 && new_w >= 1, "mask resample dims must be >= 1");
  if (mask.same_dims(new_h, new_w)) return mask;
  Mask out(new_h, new_w);
  for (int r = 0; r < new_h; ++r) {
    const int sr = std::min(mask.height - 1, static_cast<int>((r + 0.5) * mask.height / new_h));
    for (int c = 0; c < new_w; ++c) {
      const int sc = std::min(mask.width - 1, static_cast<int>((c + 0.5) * mask.width / new_w));
      out.set(r, c, mask.at(sr, sc));
    }
  }
  return out;
}

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

inline std::uint32_t get_u32(const std::string& in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  return v;
}

inline float get_f32(const std::string& in, std::size_t offset) { return std::bit_cast<float>(get_u32(in, offset)); }

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) fail(ErrorKind::kIo, "read failed: " + path.string());
  return bytes;
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::kIo, "write failed: " + path.string());
}

}  // namespace detail

inline constexpr std::uint32_t kFmapVersion = 1;

inline std::string encode_fmap(const FeatureMap& map) {
  if (!map.all_finite()) fail(ErrorKind::kValidation, "feature map contains NaN or Inf");
  const std::string meta = to_json(map.meta()).dump();
  std::string out;
  out.reserve(24 + meta.size() + map.data().size() * 4);
  out.append("FMAP", 4);
  detail::put_u32(out, kFmapVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(map.height()));
  detail::put_u32(out, static_cast<std::uint32_t>(map.width()));
  detail::put_u32(out, static_cast<std::uint32_t>(map.channels()));
  detail::put_u32(out, static_cast<std::uint32_t>(meta.size()));
  out += meta;
  for (float v : map.data()) detail::put_f32(out, v);
  return out;
}

inline FeatureMap decode_fmap(const std::string& bytes) {
  if (bytes.size() < 24 || bytes.compare(0, 4, "FMAP") != 0) fail(ErrorKind::kFormat, "not an FMAP file (bad magic)");
  const std::uint32_t version = detail::get_u32(bytes, 4);
  if (version != kFmapVersion) fail(ErrorKind::kFormat, "unsupported FMAP version " + std::to_string(version));
  const std::uint64_t h = detail::get_u32(bytes, 8);
  const std::uint64_t w = detail::get_u32(bytes, 12);
  const std::uint64_t c = detail::get_u32(bytes, 16);
  const std::uint64_t meta_len = detail::get_u32(bytes, 20);
  if (h == 0 || w == 0 || c == 0) fail(ErrorKind::kCorrupt, "FMAP header has a zero dimension");
  if (24 + meta_len > bytes.size()) fail(ErrorKind::kCorrupt, "FMAP meta extends past end of file");
  const std::uint64_t count = h * w * c;
  const std::uint64_t payload = bytes.size() - 24 - meta_len;
  if (payload != count * 4) {
    fail(ErrorKind::kCorrupt, "FMAP payload holds " + std::to_string(payload) + " bytes, header implies " +
                                  std::to_string(count * 4));
  }
  nlohmann::json meta_json;
  try {
    meta_json = nlohmann::json::parse(bytes.begin() + 24, bytes.begin() + 24 + static_cast<std::ptrdiff_t>(meta_len));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("FMAP meta is not valid JSON: ") + e.what());
  }
  std::vector<float> data(count);
  const std::size_t base = 24 + meta_len;
  for (std::size_t i = 0; i < count; ++i) {
    data[i] = detail::get_f32(bytes, base + 4 * i);
    if (!std::isfinite(data[i])) fail(ErrorKind::kValidation, "FMAP payload contains NaN or Inf at element " + std::to_string(i));
  }
  return FeatureMap(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c), std::move(data),
                    meta_from_json(meta_json));
}

inline FeatureMap read_fmap(const std::filesystem::path& path) { return decode_fmap(detail::read_file(path)); }

inline void write_fmap(const FeatureMap& map, const std::filesystem::path& path) {
  detail::write_file(path, encode_fmap(map));
}

/// Bilinear resampling with pixel-center alignment: output cell i samples the
/// source at (i + 0.5) * in / out - 0.5, clamped to the border cells.
inline FeatureMap bilinear_resize(const FeatureMap& map, int new_h, int new_w) {
  require(new_h >= 1 && new_w >= 1, "resize dims must be >= 1");
  if (new_h == map.height() && new_w == map.width()) return map;

  struct Tap {
    int lo, hi;
    double frac;
  };
  auto taps = [](int in, int out) {
    std::vector<Tap> result(out);
    const double scale = static_cast<double>(in) / out;
    for (int i = 0; i < out; ++i) {
      double s = std::clamp((i + 0.5) * scale - 0.5, 0.0, static_cast<double>(in - 1));
      int lo = static_cast<int>(std::floor(s));
      int hi = std::min(lo + 1, in - 1);
      result[i] = {lo, hi, s - lo};
    }
    return result;
  };
  const auto ys = taps(map.height(), new_h);
  const auto xs = taps(map.width(), new_w);
  const int channels = map.channels();

  FeatureMap out = FeatureMap::zeros(new_h, new_w, channels, map.meta());
  for (int r = 0; r < new_h; ++r) {
    const Tap ty = ys[r];
    for (int c = 0; c < new_w; ++c) {
      const Tap tx = xs[c];
      const auto a = map.token(ty.lo, tx.lo);
      const auto b = map.token(ty.lo, tx.hi);
      const auto d = map.token(ty.hi, tx.lo);
      const auto e = map.token(ty.hi, tx.hi);
      auto dst = out.token(r, c);
      for (int ch = 0; ch < channels; ++ch) {
        const double top = a[ch] + tx.frac * (static_cast<double>(b[ch]) - a[ch]);
        const double bottom = d[ch] + tx.frac * (static_cast<double>(e[ch]) - d[ch]);
        dst[ch] = static_cast<float>(top + ty.frac * (bottom - top));
      }
    }
  }
  return out;
}

// Float rounding of a unit vector moves its squared norm by at most ~1.2e-7.
inline constexpr double kUnitNormSlack = 5e-7;

/// Scales every token to unit L2 norm. All-zero tokens stay zero, and tokens
/// already unit within float rounding are left bit-for-bit unchanged, so the
/// operation is exactly idempotent.
inline FeatureMap l2_normalize(FeatureMap map) {
  for (int t = 0; t < map.tokens(); ++t) {
    auto tok = map.token(t);
    double sq = 0.0;
    for (float v : tok) sq += static_cast<double>(v) * v;
    if (sq == 0.0 || std::abs(sq - 1.0) <= kUnitNormSlack) continue;
    const double inv = 1.0 / std::sqrt(sq);
    for (float& v : tok) v = static_cast<float>(v * inv);
  }
  return map;
}

/// Concatenates two maps with equal spatial dims along the channel axis.
inline FeatureMap concat_channels(const FeatureMap& a, const FeatureMap& b) {
  require(a.height() == b.height() && a.width() == b.width(), "concat_channels: spatial dims differ");
  FeatureMap out = FeatureMap::zeros(a.height(), a.width(), a.channels() + b.channels(), a.meta());
  for (int t = 0; t < a.tokens(); ++t) {
    auto dst = out.token(t);
    std::copy(a.token(t).begin(), a.token(t).end(), dst.begin());
    std::copy(b.token(t).begin(), b.token(t).end(), dst.begin() + a.channels());
  }
  return out;
}

}  // namespace corrfuse
