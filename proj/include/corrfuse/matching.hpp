#pragma once

// Exhaustive nearest-neighbour correspondence on feature grids.
//
// Similarity is the cosine between L2-normalized tokens, evaluated in double
// precision with a fixed per-pair summation order. Ties go to the smallest
// row-major target index, so results do not depend on tiling or thread count.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "corrfuse/error.hpp"
#include "corrfuse/featmap.hpp"

namespace corrfuse {

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

struct Correspondence {
  Point src;
  Point tgt;
  double score = 0.0;
  bool valid = true;  // false when the query keypoint was out of bounds
};

struct MatchSet {
  std::string pair_id;
  std::string feature_tag;
  std::vector<Correspondence> entries;
};

struct NnOptions {
  std::optional<Mask> src_mask;  // sources outside the mask get index -1
  std::optional<Mask> tgt_mask;  // targets outside the mask are never returned
  int jobs = 1;
};

struct NnResult {
  int height = 0;  // source grid
  int width = 0;
  std::vector<int> index;     // row-major target index per source token, -1 if skipped
  std::vector<double> score;  // cosine similarity of the chosen pair
};

namespace detail {

inline constexpr int kTargetLanes = 8;

// Targets regrouped in lanes of 8: block b holds channel-major values of
// targets [8b, 8b + 8), zero padded.
struct TargetTiles {
  int count = 0;
  int channels = 0;
  std::vector<double> values;
  std::vector<double> inv_norm;
  std::vector<std::uint8_t> allowed;
};

inline std::vector<double> inverse_norms(const FeatureMap& unit) {
  std::vector<double> inv(unit.tokens(), 0.0);
  for (int t = 0; t < unit.tokens(); ++t) {
    double sq = 0.0;
    for (float v : unit.token(t)) sq += static_cast<double>(v) * v;
    inv[t] = sq > 0.0 ? 1.0 / std::sqrt(sq) : 0.0;
  }
  return inv;
}

inline TargetTiles make_tiles(const FeatureMap& unit, const std::optional<Mask>& mask) {
  TargetTiles tiles;
  tiles.count = unit.tokens();
  tiles.channels = unit.channels();
  const int blocks = (tiles.count + kTargetLanes - 1) / kTargetLanes;
  tiles.values.assign(static_cast<std::size_t>(blocks) * kTargetLanes * tiles.channels, 0.0);
  for (int t = 0; t < tiles.count; ++t) {
    const int b = t / kTargetLanes;
    const int lane = t % kTargetLanes;
    const auto tok = unit.token(t);
    double* base = tiles.values.data() + static_cast<std::size_t>(b) * kTargetLanes * tiles.channels;
    for (int c = 0; c < tiles.channels; ++c) base[c * kTargetLanes + lane] = tok[c];
  }
  tiles.inv_norm = inverse_norms(unit);
  tiles.inv_norm.resize(static_cast<std::size_t>(blocks) * kTargetLanes, 0.0);
  tiles.allowed.assign(static_cast<std::size_t>(blocks) * kTargetLanes, 0);
  for (int t = 0; t < tiles.count; ++t) tiles.allowed[t] = (!mask || mask->at(t)) ? 1 : 0;
  return tiles;
}

inline void search_range(const FeatureMap& src_unit, const std::vector<double>& src_inv, const TargetTiles& tiles,
                         const std::optional<Mask>& src_mask, int begin, int end, NnResult& out) {
  const int channels = tiles.channels;
  const int blocks = static_cast<int>(tiles.allowed.size()) / kTargetLanes;
  std::vector<double> query(channels);
  for (int s = begin; s < end; ++s) {
    if (src_mask && !src_mask->at(s)) continue;
    const auto tok = src_unit.token(s);
    for (int c = 0; c < channels; ++c) query[c] = tok[c];
    int best = -1;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int b = 0; b < blocks; ++b) {
      const double* block = tiles.values.data() + static_cast<std::size_t>(b) * kTargetLanes * channels;
      std::array<double, kTargetLanes> acc{};
      for (int c = 0; c < channels; ++c) {
        const double q = query[c];
        const double* row = block + c * kTargetLanes;
        for (int lane = 0; lane < kTargetLanes; ++lane) acc[lane] += q * row[lane];
      }
      for (int lane = 0; lane < kTargetLanes; ++lane) {
        const int t = b * kTargetLanes + lane;
        if (!tiles.allowed[t]) continue;
        const double score = acc[lane] * src_inv[s] * tiles.inv_norm[t];
        if (score > best_score) {
          best_score = score;
          best = t;
        }
      }
    }
    out.index[s] = best;
    out.score[s] = best_score;
  }
}

}  // namespace detail

/// For every source token, the target token of maximal cosine similarity.
inline NnResult nn_dense(const FeatureMap& src, const FeatureMap& tgt, const NnOptions& options = {}) {
  require(src.channels() == tgt.channels(), "nn_dense: channel counts differ (" + std::to_string(src.channels()) +
                                                " vs " + std::to_string(tgt.channels()) + ")");
  if (options.tgt_mask) {
    require(options.tgt_mask->same_dims(tgt.height(), tgt.width()), "nn_dense: target mask does not match target grid");
    require(options.tgt_mask->count() > 0, "nn_dense: target mask excludes every target token");
  }
  if (options.src_mask) {
    require(options.src_mask->same_dims(src.height(), src.width()), "nn_dense: source mask does not match source grid");
  }
  const FeatureMap src_unit = l2_normalize(src);
  const FeatureMap tgt_unit = l2_normalize(tgt);
  const std::vector<double> src_inv = detail::inverse_norms(src_unit);
  const detail::TargetTiles tiles = detail::make_tiles(tgt_unit, options.tgt_mask);

  NnResult result;
  result.height = src.height();
  result.width = src.width();
  result.index.assign(src.tokens(), -1);
  result.score.assign(src.tokens(), 0.0);

  const int jobs = std::clamp(options.jobs, 1, std::max(1, src.tokens()));
  if (jobs == 1) {
    detail::search_range(src_unit, src_inv, tiles, options.src_mask, 0, src.tokens(), result);
    return result;
  }
  std::vector<std::thread> workers;
  const int chunk = (src.tokens() + jobs - 1) / jobs;
  for (int j = 0; j < jobs; ++j) {
    const int begin = j * chunk;
    const int end = std::min(src.tokens(), begin + chunk);
    if (begin >= end) break;
    workers.emplace_back([&, begin, end] {
      detail::search_range(src_unit, src_inv, tiles, options.src_mask, begin, end, result);
    });
  }
  for (auto& w : workers) w.join();
  return result;
}

// Pixel-center mapping between image pixels and grid cells.
inline double pixel_to_grid(double pixel, int image_extent, int grid_extent) {
  return (pixel + 0.5) * grid_extent / image_extent - 0.5;
}

inline double grid_to_pixel(double cell, int image_extent, int grid_extent) {
  return (cell + 0.5) * image_extent / grid_extent - 0.5;
}

inline int pixel_to_cell(double pixel, int image_extent, int grid_extent) {
  const double g = std::floor(pixel_to_grid(pixel, image_extent, grid_extent) + 0.5);
  return static_cast<int>(std::clamp(g, 0.0, static_cast<double>(grid_extent - 1)));
}

struct ImageSizes {
  int src_w = 1;
  int src_h = 1;
  int tgt_w = 1;
  int tgt_h = 1;
};

inline ImageSizes sizes_from_meta(const FeatureMap& src, const FeatureMap& tgt) {
  return {src.meta().source_image_width, src.meta().source_image_height, tgt.meta().source_image_width,
          tgt.meta().source_image_height};
}

inline bool inside_image(const Point& p, int w, int h) {
  return std::isfinite(p.x) && std::isfinite(p.y) && p.x >= 0.0 && p.y >= 0.0 && p.x < w && p.y < h;
}

/// Maps each source keypoint to its grid cell, finds the cell's nearest
/// target token, and returns that token's pixel center in the target image.
inline MatchSet transfer_keypoints(const FeatureMap& src, const FeatureMap& tgt, const std::vector<Point>& keypoints,
                                   const ImageSizes& sizes, const NnOptions& options = {}) {
  MatchSet out;
  out.feature_tag = src.meta().model_tag;
  if (keypoints.empty()) return out;
  require(sizes.src_w >= 1 && sizes.src_h >= 1 && sizes.tgt_w >= 1 && sizes.tgt_h >= 1, "image sizes must be >= 1");

  Mask query(src.height(), src.width());
  std::vector<int> cells(keypoints.size(), -1);
  for (std::size_t i = 0; i < keypoints.size(); ++i) {
    if (!inside_image(keypoints[i], sizes.src_w, sizes.src_h)) continue;
    const int gx = pixel_to_cell(keypoints[i].x, sizes.src_w, src.width());
    const int gy = pixel_to_cell(keypoints[i].y, sizes.src_h, src.height());
    cells[i] = gy * src.width() + gx;
    query.set(gy, gx, true);
  }
  NnOptions nn_options = options;
  nn_options.src_mask = std::move(query);
  const NnResult nn = nn_dense(src, tgt, nn_options);

  for (std::size_t i = 0; i < keypoints.size(); ++i) {
    Correspondence c;
    c.src = keypoints[i];
    if (cells[i] < 0) {
      c.valid = false;
      c.tgt = {-1.0, -1.0};
    } else {
      const int t = nn.index[cells[i]];
      c.tgt = {grid_to_pixel(t % tgt.width(), sizes.tgt_w, tgt.width()),
               grid_to_pixel(t / tgt.width(), sizes.tgt_h, tgt.height())};
      c.score = nn.score[cells[i]];
    }
    out.entries.push_back(c);
  }
  return out;
}

struct FlowField {
  int height = 0;
  int width = 0;
  std::vector<float> du;
  std::vector<float> dv;
  Mask valid;

  FlowField() = default;
  FlowField(int h, int w)
      : height(h), width(w), du(static_cast<std::size_t>(h) * w, 0.0f), dv(static_cast<std::size_t>(h) * w, 0.0f),
        valid(h, w) {}

  bool operator==(const FlowField&) const = default;
};

struct FlowOptions {
  std::optional<Mask> src_mask;  // at source grid or output resolution
  std::optional<Mask> tgt_mask;  // at target grid or target image resolution
  int out_h = 0;                 // 0 = source image height from meta
  int out_w = 0;
  int jobs = 1;
};

/// Semantic flow (target pixel - source pixel) from dense NN matches at grid
/// resolution, bilinearly upsampled to the output resolution.
inline FlowField dense_flow(const FeatureMap& src, const FeatureMap& tgt, const FlowOptions& options = {}) {
  const ImageSizes sizes = sizes_from_meta(src, tgt);
  const int out_h = options.out_h > 0 ? options.out_h : sizes.src_h;
  const int out_w = options.out_w > 0 ? options.out_w : sizes.src_w;

  NnOptions nn_options;
  nn_options.jobs = options.jobs;
  if (options.tgt_mask) nn_options.tgt_mask = resample_mask(*options.tgt_mask, tgt.height(), tgt.width());
  const NnResult nn = nn_dense(src, tgt, nn_options);

  FeatureMap grid_flow = FeatureMap::zeros(src.height(), src.width(), 2, src.meta());
  for (int s = 0; s < src.tokens(); ++s) {
    const int t = nn.index[s];
    const double sx = grid_to_pixel(s % src.width(), sizes.src_w, src.width());
    const double sy = grid_to_pixel(s / src.width(), sizes.src_h, src.height());
    const double tx = grid_to_pixel(t % tgt.width(), sizes.tgt_w, tgt.width());
    const double ty = grid_to_pixel(t / tgt.width(), sizes.tgt_h, tgt.height());
    grid_flow.token(s)[0] = static_cast<float>(tx - sx);
    grid_flow.token(s)[1] = static_cast<float>(ty - sy);
  }
  const FeatureMap up = bilinear_resize(grid_flow, out_h, out_w);

  FlowField flow(out_h, out_w);
  for (int i = 0; i < out_h * out_w; ++i) {
    flow.du[i] = up.token(i)[0];
    flow.dv[i] = up.token(i)[1];
  }
  flow.valid = options.src_mask ? resample_mask(*options.src_mask, out_h, out_w) : Mask(out_h, out_w, true);
  return flow;
}

// SFLW layout: "SFLW" | version u32 = 1 | H u32 | W u32 |
//              H*W (du, dv) float32 LE pairs | H*W valid bytes (0/1).
inline constexpr std::uint32_t kFlowVersion = 1;

inline std::string encode_flow(const FlowField& flow) {
  std::string out;
  out.append("SFLW", 4);
  detail::put_u32(out, kFlowVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(flow.height));
  detail::put_u32(out, static_cast<std::uint32_t>(flow.width));
  const std::size_t n = static_cast<std::size_t>(flow.height) * flow.width;
  for (std::size_t i = 0; i < n; ++i) {
    detail::put_f32(out, flow.du[i]);
    detail::put_f32(out, flow.dv[i]);
  }
  for (std::size_t i = 0; i < n; ++i) out.push_back(flow.valid.bits[i] ? 1 : 0);
  return out;
}

inline FlowField decode_flow(const std::string& bytes) {
  if (bytes.size() < 16 || bytes.compare(0, 4, "SFLW") != 0) fail(ErrorKind::kFormat, "not an SFLW file (bad magic)");
  const std::uint32_t version = detail::get_u32(bytes, 4);
  if (version != kFlowVersion) fail(ErrorKind::kFormat, "unsupported SFLW version " + std::to_string(version));
  const std::uint64_t h = detail::get_u32(bytes, 8);
  const std::uint64_t w = detail::get_u32(bytes, 12);
  if (h == 0 || w == 0) fail(ErrorKind::kCorrupt, "SFLW header has a zero dimension");
  const std::uint64_t n = h * w;
  if (bytes.size() != 16 + n * 9) fail(ErrorKind::kCorrupt, "SFLW payload length does not match header");
  FlowField flow(static_cast<int>(h), static_cast<int>(w));
  for (std::size_t i = 0; i < n; ++i) {
    flow.du[i] = detail::get_f32(bytes, 16 + 8 * i);
    flow.dv[i] = detail::get_f32(bytes, 16 + 8 * i + 4);
    const auto v = static_cast<unsigned char>(bytes[16 + 8 * n + i]);
    if (v > 1) fail(ErrorKind::kCorrupt, "SFLW valid mask byte must be 0 or 1");
    flow.valid.bits[i] = v;
    if (v && (!std::isfinite(flow.du[i]) || !std::isfinite(flow.dv[i]))) {
      fail(ErrorKind::kValidation, "SFLW displacement is not finite at a valid cell");
    }
  }
  return flow;
}

inline FlowField read_flow(const std::filesystem::path& path) { return decode_flow(detail::read_file(path)); }
inline void write_flow(const FlowField& flow, const std::filesystem::path& path) {
  detail::write_file(path, encode_flow(flow));
}

inline nlohmann::json to_json(const MatchSet& matches) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : matches.entries) {
    nlohmann::json j = {{"src", {e.src.x, e.src.y}}, {"tgt", {e.tgt.x, e.tgt.y}}, {"score", e.score}};
    if (!e.valid) j["valid"] = false;
    entries.push_back(std::move(j));
  }
  return {{"pair_id", matches.pair_id}, {"feature_tag", matches.feature_tag}, {"entries", std::move(entries)}};
}

inline MatchSet match_set_from_json(const nlohmann::json& j) {
  MatchSet m;
  try {
    m.pair_id = j.at("pair_id").get<std::string>();
    m.feature_tag = j.value("feature_tag", std::string{});
    for (const auto& e : j.at("entries")) {
      Correspondence c;
      c.src = {e.at("src").at(0).get<double>(), e.at("src").at(1).get<double>()};
      c.tgt = {e.at("tgt").at(0).get<double>(), e.at("tgt").at(1).get<double>()};
      c.score = e.value("score", 0.0);
      c.valid = e.value("valid", true);
      m.entries.push_back(c);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("bad MatchSet JSON: ") + e.what());
  }
  return m;
}

}  // namespace corrfuse
