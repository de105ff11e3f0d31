#pragma once

// PCA-RGB renders of feature-map pairs and color-coded flow fields.

#include <algorithm>
#include <cmath>
#include <array>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <utility>
#include <vector>

#include "corrfuse/error.hpp"
#include "corrfuse/featmap.hpp"
#include "corrfuse/image.hpp"
#include "corrfuse/matching.hpp"
#include "corrfuse/pca.hpp"

namespace corrfuse {

struct ImagePair {
  Image src;
  Image tgt;
};

/// First three joint principal components as RGB, min-max scaled jointly over
/// the in-mask tokens of both maps. Zero-range components render mid-gray
/// (128); out-of-mask cells are black. Output is at grid resolution.
inline ImagePair pca_rgb(const FeatureMap& src, const FeatureMap& tgt, const std::optional<Mask>& src_mask = {},
                         const std::optional<Mask>& tgt_mask = {}) {
  require(src.channels() == tgt.channels(), "pca_rgb: channel counts differ");
  require(src.channels() >= 3, "pca_rgb: need at least 3 channels");
  const Mask sm = src_mask ? resample_mask(*src_mask, src.height(), src.width()) : Mask(src.height(), src.width(), true);
  const Mask tm = tgt_mask ? resample_mask(*tgt_mask, tgt.height(), tgt.width()) : Mask(tgt.height(), tgt.width(), true);
  const auto n_in = static_cast<Eigen::Index>(sm.count() + tm.count());
  require(n_in >= 3, "pca_rgb: fewer than 3 in-mask tokens");

  Matrix inside(n_in, src.channels());
  Eigen::Index row = 0;
  auto gather = [&](const FeatureMap& map, const Mask& mask) {
    for (int t = 0; t < map.tokens(); ++t) {
      if (!mask.at(t)) continue;
      const auto tok = map.token(t);
      for (int c = 0; c < map.channels(); ++c) inside(row, c) = tok[c];
      ++row;
    }
  };
  gather(src, sm);
  gather(tgt, tm);
  const PcaModel model = fit_pca_exact(inside, 3);

  const Matrix ps = project_tokens(model, token_matrix(src));
  const Matrix pt = project_tokens(model, token_matrix(tgt));
  std::array<double, 3> lo{}, hi{};
  lo.fill(std::numeric_limits<double>::infinity());
  hi.fill(-std::numeric_limits<double>::infinity());
  auto extend = [&](const Matrix& p, const Mask& mask) {
    for (int t = 0; t < static_cast<int>(p.rows()); ++t) {
      if (!mask.at(t)) continue;
      for (int c = 0; c < 3; ++c) {
        lo[c] = std::min(lo[c], p(t, c));
        hi[c] = std::max(hi[c], p(t, c));
      }
    }
  };
  extend(ps, sm);
  extend(pt, tm);

  auto render = [&](const Matrix& p, const Mask& mask, int h, int w) {
    Image img(h, w);
    for (int t = 0; t < h * w; ++t) {
      if (!mask.at(t)) continue;
      Rgb color{};
      for (int c = 0; c < 3; ++c) {
        const double range = hi[c] - lo[c];
        const double v = range > 0.0 ? 255.0 * (p(t, c) - lo[c]) / range : 128.0;
        color[c] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
      }
      img.set(t, color);
    }
    return img;
  };
  return {render(ps, sm, src.height(), src.width()), render(pt, tm, tgt.height(), tgt.width())};
}

/// HSV -> RGB with h in degrees, s and v in [0, 1].
inline Rgb hsv_to_rgb(double h, double s, double v) {
  h = std::fmod(h, 360.0);
  if (h < 0.0) h += 360.0;
  const double c = v * s;
  const double hp = h / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp) % 6) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  const double m = v - c;
  auto q = [](double u) { return static_cast<std::uint8_t>(std::lround(std::clamp(u, 0.0, 1.0) * 255.0)); };
  return {q(r + m), q(g + m), q(b + m)};
}

inline constexpr double kFlowValue = 0.9;
inline constexpr Rgb kInvalidColor{255, 255, 255};
inline constexpr Rgb kBackgroundTint{255, 140, 0};

/// Hue encodes direction (atan2(dv, du)), saturation encodes magnitude
/// relative to the largest valid magnitude, value is fixed at 0.9. Invalid
/// cells are white; valid cells outside `foreground` are blended 50% with
/// orange.
inline Image render_flow(const FlowField& flow, const std::optional<Mask>& foreground = {}) {
  require(flow.valid.count() > 0, "render_flow: flow has no valid cells");
  const std::optional<Mask> fg =
      foreground ? std::optional<Mask>(resample_mask(*foreground, flow.height, flow.width)) : std::nullopt;
  const int n = flow.height * flow.width;
  double max_mag = 0.0;
  for (int i = 0; i < n; ++i) {
    if (flow.valid.at(i)) max_mag = std::max(max_mag, std::hypot(static_cast<double>(flow.du[i]), flow.dv[i]));
  }
  Image img(flow.height, flow.width, kInvalidColor);
  for (int i = 0; i < n; ++i) {
    if (!flow.valid.at(i)) continue;
    const double mag = std::hypot(static_cast<double>(flow.du[i]), flow.dv[i]);
    const double hue = std::atan2(static_cast<double>(flow.dv[i]), flow.du[i]) * 180.0 / std::numbers::pi;
    Rgb color = hsv_to_rgb(hue, max_mag > 0.0 ? mag / max_mag : 0.0, kFlowValue);
    if (fg && !fg->at(i)) {
      for (int c = 0; c < 3; ++c) color[c] = static_cast<std::uint8_t>((color[c] + kBackgroundTint[c] + 1) / 2);
    }
    img.set(i, color);
  }
  return img;
}

/// Fixed, well-separated palette for cluster label images.
inline std::vector<Rgb> cluster_palette(int k) {
  require(k >= 1 && k <= 256, "cluster palette supports 1..256 labels");
  std::vector<Rgb> palette;
  for (int i = 0; i < k; ++i) {
    // Golden-angle hue steps keep neighbouring ids distinct.
    palette.push_back(hsv_to_rgb(std::fmod(i * 137.50776405, 360.0), 0.75, 0.95));
  }
  return palette;
}

}  // namespace corrfuse
