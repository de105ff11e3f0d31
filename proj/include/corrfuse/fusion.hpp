#pragma once

// Multi-layer SD descriptor ensembling (per-layer joint-pair PCA, resize,
// concatenate) and the normalized weighted fusion with DINO tokens:
//   fused = ( alpha * sd / |sd|,  (1 - alpha) * dino / |dino| )

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "corrfuse/error.hpp"
#include "corrfuse/featmap.hpp"
#include "corrfuse/pca.hpp"

namespace corrfuse {

struct FusionConfig {
  double alpha = 0.5;
  int pca_dim = 256;
  int target_h = 60;
  int target_w = 60;
  std::vector<std::string> sd_layers{"2", "5", "8"};
  PcaMethod method = PcaMethod::kRandomized;
  std::uint64_t seed = 0;
  RandomizedSvdOptions randomized{};

  void validate() const {
    require(alpha >= 0.0 && alpha <= 1.0, "alpha must lie in [0, 1]");
    require(pca_dim >= 1, "pca_dim must be >= 1");
    require(target_h >= 1 && target_w >= 1, "target dims must be >= 1");
  }
};

/// Splits `total` across layers proportionally to `channels` (rounded to
/// nearest), each share clamped to [1, caps[i]]; the rounding remainder goes
/// to the first layer, spilling forward to layers with spare capacity.
inline std::vector<int> split_pca_budget(int total, const std::vector<int>& channels, const std::vector<int>& caps) {
  require(!channels.empty() && channels.size() == caps.size(), "split_pca_budget: bad layer list");
  require(total >= static_cast<int>(channels.size()), "pca_dim must be at least the number of SD layers");
  const long long capacity = std::accumulate(caps.begin(), caps.end(), 0LL);
  require(total <= capacity, "pca_dim " + std::to_string(total) + " exceeds what the layers can provide (" +
                                 std::to_string(capacity) + ")");
  const double sum = std::accumulate(channels.begin(), channels.end(), 0.0);
  std::vector<int> budget(channels.size());
  int assigned = 0;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    int share = static_cast<int>(std::lround(total * channels[i] / sum));
    budget[i] = std::clamp(share, 1, caps[i]);
    assigned += budget[i];
  }
  int remainder = total - assigned;
  // Positive remainder fills from the first layer onward; negative drains the
  // same way but never below one component per layer.
  for (std::size_t i = 0; remainder != 0 && i < budget.size(); ++i) {
    if (remainder > 0) {
      const int give = std::min(remainder, caps[i] - budget[i]);
      budget[i] += give;
      remainder -= give;
    } else {
      const int take = std::min(-remainder, budget[i] - 1);
      budget[i] -= take;
      remainder += take;
    }
  }
  return budget;
}

struct MapPair {
  FeatureMap src;
  FeatureMap tgt;
};

inline MapPair ensemble_sd(const std::vector<FeatureMap>& src_layers, const std::vector<FeatureMap>& tgt_layers,
                           const FusionConfig& cfg) {
  cfg.validate();
  require(!src_layers.empty(), "ensemble_sd: need at least one SD layer");
  require(src_layers.size() == tgt_layers.size(), "ensemble_sd: source and target layer counts differ");
  std::vector<int> channels;
  std::vector<int> caps;
  for (std::size_t i = 0; i < src_layers.size(); ++i) {
    require(src_layers[i].channels() == tgt_layers[i].channels(),
            "ensemble_sd: layer " + std::to_string(i) + " channel counts differ");
    channels.push_back(src_layers[i].channels());
    caps.push_back(std::min(src_layers[i].channels(), src_layers[i].tokens() + tgt_layers[i].tokens()));
  }
  const std::vector<int> budget = split_pca_budget(cfg.pca_dim, channels, caps);

  std::vector<FeatureMap> src_parts;
  std::vector<FeatureMap> tgt_parts;
  for (std::size_t i = 0; i < src_layers.size(); ++i) {
    PairProjection reduced =
        fit_pair_pca(src_layers[i], tgt_layers[i], budget[i], cfg.method, cfg.seed + i, cfg.randomized);
    src_parts.push_back(bilinear_resize(reduced.src, cfg.target_h, cfg.target_w));
    tgt_parts.push_back(bilinear_resize(reduced.tgt, cfg.target_h, cfg.target_w));
  }
  auto concat_all = [&](std::vector<FeatureMap>& parts, const FeatureMap& first_layer) {
    FeatureMap acc = std::move(parts.front());
    for (std::size_t i = 1; i < parts.size(); ++i) acc = concat_channels(acc, parts[i]);
    MapMeta meta = first_layer.meta();
    meta.model_tag = "sd_ensemble";
    std::string layers;
    for (std::size_t i = 0; i < cfg.sd_layers.size(); ++i) layers += (i ? "+" : "") + cfg.sd_layers[i];
    std::string split;
    for (std::size_t i = 0; i < budget.size(); ++i) split += (i ? "," : "") + std::to_string(budget[i]);
    meta.extraction_params["sd_layers"] = layers;
    meta.extraction_params["pca_split"] = split;
    meta.extraction_params["pca_dim"] = std::to_string(cfg.pca_dim);
    meta.extraction_params["pca_centered"] = "true";
    meta.extraction_params["pca_method"] = to_string(cfg.method);
    acc.meta() = std::move(meta);
    return acc;
  };
  FeatureMap src = concat_all(src_parts, src_layers.front());
  FeatureMap tgt = concat_all(tgt_parts, tgt_layers.front());
  return {std::move(src), std::move(tgt)};
}

inline FeatureMap fuse(const FeatureMap& sd, const FeatureMap& dino, double alpha) {
  require(alpha >= 0.0 && alpha <= 1.0, "alpha must lie in [0, 1]");
  require(sd.height() == dino.height() && sd.width() == dino.width(), "fuse: SD and DINO spatial dims differ");
  const FeatureMap sd_unit = l2_normalize(sd);
  const FeatureMap dino_unit = l2_normalize(dino);
  MapMeta meta = sd.meta();
  meta.model_tag = "fused";
  meta.extraction_params["alpha"] = nlohmann::json(alpha).dump();
  meta.extraction_params["sd_channels"] = std::to_string(sd.channels());
  meta.extraction_params["dino_channels"] = std::to_string(dino.channels());
  FeatureMap out = FeatureMap::zeros(sd.height(), sd.width(), sd.channels() + dino.channels(), std::move(meta));
  const float wa = static_cast<float>(alpha);
  const float wb = static_cast<float>(1.0 - alpha);
  for (int t = 0; t < sd.tokens(); ++t) {
    auto dst = out.token(t);
    const auto a = sd_unit.token(t);
    const auto b = dino_unit.token(t);
    for (int c = 0; c < sd.channels(); ++c) dst[c] = wa * a[c];
    for (int c = 0; c < dino.channels(); ++c) dst[sd.channels() + c] = wb * b[c];
  }
  return out;
}

inline MapPair fuse_pair(const std::vector<FeatureMap>& src_sd_layers, const std::vector<FeatureMap>& tgt_sd_layers,
                         const FeatureMap& src_dino, const FeatureMap& tgt_dino, const FusionConfig& cfg) {
  MapPair sd = ensemble_sd(src_sd_layers, tgt_sd_layers, cfg);
  const FeatureMap src_d = bilinear_resize(src_dino, cfg.target_h, cfg.target_w);
  const FeatureMap tgt_d = bilinear_resize(tgt_dino, cfg.target_h, cfg.target_w);
  return {fuse(sd.src, src_d, cfg.alpha), fuse(sd.tgt, tgt_d, cfg.alpha)};
}

}  // namespace corrfuse
