#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "corrfuse/error.hpp"
#include "corrfuse/matching.hpp"

namespace corrfuse {

struct KeypointPair {
  Point src;
  Point tgt;
};

struct PairAnnotation {
  std::string pair_id;
  std::string category;
  int src_image_w = 1;
  int src_image_h = 1;
  int tgt_image_w = 1;
  int tgt_image_h = 1;
  std::optional<double> tgt_bbox_w;
  std::optional<double> tgt_bbox_h;
  std::vector<KeypointPair> keypoints;
  int dropped_keypoints = 0;  // missing or occluded in the source record
};

enum class ThresholdMode { kBbox, kImage };

inline ThresholdMode threshold_mode_from_string(const std::string& s) {
  if (s == "bbox") return ThresholdMode::kBbox;
  if (s == "image") return ThresholdMode::kImage;
  fail(ErrorKind::kInvalidArgument, "threshold mode must be 'bbox' or 'image', got '" + s + "'");
}

/// max(h, w) of the reference region: target bbox (bbox mode) or target image.
inline double threshold_extent(const PairAnnotation& ann, ThresholdMode mode) {
  if (mode == ThresholdMode::kBbox) {
    require(ann.tgt_bbox_w && ann.tgt_bbox_h, "pair " + ann.pair_id + " has no target bbox for bbox-mode PCK");
    return std::max(*ann.tgt_bbox_w, *ann.tgt_bbox_h);
  }
  return std::max(ann.tgt_image_w, ann.tgt_image_h);
}

/// Per-keypoint correctness: |pred - gt| <= kappa * max(h, w), inclusive.
inline std::vector<bool> correct_keypoints(const MatchSet& matches, const PairAnnotation& ann, double kappa,
                                           ThresholdMode mode) {
  require(kappa > 0.0, "kappa must be > 0");
  require(!ann.keypoints.empty(), "pair " + ann.pair_id + " has no keypoints");
  require(matches.entries.size() == ann.keypoints.size(),
          "pair " + ann.pair_id + ": " + std::to_string(matches.entries.size()) + " matches for " +
              std::to_string(ann.keypoints.size()) + " annotated keypoints");
  const double threshold = kappa * threshold_extent(ann, mode);
  std::vector<bool> correct(ann.keypoints.size());
  for (std::size_t i = 0; i < ann.keypoints.size(); ++i) {
    const auto& e = matches.entries[i];
    const double dist = std::hypot(e.tgt.x - ann.keypoints[i].tgt.x, e.tgt.y - ann.keypoints[i].tgt.y);
    correct[i] = e.valid && dist <= threshold;
  }
  return correct;
}

inline double pck(const MatchSet& matches, const PairAnnotation& ann, double kappa, ThresholdMode mode) {
  const auto correct = correct_keypoints(matches, ann, kappa, mode);
  const auto hits = std::count(correct.begin(), correct.end(), true);
  return 100.0 * static_cast<double>(hits) / static_cast<double>(correct.size());
}

/// Mean L1 norm of forward differences between horizontally and vertically
/// adjacent valid cells.
inline double flow_smoothness(const FlowField& flow) {
  double total = 0.0;
  std::size_t pairs = 0;
  auto accumulate = [&](int a, int b) {
    if (!flow.valid.at(a) || !flow.valid.at(b)) return;
    total += std::abs(static_cast<double>(flow.du[a]) - flow.du[b]) + std::abs(static_cast<double>(flow.dv[a]) - flow.dv[b]);
    ++pairs;
  };
  for (int r = 0; r < flow.height; ++r) {
    for (int c = 0; c < flow.width; ++c) {
      const int i = r * flow.width + c;
      if (c + 1 < flow.width) accumulate(i, i + 1);
      if (r + 1 < flow.height) accumulate(i, i + flow.width);
    }
  }
  if (pairs == 0) fail(ErrorKind::kInvalidArgument, "flow has no pair of adjacent valid cells");
  return total / static_cast<double>(pairs);
}

/// Cells: both fail, A fails / B correct, A correct / B fails, both correct.
using OutcomeCells = std::array<double, 4>;

inline OutcomeCells outcome_distribution(const std::vector<bool>& correct_a, const std::vector<bool>& correct_b) {
  require(!correct_a.empty(), "outcome_distribution needs at least one keypoint");
  require(correct_a.size() == correct_b.size(), "outcome_distribution: length mismatch");
  std::array<std::size_t, 4> counts{};
  for (std::size_t i = 0; i < correct_a.size(); ++i) {
    counts[(correct_a[i] ? 2 : 0) + (correct_b[i] ? 1 : 0)]++;
  }
  OutcomeCells cells{};
  for (int i = 0; i < 4; ++i) cells[i] = 100.0 * static_cast<double>(counts[i]) / static_cast<double>(correct_a.size());
  return cells;
}

inline const std::array<const char*, 4>& outcome_labels() {
  static const std::array<const char*, 4> labels{"both_fail", "a_fails_b_correct", "a_correct_b_fails", "both_correct"};
  return labels;
}

/// "0.10"-style key used for kappa in reports.
inline std::string kappa_key(double kappa) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", kappa);
  return buf;
}

struct EvalReport {
  std::map<std::string, double> per_kappa_pck;
  std::map<std::string, std::map<std::string, double>> per_category_pck;  // category -> kappa -> pck
  std::size_t n_keypoints = 0;
  std::optional<double> smoothness;
  std::optional<OutcomeCells> outcomes;
};

inline nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json j;
  j["per_kappa_pck"] = report.per_kappa_pck;
  j["per_category_pck"] = report.per_category_pck;
  j["n_keypoints"] = report.n_keypoints;
  if (report.smoothness) j["smoothness"] = *report.smoothness;
  if (report.outcomes) {
    nlohmann::json cells = nlohmann::json::object();
    for (int i = 0; i < 4; ++i) cells[outcome_labels()[i]] = (*report.outcomes)[i];
    j["outcomes"] = cells;
  }
  return j;
}

/// Keypoint-weighted PCK over several pairs, overall and per category.
inline EvalReport evaluate_pck(const std::vector<MatchSet>& matches, const std::vector<PairAnnotation>& annotations,
                               const std::vector<double>& kappas, ThresholdMode mode) {
  require(matches.size() == annotations.size(), "evaluate_pck: one MatchSet per annotation required");
  require(!kappas.empty(), "evaluate_pck: no kappa values");
  EvalReport report;
  for (double kappa : kappas) {
    std::size_t hits = 0, total = 0;
    std::map<std::string, std::pair<std::size_t, std::size_t>> by_category;
    for (std::size_t p = 0; p < matches.size(); ++p) {
      const auto correct = correct_keypoints(matches[p], annotations[p], kappa, mode);
      const auto h = static_cast<std::size_t>(std::count(correct.begin(), correct.end(), true));
      hits += h;
      total += correct.size();
      auto& cat = by_category[annotations[p].category];
      cat.first += h;
      cat.second += correct.size();
    }
    report.per_kappa_pck[kappa_key(kappa)] = 100.0 * static_cast<double>(hits) / static_cast<double>(total);
    for (const auto& [category, counts] : by_category) {
      report.per_category_pck[category][kappa_key(kappa)] =
          100.0 * static_cast<double>(counts.first) / static_cast<double>(counts.second);
    }
    report.n_keypoints = total;
  }
  return report;
}

inline std::string per_category_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "category";
  for (const auto& [kappa, _] : report.per_kappa_pck) out << ",pck@" << kappa;
  out << "\n";
  char buf[32];
  for (const auto& [category, values] : report.per_category_pck) {
    out << category;
    for (const auto& [kappa, _] : report.per_kappa_pck) {
      auto it = values.find(kappa);
      std::snprintf(buf, sizeof buf, "%.4f", it == values.end() ? 0.0 : it->second);
      out << "," << buf;
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace corrfuse
