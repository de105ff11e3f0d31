// corrfuse: command-line front end.
//
// Exit codes: 0 ok, 1 runtime, 2 usage, 3 data format. Errors are written to
// stderr as one JSON object; stdout carries only the command's report.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "corrfuse/corrfuse.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class LogLevel { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("CORRFUSE_LOG");
    const std::string v = env ? env : "warn";
    if (v == "error") return LogLevel::kError;
    if (v == "info") return LogLevel::kInfo;
    if (v == "debug") return LogLevel::kDebug;
    return LogLevel::kWarn;
  }();
  return level;
}

std::mutex log_mutex;

void log(LogLevel level, const std::string& msg) {
  if (level > log_level()) return;
  static const char* names[] = {"error", "warn", "info", "debug"};
  std::lock_guard<std::mutex> lock(log_mutex);
  std::cerr << "[corrfuse " << names[static_cast<int>(level)] << "] " << msg << "\n";
}

int exit_code(corrfuse::ErrorKind kind) {
  switch (kind) {
    case corrfuse::ErrorKind::kUsage: return 2;
    case corrfuse::ErrorKind::kFormat:
    case corrfuse::ErrorKind::kCorrupt:
    case corrfuse::ErrorKind::kValidation: return 3;
    default: return 1;
  }
}

int report_error(const std::string& kind, const std::string& message, int code) {
  std::cerr << json{{"error", message}, {"kind", kind}, {"exit_code", code}}.dump() << "\n";
  return code;
}

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

void write_text(const fs::path& path, const std::string& text) { corrfuse::detail::write_file(path, text); }

std::pair<int, int> parse_dims(const std::string& text, const char* flag) {
  // "HxW"
  const auto x = text.find('x');
  try {
    if (x != std::string::npos) {
      std::size_t used_h = 0, used_w = 0;
      const int h = std::stoi(text.substr(0, x), &used_h);
      const int w = std::stoi(text.substr(x + 1), &used_w);
      if (used_h == x && used_w == text.size() - x - 1 && h >= 1 && w >= 1) return {h, w};
    }
  } catch (const std::exception&) {
  }
  corrfuse::fail(corrfuse::ErrorKind::kUsage, std::string(flag) + " expects HxW with positive integers, got '" + text + "'");
}

std::vector<double> parse_kappas(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const double k = std::stod(item, &used);
      if (used != item.size() || !(k > 0.0)) throw std::invalid_argument(item);
      out.push_back(k);
    } catch (const std::exception&) {
      corrfuse::fail(corrfuse::ErrorKind::kUsage, "--kappa expects positive numbers separated by commas, got '" + text + "'");
    }
  }
  if (out.empty()) corrfuse::fail(corrfuse::ErrorKind::kUsage, "--kappa is empty");
  return out;
}

template <typename Fn>
void parallel_for(std::size_t count, int jobs, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(std::max(1, jobs), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct GlobalOptions {
  std::uint64_t seed = 0;
  int jobs = 1;
};

// ---- fuse -----------------------------------------------------------------

struct FuseArgs {
  std::string manifest;
  std::string out_dir;
  double alpha = 0.5;
  int pca_dim = 256;
  std::string target = "60x60";
  std::string method = "randomized";
  int oversample = 10;
  int power_iters = 2;
};

int run_fuse(const FuseArgs& args, const GlobalOptions& global) {
  corrfuse::FusionConfig cfg;
  cfg.alpha = args.alpha;
  cfg.pca_dim = args.pca_dim;
  std::tie(cfg.target_h, cfg.target_w) = parse_dims(args.target, "--target");
  cfg.method = args.method == "exact" ? corrfuse::PcaMethod::kExact : corrfuse::PcaMethod::kRandomized;
  cfg.seed = global.seed;
  cfg.randomized = {args.oversample, args.power_iters};

  const corrfuse::PairManifest manifest = corrfuse::load_manifest(args.manifest);
  fs::create_directories(args.out_dir);
  std::vector<json> outputs(manifest.pairs.size());
  parallel_for(manifest.pairs.size(), global.jobs, [&](std::size_t i) {
    const auto& pair = manifest.pairs[i];
    log(LogLevel::kInfo, "fusing pair " + pair.pair_id);
    std::vector<corrfuse::FeatureMap> src_layers, tgt_layers;
    for (const auto& p : pair.src_sd_layers) src_layers.push_back(corrfuse::read_fmap(p));
    for (const auto& p : pair.tgt_sd_layers) tgt_layers.push_back(corrfuse::read_fmap(p));
    corrfuse::FusionConfig pair_cfg = cfg;
    pair_cfg.sd_layers.clear();
    for (const auto& layer : src_layers) {
      const auto it = layer.meta().extraction_params.find("layer");
      pair_cfg.sd_layers.push_back(it != layer.meta().extraction_params.end() ? it->second
                                                                              : std::to_string(pair_cfg.sd_layers.size()));
    }
    const auto fused = corrfuse::fuse_pair(src_layers, tgt_layers, corrfuse::read_fmap(pair.src_dino),
                                           corrfuse::read_fmap(pair.tgt_dino), pair_cfg);
    const fs::path src_out = fs::path(args.out_dir) / (pair.pair_id + ".src.fused.fmap");
    const fs::path tgt_out = fs::path(args.out_dir) / (pair.pair_id + ".tgt.fused.fmap");
    corrfuse::write_fmap(fused.src, src_out);
    corrfuse::write_fmap(fused.tgt, tgt_out);
    outputs[i] = {{"pair_id", pair.pair_id},
                  {"src", src_out.string()},
                  {"tgt", tgt_out.string()},
                  {"height", fused.src.height()},
                  {"width", fused.src.width()},
                  {"channels", fused.src.channels()}};
  });
  print_json({{"fused", outputs}});
  return 0;
}

// ---- match ----------------------------------------------------------------

struct MatchArgs {
  std::string src, tgt, out;
  bool dense = false;
  std::string annotation;
  std::string keypoints;
  std::string pair_id;
  std::string src_mask, tgt_mask;
  std::string out_size;
};

int run_match(const MatchArgs& args, const GlobalOptions& global) {
  const corrfuse::FeatureMap src = corrfuse::read_fmap(args.src);
  const corrfuse::FeatureMap tgt = corrfuse::read_fmap(args.tgt);
  std::optional<corrfuse::Mask> tgt_mask;
  if (!args.tgt_mask.empty()) tgt_mask = corrfuse::read_mask_png(args.tgt_mask);

  if (args.dense) {
    corrfuse::FlowOptions options;
    options.jobs = global.jobs;
    options.tgt_mask = tgt_mask;
    if (!args.src_mask.empty()) options.src_mask = corrfuse::read_mask_png(args.src_mask);
    if (!args.out_size.empty()) std::tie(options.out_h, options.out_w) = parse_dims(args.out_size, "--out-size");
    const corrfuse::FlowField flow = corrfuse::dense_flow(src, tgt, options);
    corrfuse::write_flow(flow, args.out);
    print_json({{"flow", args.out},
                {"height", flow.height},
                {"width", flow.width},
                {"valid", flow.valid.count()}});
    return 0;
  }

  std::vector<corrfuse::Point> keypoints;
  corrfuse::ImageSizes sizes = corrfuse::sizes_from_meta(src, tgt);
  std::string pair_id = args.pair_id;
  if (!args.annotation.empty()) {
    auto anns = corrfuse::load_annotation_file(args.annotation, corrfuse::AnnotationFormat::kSimpleJson);
    if (anns.size() != 1) corrfuse::fail(corrfuse::ErrorKind::kUsage, "--annotation must hold exactly one pair");
    const auto& ann = anns.front();
    for (const auto& kp : ann.keypoints) keypoints.push_back(kp.src);
    sizes = {ann.src_image_w, ann.src_image_h, ann.tgt_image_w, ann.tgt_image_h};
    if (pair_id.empty()) pair_id = ann.pair_id;
  } else if (!args.keypoints.empty()) {
    const json doc = corrfuse::parse_json_file(args.keypoints);
    if (!doc.is_array()) corrfuse::fail(corrfuse::ErrorKind::kFormat, args.keypoints + ": expected an array of [x, y]");
    for (const auto& p : doc) {
      if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
        corrfuse::fail(corrfuse::ErrorKind::kFormat, args.keypoints + ": expected an array of [x, y]");
      }
      keypoints.push_back({p[0].get<double>(), p[1].get<double>()});
    }
  } else {
    corrfuse::fail(corrfuse::ErrorKind::kUsage, "match needs --dense, --annotation or --keypoints");
  }
  corrfuse::NnOptions options;
  options.jobs = global.jobs;
  if (tgt_mask) options.tgt_mask = corrfuse::resample_mask(*tgt_mask, tgt.height(), tgt.width());
  corrfuse::MatchSet matches = corrfuse::transfer_keypoints(src, tgt, keypoints, sizes, options);
  matches.pair_id = pair_id;
  const auto flagged = std::count_if(matches.entries.begin(), matches.entries.end(), [](const auto& e) { return !e.valid; });
  if (flagged > 0) log(LogLevel::kWarn, std::to_string(flagged) + " keypoint(s) outside the source image were flagged");
  const std::string text = corrfuse::to_json(matches).dump(2) + "\n";
  if (args.out.empty() || args.out == "-") {
    std::cout << text;
  } else {
    write_text(args.out, text);
    print_json({{"matches", args.out}, {"entries", matches.entries.size()}});
  }
  return 0;
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
  std::vector<std::string> matches;
  std::string annotations;
  std::string format = "simple_json";
  std::string kappa = "0.05,0.10,0.15";
  std::string mode = "bbox";
  std::string csv;
  std::string flow;
  std::string correct_a, correct_b;
  std::string matches_a, matches_b;
};

std::map<std::string, corrfuse::PairAnnotation> annotations_by_id(const EvalArgs& args) {
  std::map<std::string, corrfuse::PairAnnotation> by_id;
  for (auto& ann : corrfuse::ingest_annotations(args.annotations, corrfuse::annotation_format_from_string(args.format))) {
    by_id.emplace(ann.pair_id, std::move(ann));
  }
  return by_id;
}

const corrfuse::PairAnnotation& lookup(const std::map<std::string, corrfuse::PairAnnotation>& by_id,
                                       const std::string& pair_id) {
  const auto it = by_id.find(pair_id);
  if (it == by_id.end()) corrfuse::fail(corrfuse::ErrorKind::kValidation, "no annotation for pair '" + pair_id + "'");
  return it->second;
}

int run_eval_pck(const EvalArgs& args) {
  const auto kappas = parse_kappas(args.kappa);
  const auto by_id = annotations_by_id(args);
  std::vector<corrfuse::MatchSet> sets;
  std::vector<corrfuse::PairAnnotation> anns;
  for (const auto& path : args.matches) {
    sets.push_back(corrfuse::match_set_from_json(corrfuse::parse_json_file(path)));
    anns.push_back(lookup(by_id, sets.back().pair_id));
  }
  const auto report = corrfuse::evaluate_pck(sets, anns, kappas,
                                             corrfuse::threshold_mode_from_string(args.mode));
  if (!args.csv.empty()) write_text(args.csv, corrfuse::per_category_csv(report));
  print_json(corrfuse::to_json(report));
  return 0;
}

int run_eval_smoothness(const EvalArgs& args) {
  corrfuse::EvalReport report;
  report.smoothness = corrfuse::flow_smoothness(corrfuse::read_flow(args.flow));
  print_json(corrfuse::to_json(report));
  return 0;
}

std::vector<bool> read_bool_array(const std::string& path) {
  const json doc = corrfuse::parse_json_file(path);
  if (!doc.is_array()) corrfuse::fail(corrfuse::ErrorKind::kFormat, path + ": expected a JSON array of booleans");
  std::vector<bool> out;
  for (const auto& v : doc) {
    if (!v.is_boolean()) corrfuse::fail(corrfuse::ErrorKind::kFormat, path + ": expected a JSON array of booleans");
    out.push_back(v.get<bool>());
  }
  return out;
}

int run_eval_outcomes(const EvalArgs& args) {
  std::vector<bool> a, b;
  if (!args.correct_a.empty() || !args.correct_b.empty()) {
    if (args.correct_a.empty() || args.correct_b.empty()) {
      corrfuse::fail(corrfuse::ErrorKind::kUsage, "--correct-a and --correct-b go together");
    }
    a = read_bool_array(args.correct_a);
    b = read_bool_array(args.correct_b);
  } else if (!args.matches_a.empty() && !args.matches_b.empty() && !args.annotations.empty()) {
    const auto by_id = annotations_by_id(args);
    const auto kappas = parse_kappas(args.kappa);
    if (kappas.size() != 1) corrfuse::fail(corrfuse::ErrorKind::kUsage, "outcomes takes a single --kappa");
    const auto mode = corrfuse::threshold_mode_from_string(args.mode);
    const auto ma = corrfuse::match_set_from_json(corrfuse::parse_json_file(args.matches_a));
    const auto mb = corrfuse::match_set_from_json(corrfuse::parse_json_file(args.matches_b));
    a = corrfuse::correct_keypoints(ma, lookup(by_id, ma.pair_id), kappas[0], mode);
    b = corrfuse::correct_keypoints(mb, lookup(by_id, mb.pair_id), kappas[0], mode);
  } else {
    corrfuse::fail(corrfuse::ErrorKind::kUsage,
                   "outcomes needs --correct-a/--correct-b or --matches-a/--matches-b with --annotations");
  }
  corrfuse::EvalReport report;
  report.outcomes = corrfuse::outcome_distribution(a, b);
  report.n_keypoints = a.size();
  print_json(corrfuse::to_json(report));
  return 0;
}

// ---- cluster --------------------------------------------------------------

struct ClusterArgs {
  std::string fmap, tgt_fmap, out_dir;
  int k = 5;
  int max_iters = 100;
};

int run_cluster(const ClusterArgs& args, const GlobalOptions& global) {
  const corrfuse::FeatureMap src = corrfuse::read_fmap(args.fmap);
  fs::create_directories(args.out_dir);
  const auto palette = corrfuse::cluster_palette(args.k);
  const corrfuse::Clustering sc = corrfuse::kmeans(src, args.k, global.seed, args.max_iters);
  const fs::path src_png = fs::path(args.out_dir) / "src_labels.png";
  corrfuse::write_label_png(sc.labels, src.height(), src.width(), palette, src_png);
  json out = {{"k", args.k},
              {"seed", global.seed},
              {"feature_tag", src.meta().model_tag},
              {"src", {{"fmap", args.fmap}, {"labels_png", src_png.string()}, {"inertia", sc.inertia},
                       {"iterations", sc.iterations}}}};
  if (!args.tgt_fmap.empty()) {
    const corrfuse::FeatureMap tgt = corrfuse::read_fmap(args.tgt_fmap);
    const corrfuse::Clustering tc = corrfuse::kmeans(tgt, args.k, global.seed + 1, args.max_iters);
    const corrfuse::ClusterMatch match = corrfuse::match_clusters(sc, tc);
    // Target labels recolored through the assignment: matched parts share a color.
    std::vector<int> inverse(args.k);
    for (int i = 0; i < args.k; ++i) inverse[match.assignment[i]] = i;
    std::vector<int> recolored(tc.labels.size());
    for (std::size_t i = 0; i < tc.labels.size(); ++i) recolored[i] = inverse[tc.labels[i]];
    const fs::path tgt_png = fs::path(args.out_dir) / "tgt_labels.png";
    corrfuse::write_label_png(recolored, tgt.height(), tgt.width(), palette, tgt_png);
    out["tgt"] = {{"fmap", args.tgt_fmap}, {"labels_png", tgt_png.string()}, {"inertia", tc.inertia},
                  {"iterations", tc.iterations}};
    out["assignment"] = match.assignment;
    out["cost"] = match.cost;
  }
  write_text(fs::path(args.out_dir) / "clusters.json", out.dump(2) + "\n");
  print_json(out);
  return 0;
}

// ---- swap -----------------------------------------------------------------

struct SwapArgs {
  std::string src_img, tgt_img, src_feat, tgt_feat, src_mask, tgt_mask, out;
};

int run_swap(const SwapArgs& args, const GlobalOptions& global) {
  const auto result = corrfuse::swap_instance(
      corrfuse::read_png(args.src_img), corrfuse::read_png(args.tgt_img), corrfuse::read_fmap(args.src_feat),
      corrfuse::read_fmap(args.tgt_feat), corrfuse::read_mask_png(args.src_mask), corrfuse::read_mask_png(args.tgt_mask),
      global.jobs);
  if (result.src_mask_empty) log(LogLevel::kWarn, "source mask is empty; output is a copy of the source image");
  corrfuse::write_png(result.image, args.out);
  print_json({{"image", args.out}, {"src_mask_empty", result.src_mask_empty}});
  return 0;
}

// ---- viz ------------------------------------------------------------------

struct VizArgs {
  std::string src, tgt, src_mask, tgt_mask, out_src, out_tgt;
  std::string flow, fg_mask, out;
  int scale = 1;
};

int run_viz_pca(const VizArgs& args) {
  std::optional<corrfuse::Mask> sm, tm;
  if (!args.src_mask.empty()) sm = corrfuse::read_mask_png(args.src_mask);
  if (!args.tgt_mask.empty()) tm = corrfuse::read_mask_png(args.tgt_mask);
  const auto renders = corrfuse::pca_rgb(corrfuse::read_fmap(args.src), corrfuse::read_fmap(args.tgt), sm, tm);
  corrfuse::write_png(corrfuse::upscale_nearest(renders.src, args.scale), args.out_src);
  corrfuse::write_png(corrfuse::upscale_nearest(renders.tgt, args.scale), args.out_tgt);
  print_json({{"src", args.out_src}, {"tgt", args.out_tgt}});
  return 0;
}

int run_viz_flow(const VizArgs& args) {
  std::optional<corrfuse::Mask> fg;
  if (!args.fg_mask.empty()) fg = corrfuse::read_mask_png(args.fg_mask);
  const auto img = corrfuse::render_flow(corrfuse::read_flow(args.flow), fg);
  corrfuse::write_png(corrfuse::upscale_nearest(img, args.scale), args.out);
  print_json({{"image", args.out}});
  return 0;
}

// ---- ingest ---------------------------------------------------------------

struct IngestArgs {
  std::string dataset_dir, format = "spair_json", out;
};

int run_ingest(const IngestArgs& args) {
  const auto anns = corrfuse::ingest_annotations(args.dataset_dir, corrfuse::annotation_format_from_string(args.format));
  json pairs = json::array();
  std::size_t keypoints = 0, dropped = 0;
  for (const auto& ann : anns) {
    pairs.push_back(corrfuse::to_json(ann));
    keypoints += ann.keypoints.size();
    dropped += static_cast<std::size_t>(ann.dropped_keypoints);
  }
  write_text(args.out, json{{"schema_version", 1}, {"pairs", pairs}}.dump(2) + "\n");
  print_json({{"annotations", args.out}, {"pairs", anns.size()}, {"keypoints", keypoints}, {"dropped_keypoints", dropped}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"corrfuse: fused-feature semantic correspondence toolkit"};
  app.require_subcommand(1);
  GlobalOptions global;
  app.add_option("--seed", global.seed, "Seed for every randomized step")->capture_default_str();
  app.add_option("--jobs", global.jobs, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();

  FuseArgs fuse;
  auto* fuse_cmd = app.add_subcommand("fuse", "Ensemble SD layers and fuse with DINO features per pair");
  fuse_cmd->add_option("--manifest", fuse.manifest, "Pair manifest JSON")->required()->check(CLI::ExistingFile);
  fuse_cmd->add_option("--out-dir", fuse.out_dir, "Directory for fused FMAP files")->required();
  fuse_cmd->add_option("--alpha", fuse.alpha, "SD weight in [0, 1]")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  fuse_cmd->add_option("--pca-dim", fuse.pca_dim, "Total SD dimension after PCA")->check(CLI::PositiveNumber)->capture_default_str();
  fuse_cmd->add_option("--target", fuse.target, "Working grid HxW")->capture_default_str();
  fuse_cmd->add_option("--method", fuse.method, "PCA method")->check(CLI::IsMember({"exact", "randomized"}))->capture_default_str();
  fuse_cmd->add_option("--oversample", fuse.oversample, "Randomized SVD oversampling")->check(CLI::NonNegativeNumber)->capture_default_str();
  fuse_cmd->add_option("--power-iters", fuse.power_iters, "Randomized SVD power iterations")->check(CLI::NonNegativeNumber)->capture_default_str();

  MatchArgs match;
  auto* match_cmd = app.add_subcommand("match", "Keypoint transfer or dense flow by nearest-neighbour search");
  match_cmd->add_option("--src", match.src, "Source FMAP")->required()->check(CLI::ExistingFile);
  match_cmd->add_option("--tgt", match.tgt, "Target FMAP")->required()->check(CLI::ExistingFile);
  match_cmd->add_option("--out", match.out, "Output MatchSet JSON (sparse) or SFLW file (dense)");
  match_cmd->add_flag("--dense", match.dense, "Dense semantic flow instead of keypoint transfer");
  match_cmd->add_option("--annotation", match.annotation, "simple_json annotation providing source keypoints")->check(CLI::ExistingFile);
  match_cmd->add_option("--keypoints", match.keypoints, "JSON array of [x, y] source keypoints")->check(CLI::ExistingFile);
  match_cmd->add_option("--pair-id", match.pair_id, "Pair id recorded in the MatchSet");
  match_cmd->add_option("--src-mask", match.src_mask, "Source mask PNG (dense mode)")->check(CLI::ExistingFile);
  match_cmd->add_option("--tgt-mask", match.tgt_mask, "Target mask PNG restricting the search")->check(CLI::ExistingFile);
  match_cmd->add_option("--out-size", match.out_size, "Flow resolution HxW (default: source image size)");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluation reports");
  eval_cmd->require_subcommand(1);
  auto* pck_cmd = eval_cmd->add_subcommand("pck", "PCK over one or more MatchSets");
  pck_cmd->add_option("--matches", eval.matches, "MatchSet JSON files")->required()->check(CLI::ExistingFile);
  pck_cmd->add_option("--annotations", eval.annotations, "Annotation file or directory")->required()->check(CLI::ExistingPath);
  pck_cmd->add_option("--format", eval.format, "Annotation format")->check(CLI::IsMember({"simple_json", "spair_json"}))->capture_default_str();
  pck_cmd->add_option("--kappa", eval.kappa, "Comma-separated thresholds")->capture_default_str();
  pck_cmd->add_option("--mode", eval.mode, "Threshold reference")->check(CLI::IsMember({"bbox", "image"}))->capture_default_str();
  pck_cmd->add_option("--csv", eval.csv, "Write the per-category table as CSV");
  auto* smooth_cmd = eval_cmd->add_subcommand("smoothness", "Mean first-order difference of a flow field");
  smooth_cmd->add_option("--flow", eval.flow, "SFLW file")->required()->check(CLI::ExistingFile);
  auto* outcomes_cmd = eval_cmd->add_subcommand("outcomes", "Joint success/failure distribution of two feature types");
  outcomes_cmd->add_option("--correct-a", eval.correct_a, "JSON boolean array for feature A")->check(CLI::ExistingFile);
  outcomes_cmd->add_option("--correct-b", eval.correct_b, "JSON boolean array for feature B")->check(CLI::ExistingFile);
  outcomes_cmd->add_option("--matches-a", eval.matches_a, "MatchSet for feature A")->check(CLI::ExistingFile);
  outcomes_cmd->add_option("--matches-b", eval.matches_b, "MatchSet for feature B")->check(CLI::ExistingFile);
  outcomes_cmd->add_option("--annotations", eval.annotations, "Annotation file or directory")->check(CLI::ExistingPath);
  outcomes_cmd->add_option("--format", eval.format, "Annotation format")->check(CLI::IsMember({"simple_json", "spair_json"}))->capture_default_str();
  outcomes_cmd->add_option("--kappa", eval.kappa, "Single threshold")->capture_default_str();
  outcomes_cmd->add_option("--mode", eval.mode, "Threshold reference")->check(CLI::IsMember({"bbox", "image"}))->capture_default_str();

  ClusterArgs cluster;
  auto* cluster_cmd = app.add_subcommand("cluster", "K-means parts per image and Hungarian cluster matching");
  cluster_cmd->add_option("--fmap", cluster.fmap, "Source FMAP")->required()->check(CLI::ExistingFile);
  cluster_cmd->add_option("--tgt-fmap", cluster.tgt_fmap, "Target FMAP to match clusters against")->check(CLI::ExistingFile);
  cluster_cmd->add_option("--k", cluster.k, "Cluster count")->check(CLI::Range(1, 256))->capture_default_str();
  cluster_cmd->add_option("--max-iters", cluster.max_iters, "Lloyd iterations")->check(CLI::PositiveNumber)->capture_default_str();
  cluster_cmd->add_option("--out-dir", cluster.out_dir, "Output directory")->required();

  SwapArgs swap;
  auto* swap_cmd = app.add_subcommand("swap", "Pixel-level instance swapping");
  swap_cmd->add_option("--src-img", swap.src_img, "Source RGB PNG")->required()->check(CLI::ExistingFile);
  swap_cmd->add_option("--tgt-img", swap.tgt_img, "Target RGB PNG")->required()->check(CLI::ExistingFile);
  swap_cmd->add_option("--src-feat", swap.src_feat, "Source FMAP")->required()->check(CLI::ExistingFile);
  swap_cmd->add_option("--tgt-feat", swap.tgt_feat, "Target FMAP")->required()->check(CLI::ExistingFile);
  swap_cmd->add_option("--src-mask", swap.src_mask, "Source instance mask PNG")->required()->check(CLI::ExistingFile);
  swap_cmd->add_option("--tgt-mask", swap.tgt_mask, "Target instance mask PNG")->required()->check(CLI::ExistingFile);
  swap_cmd->add_option("--out", swap.out, "Output PNG")->required();

  VizArgs viz;
  auto* viz_cmd = app.add_subcommand("viz", "Render PNG visualizations");
  viz_cmd->require_subcommand(1);
  auto* viz_pca = viz_cmd->add_subcommand("pca", "Joint PCA-RGB render of a feature-map pair");
  viz_pca->add_option("--src", viz.src, "Source FMAP")->required()->check(CLI::ExistingFile);
  viz_pca->add_option("--tgt", viz.tgt, "Target FMAP")->required()->check(CLI::ExistingFile);
  viz_pca->add_option("--src-mask", viz.src_mask, "Source mask PNG")->check(CLI::ExistingFile);
  viz_pca->add_option("--tgt-mask", viz.tgt_mask, "Target mask PNG")->check(CLI::ExistingFile);
  viz_pca->add_option("--out-src", viz.out_src, "Source render PNG")->required();
  viz_pca->add_option("--out-tgt", viz.out_tgt, "Target render PNG")->required();
  viz_pca->add_option("--scale", viz.scale, "Integer upscale factor")->check(CLI::Range(1, 64))->capture_default_str();
  auto* viz_flow = viz_cmd->add_subcommand("flow", "Color-coded flow field");
  viz_flow->add_option("--flow", viz.flow, "SFLW file")->required()->check(CLI::ExistingFile);
  viz_flow->add_option("--fg-mask", viz.fg_mask, "Foreground mask PNG; valid cells outside it are tinted")->check(CLI::ExistingFile);
  viz_flow->add_option("--out", viz.out, "Output PNG")->required();
  viz_flow->add_option("--scale", viz.scale, "Integer upscale factor")->check(CLI::Range(1, 64))->capture_default_str();

  IngestArgs ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Normalize dataset annotations to simple_json");
  ingest_cmd->add_option("--dataset-dir", ingest.dataset_dir, "Annotation directory or file")->required()->check(CLI::ExistingPath);
  ingest_cmd->add_option("--format", ingest.format, "Input format")->check(CLI::IsMember({"simple_json", "spair_json"}))->capture_default_str();
  ingest_cmd->add_option("--out", ingest.out, "Output annotations JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what(), 2);
  }

  try {
    if (*fuse_cmd) return run_fuse(fuse, global);
    if (*match_cmd) return run_match(match, global);
    if (*pck_cmd) return run_eval_pck(eval);
    if (*smooth_cmd) return run_eval_smoothness(eval);
    if (*outcomes_cmd) return run_eval_outcomes(eval);
    if (*cluster_cmd) return run_cluster(cluster, global);
    if (*swap_cmd) return run_swap(swap, global);
    if (*viz_pca) return run_viz_pca(viz);
    if (*viz_flow) return run_viz_flow(viz);
    if (*ingest_cmd) return run_ingest(ingest);
  } catch (const corrfuse::Error& e) {
    return report_error(corrfuse::to_string(e.kind()), e.what(), exit_code(e.kind()));
  } catch (const std::exception& e) {
    return report_error("runtime", e.what(), 1);
  }
  return report_error("usage", "no subcommand", 2);
}
