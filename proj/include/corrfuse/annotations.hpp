#pragma once

// Keypoint annotations and pair manifests.
//
// simple_json is the canonical record:
//   {"schema_version": 1, "pair_id": "...", "category": "...",
//    "src_image": {"width": W, "height": H}, "tgt_image": {...},
//    "tgt_bbox": [x0, y0, x1, y1],                      (optional)
//    "keypoints": [{"src": [x, y], "tgt": [x, y], "visible": true}, ...]}
// spair_json reads SPair-71k pair files (src_imsize / trg_imsize / src_kps /
// trg_kps / trg_bndbox) into the same record.

#include <algorithm>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "corrfuse/error.hpp"
#include "corrfuse/featmap.hpp"
#include "corrfuse/metrics.hpp"

namespace corrfuse {

enum class AnnotationFormat { kSimpleJson, kSpairJson };

inline AnnotationFormat annotation_format_from_string(const std::string& s) {
  if (s == "simple_json") return AnnotationFormat::kSimpleJson;
  if (s == "spair_json") return AnnotationFormat::kSpairJson;
  fail(ErrorKind::kInvalidArgument, "annotation format must be simple_json or spair_json, got '" + s + "'");
}

namespace detail {

class FieldReader {
 public:
  explicit FieldReader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void error(const std::string& field, const std::string& what, ErrorKind kind = ErrorKind::kFormat) const {
    fail(kind, source_ + ": " + field + ": " + what);
  }

  const nlohmann::json& at(const nlohmann::json& j, const std::string& key, const std::string& path) const {
    if (!j.is_object() || !j.contains(key)) error(path + key, "missing field");
    return j.at(key);
  }

  double number(const nlohmann::json& j, const std::string& path) const {
    if (!j.is_number()) error(path, "expected a number");
    return j.get<double>();
  }

  int positive_int(const nlohmann::json& j, const std::string& path) const {
    if (!j.is_number()) error(path, "expected a number");
    const double v = j.get<double>();
    if (v < 1 || v != std::floor(v)) error(path, "expected a positive integer", ErrorKind::kValidation);
    return static_cast<int>(v);
  }

  // [x, y] pair; nullopt for null / negative coordinates (missing keypoint).
  std::optional<Point> point(const nlohmann::json& j, const std::string& path) const {
    if (j.is_null()) return std::nullopt;
    if (!j.is_array() || j.size() < 2) error(path, "expected [x, y]");
    if (j[0].is_null() || j[1].is_null()) return std::nullopt;
    Point p{number(j[0], path + "[0]"), number(j[1], path + "[1]")};
    if (p.x < 0 || p.y < 0) return std::nullopt;
    return p;
  }

  const std::string& source() const { return source_; }

 private:
  std::string source_;
};

inline void validate_bounds(const PairAnnotation& ann, const FieldReader& reader) {
  for (std::size_t i = 0; i < ann.keypoints.size(); ++i) {
    const auto& kp = ann.keypoints[i];
    if (!inside_image(kp.src, ann.src_image_w, ann.src_image_h)) {
      reader.error("keypoints[" + std::to_string(i) + "].src", "keypoint " + std::to_string(i) + " lies outside the source image",
                   ErrorKind::kValidation);
    }
    if (!inside_image(kp.tgt, ann.tgt_image_w, ann.tgt_image_h)) {
      reader.error("keypoints[" + std::to_string(i) + "].tgt", "keypoint " + std::to_string(i) + " lies outside the target image",
                   ErrorKind::kValidation);
    }
  }
}

inline void read_bbox(PairAnnotation& ann, const nlohmann::json& box, const std::string& path, const FieldReader& reader) {
  if (!box.is_array() || box.size() != 4) reader.error(path, "expected [x0, y0, x1, y1]");
  const double x0 = reader.number(box[0], path + "[0]");
  const double y0 = reader.number(box[1], path + "[1]");
  const double x1 = reader.number(box[2], path + "[2]");
  const double y1 = reader.number(box[3], path + "[3]");
  ann.tgt_bbox_w = x1 - x0;
  ann.tgt_bbox_h = y1 - y0;
  if (*ann.tgt_bbox_w < 1 || *ann.tgt_bbox_h < 1) reader.error(path, "bbox width and height must be >= 1", ErrorKind::kValidation);
}

}  // namespace detail

inline PairAnnotation parse_simple_annotation(const nlohmann::json& j, const std::string& source) {
  detail::FieldReader reader(source);
  PairAnnotation ann;
  const auto& id = reader.at(j, "pair_id", "");
  ann.pair_id = id.is_string() ? id.get<std::string>() : id.dump();
  ann.category = j.value("category", std::string{});
  const auto& si = reader.at(j, "src_image", "");
  ann.src_image_w = reader.positive_int(reader.at(si, "width", "src_image."), "src_image.width");
  ann.src_image_h = reader.positive_int(reader.at(si, "height", "src_image."), "src_image.height");
  const auto& ti = reader.at(j, "tgt_image", "");
  ann.tgt_image_w = reader.positive_int(reader.at(ti, "width", "tgt_image."), "tgt_image.width");
  ann.tgt_image_h = reader.positive_int(reader.at(ti, "height", "tgt_image."), "tgt_image.height");
  if (j.contains("tgt_bbox") && !j.at("tgt_bbox").is_null()) detail::read_bbox(ann, j.at("tgt_bbox"), "tgt_bbox", reader);
  const auto& kps = reader.at(j, "keypoints", "");
  if (!kps.is_array()) reader.error("keypoints", "expected an array");
  for (std::size_t i = 0; i < kps.size(); ++i) {
    const std::string path = "keypoints[" + std::to_string(i) + "]";
    const auto& kp = kps[i];
    if (!kp.is_object()) reader.error(path, "expected an object");
    if (kp.contains("visible") && kp.at("visible").is_boolean() && !kp.at("visible").get<bool>()) {
      ann.dropped_keypoints++;
      continue;
    }
    const auto src = reader.point(reader.at(kp, "src", path + "."), path + ".src");
    const auto tgt = reader.point(reader.at(kp, "tgt", path + "."), path + ".tgt");
    if (!src || !tgt) {
      ann.dropped_keypoints++;
      continue;
    }
    ann.keypoints.push_back({*src, *tgt});
  }
  detail::validate_bounds(ann, reader);
  return ann;
}

inline PairAnnotation parse_spair_annotation(const nlohmann::json& j, const std::string& source,
                                             const std::string& fallback_id) {
  detail::FieldReader reader(source);
  PairAnnotation ann;
  if (j.contains("filename") && j.at("filename").is_string()) {
    ann.pair_id = j.at("filename").get<std::string>();
  } else if (j.contains("pair_id")) {
    ann.pair_id = j.at("pair_id").is_string() ? j.at("pair_id").get<std::string>() : j.at("pair_id").dump();
  } else {
    ann.pair_id = fallback_id;
  }
  ann.category = j.value("category", std::string{});
  auto imsize = [&](const char* key, int& w, int& h) {
    const auto& s = reader.at(j, key, "");
    if (!s.is_array() || s.size() < 2) reader.error(key, "expected [width, height, ...]");
    w = reader.positive_int(s[0], std::string(key) + "[0]");
    h = reader.positive_int(s[1], std::string(key) + "[1]");
  };
  imsize("src_imsize", ann.src_image_w, ann.src_image_h);
  imsize("trg_imsize", ann.tgt_image_w, ann.tgt_image_h);
  if (j.contains("trg_bndbox")) detail::read_bbox(ann, j.at("trg_bndbox"), "trg_bndbox", reader);
  const auto& src_kps = reader.at(j, "src_kps", "");
  const auto& tgt_kps = reader.at(j, "trg_kps", "");
  if (!src_kps.is_array() || !tgt_kps.is_array()) reader.error("src_kps", "expected arrays of [x, y]");
  if (src_kps.size() != tgt_kps.size()) reader.error("trg_kps", "length differs from src_kps");
  for (std::size_t i = 0; i < src_kps.size(); ++i) {
    const auto src = reader.point(src_kps[i], "src_kps[" + std::to_string(i) + "]");
    const auto tgt = reader.point(tgt_kps[i], "trg_kps[" + std::to_string(i) + "]");
    if (!src || !tgt) {
      ann.dropped_keypoints++;
      continue;
    }
    ann.keypoints.push_back({*src, *tgt});
  }
  detail::validate_bounds(ann, reader);
  return ann;
}

inline nlohmann::json to_json(const PairAnnotation& ann) {
  nlohmann::json kps = nlohmann::json::array();
  for (const auto& kp : ann.keypoints) kps.push_back({{"src", {kp.src.x, kp.src.y}}, {"tgt", {kp.tgt.x, kp.tgt.y}}});
  nlohmann::json j = {{"schema_version", 1},
                      {"pair_id", ann.pair_id},
                      {"category", ann.category},
                      {"src_image", {{"width", ann.src_image_w}, {"height", ann.src_image_h}}},
                      {"tgt_image", {{"width", ann.tgt_image_w}, {"height", ann.tgt_image_h}}},
                      {"keypoints", kps}};
  if (ann.tgt_bbox_w && ann.tgt_bbox_h) j["tgt_bbox"] = {0.0, 0.0, *ann.tgt_bbox_w, *ann.tgt_bbox_h};
  if (ann.dropped_keypoints > 0) j["dropped_keypoints"] = ann.dropped_keypoints;
  return j;
}

inline nlohmann::json parse_json_file(const std::filesystem::path& path) {
  const std::string text = detail::read_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, path.string() + ": invalid JSON: " + e.what());
  }
}

/// Records in one file: a single object, an array, or {"pairs": [...]}.
inline std::vector<PairAnnotation> load_annotation_file(const std::filesystem::path& path, AnnotationFormat format) {
  const nlohmann::json doc = parse_json_file(path);
  std::vector<nlohmann::json> records;
  if (doc.is_array()) {
    records.assign(doc.begin(), doc.end());
  } else if (doc.is_object() && doc.contains("pairs") && doc.at("pairs").is_array()) {
    records.assign(doc.at("pairs").begin(), doc.at("pairs").end());
  } else {
    records.push_back(doc);
  }
  std::vector<PairAnnotation> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::string source = records.size() == 1 ? path.string() : path.string() + "[" + std::to_string(i) + "]";
    out.push_back(format == AnnotationFormat::kSimpleJson
                      ? parse_simple_annotation(records[i], source)
                      : parse_spair_annotation(records[i], source, path.stem().string()));
  }
  return out;
}

/// All *.json annotation files under `dataset_dir` (recursive, sorted by path),
/// or a single file.
inline std::vector<PairAnnotation> ingest_annotations(const std::filesystem::path& dataset_dir, AnnotationFormat format) {
  namespace fs = std::filesystem;
  if (fs::is_regular_file(dataset_dir)) return load_annotation_file(dataset_dir, format);
  if (!fs::is_directory(dataset_dir)) fail(ErrorKind::kIo, "annotation path does not exist: " + dataset_dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dataset_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<PairAnnotation> out;
  for (const auto& f : files) {
    auto records = load_annotation_file(f, format);
    out.insert(out.end(), std::make_move_iterator(records.begin()), std::make_move_iterator(records.end()));
  }
  return out;
}

struct PairEntry {
  std::string pair_id;
  std::filesystem::path src_image, tgt_image;  // optional
  std::vector<std::filesystem::path> src_sd_layers, tgt_sd_layers;
  std::filesystem::path src_dino, tgt_dino;
  std::filesystem::path src_mask, tgt_mask;  // optional
  std::optional<PairAnnotation> annotation;
};

struct PairManifest {
  int schema_version = 1;
  std::vector<PairEntry> pairs;
};

/// Manifest paths are resolved relative to the manifest's directory.
inline PairManifest load_manifest(const std::filesystem::path& path) {
  const nlohmann::json doc = parse_json_file(path);
  detail::FieldReader reader(path.string());
  PairManifest manifest;
  const auto& version = reader.at(doc, "schema_version", "");
  if (!version.is_number_integer() || version.get<int>() != 1) reader.error("schema_version", "unsupported schema version");
  const std::filesystem::path base = path.parent_path();
  auto resolve = [&](const nlohmann::json& j, const std::string& field) -> std::filesystem::path {
    if (!j.is_string()) reader.error(field, "expected a path string");
    const std::filesystem::path p(j.get<std::string>());
    return p.is_absolute() ? p : base / p;
  };
  std::vector<nlohmann::json> entries;
  if (doc.contains("pairs")) {
    if (!doc.at("pairs").is_array()) reader.error("pairs", "expected an array");
    entries.assign(doc.at("pairs").begin(), doc.at("pairs").end());
  } else {
    entries.push_back(doc);
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    const std::string prefix = doc.contains("pairs") ? "pairs[" + std::to_string(i) + "]." : "";
    PairEntry pe;
    const auto& id = reader.at(e, "pair_id", prefix);
    pe.pair_id = id.is_string() ? id.get<std::string>() : id.dump();
    for (const char* key : {"src_sd_layers", "tgt_sd_layers"}) {
      const auto& list = reader.at(e, key, prefix);
      if (!list.is_array() || list.empty()) reader.error(prefix + key, "expected a non-empty array of paths");
      auto& dst = std::string(key) == "src_sd_layers" ? pe.src_sd_layers : pe.tgt_sd_layers;
      for (std::size_t k = 0; k < list.size(); ++k) dst.push_back(resolve(list[k], prefix + key + "[" + std::to_string(k) + "]"));
    }
    pe.src_dino = resolve(reader.at(e, "src_dino", prefix), prefix + "src_dino");
    pe.tgt_dino = resolve(reader.at(e, "tgt_dino", prefix), prefix + "tgt_dino");
    if (e.contains("src_image")) pe.src_image = resolve(e.at("src_image"), prefix + "src_image");
    if (e.contains("tgt_image")) pe.tgt_image = resolve(e.at("tgt_image"), prefix + "tgt_image");
    if (e.contains("src_mask")) pe.src_mask = resolve(e.at("src_mask"), prefix + "src_mask");
    if (e.contains("tgt_mask")) pe.tgt_mask = resolve(e.at("tgt_mask"), prefix + "tgt_mask");
    if (e.contains("annotation")) {
      pe.annotation = parse_simple_annotation(e.at("annotation"), path.string() + ":" + prefix + "annotation");
    } else if (e.contains("annotation_path")) {
      auto anns = load_annotation_file(resolve(e.at("annotation_path"), prefix + "annotation_path"), AnnotationFormat::kSimpleJson);
      if (anns.size() != 1) reader.error(prefix + "annotation_path", "expected exactly one annotation record");
      pe.annotation = std::move(anns.front());
    }
    manifest.pairs.push_back(std::move(pe));
  }
  return manifest;
}

}  // namespace corrfuse
