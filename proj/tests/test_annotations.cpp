#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <functional>

#include "corrfuse/annotations.hpp"

namespace cf = corrfuse;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "corrfuse_test_ann" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_json(const fs::path& p, const json& j) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << j.dump(2);
}

json simple_record(const std::string& id = "cat_001") {
  return {{"schema_version", 1},
          {"pair_id", id},
          {"category", "cat"},
          {"src_image", {{"width", 100}, {"height", 80}}},
          {"tgt_image", {{"width", 120}, {"height", 90}}},
          {"tgt_bbox", {10, 5, 70, 45}},
          {"keypoints",
           {{{"src", {10, 10}}, {"tgt", {20, 20}}},
            {{"src", {50, 40}}, {"tgt", {60, 30}}, {"visible", true}},
            {{"src", {99, 79}}, {"tgt", {0, 0}}}}}};
}

std::string error_message(const std::function<void()>& fn, cf::ErrorKind expected) {
  try {
    fn();
  } catch (const cf::Error& e) {
    EXPECT_EQ(e.kind(), expected) << e.what();
    return e.what();
  }
  ADD_FAILURE() << "expected corrfuse::Error";
  return {};
}

}  // namespace

TEST(SimpleJson, ParsesThreeKeypoints) {
  const cf::PairAnnotation a = cf::parse_simple_annotation(simple_record(), "mem");
  EXPECT_EQ(a.pair_id, "cat_001");
  EXPECT_EQ(a.category, "cat");
  ASSERT_EQ(a.keypoints.size(), 3u);
  EXPECT_EQ(a.keypoints[1].tgt, (cf::Point{60, 30}));
  EXPECT_EQ(a.src_image_w, 100);
  EXPECT_EQ(a.tgt_image_h, 90);
  EXPECT_DOUBLE_EQ(*a.tgt_bbox_w, 60.0);
  EXPECT_DOUBLE_EQ(*a.tgt_bbox_h, 40.0);
  EXPECT_DOUBLE_EQ(cf::threshold_extent(a, cf::ThresholdMode::kBbox), 60.0);
  EXPECT_DOUBLE_EQ(cf::threshold_extent(a, cf::ThresholdMode::kImage), 120.0);
  EXPECT_EQ(a.dropped_keypoints, 0);
}

TEST(SimpleJson, HiddenAndMissingKeypointsAreDroppedAndCounted) {
  json r = simple_record();
  r["keypoints"].push_back({{"src", {1, 1}}, {"tgt", {2, 2}}, {"visible", false}});
  r["keypoints"].push_back({{"src", nullptr}, {"tgt", {2, 2}}});
  r["keypoints"].push_back({{"src", {-1, -1}}, {"tgt", {2, 2}}});
  const cf::PairAnnotation a = cf::parse_simple_annotation(r, "mem");
  EXPECT_EQ(a.keypoints.size(), 3u);
  EXPECT_EQ(a.dropped_keypoints, 3);
}

TEST(SimpleJson, OutOfBoundsNamesTheKeypoint) {
  json r = simple_record();
  r["keypoints"][2]["tgt"] = {120, 10};  // x == width is outside
  const std::string msg =
      error_message([&] { cf::parse_simple_annotation(r, "pairs.json"); }, cf::ErrorKind::kValidation);
  EXPECT_NE(msg.find("keypoint 2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("pairs.json"), std::string::npos) << msg;
  EXPECT_NE(msg.find("keypoints[2].tgt"), std::string::npos) << msg;
}

TEST(SimpleJson, SchemaViolationsCarryFieldPath) {
  json r = simple_record();
  r["src_image"].erase("height");
  const std::string msg = error_message([&] { cf::parse_simple_annotation(r, "f.json"); }, cf::ErrorKind::kFormat);
  EXPECT_NE(msg.find("f.json: src_image.height"), std::string::npos) << msg;

  r = simple_record();
  r["tgt_image"]["width"] = 0;
  error_message([&] { cf::parse_simple_annotation(r, "f.json"); }, cf::ErrorKind::kValidation);
  r = simple_record();
  r["tgt_bbox"] = {1, 2, 3};
  error_message([&] { cf::parse_simple_annotation(r, "f.json"); }, cf::ErrorKind::kFormat);
  r = simple_record();
  r["keypoints"][0]["src"] = "here";
  error_message([&] { cf::parse_simple_annotation(r, "f.json"); }, cf::ErrorKind::kFormat);
}

TEST(SimpleJson, RoundTripThroughJson) {
  const cf::PairAnnotation a = cf::parse_simple_annotation(simple_record(), "mem");
  const cf::PairAnnotation b = cf::parse_simple_annotation(cf::to_json(a), "mem");
  EXPECT_EQ(b.pair_id, a.pair_id);
  EXPECT_EQ(b.keypoints.size(), a.keypoints.size());
  EXPECT_EQ(*b.tgt_bbox_w, *a.tgt_bbox_w);
  EXPECT_EQ(b.keypoints[2].src, a.keypoints[2].src);
}

TEST(SpairJson, AdaptsNativeRecord) {
  const json r = {{"filename", "2008_000001-2008_000002:cat"},
                  {"category", "cat"},
                  {"src_imsize", {500, 375, 3}},
                  {"trg_imsize", {333, 500, 3}},
                  {"trg_bndbox", {20, 30, 220, 430}},
                  {"src_kps", {{100, 100}, {200, 150}, {-1, -1}}},
                  {"trg_kps", {{50, 60}, {120, 300}, {10, 10}}}};
  const cf::PairAnnotation a = cf::parse_spair_annotation(r, "spair.json", "fallback");
  EXPECT_EQ(a.pair_id, "2008_000001-2008_000002:cat");
  EXPECT_EQ(a.src_image_w, 500);
  EXPECT_EQ(a.tgt_image_h, 500);
  EXPECT_EQ(a.keypoints.size(), 2u);
  EXPECT_EQ(a.dropped_keypoints, 1);
  EXPECT_DOUBLE_EQ(cf::threshold_extent(a, cf::ThresholdMode::kBbox), 400.0);

  json bad = r;
  bad["trg_kps"].erase(0);
  error_message([&] { cf::parse_spair_annotation(bad, "spair.json", "x"); }, cf::ErrorKind::kFormat);
}

TEST(Ingest, DirectoryIsWalkedInSortedOrder) {
  const fs::path dir = fresh_dir("walk");
  write_json(dir / "b" / "two.json", simple_record("p2"));
  write_json(dir / "a.json", json::array({simple_record("p0"), simple_record("p1")}));
  write_json(dir / "c.json", {{"pairs", {simple_record("p3")}}});
  std::ofstream(dir / "notes.txt") << "ignored";
  const auto anns = cf::ingest_annotations(dir, cf::AnnotationFormat::kSimpleJson);
  ASSERT_EQ(anns.size(), 4u);
  EXPECT_EQ(anns[0].pair_id, "p0");
  EXPECT_EQ(anns[1].pair_id, "p1");
  EXPECT_EQ(anns[2].pair_id, "p2");
  EXPECT_EQ(anns[3].pair_id, "p3");
  EXPECT_EQ(cf::ingest_annotations(dir / "a.json", cf::AnnotationFormat::kSimpleJson).size(), 2u);
}

TEST(Ingest, Errors) {
  const fs::path dir = fresh_dir("errors");
  std::ofstream(dir / "broken.json") << "{ not json";
  error_message([&] { cf::ingest_annotations(dir, cf::AnnotationFormat::kSimpleJson); }, cf::ErrorKind::kFormat);
  error_message([&] { cf::ingest_annotations(dir / "absent", cf::AnnotationFormat::kSimpleJson); }, cf::ErrorKind::kIo);
  EXPECT_THROW(cf::annotation_format_from_string("csv"), cf::Error);
}

TEST(Manifest, ResolvesRelativePathsAndAnnotations) {
  const fs::path dir = fresh_dir("manifest");
  write_json(dir / "ann" / "p.json", simple_record("m1"));
  const json manifest = {
      {"schema_version", 1},
      {"pairs",
       {{{"pair_id", "m1"},
         {"src_sd_layers", {"feat/s2.fmap", "feat/s5.fmap"}},
         {"tgt_sd_layers", {"feat/t2.fmap", "feat/t5.fmap"}},
         {"src_dino", "feat/sd.fmap"},
         {"tgt_dino", "/abs/td.fmap"},
         {"src_mask", "m/s.png"},
         {"annotation_path", "ann/p.json"}},
        {{"pair_id", 7},
         {"src_sd_layers", {"a"}},
         {"tgt_sd_layers", {"b"}},
         {"src_dino", "c"},
         {"tgt_dino", "d"},
         {"annotation", simple_record("inline")}}}}};
  write_json(dir / "manifest.json", manifest);
  const cf::PairManifest m = cf::load_manifest(dir / "manifest.json");
  ASSERT_EQ(m.pairs.size(), 2u);
  EXPECT_EQ(m.pairs[0].src_sd_layers[1], dir / "feat/s5.fmap");
  EXPECT_EQ(m.pairs[0].tgt_dino, fs::path("/abs/td.fmap"));
  EXPECT_EQ(m.pairs[0].src_mask, dir / "m/s.png");
  EXPECT_TRUE(m.pairs[0].tgt_mask.empty());
  EXPECT_EQ(m.pairs[0].annotation->pair_id, "m1");
  EXPECT_EQ(m.pairs[1].pair_id, "7");
  EXPECT_EQ(m.pairs[1].annotation->pair_id, "inline");
}

TEST(Manifest, SchemaErrors) {
  const fs::path dir = fresh_dir("manifest_bad");
  write_json(dir / "v2.json", {{"schema_version", 2}, {"pairs", json::array()}});
  error_message([&] { cf::load_manifest(dir / "v2.json"); }, cf::ErrorKind::kFormat);
  write_json(dir / "nov.json", {{"pairs", json::array()}});
  error_message([&] { cf::load_manifest(dir / "nov.json"); }, cf::ErrorKind::kFormat);
  write_json(dir / "nolayers.json",
             {{"schema_version", 1}, {"pairs", {{{"pair_id", "x"}, {"src_sd_layers", json::array()}}}}});
  const std::string msg = error_message([&] { cf::load_manifest(dir / "nolayers.json"); }, cf::ErrorKind::kFormat);
  EXPECT_NE(msg.find("pairs[0].src_sd_layers"), std::string::npos) << msg;
}
