#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "corrfuse/swap.hpp"
#include "corrfuse/viz.hpp"
#include "fixtures.hpp"

namespace cf = corrfuse;
namespace fs = std::filesystem;
using cf::testing::random_map;

namespace {

// Every pixel a distinct color derived from its position.
cf::Image position_image(int h, int w, int salt = 0) {
  cf::Image img(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      img.set(r, c, {static_cast<std::uint8_t>(r * 7 + salt), static_cast<std::uint8_t>(c * 11 + salt),
                     static_cast<std::uint8_t>((r * w + c) % 251)});
    }
  }
  return img;
}

cf::Mask disk(int h, int w, double cy, double cx, double radius) {
  cf::Mask m(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) m.set(r, c, (r - cy) * (r - cy) + (c - cx) * (c - cx) <= radius * radius);
  return m;
}

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "corrfuse_test_viz";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(Swap, SelfSwapIsIdentity) {
  const cf::Image img = position_image(12, 10);
  const cf::FeatureMap feat = random_map(12, 10, 16, 1);
  const cf::Mask mask = disk(12, 10, 6, 5, 4);
  const cf::SwapResult r = cf::swap_instance(img, img, feat, feat, mask, mask);
  EXPECT_FALSE(r.src_mask_empty);
  EXPECT_EQ(r.image, img);
}

TEST(Swap, PermutedFeaturesPullColorsThroughPermutation) {
  const int h = 9, w = 11;
  const cf::FeatureMap src_feat = random_map(h, w, 24, 2);
  const std::vector<int> p = cf::testing::random_permutation(h * w, 3);
  const cf::FeatureMap tgt_feat = cf::testing::permute_tokens(src_feat, p);
  const cf::Image src_img(h, w, {1, 2, 3});
  const cf::Image tgt_img = position_image(h, w, 5);
  const cf::Mask src_mask = disk(h, w, 4, 5, 3.5);
  const cf::Mask all(h, w, true);
  const cf::SwapResult r = cf::swap_instance(src_img, tgt_img, src_feat, tgt_feat, src_mask, all);
  for (int s = 0; s < h * w; ++s) {
    EXPECT_EQ(r.image.at(s), src_mask.at(s) ? tgt_img.at(p[s]) : src_img.at(s)) << s;
  }
}

TEST(Swap, OutputIsContainedInTargetMaskPalette) {
  const cf::Image src_img = position_image(16, 16, 1);
  const cf::Image tgt_img = position_image(20, 14, 9);
  const cf::FeatureMap src_feat = random_map(4, 4, 8, 4);
  const cf::FeatureMap tgt_feat = random_map(5, 7, 8, 5);
  const cf::Mask src_mask = disk(16, 16, 8, 8, 6);
  const cf::Mask tgt_mask = disk(20, 14, 10, 7, 5);
  std::set<cf::Rgb> palette;
  for (int i = 0; i < 20 * 14; ++i) {
    if (tgt_mask.at(i)) palette.insert(tgt_img.at(i));
  }
  for (int jobs : {1, 3}) {
    const cf::SwapResult r = cf::swap_instance(src_img, tgt_img, src_feat, tgt_feat, src_mask, tgt_mask, jobs);
    for (int i = 0; i < 16 * 16; ++i) {
      if (src_mask.at(i)) {
        EXPECT_TRUE(palette.count(r.image.at(i))) << i;
      } else {
        EXPECT_EQ(r.image.at(i), src_img.at(i));
      }
    }
  }
}

TEST(Swap, EmptyMasks) {
  const cf::Image img = position_image(6, 6);
  const cf::FeatureMap feat = random_map(3, 3, 4, 6);
  const cf::SwapResult r = cf::swap_instance(img, img, feat, feat, cf::Mask(6, 6), cf::Mask(6, 6, true));
  EXPECT_TRUE(r.src_mask_empty);
  EXPECT_EQ(r.image, img);
  EXPECT_THROW(cf::swap_instance(img, img, feat, feat, cf::Mask(6, 6, true), cf::Mask(6, 6)), cf::Error);
  EXPECT_THROW(cf::swap_instance(img, img, feat, feat, cf::Mask(5, 6, true), cf::Mask(6, 6, true)), cf::Error);
}

TEST(PcaRgb, IdenticalInputsRenderIdentically) {
  const cf::FeatureMap m = random_map(6, 7, 12, 7);
  const cf::ImagePair out = cf::pca_rgb(m, m);
  EXPECT_EQ(out.src, out.tgt);
  EXPECT_EQ(out.src.height, 6);
  // Joint min-max scaling reaches both ends of every channel.
  for (int c = 0; c < 3; ++c) {
    int lo = 255, hi = 0;
    for (int i = 0; i < 42; ++i) {
      lo = std::min<int>(lo, out.src.at(i)[c]);
      hi = std::max<int>(hi, out.src.at(i)[c]);
    }
    EXPECT_EQ(lo, 0);
    EXPECT_EQ(hi, 255);
  }
}

TEST(PcaRgb, ConstantFeaturesAreMidGray) {
  const cf::FeatureMap m(3, 3, 5, std::vector<float>(45, 0.25f));
  const cf::ImagePair out = cf::pca_rgb(m, m);
  for (int i = 0; i < 9; ++i) EXPECT_EQ(out.src.at(i), (cf::Rgb{128, 128, 128}));
}

TEST(PcaRgb, PermutedTargetPermutesColors) {
  const cf::FeatureMap src = random_map(5, 6, 10, 8);
  const std::vector<int> p = cf::testing::random_permutation(30, 9);
  const cf::ImagePair out = cf::pca_rgb(src, cf::testing::permute_tokens(src, p));
  for (int s = 0; s < 30; ++s) {
    for (int c = 0; c < 3; ++c) EXPECT_LE(std::abs(out.src.at(s)[c] - out.tgt.at(p[s])[c]), 1);
  }
}

TEST(PcaRgb, OutOfMaskIsBlack) {
  const cf::FeatureMap m = random_map(4, 4, 6, 10);
  cf::Mask mask(4, 4, true);
  mask.set(0, 0, false);
  const cf::ImagePair out = cf::pca_rgb(m, m, mask, std::nullopt);
  EXPECT_EQ(out.src.at(0), (cf::Rgb{0, 0, 0}));
  EXPECT_THROW(cf::pca_rgb(random_map(2, 2, 2, 1), random_map(2, 2, 2, 2)), cf::Error);
}

TEST(FlowRender, ColorsFollowDirectionAndMagnitude) {
  cf::FlowField zero(2, 2);
  zero.valid = cf::Mask(2, 2, true);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(cf::render_flow(zero).at(i), (cf::Rgb{230, 230, 230}));

  cf::FlowField f(1, 4);
  f.valid = cf::Mask(1, 4, true);
  f.du = {2.0f, -2.0f, 0.0f, 1.0f};
  f.dv = {0.0f, 0.0f, 2.0f, 0.0f};
  const cf::Image img = cf::render_flow(f);
  EXPECT_EQ(img.at(0), (cf::Rgb{230, 0, 0}));    // hue 0
  EXPECT_EQ(img.at(1), (cf::Rgb{0, 230, 230}));  // hue 180
  EXPECT_EQ(img.at(2), (cf::Rgb{115, 230, 0}));  // hue 90
  EXPECT_EQ(img.at(3), (cf::Rgb{230, 115, 115}));  // half saturation

  f.valid.set(0, 3, false);
  cf::Mask fg(1, 4, true);
  fg.set(0, 0, false);
  const cf::Image tinted = cf::render_flow(f, fg);
  EXPECT_EQ(tinted.at(3), cf::kInvalidColor);
  EXPECT_EQ(tinted.at(0), (cf::Rgb{243, 70, 0}));
  EXPECT_EQ(tinted.at(1), (cf::Rgb{0, 230, 230}));

  EXPECT_THROW(cf::render_flow(cf::FlowField(2, 2)), cf::Error);
}

TEST(FlowRender, ConstantFlowIsUniform) {
  cf::FlowField f(5, 5);
  f.valid = cf::Mask(5, 5, true);
  std::fill(f.du.begin(), f.du.end(), 3.0f);
  std::fill(f.dv.begin(), f.dv.end(), -1.0f);
  const cf::Image img = cf::render_flow(f);
  for (int i = 1; i < 25; ++i) EXPECT_EQ(img.at(i), img.at(0));
}

TEST(Palette, DistinctColors) {
  const auto palette = cf::cluster_palette(32);
  EXPECT_EQ(std::set<cf::Rgb>(palette.begin(), palette.end()).size(), 32u);
  EXPECT_THROW(cf::cluster_palette(0), cf::Error);
  EXPECT_THROW(cf::cluster_palette(257), cf::Error);
}

TEST(Png, RoundTrips) {
  const cf::Image img = position_image(7, 9);
  cf::write_png(img, temp_path("img.png"));
  EXPECT_EQ(cf::read_png(temp_path("img.png")), img);

  const cf::Mask mask = disk(7, 9, 3, 4, 2);
  cf::write_mask_png(mask, temp_path("mask.png"));
  EXPECT_EQ(cf::read_mask_png(temp_path("mask.png")), mask);

  const auto palette = cf::cluster_palette(3);
  std::vector<int> labels(6);
  for (int i = 0; i < 6; ++i) labels[i] = i % 3;
  cf::write_label_png(labels, 2, 3, palette, temp_path("labels.png"));
  const cf::Image back = cf::read_png(temp_path("labels.png"));
  for (int i = 0; i < 6; ++i) EXPECT_EQ(back.at(i), palette[i % 3]);

  EXPECT_EQ(cf::upscale_nearest(img, 3).at(20, 26), img.at(6, 8));
  EXPECT_THROW(cf::read_png(temp_path("missing.png")), cf::Error);
}
