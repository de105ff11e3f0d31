#pragma once

// Pixel-level instance swapping: every source pixel inside the source
// instance mask takes the color of its nearest-neighbour target pixel inside
// the target instance mask, with both feature maps first upsampled to their
// image resolutions.

#include <utility>

#include "corrfuse/error.hpp"
#include "corrfuse/featmap.hpp"
#include "corrfuse/image.hpp"
#include "corrfuse/matching.hpp"

namespace corrfuse {

struct SwapResult {
  Image image;
  bool src_mask_empty = false;  // nothing to swap; image is a copy of the source
};

inline SwapResult swap_instance(const Image& src_img, const Image& tgt_img, const FeatureMap& src_feat,
                                const FeatureMap& tgt_feat, const Mask& src_mask, const Mask& tgt_mask, int jobs = 1) {
  require(src_mask.same_dims(src_img.height, src_img.width), "swap: source mask must match the source image");
  require(tgt_mask.same_dims(tgt_img.height, tgt_img.width), "swap: target mask must match the target image");
  require(src_feat.channels() == tgt_feat.channels(), "swap: feature channel counts differ");
  require(tgt_mask.count() > 0, "swap: target mask is empty, nothing to sample");

  SwapResult result{src_img, false};
  if (src_mask.count() == 0) {
    result.src_mask_empty = true;
    return result;
  }
  const FeatureMap src_up = bilinear_resize(src_feat, src_img.height, src_img.width);
  const FeatureMap tgt_up = bilinear_resize(tgt_feat, tgt_img.height, tgt_img.width);
  NnOptions options;
  options.src_mask = src_mask;
  options.tgt_mask = tgt_mask;
  options.jobs = jobs;
  const NnResult nn = nn_dense(src_up, tgt_up, options);
  for (int p = 0; p < src_img.height * src_img.width; ++p) {
    if (src_mask.at(p)) result.image.set(p, tgt_img.at(nn.index[p]));
  }
  return result;
}

}  // namespace corrfuse
