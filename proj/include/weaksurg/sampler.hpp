#pragma once

#include <vector>

#include "weaksurg/encoder.hpp"
#include "weaksurg/rng.hpp"
#include "weaksurg/synthvid.hpp"

namespace weaksurg::sampler {

struct FramePair {
  int ref_index = 0;
  int target_index = 0;
  int gap = 0;  // target_index - ref_index, never zero
};

/// Uniform target frame and signed gap with |gap| <= delta_max, clamped to the
/// clip bounds; both time directions occur. Clips need at least two frames.
FramePair sample_pair(int clip_length, int delta_max, Rng& rng);

/// Pixel is uncertain iff max over classes of the image-resolution CAM lies in
/// [low, high]. An empty set falls back to the full frame (flag reported).
MaskU8 uncertain_mask(const enc::CamStack& cam, double low, double high,
                      bool* fell_back = nullptr);

struct LocalCropSet {
  std::vector<ImageU8> crops;
  std::vector<Rect> boxes;                        // reference-frame coordinates
  std::vector<std::vector<int>> pseudo_presence;  // L x C
};

/// Crop centers drawn uniformly from uncertain pixels, boxes clamped inside
/// the frame. pseudo_presence[l][c] = 1 iff at least `min_frac` of the crop's
/// pixels have CAM_c >= cam_thresh AND class c is in the frame's image labels.
LocalCropSet sample_local_crops(const ImageU8& frame, const MaskU8& uncertain,
                                const enc::CamStack& cam,
                                const std::vector<int>& image_presence, int count,
                                int crop_size, Rng& rng, double cam_thresh = 0.5,
                                double min_frac = 0.05);

}  // namespace weaksurg::sampler
