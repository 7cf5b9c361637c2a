#include "weaksurg/sampler.hpp"

#include <algorithm>

namespace weaksurg::sampler {

FramePair sample_pair(int clip_length, int delta_max, Rng& rng) {
  check_config(clip_length >= 2, "sample_pair: clip must have at least 2 frames");
  check_config(delta_max >= 1, "sample_pair: delta_max must be >= 1");
  const int target = uniform_int(rng, 0, clip_length - 1);
  int magnitude = uniform_int(rng, 1, delta_max);
  int sign = uniform(rng) < 0.5 ? -1 : 1;
  int avail = sign > 0 ? clip_length - 1 - target : target;
  if (avail == 0) {  // boundary frame: the other direction always has room
    sign = -sign;
    avail = sign > 0 ? clip_length - 1 - target : target;
  }
  magnitude = std::min(magnitude, avail);
  const int ref = target + sign * magnitude;
  FramePair pair;
  pair.ref_index = ref;
  pair.target_index = target;
  pair.gap = target - ref;
  return pair;
}

MaskU8 uncertain_mask(const enc::CamStack& cam, double low, double high, bool* fell_back) {
  check_config(low <= high, "uncertain_mask: need low <= high");
  check_config(!cam.upsampled.empty(), "uncertain_mask: CAM has no classes");
  const int s = cam.image_size;
  MaskU8 out(s, s);
  std::size_t hits = 0;
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      double best = 0.0;
      for (const auto& map : cam.upsampled) best = std::max(best, map(y, x));
      if (best >= low && best <= high) {
        out.at(x, y) = 1;
        ++hits;
      }
    }
  }
  if (fell_back) *fell_back = false;
  if (hits == 0) {
    std::fill(out.data.begin(), out.data.end(), std::uint8_t{1});
    if (fell_back) *fell_back = true;
  }
  return out;
}

LocalCropSet sample_local_crops(const ImageU8& frame, const MaskU8& uncertain,
                                const enc::CamStack& cam,
                                const std::vector<int>& image_presence, int count,
                                int crop_size, Rng& rng, double cam_thresh,
                                double min_frac) {
  check_config(crop_size > 0 && crop_size <= frame.width && crop_size <= frame.height,
               "sample_local_crops: crop size ", crop_size, " exceeds frame");
  check_config(uncertain.width == frame.width && uncertain.height == frame.height,
               "sample_local_crops: mask size mismatch");
  const int num_classes = static_cast<int>(cam.upsampled.size());
  check_config(static_cast<int>(image_presence.size()) == num_classes,
               "sample_local_crops: presence length mismatch");

  std::vector<int> candidates;
  candidates.reserve(uncertain.data.size());
  for (int i = 0; i < static_cast<int>(uncertain.data.size()); ++i)
    if (uncertain.data[i]) candidates.push_back(i);
  check_config(!candidates.empty(), "sample_local_crops: empty uncertain set");

  LocalCropSet out;
  for (int l = 0; l < count; ++l) {
    const int pick = candidates[uniform_int(rng, 0, static_cast<int>(candidates.size()) - 1)];
    const int cy = pick / frame.width;
    const int cx = pick % frame.width;
    Rect box;
    box.w = crop_size;
    box.h = crop_size;
    box.x = std::clamp(cx - crop_size / 2, 0, frame.width - crop_size);
    box.y = std::clamp(cy - crop_size / 2, 0, frame.height - crop_size);

    std::vector<int> labels(num_classes, 0);
    const double need = min_frac * crop_size * crop_size;
    for (int c = 0; c < num_classes; ++c) {
      if (!image_presence[c]) continue;  // image-level labels gate crop labels
      int above = 0;
      for (int y = box.y; y < box.y + box.h; ++y)
        for (int x = box.x; x < box.x + box.w; ++x)
          if (cam.upsampled[c](y, x) >= cam_thresh) ++above;
      if (above >= need) labels[c] = 1;
    }
    out.crops.push_back(crop(frame, box));
    out.boxes.push_back(box);
    out.pseudo_presence.push_back(std::move(labels));
  }
  return out;
}

}  // namespace weaksurg::sampler
