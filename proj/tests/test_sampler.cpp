#include "weaksurg/sampler.hpp"

#include <map>

#include "doctest.h"
#include "test_util.hpp"

using namespace weaksurg;
using namespace weaksurg::sampler;

namespace {

enc::CamStack constant_cam(int size, double value, int classes = 2) {
  enc::CamStack cam;
  cam.image_size = size;
  cam.grid = size;
  for (int c = 0; c < classes; ++c) {
    cam.maps.push_back(Matrix::Constant(size, size, value));
    cam.upsampled.push_back(Matrix::Constant(size, size, value));
  }
  return cam;
}

}  // namespace

TEST_CASE("sample_pair: delta_max 1 gives consecutive pairs, both directions occur") {
  Rng rng(1);
  bool forward = false, backward = false;
  for (int i = 0; i < 200; ++i) {
    const FramePair p = sample_pair(10, 1, rng);
    CHECK(std::abs(p.gap) == 1);
    CHECK(p.target_index - p.ref_index == p.gap);
    CHECK(p.ref_index >= 0);
    CHECK(p.ref_index < 10);
    forward = forward || p.gap > 0;
    backward = backward || p.gap < 0;
  }
  CHECK(forward);
  CHECK(backward);
}

TEST_CASE("sample_pair: two-frame clip yields the unique pair in some orientation") {
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    const FramePair p = sample_pair(2, 5, rng);
    CHECK(std::abs(p.gap) == 1);
    CHECK(((p.ref_index == 0 && p.target_index == 1) ||
           (p.ref_index == 1 && p.target_index == 0)));
  }
}

TEST_CASE("sample_pair: single-frame clip is rejected") {
  Rng rng(3);
  CHECK_THROWS_AS(sample_pair(1, 3, rng), ConfigError);
}

TEST_CASE("sample_pair: |gap| is uniform on a long clip") {
  Rng rng(4);
  std::map<int, int> counts;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const FramePair p = sample_pair(1000, 8, rng);
    CHECK(std::abs(p.gap) >= 1);
    CHECK(std::abs(p.gap) <= 8);
    ++counts[std::abs(p.gap)];
  }
  for (int m = 1; m <= 8; ++m) {
    const double freq = static_cast<double>(counts[m]) / draws;
    CHECK(freq == doctest::Approx(1.0 / 8).epsilon(0.16));  // 1/8 +- 0.02 absolute
    CHECK(std::abs(freq - 0.125) < 0.02);
  }
}

TEST_CASE("uncertain_mask: all-zero CAM falls back to the full frame") {
  bool fell_back = false;
  const MaskU8 mask = uncertain_mask(constant_cam(8, 0.0), 0.35, 0.55, &fell_back);
  CHECK(fell_back);
  CHECK(mask.count() == 64);
}

TEST_CASE("uncertain_mask: constant 0.45 marks every pixel uncertain") {
  bool fell_back = true;
  const MaskU8 mask = uncertain_mask(constant_cam(8, 0.45), 0.35, 0.55, &fell_back);
  CHECK_FALSE(fell_back);
  CHECK(mask.count() == 64);
}

TEST_CASE("uncertain_mask: confident step CAM has no uncertain pixels and falls back") {
  enc::CamStack cam = constant_cam(8, 0.0, 1);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) cam.upsampled[0](y, x) = x < 4 ? 0.2 : 0.9;
  bool fell_back = false;
  const MaskU8 mask = uncertain_mask(cam, 0.35, 0.55, &fell_back);
  CHECK(fell_back);
  CHECK(mask.count() == 64);
}

TEST_CASE("sample_local_crops: boxes stay inside the frame; labels gated by CAM and image labels") {
  Rng rng(7);
  const int size = 32;
  ImageU8 frame(size, size);
  enc::CamStack cam = constant_cam(size, 0.0, 2);
  // class 0 occupies the left half at full confidence
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size / 2; ++x) cam.upsampled[0](y, x) = 1.0;
  MaskU8 uncertain(size, size);
  std::fill(uncertain.data.begin(), uncertain.data.end(), std::uint8_t{1});

  SUBCASE("class present in image labels and covered by CAM") {
    const LocalCropSet crops =
        sample_local_crops(frame, uncertain, cam, {1, 1}, 4, 16, rng);
    CHECK(crops.crops.size() == 4);
    for (const Rect& box : crops.boxes) {
      CHECK(box.x >= 0);
      CHECK(box.y >= 0);
      CHECK(box.x + box.w <= size);
      CHECK(box.y + box.h <= size);
    }
    bool found_positive = false;
    for (int l = 0; l < 4; ++l) {
      // class 1 has zero CAM everywhere: never labeled
      CHECK(crops.pseudo_presence[l][1] == 0);
      found_positive = found_positive || crops.pseudo_presence[l][0] == 1;
    }
    CHECK(found_positive);
  }

  SUBCASE("image labels veto CAM-covered classes") {
    const LocalCropSet crops =
        sample_local_crops(frame, uncertain, cam, {0, 1}, 4, 16, rng);
    for (int l = 0; l < 4; ++l) CHECK(crops.pseudo_presence[l][0] == 0);
  }
}

TEST_CASE("sample_local_crops: crop fully inside a CAM=1 region is labeled") {
  Rng rng(8);
  const int size = 32;
  ImageU8 frame(size, size);
  enc::CamStack cam = constant_cam(size, 1.0, 1);
  MaskU8 uncertain(size, size);
  uncertain.at(16, 16) = 1;  // single candidate center
  const LocalCropSet crops = sample_local_crops(frame, uncertain, cam, {1}, 2, 8, rng);
  for (int l = 0; l < 2; ++l) CHECK(crops.pseudo_presence[l][0] == 1);
}

TEST_CASE("sampling pipeline is deterministic under a fixed seed") {
  const auto run = [] {
    Rng rng(99);
    std::vector<int> trace;
    for (int i = 0; i < 20; ++i) {
      const FramePair p = sample_pair(50, 6, rng);
      trace.push_back(p.ref_index);
      trace.push_back(p.target_index);
    }
    return trace;
  };
  CHECK(run() == run());
}

TEST_CASE("pseudo presence never exceeds image presence") {
  Rng rng(10);
  const int size = 16;
  ImageU8 frame(size, size);
  enc::CamStack cam = constant_cam(size, 0.0, 3);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) cam.upsampled[c](y, x) = uniform(rng);
  MaskU8 uncertain(size, size);
  std::fill(uncertain.data.begin(), uncertain.data.end(), std::uint8_t{1});
  const std::vector<int> presence = {1, 0, 1};
  const LocalCropSet crops = sample_local_crops(frame, uncertain, cam, presence, 8, 8, rng);
  for (const auto& labels : crops.pseudo_presence)
    for (int c = 0; c < 3; ++c) CHECK(labels[c] <= presence[c]);
}
