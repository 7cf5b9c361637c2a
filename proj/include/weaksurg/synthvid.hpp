#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "weaksurg/masks.hpp"

namespace weaksurg::synthvid {

using weaksurg::ImageU8;
using weaksurg::InstanceSet;
using weaksurg::MaskU16;

/// One instrument-like object: an elongated capsule body plus a class-coded
/// tip at the head end. Motion bounces inside [0,W) x [band_y0, band_y1].
struct ObjectSpec {
  int class_id = 0;
  int shape_kind = 0;      // tip geometry, see render code
  double x = 0, y = 0;     // initial center, pixels
  double angle = 0;        // radians
  double vx = 0, vy = 0;   // pixels / frame
  double omega = 0;        // wobble, radians / frame
  double length = 28;      // body length along the axis, pixels (0 = tip only)
  double width = 8;        // body thickness
  double tip_size = 10;
  double drift_rate = 0;   // appearance drift per frame, 0 = static colors
  double body_hue = 205, body_sat = 0.30, body_val = 0.78;
  double tip_hue = 0, tip_sat = 0.92, tip_val = 0.92;
  double band_y0 = 0, band_y1 = 0;  // vertical motion band; 0,0 = full frame
};

struct ClipSpec {
  std::uint64_t seed = 0;
  int num_frames = 0;
  int image_size = 128;
  int num_classes = 7;
  std::vector<ObjectSpec> objects;
};

struct Clip {
  int image_size = 0;
  int num_classes = 0;
  std::vector<ImageU8> frames;
  std::vector<std::vector<int>> presence;   // frames x C, {0,1}
  std::vector<MaskU16> gt_masks;            // instance-id masks, 0 = background
  std::vector<int> instance_class;          // id-1 -> class_id
  std::vector<InstanceSet> gt_instances;    // derived from gt_masks (eval only)

  bool operator==(const Clip&) const = default;
};

/// Deterministic rasterizer; same spec always yields byte-identical output.
Clip generate_clip(const ClipSpec& spec);

/// Randomized but seed-deterministic spec: objects of distinct classes in
/// disjoint vertical bands (instances never occlude or leave the frame).
ClipSpec random_clip_spec(std::uint64_t seed, int image_size, int num_classes,
                          int num_frames, int num_objects, double drift_rate = 0.5,
                          double body_tint = 0.2);

struct DatasetClip {
  std::string id;
  std::string split;  // "train" or "val"
  Clip clip;
};

struct Dataset {
  int num_classes = 0;
  int image_size = 0;
  std::vector<std::string> class_names;
  std::vector<DatasetClip> clips;

  std::vector<const DatasetClip*> split_clips(const std::string& split) const;
};

/// Writes `root/meta.json`, `root/clips/<id>/{frames,masks}/%06d.png` and
/// `labels.json`; returns the manifest (meta.json) text. Integrity hashes for
/// every file are recorded in the manifest and verified by read_dataset.
std::string write_dataset(const Dataset& dataset, const std::string& root);
Dataset read_dataset(const std::string& root);

/// Convenience generator used by the CLI and tests. Generation is pure per
/// clip, so num_workers only affects wall time, never the result.
Dataset make_dataset(std::uint64_t seed, int num_clips, int num_frames, int num_classes,
                     int image_size, int num_objects, int val_clips,
                     double drift_rate = 0.5, double body_tint = 0.2, int num_workers = 1);

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t n);
std::uint64_t hash_file(const std::string& path);

}  // namespace weaksurg::synthvid
