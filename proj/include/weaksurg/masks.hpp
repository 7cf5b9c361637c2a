#pragma once

#include <cstdint>
#include <vector>

#include "weaksurg/image.hpp"

namespace weaksurg {

/// Dense per-pixel class ids; 0 is background, 1..C are classes.
struct LabelMap {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  LabelMap() = default;
  LabelMap(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h, 0) {}

  std::uint8_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const LabelMap&) const = default;
};

struct Instance {
  int class_id = 0;   // in [0, C)
  double score = 1.0;
  MaskU8 mask;

  bool operator==(const Instance&) const = default;
};

using InstanceSet = std::vector<Instance>;

/// Paints instances onto a label map in order (later instances on top).
LabelMap instances_to_labelmap(const InstanceSet& instances, int width, int height);

/// Splits an instance-id mask into per-instance binary masks using the
/// id -> class table (ids are 1-based; 0 is background).
InstanceSet instances_from_id_mask(const MaskU16& mask, const std::vector<int>& id_to_class);

}  // namespace weaksurg
