#include "weaksurg/masks.hpp"

#include <map>

namespace weaksurg {

LabelMap instances_to_labelmap(const InstanceSet& instances, int width, int height) {
  LabelMap out(width, height);
  for (const auto& inst : instances) {
    check_config(inst.mask.width == width && inst.mask.height == height,
                 "instances_to_labelmap: mask size mismatch");
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        if (inst.mask.at(x, y)) out.at(x, y) = static_cast<std::uint8_t>(inst.class_id + 1);
  }
  return out;
}

InstanceSet instances_from_id_mask(const MaskU16& mask, const std::vector<int>& id_to_class) {
  std::map<std::uint16_t, MaskU8> by_id;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const std::uint16_t id = mask.at(x, y);
      if (id == 0) continue;
      auto [it, fresh] = by_id.try_emplace(id, MaskU8{});
      if (fresh) it->second = MaskU8(mask.width, mask.height);
      it->second.at(x, y) = 1;
    }
  }
  InstanceSet out;
  for (auto& [id, m] : by_id) {
    check_config(id <= id_to_class.size(), "instance id ", id, " missing from class table");
    Instance inst;
    inst.class_id = id_to_class[id - 1];
    inst.score = 1.0;
    inst.mask = std::move(m);
    out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace weaksurg
