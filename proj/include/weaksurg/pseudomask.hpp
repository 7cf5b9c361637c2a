#pragma once

#include <memory>
#include <string>
#include <vector>

#include "weaksurg/encoder.hpp"
#include "weaksurg/masks.hpp"

namespace weaksurg::pseudomask {

using weaksurg::InstanceSet;
using weaksurg::LabelMap;

/// Image-resolution seed: background where max CAM < theta_bg, else
/// argmax class + 1 (ties go to the lowest class id). Classes absent from the
/// image-level presence vector are zeroed before the argmax.
LabelMap cam_to_seed(const enc::CamStack& cam, const std::vector<int>& presence,
                     double theta_bg);

/// 8-connected components per class become instances; components smaller than
/// min_area_frac of the image are dropped; score = mean CAM over the component.
InstanceSet seed_to_instances(const LabelMap& seed, const enc::CamStack& cam,
                              double min_area_frac);

/// Terminal refinement hook. The stock implementation is the identity; heavier
/// backends can be plugged in behind the same interface.
class Refiner {
 public:
  virtual ~Refiner() = default;
  virtual InstanceSet refine(const InstanceSet& instances, const ImageU8& frame) const = 0;
  virtual std::string name() const = 0;
};

class IdentityRefiner : public Refiner {
 public:
  InstanceSet refine(const InstanceSet& instances, const ImageU8&) const override {
    return instances;
  }
  std::string name() const override { return "identity"; }
};

/// Unknown backends fall back to the identity with a warning.
std::unique_ptr<Refiner> make_refiner(const std::string& name);

/// A CAM stack built from ground-truth instances (1 inside, 0 outside);
/// used by the oracle evaluation path.
enc::CamStack oracle_cam_from_instances(const InstanceSet& instances, int num_classes,
                                        int image_size, int patch_size);

}  // namespace weaksurg::pseudomask
