#pragma once

#include <string>

#include "weaksurg/trainer.hpp"

namespace weaksurg::plots {

/// One horizontal strip: frame | per-class CAM overlay | seed | instances.
ImageU8 render_panel(const ImageU8& frame, const enc::CamStack& cam, const LabelMap& seed,
                     const InstanceSet& instances, int num_classes);

/// Writes `<out_dir>/<clip_id>/NNNNNN_panel.png` for every frame of the chosen
/// clips (all clips of `split` when clip_id is empty). Returns the panel count.
int export_plots(enc::Encoder& encoder, const synthvid::Dataset& data,
                 const trainer::TrainConfig& cfg, const std::string& out_dir,
                 const std::string& split, const std::string& clip_id = "",
                 int max_frames = 0);

}  // namespace weaksurg::plots
