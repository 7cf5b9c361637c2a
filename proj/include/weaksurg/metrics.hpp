#pragma once

#include <vector>

#include "weaksurg/masks.hpp"

namespace weaksurg::metrics {

using weaksurg::InstanceSet;
using weaksurg::LabelMap;

struct SemanticResult {
  double ch_iou = 0.0;   // percentages
  double isi_iou = 0.0;
  double mc_iou = 0.0;
  int ch_skipped = 0;    // frames with empty ground truth
  int isi_skipped = 0;   // frames empty on both sides
  std::vector<int> mc_excluded;        // classes never seen in gt or pred
  std::vector<double> per_class_iou;   // aggregate IoU per class (-1 if excluded)
};

/// Ch_IoU: per frame, mean IoU over classes present in that frame's GT.
double ch_iou(const std::vector<LabelMap>& pred, const std::vector<LabelMap>& gt, int num_classes,
              int* skipped = nullptr);

/// ISI_IoU: like Ch_IoU but the class set is the union of GT and predicted
/// classes, so hallucinated classes pull the mean down.
double isi_iou(const std::vector<LabelMap>& pred, const std::vector<LabelMap>& gt,
               int num_classes, int* skipped = nullptr);

/// mcIoU: per class, IoU of pixel counts aggregated over the whole dataset,
/// then the mean over classes that appear at least once.
double mc_iou(const std::vector<LabelMap>& pred, const std::vector<LabelMap>& gt,
              int num_classes, std::vector<int>* excluded = nullptr,
              std::vector<double>* per_class = nullptr);

SemanticResult semantic_metrics(const std::vector<LabelMap>& pred,
                                const std::vector<LabelMap>& gt, int num_classes);

struct ApResult {
  bool has_gt = false;  // false: no GT instances anywhere -> metrics undefined
  double ap50 = 0.0;
  double ap75 = 0.0;
  double map = 0.0;  // mean over IoU thresholds 0.50:0.05:0.95
  std::vector<double> per_class_ap50;  // -1 for classes with no GT
};

/// COCO-style mask AP: score-ranked greedy one-to-one matching per class and
/// threshold, 101-point interpolated PR area, averaged over classes with GT.
ApResult instance_ap(const std::vector<InstanceSet>& pred, const std::vector<InstanceSet>& gt,
                     int num_classes);

}  // namespace weaksurg::metrics
