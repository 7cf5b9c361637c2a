#include "weaksurg/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace weaksurg::metrics {

namespace {

struct FrameCounts {
  std::vector<long long> inter, pred, gt;  // per class
  explicit FrameCounts(int c) : inter(c, 0), pred(c, 0), gt(c, 0) {}
};

FrameCounts count_frame(const LabelMap& pred, const LabelMap& gt, int num_classes) {
  check_config(pred.width == gt.width && pred.height == gt.height,
               "metrics: prediction and GT sizes differ");
  FrameCounts fc(num_classes);
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const int p = pred.data[i];
    const int t = gt.data[i];
    check_config(p <= num_classes && t <= num_classes, "metrics: class id out of range");
    if (p > 0) ++fc.pred[p - 1];
    if (t > 0) ++fc.gt[t - 1];
    if (p > 0 && p == t) ++fc.inter[p - 1];
  }
  return fc;
}

double frame_mean_iou(const FrameCounts& fc, const std::vector<int>& classes) {
  double acc = 0.0;
  for (int c : classes) {
    const long long uni = fc.pred[c] + fc.gt[c] - fc.inter[c];
    acc += uni > 0 ? static_cast<double>(fc.inter[c]) / uni : 0.0;
  }
  return acc / classes.size();
}

double mask_iou(const MaskU8& a, const MaskU8& b) {
  long long inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const bool pa = a.data[i] != 0, pb = b.data[i] != 0;
    inter += pa && pb;
    uni += pa || pb;
  }
  return uni > 0 ? static_cast<double>(inter) / uni : 0.0;
}

}  // namespace

double ch_iou(const std::vector<LabelMap>& pred, const std::vector<LabelMap>& gt,
              int num_classes, int* skipped) {
  check_config(!pred.empty() && pred.size() == gt.size(), "ch_iou: need matching frame lists");
  double acc = 0.0;
  int used = 0, skip = 0;
  for (std::size_t f = 0; f < pred.size(); ++f) {
    const FrameCounts fc = count_frame(pred[f], gt[f], num_classes);
    std::vector<int> present;
    for (int c = 0; c < num_classes; ++c)
      if (fc.gt[c] > 0) present.push_back(c);
    if (present.empty()) {
      ++skip;
      continue;
    }
    acc += frame_mean_iou(fc, present);
    ++used;
  }
  if (skipped) *skipped = skip;
  return used > 0 ? 100.0 * acc / used : 0.0;
}

double isi_iou(const std::vector<LabelMap>& pred, const std::vector<LabelMap>& gt,
               int num_classes, int* skipped) {
  check_config(!pred.empty() && pred.size() == gt.size(), "isi_iou: need matching frame lists");
  double acc = 0.0;
  int used = 0, skip = 0;
  for (std::size_t f = 0; f < pred.size(); ++f) {
    const FrameCounts fc = count_frame(pred[f], gt[f], num_classes);
    std::vector<int> classes;
    for (int c = 0; c < num_classes; ++c)
      if (fc.gt[c] > 0 || fc.pred[c] > 0) classes.push_back(c);
    if (classes.empty()) {
      ++skip;
      continue;
    }
    acc += frame_mean_iou(fc, classes);
    ++used;
  }
  if (skipped) *skipped = skip;
  return used > 0 ? 100.0 * acc / used : 0.0;
}

double mc_iou(const std::vector<LabelMap>& pred, const std::vector<LabelMap>& gt,
              int num_classes, std::vector<int>* excluded, std::vector<double>* per_class) {
  check_config(!pred.empty() && pred.size() == gt.size(), "mc_iou: need matching frame lists");
  std::vector<long long> inter(num_classes, 0), uni(num_classes, 0);
  for (std::size_t f = 0; f < pred.size(); ++f) {
    const FrameCounts fc = count_frame(pred[f], gt[f], num_classes);
    for (int c = 0; c < num_classes; ++c) {
      inter[c] += fc.inter[c];
      uni[c] += fc.pred[c] + fc.gt[c] - fc.inter[c];
    }
  }
  if (excluded) excluded->clear();
  if (per_class) per_class->assign(num_classes, -1.0);
  double acc = 0.0;
  int counted = 0;
  for (int c = 0; c < num_classes; ++c) {
    if (uni[c] == 0) {
      if (excluded) excluded->push_back(c);
      continue;
    }
    const double iou = static_cast<double>(inter[c]) / uni[c];
    if (per_class) (*per_class)[c] = 100.0 * iou;
    acc += iou;
    ++counted;
  }
  return counted > 0 ? 100.0 * acc / counted : 0.0;
}

SemanticResult semantic_metrics(const std::vector<LabelMap>& pred,
                                const std::vector<LabelMap>& gt, int num_classes) {
  SemanticResult r;
  r.ch_iou = ch_iou(pred, gt, num_classes, &r.ch_skipped);
  r.isi_iou = isi_iou(pred, gt, num_classes, &r.isi_skipped);
  r.mc_iou = mc_iou(pred, gt, num_classes, &r.mc_excluded, &r.per_class_iou);
  return r;
}

ApResult instance_ap(const std::vector<InstanceSet>& pred, const std::vector<InstanceSet>& gt,
                     int num_classes) {
  check_config(pred.size() == gt.size(), "instance_ap: need matching frame lists");
  const int num_thresholds = 10;  // 0.50 : 0.05 : 0.95

  struct Det {
    int frame, index;
    double score;
  };

  ApResult result;
  result.per_class_ap50.assign(num_classes, -1.0);
  std::vector<std::array<double, 10>> class_ap(num_classes);
  std::vector<bool> class_has_gt(num_classes, false);

  long long total_gt = 0;
  for (const auto& frame : gt)
    for (const auto& inst : frame) {
      check_config(inst.class_id >= 0 && inst.class_id < num_classes,
                   "instance_ap: gt class out of range");
      class_has_gt[inst.class_id] = true;
      ++total_gt;
    }
  if (total_gt == 0) return result;  // undefined: no GT anywhere
  result.has_gt = true;

  for (int c = 0; c < num_classes; ++c) {
    if (!class_has_gt[c]) continue;

    std::vector<Det> dets;
    long long npos = 0;
    for (int f = 0; f < static_cast<int>(pred.size()); ++f) {
      for (int i = 0; i < static_cast<int>(pred[f].size()); ++i)
        if (pred[f][i].class_id == c) dets.push_back({f, i, pred[f][i].score});
      for (const auto& inst : gt[f]) npos += inst.class_id == c;
    }
    std::sort(dets.begin(), dets.end(), [](const Det& a, const Det& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.frame != b.frame) return a.frame < b.frame;
      return a.index < b.index;
    });

    // IoUs against same-class GT instances, computed once per detection
    std::vector<std::vector<std::pair<int, double>>> ious(dets.size());
    for (std::size_t d = 0; d < dets.size(); ++d) {
      const auto& pm = pred[dets[d].frame][dets[d].index].mask;
      const auto& gset = gt[dets[d].frame];
      for (int gi = 0; gi < static_cast<int>(gset.size()); ++gi)
        if (gset[gi].class_id == c) ious[d].emplace_back(gi, mask_iou(pm, gset[gi].mask));
    }

    for (int t = 0; t < num_thresholds; ++t) {
      const double thr = 0.50 + 0.05 * t;
      std::vector<std::vector<bool>> matched(pred.size());
      for (std::size_t f = 0; f < gt.size(); ++f) matched[f].assign(gt[f].size(), false);

      std::vector<int> tp(dets.size(), 0);
      for (std::size_t d = 0; d < dets.size(); ++d) {
        int best_gt = -1;
        double best_iou = 0.0;
        for (const auto& [gi, iou] : ious[d]) {
          if (matched[dets[d].frame][gi]) continue;
          if (iou >= thr && iou > best_iou) {
            best_iou = iou;
            best_gt = gi;
          }
        }
        if (best_gt >= 0) {
          matched[dets[d].frame][best_gt] = true;
          tp[d] = 1;
        }
      }

      std::vector<double> precision(dets.size()), recall(dets.size());
      long long tp_cum = 0;
      for (std::size_t d = 0; d < dets.size(); ++d) {
        tp_cum += tp[d];
        precision[d] = static_cast<double>(tp_cum) / static_cast<double>(d + 1);
        recall[d] = npos > 0 ? static_cast<double>(tp_cum) / npos : 0.0;
      }

      double ap = 0.0;
      for (int r = 0; r <= 100; ++r) {
        const double want = r / 100.0;
        double best = 0.0;
        for (std::size_t d = 0; d < dets.size(); ++d)
          if (recall[d] >= want - 1e-12) best = std::max(best, precision[d]);
        ap += best;
      }
      class_ap[c][t] = 100.0 * ap / 101.0;
    }
    result.per_class_ap50[c] = class_ap[c][0];
  }

  double ap50 = 0.0, ap75 = 0.0, map = 0.0;
  int counted = 0;
  for (int c = 0; c < num_classes; ++c) {
    if (!class_has_gt[c]) continue;
    ++counted;
    ap50 += class_ap[c][0];
    ap75 += class_ap[c][5];
    for (int t = 0; t < num_thresholds; ++t) map += class_ap[c][t];
  }
  result.ap50 = ap50 / counted;
  result.ap75 = ap75 / counted;
  result.map = map / (counted * num_thresholds);
  return result;
}

}  // namespace weaksurg::metrics
