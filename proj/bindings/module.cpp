#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>

#include "weaksurg/losses.hpp"
#include "weaksurg/metrics.hpp"
#include "weaksurg/plots.hpp"
#include "weaksurg/pseudomask.hpp"
#include "weaksurg/sampler.hpp"
#include "weaksurg/synthvid.hpp"
#include "weaksurg/trainer.hpp"

namespace py = pybind11;
using namespace weaksurg;

namespace {

LabelMap labelmap_from_array(const py::array_t<std::uint8_t>& arr) {
  check_config(arr.ndim() == 2, "label map must be 2-D");
  LabelMap map(static_cast<int>(arr.shape(1)), static_cast<int>(arr.shape(0)));
  auto view = arr.unchecked<2>();
  for (int y = 0; y < map.height; ++y)
    for (int x = 0; x < map.width; ++x) map.at(x, y) = view(y, x);
  return map;
}

py::array_t<std::uint8_t> labelmap_to_array(const LabelMap& map) {
  py::array_t<std::uint8_t> arr({map.height, map.width});
  auto view = arr.mutable_unchecked<2>();
  for (int y = 0; y < map.height; ++y)
    for (int x = 0; x < map.width; ++x) view(y, x) = map.at(x, y);
  return arr;
}

std::vector<LabelMap> labelmaps_from_list(const py::list& frames) {
  std::vector<LabelMap> out;
  for (const auto& f : frames) out.push_back(labelmap_from_array(f.cast<py::array_t<std::uint8_t>>()));
  return out;
}

InstanceSet instances_from_list(const py::list& instances, int width, int height) {
  InstanceSet out;
  for (const auto& item : instances) {
    auto tup = item.cast<py::tuple>();
    check_config(tup.size() == 3, "instance must be (class_id, score, mask)");
    Instance inst;
    inst.class_id = tup[0].cast<int>();
    inst.score = tup[1].cast<double>();
    auto mask = tup[2].cast<py::array_t<std::uint8_t>>();
    check_config(mask.ndim() == 2, "instance mask must be 2-D");
    inst.mask = MaskU8(static_cast<int>(mask.shape(1)), static_cast<int>(mask.shape(0)));
    auto view = mask.unchecked<2>();
    for (int y = 0; y < inst.mask.height; ++y)
      for (int x = 0; x < inst.mask.width; ++x) inst.mask.at(x, y) = view(y, x) ? 1 : 0;
    if (width > 0)
      check_config(inst.mask.width == width && inst.mask.height == height,
                   "instance masks must share one size");
    out.push_back(std::move(inst));
  }
  return out;
}

py::list instances_to_list(const InstanceSet& instances) {
  py::list out;
  for (const auto& inst : instances) {
    py::array_t<std::uint8_t> mask({inst.mask.height, inst.mask.width});
    auto view = mask.mutable_unchecked<2>();
    for (int y = 0; y < inst.mask.height; ++y)
      for (int x = 0; x < inst.mask.width; ++x) view(y, x) = inst.mask.at(x, y);
    out.append(py::make_tuple(inst.class_id, inst.score, mask));
  }
  return out;
}

enc::CamStack cam_from_array(const py::array_t<double>& cam) {
  check_config(cam.ndim() == 3, "cam must be C x H x W");
  check_config(cam.shape(1) == cam.shape(2), "cam maps must be square");
  enc::CamStack stack;
  stack.image_size = static_cast<int>(cam.shape(1));
  stack.grid = stack.image_size;
  auto view = cam.unchecked<3>();
  for (py::ssize_t c = 0; c < cam.shape(0); ++c) {
    Matrix m(stack.image_size, stack.image_size);
    for (int y = 0; y < stack.image_size; ++y)
      for (int x = 0; x < stack.image_size; ++x) m(y, x) = view(c, y, x);
    stack.upsampled.push_back(m);
    stack.maps.push_back(std::move(m));
  }
  return stack;
}

BoolMatrix boolmatrix_from_array(const py::array_t<bool>& arr) {
  BoolMatrix out(arr.shape(0), arr.shape(1));
  auto view = arr.unchecked<2>();
  for (py::ssize_t i = 0; i < arr.shape(0); ++i)
    for (py::ssize_t j = 0; j < arr.shape(1); ++j) out(i, j) = view(i, j);
  return out;
}

py::array_t<bool> boolmatrix_to_array(const BoolMatrix& m) {
  py::array_t<bool> arr({static_cast<py::ssize_t>(m.rows()), static_cast<py::ssize_t>(m.cols())});
  auto view = arr.mutable_unchecked<2>();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) view(i, j) = m(i, j);
  return arr;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "weaksurg core: classification-only training with temporal losses, "
            "CAM seeds, pseudo masks, and segmentation metrics";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_IOError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  // ---- synthetic dataset ----
  m.def(
      "write_synth_dataset",
      [](const std::string& out, std::uint64_t seed, int clips, int frames, int classes,
         int size, int objects, int val_clips, double drift, double body_tint, int workers) {
        auto ds = synthvid::make_dataset(seed, clips, frames, classes, size, objects,
                                         val_clips, drift, body_tint, workers);
        return synthvid::write_dataset(ds, out);
      },
      py::arg("out"), py::arg("seed"), py::arg("clips"), py::arg("frames"),
      py::arg("classes"), py::arg("size"), py::arg("objects"), py::arg("val_clips") = 0,
      py::arg("drift") = 0.5, py::arg("body_tint") = 0.2, py::arg("workers") = 1,
      "Generate and write a synthetic dataset; returns the manifest JSON text.");

  m.def(
      "generate_clip",
      [](std::uint64_t seed, int frames, int classes, int size, int objects, double drift,
         double body_tint) {
        const auto clip = synthvid::generate_clip(synthvid::random_clip_spec(
            seed, size, classes, frames, objects, drift, body_tint));
        py::dict out;
        py::array_t<std::uint8_t> imgs({frames, size, size, 3});
        py::array_t<std::uint16_t> masks({frames, size, size});
        py::array_t<int> presence({frames, classes});
        auto iv = imgs.mutable_unchecked<4>();
        auto mv = masks.mutable_unchecked<3>();
        auto pv = presence.mutable_unchecked<2>();
        for (int f = 0; f < frames; ++f) {
          for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
              for (int c = 0; c < 3; ++c) iv(f, y, x, c) = clip.frames[f].at(x, y, c);
              mv(f, y, x) = clip.gt_masks[f].at(x, y);
            }
          for (int c = 0; c < classes; ++c) pv(f, c) = clip.presence[f][c];
        }
        out["frames"] = imgs;
        out["masks"] = masks;
        out["presence"] = presence;
        out["instance_class"] = clip.instance_class;
        return out;
      },
      py::arg("seed"), py::arg("frames"), py::arg("classes"), py::arg("size"),
      py::arg("objects"), py::arg("drift") = 0.5, py::arg("body_tint") = 0.2);

  // ---- losses (value surface) ----
  m.def(
      "mlsm_loss",
      [](const Vector& logits, const Vector& labels) {
        nn::Graph g(false);
        Matrix l(logits.size(), 1);
        l.col(0) = logits;
        return g.scalar_value(losses::mlsm_loss(g, g.constant(l), labels));
      },
      py::arg("logits"), py::arg("labels"));

  m.def(
      "spatial_similarity",
      [](const Matrix& z_ref, const Matrix& z_tgt, double tau) {
        nn::Graph g(false);
        return Matrix(g.value(
            losses::spatial_similarity(g, g.constant(z_ref), g.constant(z_tgt), tau)));
      },
      py::arg("z_ref"), py::arg("z_tgt"), py::arg("tau_sim") = 0.07);

  m.def(
      "neighborhood_mask",
      [](int num_patches, int k) { return boolmatrix_to_array(losses::neighborhood_mask(num_patches, k)); },
      py::arg("num_patches"), py::arg("k"));

  m.def("apply_neighborhood_mask", &losses::apply_neighborhood_mask, py::arg("f"),
        py::arg("k"), "Masked similarity matrix with -inf outside each window.");

  m.def(
      "propagate",
      [](const Matrix& f, int k, const Matrix& values) {
        nn::Graph g(false);
        const auto keep = losses::neighborhood_mask(static_cast<int>(f.rows()), k);
        return Matrix(g.value(losses::propagate(g, g.constant(f), keep, g.constant(values))));
      },
      py::arg("f"), py::arg("k"), py::arg("values"));

  m.def("sinkhorn_assign", &losses::sinkhorn_assign, py::arg("scores"), py::arg("eps") = 0.05,
        py::arg("iters") = 100);

  m.def(
      "pter_loss",
      [](const Matrix& assign_ref, const Matrix& f, int k, const Matrix& probs_tgt) {
        nn::Graph g(false);
        const auto keep = losses::neighborhood_mask(static_cast<int>(f.rows()), k);
        return g.scalar_value(
            losses::pter_loss(g, assign_ref, g.constant(f), keep, g.constant(probs_tgt)));
      },
      py::arg("assign_ref"), py::arg("f"), py::arg("k"), py::arg("probs_tgt"));

  m.def(
      "build_contrast_masks",
      [](const std::vector<int>& lc, const std::vector<int>& li, const std::vector<int>& lv,
         const std::vector<int>& gc, const std::vector<int>& gi, const std::vector<int>& gv) {
        std::vector<char> lvc(lv.begin(), lv.end()), gvc(gv.begin(), gv.end());
        const auto masks = losses::build_contrast_masks(lc, li, lvc, gc, gi, gvc);
        return py::make_tuple(boolmatrix_to_array(masks.positives),
                              boolmatrix_to_array(masks.denominator), masks.num_positives);
      },
      py::arg("local_class"), py::arg("local_image"), py::arg("local_valid"),
      py::arg("global_class"), py::arg("global_image"), py::arg("global_valid"));

  m.def(
      "ctsc_loss",
      [](const Matrix& x_local, const Matrix& x_global, const py::array_t<bool>& positives,
         const py::array_t<bool>& denominator, double tau) {
        losses::ContrastMasks masks;
        masks.positives = boolmatrix_from_array(positives);
        masks.denominator = boolmatrix_from_array(denominator);
        masks.num_positives = static_cast<int>(masks.positives.count());
        nn::Graph g(false);
        const auto res =
            losses::ctsc_loss(g, g.constant(x_local), g.constant(x_global), masks, tau);
        return g.scalar_value(res.loss);
      },
      py::arg("x_local"), py::arg("x_global"), py::arg("positives"), py::arg("denominator"),
      py::arg("tau_ctsc") = 0.1);

  // ---- pseudo masks ----
  m.def(
      "cam_to_seed",
      [](const py::array_t<double>& cam, const std::vector<int>& presence, double theta_bg) {
        return labelmap_to_array(
            pseudomask::cam_to_seed(cam_from_array(cam), presence, theta_bg));
      },
      py::arg("cam"), py::arg("presence"), py::arg("theta_bg") = 0.3);

  m.def(
      "seed_to_instances",
      [](const py::array_t<std::uint8_t>& seed, const py::array_t<double>& cam,
         double min_area_frac) {
        return instances_to_list(pseudomask::seed_to_instances(
            labelmap_from_array(seed), cam_from_array(cam), min_area_frac));
      },
      py::arg("seed"), py::arg("cam"), py::arg("min_area_frac") = 0.001);

  // ---- metrics ----
  m.def(
      "semantic_metrics",
      [](const py::list& pred, const py::list& gt, int num_classes) {
        const auto res = metrics::semantic_metrics(labelmaps_from_list(pred),
                                                   labelmaps_from_list(gt), num_classes);
        py::dict out;
        out["ch_iou"] = res.ch_iou;
        out["isi_iou"] = res.isi_iou;
        out["mc_iou"] = res.mc_iou;
        out["ch_skipped"] = res.ch_skipped;
        out["isi_skipped"] = res.isi_skipped;
        out["mc_excluded"] = res.mc_excluded;
        out["per_class_iou"] = res.per_class_iou;
        return out;
      },
      py::arg("pred"), py::arg("gt"), py::arg("num_classes"));

  m.def(
      "instance_ap",
      [](const py::list& pred, const py::list& gt, int num_classes) {
        std::vector<InstanceSet> p, t;
        for (const auto& f : pred) p.push_back(instances_from_list(f.cast<py::list>(), 0, 0));
        for (const auto& f : gt) t.push_back(instances_from_list(f.cast<py::list>(), 0, 0));
        const auto res = metrics::instance_ap(p, t, num_classes);
        py::dict out;
        out["has_gt"] = res.has_gt;
        out["ap50"] = res.ap50;
        out["ap75"] = res.ap75;
        out["map"] = res.map;
        out["per_class_ap50"] = res.per_class_ap50;
        return out;
      },
      py::arg("pred"), py::arg("gt"), py::arg("num_classes"));

  // ---- pipeline ----
  m.def(
      "train",
      [](const std::string& config_json, const std::string& data_root,
         const std::string& out_dir) {
        auto cfg = trainer::config_from_json(config_json);
        const auto data = synthvid::read_dataset(data_root);
        trainer::Trainer tr(cfg, data);
        tr.run();
        std::filesystem::create_directories(out_dir);
        tr.save_checkpoint(out_dir + "/checkpoint.bin");
        tr.write_run_record(out_dir + "/run_record.jsonl");
        py::dict out;
        out["best_train_map"] = tr.best_train_map();
        out["steps"] = tr.global_step();
        out["checkpoint"] = out_dir + "/checkpoint.bin";
        return out;
      },
      py::arg("config_json"), py::arg("data_root"), py::arg("out_dir"));

  m.def(
      "evaluate",
      [](const std::string& ckpt_path, const std::string& data_root, const std::string& stage,
         const std::string& split, bool oracle_cam) {
        const auto data = synthvid::read_dataset(data_root);
        trainer::TrainConfig cfg;
        std::unique_ptr<enc::Encoder> encoder;
        if (!ckpt_path.empty()) {
          auto ckpt = trainer::load_checkpoint(ckpt_path);
          cfg = ckpt.config;
          encoder = std::move(ckpt.encoder);
        }
        return trainer::evaluate_stage(encoder.get(), data, split, stage, cfg, oracle_cam)
            .to_json();
      },
      py::arg("ckpt_path"), py::arg("data_root"), py::arg("stage") = "cam_seed",
      py::arg("split") = "val", py::arg("oracle_cam") = false,
      "Returns the evaluation report as JSON text. Empty ckpt_path requires oracle_cam.");
}
