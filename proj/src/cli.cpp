#include "weaksurg/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "weaksurg/plots.hpp"
#include "weaksurg/pseudomask.hpp"
#include "weaksurg/trainer.hpp"

namespace fs = std::filesystem;

namespace weaksurg::cli {

namespace {

int env_workers() {
  const char* raw = std::getenv("WEAKSURG_NUM_WORKERS");
  if (!raw) return 1;
  const int n = std::atoi(raw);
  return n >= 1 ? n : 1;
}

struct SynthArgs {
  std::string out;
  int clips = 8;
  int frames = 16;
  int classes = 7;
  int size = 128;
  int objects = 3;
  int val_clips = 0;
  double drift = 0.5;
  double body_tint = 0.2;
  std::uint64_t seed = 0;
};

int cmd_synth(const SynthArgs& a) {
  check_config(a.classes >= 1, "synth: --classes must be >= 1");
  check_config(a.clips >= 1 && a.frames >= 1, "synth: --clips and --frames must be >= 1");
  check_config(a.objects >= 1 && a.objects <= a.classes,
               "synth: --objects must be in [1, --classes]");
  synthvid::Dataset ds =
      synthvid::make_dataset(a.seed, a.clips, a.frames, a.classes, a.size, a.objects,
                             a.val_clips, a.drift, a.body_tint, env_workers());
  synthvid::write_dataset(ds, a.out);
  std::cout << "dataset written to " << a.out << "\n"
            << "  clips: " << a.clips << " (" << (a.clips - a.val_clips) << " train, "
            << a.val_clips << " val)\n"
            << "  frames per clip: " << a.frames << "\n"
            << "  classes: " << a.classes << ", image size: " << a.size << "\n"
            << "  objects per clip: " << a.objects << ", seed: " << a.seed << "\n";
  return 0;
}

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  std::string resume;
  std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a) {
  trainer::TrainConfig cfg = trainer::load_config(a.config);
  if (a.seed) cfg.seed = *a.seed;
  const synthvid::Dataset data = synthvid::read_dataset(a.data);

  std::error_code ec;
  fs::create_directories(a.out, ec);
  check_io(!ec, "cannot create output directory: ", a.out);

  std::unique_ptr<trainer::Trainer> tr;
  if (!a.resume.empty()) {
    tr = std::make_unique<trainer::Trainer>(a.resume, data,
                                            std::optional<trainer::TrainConfig>(cfg));
    std::cout << "resumed from " << a.resume << " at epoch " << tr->epoch() << "\n";
  } else {
    tr = std::make_unique<trainer::Trainer>(cfg, data);
  }

  std::cout << "training: " << tr->config().epochs << " epochs x " << tr->steps_per_epoch()
            << " steps, batch " << tr->config().batch_size << "\n";
  tr->run();

  const std::string ckpt = (fs::path(a.out) / "checkpoint.bin").string();
  tr->save_checkpoint(ckpt);
  tr->write_run_record((fs::path(a.out) / "run_record.jsonl").string());
  {
    std::ofstream cfg_out(fs::path(a.out) / "config.json");
    cfg_out << trainer::config_to_json(tr->config()) << "\n";
  }
  std::cout << "checkpoint: " << ckpt << "\n"
            << "best train mAP: " << tr->best_train_map() << "\n";
  return 0;
}

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::string stage = "cam_seed";
  std::string split = "val";
  std::string out;
  bool oracle_cam = false;
};

int cmd_eval(const EvalArgs& a) {
  check_config(a.oracle_cam || !a.ckpt.empty(), "eval: need --ckpt or --oracle-cam");
  const synthvid::Dataset data = synthvid::read_dataset(a.data);

  trainer::TrainConfig cfg;
  std::unique_ptr<enc::Encoder> encoder;
  if (!a.ckpt.empty()) {
    trainer::Checkpoint ckpt = trainer::load_checkpoint(a.ckpt);
    cfg = ckpt.config;
    encoder = std::move(ckpt.encoder);
  }
  const trainer::EvalReport report = trainer::evaluate_stage(
      encoder.get(), data, a.split, a.stage, cfg, a.oracle_cam);

  std::cout << "stage " << report.stage << " on split '" << report.split << "' ("
            << report.frames << " frames" << (report.oracle_cam ? ", oracle CAMs" : "")
            << ")\n";
  std::cout << "  Ch_IoU:  " << report.semantic.ch_iou << "\n"
            << "  ISI_IoU: " << report.semantic.isi_iou << "\n"
            << "  mcIoU:   " << report.semantic.mc_iou << "\n";
  if (report.instance) {
    if (report.instance->has_gt)
      std::cout << "  AP50: " << report.instance->ap50 << "  AP75: " << report.instance->ap75
                << "  mAP: " << report.instance->map << "\n";
    else
      std::cout << "  instance metrics: no ground-truth instances\n";
  }
  if (!a.out.empty()) {
    std::ofstream out(a.out);
    check_io(out.good(), "cannot write report: ", a.out);
    out << report.to_json() << "\n";
    std::cout << "report written to " << a.out << "\n";
  }
  return 0;
}

struct PlotArgs {
  std::string ckpt;
  std::string data;
  std::string out;
  std::string clip;
  std::string split = "val";
  int max_frames = 0;
};

int cmd_export_plots(const PlotArgs& a) {
  const synthvid::Dataset data = synthvid::read_dataset(a.data);
  trainer::Checkpoint ckpt = trainer::load_checkpoint(a.ckpt);
  const int panels = plots::export_plots(*ckpt.encoder, data, ckpt.config, a.out, a.split,
                                         a.clip, a.max_frames);
  std::cout << panels << " panel images written to " << a.out << "\n";
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"weaksurg: weakly supervised instrument segmentation pipeline"};
  app.require_subcommand(1);
  std::optional<std::uint64_t> global_seed;
  app.add_option("--seed", global_seed, "global RNG seed override");

  SynthArgs synth;
  CLI::App* s = app.add_subcommand("synth", "generate a synthetic video dataset");
  s->add_option("--out", synth.out, "output dataset root")->required();
  s->add_option("--clips", synth.clips, "number of clips");
  s->add_option("--frames", synth.frames, "frames per clip");
  s->add_option("--classes", synth.classes, "number of instrument classes");
  s->add_option("--size", synth.size, "square image size in pixels");
  s->add_option("--objects", synth.objects, "objects per clip (distinct classes)");
  s->add_option("--val-clips", synth.val_clips, "clips reserved for the val split");
  s->add_option("--drift", synth.drift, "appearance drift rate");
  s->add_option("--body-tint", synth.body_tint, "class tint mixed into body color [0,1]");
  s->add_option("--seed", synth.seed, "dataset seed");

  TrainArgs train;
  CLI::App* t = app.add_subcommand("train", "train the encoder");
  t->add_option("--config", train.config, "JSON training config")->required();
  t->add_option("--data", train.data, "dataset root")->required();
  t->add_option("--out", train.out, "output directory")->required();
  t->add_option("--resume", train.resume, "checkpoint to resume from");

  EvalArgs eval;
  CLI::App* e = app.add_subcommand("eval", "staged evaluation of a checkpoint");
  e->add_option("--ckpt", eval.ckpt, "checkpoint file");
  e->add_option("--data", eval.data, "dataset root")->required();
  e->add_option("--stage", eval.stage, "cam_seed | pseudo_mask");
  e->add_option("--split", eval.split, "dataset split (train | val)");
  e->add_option("--out", eval.out, "write the JSON report here");
  e->add_flag("--oracle-cam", eval.oracle_cam, "use GT-derived CAMs instead of a model");

  PlotArgs plot;
  CLI::App* p = app.add_subcommand("export-plots", "write CAM/seed/instance panels");
  p->add_option("--ckpt", plot.ckpt, "checkpoint file")->required();
  p->add_option("--data", plot.data, "dataset root")->required();
  p->add_option("--out", plot.out, "output directory")->required();
  p->add_option("--clip", plot.clip, "restrict to one clip id");
  p->add_option("--split", plot.split, "dataset split when --clip is not given");
  p->add_option("--max-frames", plot.max_frames, "limit frames per clip (0 = all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    if (err.get_exit_code() == 0) return app.exit(err);  // --help
    app.exit(err);
    return 2;
  }

  try {
    if (global_seed) {
      synth.seed = *global_seed;
      train.seed = global_seed;
    }
    if (s->parsed()) return cmd_synth(synth);
    if (t->parsed()) return cmd_train(train);
    if (e->parsed()) return cmd_eval(eval);
    if (p->parsed()) return cmd_export_plots(plot);
    std::cerr << "error: no subcommand\n";
    return 2;
  } catch (const CheckpointFormatError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 4;
  } catch (const ConfigError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 2;
  } catch (const IoError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 3;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
}

}  // namespace weaksurg::cli
