#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "weaksurg/encoder.hpp"
#include "weaksurg/losses.hpp"
#include "weaksurg/metrics.hpp"
#include "weaksurg/rng.hpp"
#include "weaksurg/synthvid.hpp"

namespace weaksurg::trainer {

struct TrainConfig {
  double learning_rate = 5e-4;
  int batch_size = 8;
  int epochs = 30;
  double warmup_epochs = 1.0;
  std::uint64_t seed = 0;

  int delta_max = 4;
  double tau_sim = 0.07;
  double epsilon = 0.05;  // Sinkhorn entropic regularizer
  int sinkhorn_iters = 3;
  int window_k = 7;
  double tau_proto = 0.1;

  int local_crops = 4;
  int crop_size = 48;
  int crop_encode_size = 0;  // 0: half the frame, rounded to a patch multiple
  double tau_ctsc = 0.1;
  double ema_rho = 0.999;
  double uncertain_low = 0.35;
  double uncertain_high = 0.55;
  double crop_label_cam_thresh = 0.5;
  double crop_label_min_frac = 0.05;

  double theta_bg = 0.3;
  double min_area_frac = 0.001;
  std::string refiner = "identity";

  double w_cls = 1.0;
  double w_pter = 1.0;
  double w_ctsc = 1.0;
  bool enable_pter = true;
  bool enable_ctsc = true;
  double stop_at_train_map = 0.0;  // early stop once reached; 0 disables

  enc::EncoderConfig encoder{.image_size = 0, .num_classes = 0};  // 0 = from dataset

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

TrainConfig config_from_json(const std::string& text);
TrainConfig load_config(const std::string& path);
std::string config_to_json(const TrainConfig& cfg);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long long t = 0;
  std::vector<Matrix> m, v;
};

void adam_step(AdamState& state, const std::vector<nn::Parameter*>& params, double lr);

struct StepStats {
  double l_cls = 0.0, l_pter = 0.0, l_ctsc = 0.0, l_total = 0.0, lr = 0.0;
  int ctsc_positives = 0;
  bool crop_fallback = false;
};

class Trainer {
 public:
  Trainer(TrainConfig cfg, const synthvid::Dataset& data);
  Trainer(const std::string& checkpoint_path, const synthvid::Dataset& data,
          const std::optional<TrainConfig>& expect_config = std::nullopt);

  /// Runs the remaining epochs (per-epoch train mAP appended to the record).
  void run();
  /// One full epoch of steps plus the train-mAP record line.
  void run_epoch();
  /// One optimization step; exposed for step-level tests.
  StepStats step();

  void save_checkpoint(const std::string& path);
  void write_run_record(const std::string& path) const;

  const TrainConfig& config() const { return cfg_; }
  enc::Encoder& encoder() { return *encoder_; }
  const std::vector<std::string>& record() const { return record_; }
  int epoch() const { return epoch_; }
  long long global_step() const { return step_; }
  double best_train_map() const { return best_train_map_; }
  int steps_per_epoch() const { return steps_per_epoch_; }

  /// Classification mAP of the current weights over the train split.
  double evaluate_train_map();

 private:
  void init_from_dataset(const synthvid::Dataset& data);
  double lr_at(long long step) const;
  void append_step_record(const StepStats& s);

  TrainConfig cfg_;
  const synthvid::Dataset* data_ = nullptr;
  std::vector<const synthvid::DatasetClip*> train_clips_;
  std::unique_ptr<enc::Encoder> encoder_;
  AdamState adam_;
  losses::EmaState ema_;
  Rng rng_;
  BoolMatrix window_;  // cached neighborhood mask for the full grid
  int epoch_ = 0;
  long long step_ = 0;
  int steps_per_epoch_ = 0;
  long long total_steps_ = 0;
  double best_train_map_ = 0.0;
  std::vector<std::string> record_;
};

/// Checkpoint I/O (binary, versioned header + little-endian float64 payload).
void save_checkpoint(const std::string& path, const TrainConfig& cfg, enc::Encoder& encoder,
                     const AdamState& adam, const std::string& rng_state, int epoch,
                     long long step);

struct Checkpoint {
  TrainConfig config;
  std::unique_ptr<enc::Encoder> encoder;
  AdamState adam;
  std::string rng_state;
  int epoch = 0;
  long long step = 0;
};

Checkpoint load_checkpoint(const std::string& path);

struct EvalReport {
  std::string stage;
  std::string split;
  bool oracle_cam = false;
  int frames = 0;
  metrics::SemanticResult semantic;
  std::optional<metrics::ApResult> instance;
  std::vector<std::string> class_names;
  std::string to_json() const;
};

/// stage "cam_seed": CAM -> seed -> semantic metrics.
/// stage "pseudo_mask": additionally connectivity instances -> refiner ->
/// semantic + instance metrics. oracle_cam replaces model CAMs with
/// GT-indicator CAMs (encoder may be null in that case).
EvalReport evaluate_stage(enc::Encoder* encoder, const synthvid::Dataset& data,
                          const std::string& split, const std::string& stage,
                          const TrainConfig& cfg, bool oracle_cam = false);

/// Multi-label classification mAP of `encoder` on one split.
double classification_map(enc::Encoder& encoder, const synthvid::Dataset& data,
                          const std::string& split);

}  // namespace weaksurg::trainer
