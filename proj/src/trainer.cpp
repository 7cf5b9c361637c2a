#include "weaksurg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "json.hpp"
#include "weaksurg/pseudomask.hpp"
#include "weaksurg/sampler.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace weaksurg::trainer {

namespace {

constexpr char kCheckpointMagic[8] = {'W', 'S', 'R', 'G', 'C', 'K', 'P', '1'};
constexpr int kCheckpointVersion = 1;
constexpr double kPi = 3.14159265358979323846;

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

enc::EncoderConfig encoder_from_json(const json& j) {
  enc::EncoderConfig e{.image_size = 0, .num_classes = 0};
  static const std::vector<std::string> known = {
      "image_size", "patch_size", "embed_dim", "depth",     "heads",
      "num_classes", "proj_dim",  "mlp_ratio", "use_pos_embed", "patch_pool"};
  for (auto it = j.begin(); it != j.end(); ++it)
    check_config(std::find(known.begin(), known.end(), it.key()) != known.end(),
                 "config: unknown encoder key '", it.key(), "'");
  read_field(j, "image_size", e.image_size);
  read_field(j, "patch_size", e.patch_size);
  read_field(j, "embed_dim", e.embed_dim);
  read_field(j, "depth", e.depth);
  read_field(j, "heads", e.heads);
  read_field(j, "num_classes", e.num_classes);
  read_field(j, "proj_dim", e.proj_dim);
  read_field(j, "mlp_ratio", e.mlp_ratio);
  read_field(j, "use_pos_embed", e.use_pos_embed);
  read_field(j, "patch_pool", e.patch_pool);
  return e;
}

json encoder_to_json(const enc::EncoderConfig& e) {
  json j;
  j["image_size"] = e.image_size;
  j["patch_size"] = e.patch_size;
  j["embed_dim"] = e.embed_dim;
  j["depth"] = e.depth;
  j["heads"] = e.heads;
  j["num_classes"] = e.num_classes;
  j["proj_dim"] = e.proj_dim;
  j["mlp_ratio"] = e.mlp_ratio;
  j["use_pos_embed"] = e.use_pos_embed;
  j["patch_pool"] = e.patch_pool;
  return j;
}

}  // namespace

void TrainConfig::validate() const {
  check_config(learning_rate > 0, "config: learning_rate must be positive");
  check_config(batch_size > 0, "config: batch_size must be positive");
  check_config(epochs >= 0, "config: epochs must be >= 0");
  check_config(warmup_epochs >= 0, "config: warmup_epochs must be >= 0");
  check_config(delta_max >= 1, "config: delta_max must be >= 1");
  check_config(tau_sim > 0 && tau_proto > 0 && tau_ctsc > 0,
               "config: temperatures must be positive");
  check_config(epsilon > 0, "config: epsilon must be positive");
  check_config(sinkhorn_iters >= 0, "config: sinkhorn_iters must be >= 0");
  check_config(window_k >= 1 && window_k % 2 == 1, "config: window_k must be odd and >= 1");
  check_config(local_crops >= 0, "config: local_crops must be >= 0");
  check_config(crop_size > 0, "config: crop_size must be positive");
  check_config(ema_rho >= 0 && ema_rho <= 1, "config: ema_rho must be in [0,1]");
  check_config(uncertain_low <= uncertain_high, "config: uncertainty band inverted");
  check_config(crop_label_min_frac >= 0 && crop_label_min_frac <= 1,
               "config: crop_label_min_frac must be in [0,1]");
  check_config(theta_bg >= 0 && theta_bg <= 1, "config: theta_bg must be in [0,1]");
  check_config(min_area_frac >= 0 && min_area_frac <= 1,
               "config: min_area_frac must be in [0,1]");
}

TrainConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(strcat("config: invalid JSON (", e.what(), ")"));
  }
  static const std::vector<std::string> known = {
      "learning_rate", "batch_size", "epochs", "warmup_epochs", "seed", "delta_max",
      "tau_sim", "epsilon", "sinkhorn_iters", "window_k", "tau_proto", "local_crops",
      "crop_size", "crop_encode_size", "tau_ctsc", "ema_rho", "uncertain_low",
      "uncertain_high", "crop_label_cam_thresh", "crop_label_min_frac", "theta_bg",
      "min_area_frac", "refiner", "w_cls", "w_pter", "w_ctsc", "enable_pter",
      "enable_ctsc", "stop_at_train_map", "encoder"};
  for (auto it = j.begin(); it != j.end(); ++it)
    check_config(std::find(known.begin(), known.end(), it.key()) != known.end(),
                 "config: unknown key '", it.key(), "'");

  TrainConfig c;
  read_field(j, "learning_rate", c.learning_rate);
  read_field(j, "batch_size", c.batch_size);
  read_field(j, "epochs", c.epochs);
  read_field(j, "warmup_epochs", c.warmup_epochs);
  read_field(j, "seed", c.seed);
  read_field(j, "delta_max", c.delta_max);
  read_field(j, "tau_sim", c.tau_sim);
  read_field(j, "epsilon", c.epsilon);
  read_field(j, "sinkhorn_iters", c.sinkhorn_iters);
  read_field(j, "window_k", c.window_k);
  read_field(j, "tau_proto", c.tau_proto);
  read_field(j, "local_crops", c.local_crops);
  read_field(j, "crop_size", c.crop_size);
  read_field(j, "crop_encode_size", c.crop_encode_size);
  read_field(j, "tau_ctsc", c.tau_ctsc);
  read_field(j, "ema_rho", c.ema_rho);
  read_field(j, "uncertain_low", c.uncertain_low);
  read_field(j, "uncertain_high", c.uncertain_high);
  read_field(j, "crop_label_cam_thresh", c.crop_label_cam_thresh);
  read_field(j, "crop_label_min_frac", c.crop_label_min_frac);
  read_field(j, "theta_bg", c.theta_bg);
  read_field(j, "min_area_frac", c.min_area_frac);
  read_field(j, "refiner", c.refiner);
  read_field(j, "w_cls", c.w_cls);
  read_field(j, "w_pter", c.w_pter);
  read_field(j, "w_ctsc", c.w_ctsc);
  read_field(j, "enable_pter", c.enable_pter);
  read_field(j, "enable_ctsc", c.enable_ctsc);
  read_field(j, "stop_at_train_map", c.stop_at_train_map);
  if (j.contains("encoder")) c.encoder = encoder_from_json(j.at("encoder"));
  c.validate();
  return c;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  check_io(in.good(), "missing file: ", path);
  std::ostringstream os;
  os << in.rdbuf();
  return config_from_json(os.str());
}

std::string config_to_json(const TrainConfig& c) {
  json j;
  j["learning_rate"] = c.learning_rate;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["warmup_epochs"] = c.warmup_epochs;
  j["seed"] = c.seed;
  j["delta_max"] = c.delta_max;
  j["tau_sim"] = c.tau_sim;
  j["epsilon"] = c.epsilon;
  j["sinkhorn_iters"] = c.sinkhorn_iters;
  j["window_k"] = c.window_k;
  j["tau_proto"] = c.tau_proto;
  j["local_crops"] = c.local_crops;
  j["crop_size"] = c.crop_size;
  j["crop_encode_size"] = c.crop_encode_size;
  j["tau_ctsc"] = c.tau_ctsc;
  j["ema_rho"] = c.ema_rho;
  j["uncertain_low"] = c.uncertain_low;
  j["uncertain_high"] = c.uncertain_high;
  j["crop_label_cam_thresh"] = c.crop_label_cam_thresh;
  j["crop_label_min_frac"] = c.crop_label_min_frac;
  j["theta_bg"] = c.theta_bg;
  j["min_area_frac"] = c.min_area_frac;
  j["refiner"] = c.refiner;
  j["w_cls"] = c.w_cls;
  j["w_pter"] = c.w_pter;
  j["w_ctsc"] = c.w_ctsc;
  j["enable_pter"] = c.enable_pter;
  j["enable_ctsc"] = c.enable_ctsc;
  j["stop_at_train_map"] = c.stop_at_train_map;
  j["encoder"] = encoder_to_json(c.encoder);
  return j.dump(2);
}

void adam_step(AdamState& state, const std::vector<nn::Parameter*>& params, double lr) {
  if (state.m.empty()) {
    for (auto* p : params) {
      state.m.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      state.v.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  check_config(state.m.size() == params.size(), "adam: parameter count changed");
  ++state.t;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    nn::Parameter& p = *params[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * p.grad;
    state.v[i] =
        (state.beta2 * state.v[i].array() + (1.0 - state.beta2) * p.grad.array().square())
            .matrix();
    const auto mhat = state.m[i].array() / bc1;
    const auto vhat = state.v[i].array() / bc2;
    p.value.array() -= lr * mhat / (vhat.sqrt() + state.eps);
  }
}

void Trainer::init_from_dataset(const synthvid::Dataset& data) {
  data_ = &data;
  train_clips_ = data.split_clips("train");
  check_config(!train_clips_.empty(), "trainer: dataset has no train clips");

  if (cfg_.encoder.image_size == 0) cfg_.encoder.image_size = data.image_size;
  check_config(cfg_.encoder.image_size == data.image_size,
               "trainer: encoder image_size ", cfg_.encoder.image_size,
               " does not match dataset ", data.image_size);
  if (cfg_.encoder.num_classes == 0) cfg_.encoder.num_classes = data.num_classes;
  check_config(cfg_.encoder.num_classes == data.num_classes,
               "trainer: encoder num_classes ", cfg_.encoder.num_classes,
               " does not match dataset ", data.num_classes);
  if (cfg_.crop_encode_size == 0) {
    const int half = std::max(cfg_.encoder.patch_size,
                              (data.image_size / 2 / cfg_.encoder.patch_size) *
                                  cfg_.encoder.patch_size);
    cfg_.crop_encode_size = half;
  }
  check_config(cfg_.crop_encode_size % cfg_.encoder.patch_size == 0,
               "trainer: crop_encode_size must be a multiple of patch_size");
  check_config(cfg_.crop_size <= data.image_size, "trainer: crop_size exceeds frame size");
  cfg_.encoder.validate();

  long long total_frames = 0;
  for (const auto* c : train_clips_) {
    check_config(c->clip.frames.size() >= 2, "trainer: clip ", c->id, " has < 2 frames");
    total_frames += static_cast<long long>(c->clip.frames.size());
  }
  steps_per_epoch_ = static_cast<int>(std::max<long long>(1, total_frames / cfg_.batch_size));
  total_steps_ = static_cast<long long>(steps_per_epoch_) * cfg_.epochs;
  window_ = losses::neighborhood_mask(cfg_.encoder.num_patches(),
                                      std::min(cfg_.window_k, 2 * cfg_.encoder.grid() + 1));
}

Trainer::Trainer(TrainConfig cfg, const synthvid::Dataset& data) : cfg_(std::move(cfg)) {
  cfg_.validate();
  init_from_dataset(data);
  encoder_ = std::make_unique<enc::Encoder>(cfg_.encoder, derive_seed(cfg_.seed, 1));
  ema_.global_params = encoder_->global_head_params();
  ema_.rho = cfg_.ema_rho;
  rng_ = Rng(derive_seed(cfg_.seed, 2));
}

Trainer::Trainer(const std::string& checkpoint_path, const synthvid::Dataset& data,
                 const std::optional<TrainConfig>& expect_config) {
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  if (expect_config) {
    // the checkpoint stores the dataset-resolved config; resolve the expected
    // one the same way before comparing
    Trainer probe(*expect_config, data);
    check_config(config_to_json(probe.cfg_) == config_to_json(ckpt.config),
                 "trainer: checkpoint-resume mismatch: config differs from ",
                 checkpoint_path);
  }
  cfg_ = ckpt.config;
  init_from_dataset(data);
  encoder_ = std::move(ckpt.encoder);
  adam_ = std::move(ckpt.adam);
  ema_.global_params = encoder_->global_head_params();
  ema_.rho = cfg_.ema_rho;
  rng_ = deserialize_rng(ckpt.rng_state);
  epoch_ = ckpt.epoch;
  step_ = ckpt.step;
}

double Trainer::lr_at(long long step) const {
  const double warmup = cfg_.warmup_epochs * steps_per_epoch_;
  const double s = static_cast<double>(step);
  if (warmup > 0 && s < warmup) return cfg_.learning_rate * (s + 1.0) / warmup;
  const double total = std::max<double>(1.0, static_cast<double>(total_steps_) - warmup);
  const double progress = std::clamp((s - warmup) / total, 0.0, 1.0);
  return cfg_.learning_rate * 0.5 * (1.0 + std::cos(kPi * progress));
}

StepStats Trainer::step() {
  const int c_classes = cfg_.encoder.num_classes;
  nn::Graph g(true);
  for (auto* p : encoder_->trainable_params()) p->zero_grad();

  std::vector<nn::Var> cls_terms, pter_terms, local_vars, global_vars;
  std::vector<int> local_class, local_image, global_class, global_image;
  std::vector<char> local_valid, global_valid;
  bool crop_fallback = false;

  for (int b = 0; b < cfg_.batch_size; ++b) {
    const auto& entry = *train_clips_[uniform_int(
        rng_, 0, static_cast<int>(train_clips_.size()) - 1)];
    const synthvid::Clip& clip = entry.clip;
    const sampler::FramePair pair =
        sampler::sample_pair(static_cast<int>(clip.frames.size()), cfg_.delta_max, rng_);
    const ImageU8& target = clip.frames[pair.target_index];
    const ImageU8& reference = clip.frames[pair.ref_index];
    const std::vector<int>& y_tgt = clip.presence[pair.target_index];
    const std::vector<int>& y_ref = clip.presence[pair.ref_index];

    enc::TokenBundle tgt;
    try {
      tgt = encoder_->encode(g, target);
      Vector labels(c_classes);
      for (int c = 0; c < c_classes; ++c) labels(c) = y_tgt[c];
      nn::Var l_cls_tok = losses::mlsm_loss(g, encoder_->classify(g, tgt), labels);
      nn::Var l_cls_patch = losses::mlsm_loss(g, encoder_->patch_logits(g, tgt), labels);
      cls_terms.push_back(g.scale(g.add(l_cls_tok, l_cls_patch), 0.5));
    } catch (const NumericError& e) {
      throw NumericError(strcat("cls component failed at step ", step_, ": ", e.what()));
    }

    const bool need_reference = cfg_.enable_pter || cfg_.enable_ctsc;
    nn::Graph g_ref(false);
    enc::TokenBundle ref;
    if (need_reference) ref = encoder_->encode(g_ref, reference);

    if (cfg_.enable_pter) {
      enc::PatchProjection ref_proj = encoder_->project_patch(
          g_ref, ref.patch_tokens, ref.class_tokens, cfg_.tau_proto);
      const Matrix assign = losses::sinkhorn_assign(g_ref.value(ref_proj.cos_sim),
                                                    cfg_.epsilon, cfg_.sinkhorn_iters);
      nn::Var f = losses::spatial_similarity(
          g, g.constant(g_ref.value(ref.patch_tokens)), tgt.patch_tokens, cfg_.tau_sim);
      enc::PatchProjection tgt_proj =
          encoder_->project_patch(g, tgt.patch_tokens, tgt.class_tokens, cfg_.tau_proto);
      pter_terms.push_back(losses::pter_loss(g, assign, f, window_, tgt_proj.probs));
    }

    if (cfg_.enable_ctsc && cfg_.local_crops > 0) {
      const enc::CamStack cam = encoder_->extract_cam(g_ref, ref);
      bool fell_back = false;
      const MaskU8 uncertain =
          sampler::uncertain_mask(cam, cfg_.uncertain_low, cfg_.uncertain_high, &fell_back);
      crop_fallback = crop_fallback || fell_back;
      const sampler::LocalCropSet crops = sampler::sample_local_crops(
          reference, uncertain, cam, y_ref, cfg_.local_crops, cfg_.crop_size, rng_,
          cfg_.crop_label_cam_thresh, cfg_.crop_label_min_frac);
      for (int l = 0; l < cfg_.local_crops; ++l) {
        const ImageU8 view =
            resize_bilinear(crops.crops[l], cfg_.crop_encode_size, cfg_.crop_encode_size);
        enc::TokenBundle crop_bundle = encoder_->encode(g, view);
        local_vars.push_back(encoder_->project_class_local(g, crop_bundle.class_tokens));
        for (int c = 0; c < c_classes; ++c) {
          local_class.push_back(c);
          local_image.push_back(b);
          local_valid.push_back(static_cast<char>(crops.pseudo_presence[l][c]));
        }
      }
      global_vars.push_back(encoder_->project_class_global(g, g.value(tgt.class_tokens)));
      for (int c = 0; c < c_classes; ++c) {
        global_class.push_back(c);
        global_image.push_back(b);
        global_valid.push_back(static_cast<char>(y_tgt[c]));
      }
    }
  }

  auto mean_of = [&](const std::vector<nn::Var>& terms) {
    nn::Var acc = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) acc = g.add(acc, terms[i]);
    return g.scale(acc, 1.0 / static_cast<double>(terms.size()));
  };

  nn::Var l_cls = mean_of(cls_terms);
  nn::Var l_pter = cfg_.enable_pter ? mean_of(pter_terms) : g.scalar(0.0);
  StepStats stats;
  nn::Var l_ctsc = g.scalar(0.0);
  if (cfg_.enable_ctsc && !local_vars.empty()) {
    const losses::ContrastMasks masks =
        losses::build_contrast_masks(local_class, local_image, local_valid, global_class,
                                     global_image, global_valid);
    losses::CtscResult res = losses::ctsc_loss(g, g.vcat(local_vars), g.vcat(global_vars),
                                               masks, cfg_.tau_ctsc);
    l_ctsc = res.loss;
    stats.ctsc_positives = res.num_positives;
  }

  nn::Var total = losses::overall_loss(g, l_cls, l_pter, l_ctsc, cfg_.w_cls, cfg_.w_pter,
                                       cfg_.w_ctsc);
  // the EMA contract requires the strict order backward -> optimizer -> ema
  int phase = 0;
  g.backward(total);
  phase = 1;

  const double lr = lr_at(step_);
  check_config(phase == 1, "trainer: optimizer step before backward");
  adam_step(adam_, encoder_->trainable_params(), lr);
  phase = 2;
  if (cfg_.enable_ctsc) {
    check_config(phase == 2, "trainer: ema_update before the optimizer step");
    losses::ema_update(ema_, encoder_->local_head_params());
  }

  ++step_;
  stats.l_cls = g.scalar_value(l_cls);
  stats.l_pter = g.scalar_value(l_pter);
  stats.l_ctsc = g.scalar_value(l_ctsc);
  stats.l_total = g.scalar_value(total);
  stats.lr = lr;
  stats.crop_fallback = crop_fallback;
  return stats;
}

void Trainer::append_step_record(const StepStats& s) {
  json j;
  j["type"] = "step";
  j["step"] = step_;
  j["epoch"] = epoch_;
  j["l_cls"] = s.l_cls;
  if (cfg_.enable_pter) j["l_pter"] = s.l_pter;
  if (cfg_.enable_ctsc) {
    j["l_ctsc"] = s.l_ctsc;
    j["ctsc_positives"] = s.ctsc_positives;
    if (s.ctsc_positives == 0) j["ctsc_no_positives"] = true;
    if (s.crop_fallback) j["crop_fallback"] = true;
  }
  j["l_total"] = s.l_total;
  j["lr"] = s.lr;
  record_.push_back(j.dump());
}

void Trainer::run_epoch() {
  check_config(epoch_ < cfg_.epochs, "trainer: all configured epochs already ran");
  for (int s = 0; s < steps_per_epoch_; ++s) append_step_record(step());
  ++epoch_;
  const double train_map = evaluate_train_map();
  best_train_map_ = std::max(best_train_map_, train_map);
  json j;
  j["type"] = "epoch";
  j["epoch"] = epoch_;
  j["train_map"] = train_map;
  record_.push_back(j.dump());
}

void Trainer::run() {
  while (epoch_ < cfg_.epochs) {
    run_epoch();
    if (cfg_.stop_at_train_map > 0 && best_train_map_ >= cfg_.stop_at_train_map) break;
  }
}

double Trainer::evaluate_train_map() { return classification_map(*encoder_, *data_, "train"); }

double classification_map(enc::Encoder& encoder, const synthvid::Dataset& data,
                          const std::string& split) {
  const int c_classes = data.num_classes;
  std::vector<std::vector<std::pair<double, int>>> scored(c_classes);
  for (const auto* entry : data.split_clips(split)) {
    for (std::size_t f = 0; f < entry->clip.frames.size(); ++f) {
      nn::Graph g(false);
      enc::TokenBundle bundle = encoder.encode(g, entry->clip.frames[f]);
      const Matrix logits = g.value(encoder.classify(g, bundle));
      for (int c = 0; c < c_classes; ++c)
        scored[c].emplace_back(logits(c, 0), entry->clip.presence[f][c]);
    }
  }
  double ap_sum = 0.0;
  int counted = 0;
  for (int c = 0; c < c_classes; ++c) {
    auto& v = scored[c];
    long long npos = 0;
    for (const auto& [s, y] : v) npos += y;
    if (npos == 0) continue;
    std::stable_sort(v.begin(), v.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    long long tp = 0;
    double ap = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i].second) {
        ++tp;
        ap += static_cast<double>(tp) / static_cast<double>(i + 1);
      }
    }
    ap_sum += ap / static_cast<double>(npos);
    ++counted;
  }
  return counted > 0 ? ap_sum / counted : 0.0;
}

void Trainer::write_run_record(const std::string& path) const {
  std::ofstream out(path);
  check_io(out.good(), "cannot write run record: ", path);
  for (const auto& line : record_) out << line << "\n";
}

void Trainer::save_checkpoint(const std::string& path) {
  trainer::save_checkpoint(path, cfg_, *encoder_, adam_, serialize_rng(rng_), epoch_, step_);
}

namespace {

void write_exact(std::ofstream& out, const void* data, std::size_t n) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainConfig& cfg, enc::Encoder& encoder,
                     const AdamState& adam, const std::string& rng_state, int epoch,
                     long long step) {
  json header;
  header["format_version"] = kCheckpointVersion;
  header["train_config"] = json::parse(config_to_json(cfg));
  header["rng"] = rng_state;
  header["epoch"] = epoch;
  header["step"] = step;
  header["adam"] = {{"beta1", adam.beta1}, {"beta2", adam.beta2}, {"eps", adam.eps},
                    {"t", adam.t}};

  std::vector<std::pair<std::string, const Matrix*>> tensors;
  for (auto* p : encoder.all_params()) tensors.emplace_back(p->name, &p->value);
  const auto trainable = encoder.trainable_params();
  if (!adam.m.empty()) {
    check_config(adam.m.size() == trainable.size(), "checkpoint: optimizer state mismatch");
    for (std::size_t i = 0; i < trainable.size(); ++i) {
      tensors.emplace_back(trainable[i]->name + ".adam_m", &adam.m[i]);
      tensors.emplace_back(trainable[i]->name + ".adam_v", &adam.v[i]);
    }
  }
  json table = json::array();
  for (const auto& [name, mat] : tensors)
    table.push_back({{"name", name}, {"rows", mat->rows()}, {"cols", mat->cols()}});
  header["tensors"] = table;

  std::ofstream out(path, std::ios::binary);
  check_io(out.good(), "cannot write checkpoint: ", path);
  const std::string htext = header.dump();
  const std::uint64_t hlen = htext.size();
  write_exact(out, kCheckpointMagic, sizeof(kCheckpointMagic));
  write_exact(out, &hlen, sizeof(hlen));
  write_exact(out, htext.data(), htext.size());
  for (const auto& [name, mat] : tensors) {
    // column-major storage, little-endian float64
    write_exact(out, mat->data(), sizeof(double) * static_cast<std::size_t>(mat->size()));
  }
  check_io(out.good(), "short write: ", path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check_io(in.good(), "missing file: ", path);
  auto corrupt = [&](auto&&... parts) {
    return CheckpointFormatError(strcat("corrupt checkpoint ", path, ": ", parts...));
  };
  char magic[8];
  in.read(magic, sizeof(magic));
  if (in.gcount() != sizeof(magic) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw corrupt("bad magic, expected format WSRGCKP version ", kCheckpointVersion);
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (in.gcount() != sizeof(hlen) || hlen == 0 || hlen >= (1ull << 30))
    throw corrupt("bad header length");
  std::string htext(hlen, '\0');
  in.read(htext.data(), static_cast<std::streamsize>(hlen));
  if (static_cast<std::uint64_t>(in.gcount()) != hlen) throw corrupt("truncated header");
  json header;
  try {
    header = json::parse(htext);
  } catch (const json::exception& e) {
    throw corrupt("header is not JSON (", e.what(), ")");
  }
  const int version = header.at("format_version").get<int>();
  if (version != kCheckpointVersion)
    throw corrupt("format version ", version, " unsupported (expected ", kCheckpointVersion,
                  ")");

  Checkpoint ckpt;
  try {
    ckpt.config = config_from_json(header.at("train_config").dump());
    ckpt.rng_state = header.at("rng").get<std::string>();
    ckpt.epoch = header.at("epoch").get<int>();
    ckpt.step = header.at("step").get<long long>();
    ckpt.adam.beta1 = header.at("adam").at("beta1").get<double>();
    ckpt.adam.beta2 = header.at("adam").at("beta2").get<double>();
    ckpt.adam.eps = header.at("adam").at("eps").get<double>();
    ckpt.adam.t = header.at("adam").at("t").get<long long>();
  } catch (const json::exception& e) {
    throw corrupt("incomplete header (", e.what(), ")");
  }

  ckpt.encoder = std::make_unique<enc::Encoder>(ckpt.config.encoder, 0);
  const auto trainable = ckpt.encoder->trainable_params();

  for (const auto& entry : header.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const Eigen::Index rows = entry.at("rows").get<Eigen::Index>();
    const Eigen::Index cols = entry.at("cols").get<Eigen::Index>();
    Matrix mat(rows, cols);
    in.read(reinterpret_cast<char*>(mat.data()),
            static_cast<std::streamsize>(sizeof(double) * mat.size()));
    if (in.gcount() != static_cast<std::streamsize>(sizeof(double) * mat.size()))
      throw corrupt("truncated tensor ", name);
    if (name.ends_with(".adam_m") || name.ends_with(".adam_v")) {
      const bool is_m = name.ends_with(".adam_m");
      const std::string base = name.substr(0, name.size() - 7);
      std::size_t idx = trainable.size();
      for (std::size_t i = 0; i < trainable.size(); ++i)
        if (trainable[i]->name == base) {
          idx = i;
          break;
        }
      if (idx >= trainable.size()) throw corrupt("unknown tensor ", name);
      auto& store = is_m ? ckpt.adam.m : ckpt.adam.v;
      store.resize(trainable.size());
      store[idx] = std::move(mat);
    } else {
      nn::Parameter* p = ckpt.encoder->find_param(name);
      if (p == nullptr) throw corrupt("unknown tensor ", name);
      if (p->value.rows() != rows || p->value.cols() != cols)
        throw corrupt("tensor ", name, " has wrong shape");
      p->value = std::move(mat);
    }
  }
  return ckpt;
}

std::string EvalReport::to_json() const {
  json j;
  j["stage"] = stage;
  j["split"] = split;
  j["oracle_cam"] = oracle_cam;
  j["frames"] = frames;
  json sem;
  sem["ch_iou"] = semantic.ch_iou;
  sem["isi_iou"] = semantic.isi_iou;
  sem["mc_iou"] = semantic.mc_iou;
  sem["ch_skipped_frames"] = semantic.ch_skipped;
  sem["isi_skipped_frames"] = semantic.isi_skipped;
  sem["mc_excluded_classes"] = semantic.mc_excluded;
  json per_class = json::object();
  for (std::size_t c = 0; c < semantic.per_class_iou.size(); ++c) {
    const std::string name = c < class_names.size() ? class_names[c] : strcat("class_", c);
    if (semantic.per_class_iou[c] >= 0) per_class[name] = semantic.per_class_iou[c];
  }
  sem["per_class_iou"] = per_class;
  j["semantic"] = sem;
  if (instance) {
    json inst;
    inst["no_gt"] = !instance->has_gt;
    if (instance->has_gt) {
      inst["ap50"] = instance->ap50;
      inst["ap75"] = instance->ap75;
      inst["map"] = instance->map;
      json pc = json::object();
      for (std::size_t c = 0; c < instance->per_class_ap50.size(); ++c) {
        const std::string name =
            c < class_names.size() ? class_names[c] : strcat("class_", c);
        if (instance->per_class_ap50[c] >= 0) pc[name] = instance->per_class_ap50[c];
      }
      inst["per_class_ap50"] = pc;
    }
    j["instance"] = inst;
  }
  return j.dump(2);
}

EvalReport evaluate_stage(enc::Encoder* encoder, const synthvid::Dataset& data,
                          const std::string& split, const std::string& stage,
                          const TrainConfig& cfg, bool oracle_cam) {
  check_config(stage == "cam_seed" || stage == "pseudo_mask",
               "evaluate_stage: unknown stage '", stage, "' (use cam_seed or pseudo_mask)");
  check_config(oracle_cam || encoder != nullptr, "evaluate_stage: need a checkpoint");
  const auto clips = data.split_clips(split);
  check_config(!clips.empty(), "evaluate_stage: dataset split '", split, "' is empty");

  const auto refiner = pseudomask::make_refiner(cfg.refiner);
  std::vector<LabelMap> pred_maps, gt_maps;
  std::vector<InstanceSet> pred_instances, gt_instances;
  int frames = 0;

  for (const auto* entry : clips) {
    const synthvid::Clip& clip = entry->clip;
    for (std::size_t f = 0; f < clip.frames.size(); ++f) {
      enc::CamStack cam;
      if (oracle_cam) {
        cam = pseudomask::oracle_cam_from_instances(
            clip.gt_instances[f], data.num_classes, data.image_size,
            encoder ? encoder->config().patch_size : 8);
      } else {
        nn::Graph g(false);
        enc::TokenBundle bundle = encoder->encode(g, clip.frames[f]);
        cam = encoder->extract_cam(g, bundle);
      }
      const LabelMap seed =
          pseudomask::cam_to_seed(cam, clip.presence[f], cfg.theta_bg);
      gt_maps.push_back(instances_to_labelmap(clip.gt_instances[f], data.image_size,
                                              data.image_size));
      gt_instances.push_back(clip.gt_instances[f]);
      if (stage == "cam_seed") {
        pred_maps.push_back(seed);
      } else {
        InstanceSet inst = pseudomask::seed_to_instances(seed, cam, cfg.min_area_frac);
        inst = refiner->refine(inst, clip.frames[f]);
        pred_maps.push_back(instances_to_labelmap(inst, data.image_size, data.image_size));
        pred_instances.push_back(std::move(inst));
      }
      ++frames;
    }
  }

  EvalReport report;
  report.stage = stage;
  report.split = split;
  report.oracle_cam = oracle_cam;
  report.frames = frames;
  report.class_names = data.class_names;
  report.semantic = metrics::semantic_metrics(pred_maps, gt_maps, data.num_classes);
  if (stage == "pseudo_mask")
    report.instance = metrics::instance_ap(pred_instances, gt_instances, data.num_classes);
  return report;
}

}  // namespace weaksurg::trainer
