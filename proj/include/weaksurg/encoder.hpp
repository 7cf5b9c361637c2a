#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "weaksurg/graph.hpp"
#include "weaksurg/image.hpp"

namespace weaksurg::enc {

struct EncoderConfig {
  int image_size = 128;
  int patch_size = 8;
  int embed_dim = 192;
  int depth = 6;
  int heads = 3;
  int num_classes = 7;  // instrument classes; a background token is always added
  int proj_dim = 64;
  int mlp_ratio = 4;
  bool use_pos_embed = true;
  std::string patch_pool = "max";  // pooling for patch-score logits: max | mean

  void validate() const;
  int grid() const { return image_size / patch_size; }
  int num_patches() const { return grid() * grid(); }

  bool operator==(const EncoderConfig&) const = default;
};

/// Per-class activation maps at patch-grid resolution plus an image-resolution
/// upsampled view; values in [0,1], max 1 per class unless the raw map was flat.
struct CamStack {
  int grid = 0;
  int image_size = 0;
  std::vector<Matrix> maps;       // C entries, grid x grid
  std::vector<Matrix> upsampled;  // C entries, image_size x image_size
};

/// Encoder output for one frame. Vars are tied to the graph that produced them;
/// the attention stack is stored by value (head-averaged, rows sum to 1).
struct TokenBundle {
  nn::Var patch_tokens;  // N x d_e
  nn::Var class_tokens;  // (C+1) x d_e, row C is the background token
  nn::Var patch_scores;  // N x C
  std::vector<Matrix> attention;  // depth entries, M x M with M = C+1+N
  int grid = 0;
  int num_classes = 0;
};

struct PatchProjection {
  nn::Var probs;    // N x (C+1), rows sum to 1
  nn::Var cos_sim;  // N x (C+1), cosine similarities against prototypes
};

class Encoder {
 public:
  Encoder(EncoderConfig cfg, std::uint64_t init_seed);

  const EncoderConfig& config() const { return cfg_; }

  TokenBundle encode(nn::Graph& g, const ImageU8& frame);
  TokenBundle encode_patches(nn::Graph& g, const Matrix& patches, int grid);

  /// Multi-label logits from the C instrument class tokens (C x 1). The
  /// background token never participates.
  nn::Var classify(nn::Graph& g, const TokenBundle& bundle);

  /// Pooled patch-score logits (C x 1); trains the patch score map.
  nn::Var patch_logits(nn::Graph& g, const TokenBundle& bundle);

  /// Class-to-patch attention (late-layer mean) times the rectified patch
  /// score map, refined once through row-normalized patch affinity, then
  /// min-max normalized per class. Constant raw maps come back all-zero.
  CamStack extract_cam(const nn::Graph& g, const TokenBundle& bundle) const;

  /// Projection g: tokens and prototypes (the C+1 class tokens) through the
  /// same linear map, L2-normalized, cosine / tau -> softmax.
  PatchProjection project_patch(nn::Graph& g, nn::Var patch_tokens, nn::Var class_tokens,
                                double tau_proto);

  /// P^l on the C instrument class tokens; rows L2-normalized. (C x d)
  nn::Var project_class_local(nn::Graph& g, nn::Var class_tokens);

  /// P^g (EMA weights) applied to detached class-token values; the output is
  /// constant with respect to the graph (teacher branch).
  nn::Var project_class_global(nn::Graph& g, const Matrix& class_token_values);

  std::vector<nn::Parameter*> trainable_params();
  std::vector<nn::Parameter*> local_head_params();   // P^l, in EMA order
  std::vector<nn::Parameter*> global_head_params();  // P^g, updated only by EMA
  nn::Parameter* find_param(const std::string& name);
  std::vector<nn::Parameter*> all_params();          // trainable + EMA head

 private:
  nn::Var transformer_block(nn::Graph& g, nn::Var tokens, int layer, Matrix* attn_out);

  EncoderConfig cfg_;
  std::vector<std::unique_ptr<nn::Parameter>> params_;
  nn::Parameter* p(const std::string& name);
  nn::Parameter* add_param(const std::string& name, int rows, int cols);
};

}  // namespace weaksurg::enc
