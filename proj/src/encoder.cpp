#include "weaksurg/encoder.hpp"

#include <cmath>

#include "weaksurg/rng.hpp"

namespace weaksurg::enc {

using nn::Graph;
using nn::Parameter;
using nn::Var;

void EncoderConfig::validate() const {
  check_config(image_size > 0 && patch_size > 0, "encoder: sizes must be positive");
  check_config(image_size % patch_size == 0, "encoder: image_size ", image_size,
               " not divisible by patch_size ", patch_size);
  check_config(embed_dim > 0 && depth > 0 && heads > 0, "encoder: bad dims");
  check_config(embed_dim % heads == 0, "encoder: embed_dim ", embed_dim,
               " not divisible by heads ", heads);
  check_config(num_classes > 0, "encoder: need at least one class");
  check_config(proj_dim > 0 && mlp_ratio > 0, "encoder: bad projection/mlp dims");
  check_config(patch_pool == "max" || patch_pool == "mean",
               "encoder: patch_pool must be max or mean");
}

Parameter* Encoder::add_param(const std::string& name, int rows, int cols) {
  params_.push_back(std::make_unique<Parameter>(name, Matrix::Zero(rows, cols)));
  return params_.back().get();
}

Parameter* Encoder::p(const std::string& name) {
  Parameter* found = find_param(name);
  check_config(found != nullptr, "encoder: unknown parameter ", name);
  return found;
}

Parameter* Encoder::find_param(const std::string& name) {
  for (auto& q : params_)
    if (q->name == name) return q.get();
  return nullptr;
}

Encoder::Encoder(EncoderConfig cfg, std::uint64_t init_seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const int d = cfg_.embed_dim;
  const int c1 = cfg_.num_classes + 1;
  const int hidden = d * cfg_.mlp_ratio;

  add_param("embed.w", 3 * cfg_.patch_size * cfg_.patch_size, d);
  add_param("embed.b", 1, d);
  add_param("pos", cfg_.num_patches(), d);
  add_param("cls_tokens", c1, d);
  for (int l = 0; l < cfg_.depth; ++l) {
    const std::string pre = strcat("block", l, ".");
    add_param(pre + "ln1.g", 1, d);
    add_param(pre + "ln1.b", 1, d);
    add_param(pre + "attn.wq", d, d);
    add_param(pre + "attn.bq", 1, d);
    add_param(pre + "attn.wk", d, d);
    add_param(pre + "attn.bk", 1, d);
    add_param(pre + "attn.wv", d, d);
    add_param(pre + "attn.bv", 1, d);
    add_param(pre + "attn.wo", d, d);
    add_param(pre + "attn.bo", 1, d);
    add_param(pre + "ln2.g", 1, d);
    add_param(pre + "ln2.b", 1, d);
    add_param(pre + "mlp.w1", d, hidden);
    add_param(pre + "mlp.b1", 1, hidden);
    add_param(pre + "mlp.w2", hidden, d);
    add_param(pre + "mlp.b2", 1, d);
  }
  add_param("ln_f.g", 1, d);
  add_param("ln_f.b", 1, d);
  add_param("head.cls.w", cfg_.num_classes, d);
  add_param("head.cls.b", cfg_.num_classes, 1);
  add_param("head.patch.w", d, cfg_.num_classes);
  add_param("proj.proto.w", d, cfg_.proj_dim);
  add_param("proj.proto.b", 1, cfg_.proj_dim);
  add_param("proj.local.w", d, cfg_.proj_dim);
  add_param("proj.local.b", 1, cfg_.proj_dim);
  add_param("proj.global.w", d, cfg_.proj_dim);
  add_param("proj.global.b", 1, cfg_.proj_dim);

  // init: N(0, 0.02) weights, unit LayerNorm gains, zero biases;
  // classification head starts at zero so untrained logits are exactly zero.
  Rng rng(init_seed);
  for (auto& q : params_) {
    const std::string& n = q->name;
    if (n.ends_with("ln1.g") || n.ends_with("ln2.g") || n == "ln_f.g") {
      q->value.setOnes();
    } else if (n.ends_with(".b") || n.ends_with(".bq") || n.ends_with(".bk") ||
               n.ends_with(".bv") || n.ends_with(".bo")) {
      q->value.setZero();
    } else if (n == "head.cls.w" || n == "head.cls.b") {
      q->value.setZero();
    } else {
      for (Eigen::Index i = 0; i < q->value.rows(); ++i)
        for (Eigen::Index j = 0; j < q->value.cols(); ++j)
          q->value(i, j) = gaussian(rng, 0.0, 0.02);
    }
  }
  // EMA head starts as an exact copy of the local head
  p("proj.global.w")->value = p("proj.local.w")->value;
  p("proj.global.b")->value = p("proj.local.b")->value;
}

std::vector<Parameter*> Encoder::trainable_params() {
  std::vector<Parameter*> out;
  for (auto& q : params_)
    if (!q->name.starts_with("proj.global.")) out.push_back(q.get());
  return out;
}

std::vector<Parameter*> Encoder::local_head_params() {
  return {p("proj.local.w"), p("proj.local.b")};
}

std::vector<Parameter*> Encoder::global_head_params() {
  return {p("proj.global.w"), p("proj.global.b")};
}

std::vector<Parameter*> Encoder::all_params() {
  std::vector<Parameter*> out;
  for (auto& q : params_) out.push_back(q.get());
  return out;
}

nn::Var Encoder::transformer_block(Graph& g, Var tokens, int layer, Matrix* attn_out) {
  const std::string pre = strcat("block", layer, ".");
  const int d = cfg_.embed_dim;
  const int dh = d / cfg_.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Var xn = g.layer_norm_rows(tokens, g.param(*p(pre + "ln1.g")), g.param(*p(pre + "ln1.b")));
  Var q = g.add_rowvec(g.matmul(xn, g.param(*p(pre + "attn.wq"))), g.param(*p(pre + "attn.bq")));
  Var k = g.add_rowvec(g.matmul(xn, g.param(*p(pre + "attn.wk"))), g.param(*p(pre + "attn.bk")));
  Var v = g.add_rowvec(g.matmul(xn, g.param(*p(pre + "attn.wv"))), g.param(*p(pre + "attn.bv")));

  const Eigen::Index m = g.value(tokens).rows();
  Matrix attn_mean = Matrix::Zero(m, m);
  std::vector<Var> head_outs;
  for (int h = 0; h < cfg_.heads; ++h) {
    Var qh = g.cols(q, h * dh, dh);
    Var kh = g.cols(k, h * dh, dh);
    Var vh = g.cols(v, h * dh, dh);
    Var scores = g.scale(g.matmul(qh, g.transpose(kh)), scale);
    Var attn = g.softmax_rows(scores);
    attn_mean += g.value(attn);
    head_outs.push_back(g.matmul(attn, vh));
  }
  attn_mean /= static_cast<double>(cfg_.heads);
  if (attn_out) *attn_out = std::move(attn_mean);

  Var merged = cfg_.heads == 1 ? head_outs[0] : g.hcat(head_outs);
  Var proj =
      g.add_rowvec(g.matmul(merged, g.param(*p(pre + "attn.wo"))), g.param(*p(pre + "attn.bo")));
  Var x = g.add(tokens, proj);

  Var xn2 = g.layer_norm_rows(x, g.param(*p(pre + "ln2.g")), g.param(*p(pre + "ln2.b")));
  Var h1 = g.gelu(
      g.add_rowvec(g.matmul(xn2, g.param(*p(pre + "mlp.w1"))), g.param(*p(pre + "mlp.b1"))));
  Var h2 = g.add_rowvec(g.matmul(h1, g.param(*p(pre + "mlp.w2"))), g.param(*p(pre + "mlp.b2")));
  return g.add(x, h2);
}

TokenBundle Encoder::encode(Graph& g, const ImageU8& frame) {
  check_config(frame.width == frame.height, "encode: frame must be square, got ", frame.width,
               "x", frame.height);
  check_config(frame.width % cfg_.patch_size == 0, "encode: frame side ", frame.width,
               " not divisible by patch size ", cfg_.patch_size);
  const Matrix patches = image_to_patch_matrix(frame, cfg_.patch_size);
  return encode_patches(g, patches, frame.width / cfg_.patch_size);
}

TokenBundle Encoder::encode_patches(Graph& g, const Matrix& patches, int grid) {
  check_config(patches.rows() == static_cast<Eigen::Index>(grid) * grid,
               "encode: patch count mismatch");
  check_config(patches.cols() == 3 * cfg_.patch_size * cfg_.patch_size,
               "encode: patch dim mismatch");
  const int c1 = cfg_.num_classes + 1;
  const int n = grid * grid;

  Var x = g.add_rowvec(g.matmul(g.constant(patches), g.param(*p("embed.w"))),
                       g.param(*p("embed.b")));
  if (cfg_.use_pos_embed) {
    Var pos = g.param(*p("pos"));
    if (grid != cfg_.grid()) {
      // bilinear resample of the learned grid, as a constant interpolation matrix
      const int g0 = cfg_.grid();
      Matrix interp = Matrix::Zero(n, cfg_.num_patches());
      const double s = static_cast<double>(g0) / grid;
      for (int py = 0; py < grid; ++py) {
        for (int px = 0; px < grid; ++px) {
          const double fy = std::max(0.0, (py + 0.5) * s - 0.5);
          const double fx = std::max(0.0, (px + 0.5) * s - 0.5);
          const int y0 = std::min(static_cast<int>(fy), g0 - 1);
          const int x0 = std::min(static_cast<int>(fx), g0 - 1);
          const int y1 = std::min(y0 + 1, g0 - 1);
          const int x1 = std::min(x0 + 1, g0 - 1);
          const double wy = fy - y0, wx = fx - x0;
          const int row = py * grid + px;
          interp(row, y0 * g0 + x0) += (1 - wy) * (1 - wx);
          interp(row, y0 * g0 + x1) += (1 - wy) * wx;
          interp(row, y1 * g0 + x0) += wy * (1 - wx);
          interp(row, y1 * g0 + x1) += wy * wx;
        }
      }
      pos = g.matmul(g.constant(interp), pos);
    }
    x = g.add(x, pos);
  }

  Var tokens = g.vcat({g.param(*p("cls_tokens")), x});

  TokenBundle bundle;
  bundle.grid = grid;
  bundle.num_classes = cfg_.num_classes;
  bundle.attention.reserve(cfg_.depth);
  for (int l = 0; l < cfg_.depth; ++l) {
    Matrix attn;
    tokens = transformer_block(g, tokens, l, &attn);
    bundle.attention.push_back(std::move(attn));
  }
  tokens = g.layer_norm_rows(tokens, g.param(*p("ln_f.g")), g.param(*p("ln_f.b")));
  bundle.class_tokens = g.rows(tokens, 0, c1);
  bundle.patch_tokens = g.rows(tokens, c1, n);
  bundle.patch_scores = g.matmul(bundle.patch_tokens, g.param(*p("head.patch.w")));
  return bundle;
}

Var Encoder::classify(Graph& g, const TokenBundle& bundle) {
  Var instr = g.rows(bundle.class_tokens, 0, cfg_.num_classes);
  Var logits = g.rowsum(g.cmul(instr, g.param(*p("head.cls.w"))));
  logits = g.add(logits, g.param(*p("head.cls.b")));
  const Matrix& v = g.value(logits);
  if (!v.allFinite()) throw NumericError("classify: non-finite logits");
  return logits;
}

Var Encoder::patch_logits(Graph& g, const TokenBundle& bundle) {
  Var pooled = cfg_.patch_pool == "max" ? g.colmax(bundle.patch_scores)
                                        : g.colmean(bundle.patch_scores);
  return g.transpose(pooled);
}

CamStack Encoder::extract_cam(const Graph& g, const TokenBundle& bundle) const {
  const int c = cfg_.num_classes;
  const int c1 = c + 1;
  const int n = bundle.grid * bundle.grid;
  const int first = cfg_.depth - (cfg_.depth + 1) / 2;  // last half of the layers

  Matrix attn_cp = Matrix::Zero(c, n);   // class -> patch attention
  Matrix affinity = Matrix::Zero(n, n);  // patch -> patch attention
  int used = 0;
  for (int l = first; l < cfg_.depth; ++l) {
    const Matrix& a = bundle.attention[l];
    attn_cp += a.block(0, c1, c, n);
    affinity += a.block(c1, c1, n, n);
    ++used;
  }
  attn_cp /= used;
  affinity /= used;
  for (Eigen::Index r = 0; r < affinity.rows(); ++r) {
    const double s = affinity.row(r).sum();
    if (s > 0) affinity.row(r) /= s;
  }

  const Matrix& scores = g.value(bundle.patch_scores);
  CamStack cam;
  cam.grid = bundle.grid;
  cam.image_size = bundle.grid * cfg_.patch_size;
  for (int cls = 0; cls < c; ++cls) {
    Eigen::VectorXd raw =
        attn_cp.row(cls).transpose().cwiseProduct(scores.col(cls).cwiseMax(0.0));
    raw = affinity * raw;
    const double lo = raw.minCoeff();
    const double hi = raw.maxCoeff();
    Matrix map(bundle.grid, bundle.grid);
    if (hi - lo < 1e-12) {
      map.setZero();  // constant raw map carries no localization signal
    } else {
      for (int i = 0; i < n; ++i)
        map(i / bundle.grid, i % bundle.grid) = (raw(i) - lo) / (hi - lo);
    }
    cam.upsampled.push_back(upsample_bilinear(map, cam.image_size, cam.image_size));
    cam.maps.push_back(std::move(map));
  }
  return cam;
}

PatchProjection Encoder::project_patch(Graph& g, Var patch_tokens, Var class_tokens,
                                       double tau_proto) {
  check_config(tau_proto > 0, "project_patch: tau must be positive");
  Parameter& w = *p("proj.proto.w");
  Parameter& b = *p("proj.proto.b");
  Var zp = g.l2_normalize_rows(g.add_rowvec(g.matmul(patch_tokens, g.param(w)), g.param(b)));
  Var proto =
      g.l2_normalize_rows(g.add_rowvec(g.matmul(class_tokens, g.param(w)), g.param(b)));
  Var cos = g.matmul(zp, g.transpose(proto));
  Var probs = g.softmax_rows(g.scale(cos, 1.0 / tau_proto));
  return {probs, cos};
}

Var Encoder::project_class_local(Graph& g, Var class_tokens) {
  Parameter& w = *p("proj.local.w");
  Parameter& b = *p("proj.local.b");
  Var instr = g.rows(class_tokens, 0, cfg_.num_classes);
  return g.l2_normalize_rows(g.add_rowvec(g.matmul(instr, g.param(w)), g.param(b)));
}

Var Encoder::project_class_global(Graph& g, const Matrix& class_token_values) {
  const Parameter& w = *p("proj.global.w");
  const Parameter& b = *p("proj.global.b");
  Var instr = g.constant(class_token_values.topRows(cfg_.num_classes));
  Var projected = g.add_rowvec(g.matmul(instr, g.constant(w.value)), g.constant(b.value));
  return g.l2_normalize_rows(projected);
}

}  // namespace weaksurg::enc
