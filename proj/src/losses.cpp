#include "weaksurg/losses.hpp"

#include <cmath>
#include <iostream>
#include <limits>

namespace weaksurg::losses {

Var mlsm_loss(Graph& g, Var logits, const Vector& labels) {
  const Matrix& x = g.value(logits);
  check_config(x.cols() == 1, "mlsm_loss: logits must be a column vector");
  check_config(x.rows() == labels.size(), "mlsm_loss: ", x.rows(), " logits vs ",
               labels.size(), " labels");
  if (!x.allFinite()) throw NumericError("mlsm_loss: non-finite logits");
  Matrix y(labels.size(), 1);
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    check_config(labels(i) == 0.0 || labels(i) == 1.0, "mlsm_loss: labels must be binary");
    y(i, 0) = labels(i);
  }
  Matrix one_minus = Matrix::Ones(y.rows(), 1) - y;
  // y * softplus(-x) + (1-y) * softplus(x)  ==  -y log s(x) - (1-y) log(1-s(x))
  Var pos = g.cmul(g.constant(y), g.softplus(g.neg(logits)));
  Var neg = g.cmul(g.constant(one_minus), g.softplus(logits));
  return g.mean(g.add(pos, neg));
}

Var spatial_similarity(Graph& g, Var z_ref, Var z_tgt, double tau_sim) {
  check_config(tau_sim > 0, "spatial_similarity: tau must be positive");
  check_config(g.value(z_ref).cols() == g.value(z_tgt).cols(),
               "spatial_similarity: feature dims differ");
  Var nref = g.l2_normalize_rows(z_ref);
  Var ntgt = g.l2_normalize_rows(z_tgt);
  return g.scale(g.matmul(nref, g.transpose(ntgt)), 1.0 / tau_sim);
}

BoolMatrix neighborhood_mask(int num_patches, int k) {
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(num_patches))));
  check_config(side * side == num_patches, "neighborhood_mask: ", num_patches,
               " patches is not a square grid");
  check_config(k >= 1 && k % 2 == 1, "neighborhood_mask: window size must be odd, got ", k);
  BoolMatrix keep(num_patches, num_patches);
  if (k >= side) {
    std::cerr << "[weaksurg] neighborhood window " << k << " >= grid side " << side
              << "; keeping all pairs\n";
    keep.setConstant(true);
    return keep;
  }
  const int r = (k - 1) / 2;
  keep.setConstant(false);
  for (int j = 0; j < num_patches; ++j) {
    const int jy = j / side, jx = j % side;
    for (int iy = std::max(0, jy - r); iy <= std::min(side - 1, jy + r); ++iy)
      for (int ix = std::max(0, jx - r); ix <= std::min(side - 1, jx + r); ++ix)
        keep(iy * side + ix, j) = true;
  }
  return keep;
}

Matrix apply_neighborhood_mask(const Matrix& f, int k) {
  check_config(f.rows() == f.cols(), "apply_neighborhood_mask: matrix must be square");
  const BoolMatrix keep = neighborhood_mask(static_cast<int>(f.rows()), k);
  Matrix out = f;
  const double neg_inf = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < f.cols(); ++j)
    for (Eigen::Index i = 0; i < f.rows(); ++i)
      if (!keep(i, j)) out(i, j) = neg_inf;
  return out;
}

Var propagate(Graph& g, Var f, const BoolMatrix& keep, Var values) {
  check_config(g.value(f).rows() == g.value(f).cols(), "propagate: F must be square");
  check_config(g.value(f).rows() == g.value(values).rows(),
               "propagate: F and values disagree on N");
  Var weights = g.masked_softmax_cols(f, keep);
  return g.matmul(g.transpose(weights), values);
}

Matrix sinkhorn_assign(const Matrix& scores, double eps, int iters) {
  check_config(eps > 0, "sinkhorn_assign: eps must be positive");
  check_config(iters >= 0, "sinkhorn_assign: iters must be >= 0");
  check_config(scores.allFinite(), "sinkhorn_assign: non-finite scores");
  const Eigen::Index n = scores.rows();
  const Eigen::Index k = scores.cols();
  check_config(n > 0 && k > 0, "sinkhorn_assign: empty score matrix");

  // max subtraction before exponentiation is mandatory to avoid overflow
  const double top = scores.maxCoeff();
  Matrix m = ((scores.array() - top) / eps).exp().matrix();
  const double col_target = static_cast<double>(n) / static_cast<double>(k);

  constexpr double kTiny = 1e-300;
  for (int it = 0; it < iters; ++it) {
    for (Eigen::Index r = 0; r < n; ++r) {
      const double s = std::max(m.row(r).sum(), kTiny);
      m.row(r) /= s;
    }
    for (Eigen::Index c = 0; c < k; ++c) {
      const double s = std::max(m.col(c).sum(), kTiny);
      m.col(c) *= col_target / s;
    }
  }
  for (Eigen::Index r = 0; r < n; ++r) {
    const double s = std::max(m.row(r).sum(), kTiny);
    m.row(r) /= s;
  }
  return m;
}

Var pter_loss(Graph& g, const Matrix& assign_ref, Var f, const BoolMatrix& keep,
              Var probs_tgt) {
  const Eigen::Index n = g.value(f).rows();
  check_config(assign_ref.rows() == n, "pter_loss: assignment rows must match N");
  check_config(assign_ref.cols() == g.value(probs_tgt).cols(),
               "pter_loss: prototype counts differ");
  check_config(g.value(probs_tgt).rows() == n, "pter_loss: target probs rows must match N");
  Var propagated = propagate(g, f, keep, g.constant(assign_ref));
  Var logq = g.log(g.clamp_min(probs_tgt, 1e-12));
  Var ce = g.sum(g.cmul(propagated, logq));
  return g.scale(ce, -1.0 / static_cast<double>(n));
}

ContrastMasks build_contrast_masks(const std::vector<int>& local_class,
                                   const std::vector<int>& local_image,
                                   const std::vector<char>& local_valid,
                                   const std::vector<int>& global_class,
                                   const std::vector<int>& global_image,
                                   const std::vector<char>& global_valid) {
  const std::size_t bl = local_class.size();
  const std::size_t bg = global_class.size();
  check_config(local_image.size() == bl && local_valid.size() == bl,
               "build_contrast_masks: local metadata sizes differ");
  check_config(global_image.size() == bg && global_valid.size() == bg,
               "build_contrast_masks: global metadata sizes differ");
  ContrastMasks m;
  m.positives = BoolMatrix::Constant(bl, bg, false);
  m.denominator = BoolMatrix::Constant(bl, bg, false);
  for (std::size_t i = 0; i < bl; ++i) {
    if (!local_valid[i]) continue;
    for (std::size_t j = 0; j < bg; ++j) {
      if (!global_valid[j]) continue;
      if (local_class[i] == global_class[j]) {
        if (local_image[i] == global_image[j]) {
          m.positives(i, j) = true;
          m.denominator(i, j) = true;
          ++m.num_positives;
        }
        // same class from another image: neither positive nor denominator
      } else {
        m.denominator(i, j) = true;
      }
    }
  }
  return m;
}

CtscResult ctsc_loss(Graph& g, Var x_local, Var x_global, const ContrastMasks& masks,
                     double tau_ctsc) {
  check_config(tau_ctsc > 0, "ctsc_loss: tau must be positive");
  const Eigen::Index bl = g.value(x_local).rows();
  const Eigen::Index bg = g.value(x_global).rows();
  check_config(masks.positives.rows() == bl && masks.positives.cols() == bg,
               "ctsc_loss: mask shape mismatch");
  if (masks.num_positives == 0) return {g.scalar(0.0), 0};

  Var nl = g.l2_normalize_rows(x_local);
  Var ng = g.l2_normalize_rows(x_global);
  Var sims = g.scale(g.matmul(nl, g.transpose(ng)), 1.0 / tau_ctsc);
  Var lse = g.masked_logsumexp_rows(sims, masks.denominator);
  Var lse_b = g.matmul(lse, g.constant(Matrix::Ones(1, bg)));
  Var log_ratio = g.sub(sims, lse_b);

  Matrix pos = Matrix::Zero(bl, bg);
  for (Eigen::Index i = 0; i < bl; ++i)
    for (Eigen::Index j = 0; j < bg; ++j)
      if (masks.positives(i, j)) pos(i, j) = 1.0;
  Var picked = g.sum(g.cmul(log_ratio, g.constant(pos)));
  return {g.scale(picked, -1.0 / masks.num_positives), masks.num_positives};
}

void ema_update(EmaState& state, const std::vector<Parameter*>& local_params) {
  check_config(state.rho >= 0.0 && state.rho <= 1.0, "ema_update: rho must be in [0,1]");
  check_config(state.global_params.size() == local_params.size(),
               "ema_update: parameter collections differ in length");
  for (std::size_t i = 0; i < local_params.size(); ++i) {
    Parameter& gp = *state.global_params[i];
    const Parameter& lp = *local_params[i];
    check_config(gp.value.rows() == lp.value.rows() && gp.value.cols() == lp.value.cols(),
                 "ema_update: shape mismatch for ", gp.name, " vs ", lp.name);
    gp.value = state.rho * gp.value + (1.0 - state.rho) * lp.value;
  }
}

Var overall_loss(Graph& g, Var l_cls, Var l_pter, Var l_ctsc, double w_cls, double w_pter,
                 double w_ctsc) {
  const char* names[3] = {"cls", "pter", "ctsc"};
  const Var parts[3] = {l_cls, l_pter, l_ctsc};
  for (int i = 0; i < 3; ++i)
    if (!std::isfinite(g.scalar_value(parts[i])))
      throw NumericError(strcat("overall_loss: non-finite ", names[i], " component"));
  Var total = g.scale(l_cls, w_cls);
  total = g.add(total, g.scale(l_pter, w_pter));
  total = g.add(total, g.scale(l_ctsc, w_ctsc));
  return total;
}

}  // namespace weaksurg::losses
