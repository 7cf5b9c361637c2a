#pragma once

#include <vector>

#include "weaksurg/graph.hpp"

namespace weaksurg::losses {

using nn::Graph;
using nn::Parameter;
using nn::Var;

/// Multi-label soft margin loss, mean over classes:
///   -(1/C) sum_i [ y_i log sigmoid(x_i) + (1-y_i) log(1 - sigmoid(x_i)) ]
/// computed via softplus so |logits| up to a few hundred stay finite.
Var mlsm_loss(Graph& g, Var logits, const Vector& labels);

/// F_ij = <norm(ref_i), norm(tgt_j)> / tau_sim  (N x N)
Var spatial_similarity(Graph& g, Var z_ref, Var z_tgt, double tau_sim);

/// keep(i,j) true iff patch i lies in the k x k window centered at patch j on
/// the sqrt(N) x sqrt(N) grid. k must be odd; k >= grid side keeps everything
/// (a warning is printed).
BoolMatrix neighborhood_mask(int num_patches, int k);

/// The masked similarity matrix with -inf outside the window (value surface).
Matrix apply_neighborhood_mask(const Matrix& f, int k);

/// Column-wise softmax of F over the unmasked window, transferred onto values:
/// out(j) = sum_i w_ij values(i). Row-stochastic values stay row-stochastic.
Var propagate(Graph& g, Var f, const BoolMatrix& keep, Var values);

/// Sinkhorn-Knopp balancing of exp(scores/eps): alternating row (sum 1) and
/// column (mass N/(C+1)) scalings for `iters` rounds plus a final row pass.
Matrix sinkhorn_assign(const Matrix& scores, double eps, int iters);

/// Cross-entropy between the propagated reference assignments (constant) and
/// the target prototype probabilities, averaged over patches.
Var pter_loss(Graph& g, const Matrix& assign_ref, Var f, const BoolMatrix& keep,
              Var probs_tgt);

struct ContrastMasks {
  BoolMatrix positives;    // I : B_local x B_global
  BoolMatrix denominator;  // I-bar
  int num_positives = 0;
};

/// I_ij = both valid, same class, same image. Denominator = positives plus
/// all valid cross-class pairs.
ContrastMasks build_contrast_masks(const std::vector<int>& local_class,
                                   const std::vector<int>& local_image,
                                   const std::vector<char>& local_valid,
                                   const std::vector<int>& global_class,
                                   const std::vector<int>& global_image,
                                   const std::vector<char>& global_valid);

struct CtscResult {
  Var loss;
  int num_positives = 0;  // 0 means "no positives": loss is exactly zero
};

/// InfoNCE over (local crop token, global view token) pairs. Rows of both
/// inputs are L2-normalized internally, so any positive rescaling of the raw
/// embeddings leaves the loss unchanged.
CtscResult ctsc_loss(Graph& g, Var x_local, Var x_global, const ContrastMasks& masks,
                     double tau_ctsc);

struct EmaState {
  std::vector<Parameter*> global_params;
  double rho = 0.999;
};

/// theta_g <- rho * theta_g + (1 - rho) * theta_l, elementwise.
void ema_update(EmaState& state, const std::vector<Parameter*>& local_params);

/// w_cls * l_cls + w_pter * l_pter + w_ctsc * l_ctsc; throws NumericError
/// naming the first non-finite component.
Var overall_loss(Graph& g, Var l_cls, Var l_pter, Var l_ctsc, double w_cls, double w_pter,
                 double w_ctsc);

}  // namespace weaksurg::losses
