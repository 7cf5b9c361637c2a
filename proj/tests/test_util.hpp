#pragma once

#include <functional>

#include "weaksurg/graph.hpp"
#include "weaksurg/rng.hpp"

namespace weaksurg::testutil {

inline Matrix random_matrix(Rng& rng, int rows, int cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = gaussian(rng) * scale;
  return m;
}

/// Max-norm relative error between the tape gradient of `run` w.r.t. p and
/// central finite differences. `run` must build a fresh graph, call backward,
/// and return the loss value.
inline double gradcheck(nn::Parameter& p, const std::function<double(nn::Graph&)>& run,
                        double h = 1e-5) {
  p.zero_grad();
  {
    nn::Graph graph;
    run(graph);
  }
  const Matrix analytic = p.grad;
  Matrix numeric = Matrix::Zero(p.value.rows(), p.value.cols());
  for (Eigen::Index i = 0; i < p.value.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.value.cols(); ++j) {
      const double keep = p.value(i, j);
      p.value(i, j) = keep + h;
      nn::Graph gp;
      const double fp = run(gp);
      p.value(i, j) = keep - h;
      nn::Graph gm;
      const double fm = run(gm);
      p.value(i, j) = keep;
      numeric(i, j) = (fp - fm) / (2.0 * h);
    }
  }
  const double scale =
      std::max({analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff(), 1e-8});
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

}  // namespace weaksurg::testutil
