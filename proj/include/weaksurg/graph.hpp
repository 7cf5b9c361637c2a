#pragma once

#include <functional>
#include <string>
#include <vector>

#include "weaksurg/common.hpp"

namespace weaksurg::nn {

using weaksurg::BoolMatrix;
using weaksurg::Matrix;

/// Trainable tensor with persistent gradient storage.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(); }
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode tape over dense double matrices. Nodes are created in forward
/// order; backward() walks them in reverse. A graph built with grads disabled
/// skips all gradient bookkeeping (inference paths).
class Graph {
 public:
  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Var constant(Matrix v);
  Var scalar(double v);
  Var param(Parameter& p);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  double scalar_value(Var v) const { return nodes_[v.id].value(0, 0); }
  const Matrix& grad(Var v) const { return nodes_[v.id].grad; }
  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var cmul(Var a, Var b);
  Var neg(Var a);
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);
  Var add_rowvec(Var a, Var row);   // row is 1 x n, broadcast over rows of a
  Var mul_colvec(Var a, Var col);   // col is m x 1, broadcast over columns of a
  Var div_colvec(Var a, Var col);
  Var transpose(Var a);
  Var rows(Var a, int r0, int n);
  Var cols(Var a, int c0, int n);
  Var vcat(const std::vector<Var>& parts);
  Var hcat(const std::vector<Var>& parts);

  Var relu(Var a);
  Var gelu(Var a);
  Var sigmoid(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var sqrt(Var a);
  Var square(Var a);
  Var softplus(Var a);
  Var clamp_min(Var a, double lo);

  Var sum(Var a);       // 1x1
  Var mean(Var a);      // 1x1
  Var rowsum(Var a);    // m x 1
  Var colmean(Var a);   // 1 x n
  Var colmax(Var a);    // 1 x n

  Var softmax_rows(Var a);
  /// Column-wise softmax restricted to entries where keep(i,j); masked-out
  /// outputs are exactly zero. Requires every column to keep at least one row.
  Var masked_softmax_cols(Var a, const BoolMatrix& keep);
  /// Row-wise log-sum-exp over kept entries; rows with nothing kept yield 0.
  Var masked_logsumexp_rows(Var a, const BoolMatrix& keep);

  Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5);
  Var l2_normalize_rows(Var a, double eps = 1e-8);

  Var detach(Var a);

  /// Accumulates d(loss)/d(param) into every Parameter seen by param().
  /// loss must be 1x1.
  void backward(Var loss);

 private:
  struct Node {
    Matrix value;
    Matrix grad;                       // allocated lazily when needed
    bool needs_grad = false;
    Parameter* sink = nullptr;         // leaf parameter, receives gradient
    std::function<void(Graph&, int)> backprop;  // scatters this->grad to parents
  };

  int push(Matrix value, bool needs_grad);
  Matrix& g(int id);  // gradient buffer of node id, allocating on first touch
  bool any_grad(std::initializer_list<Var> vars) const;

  std::vector<Node> nodes_;
  bool grad_enabled_ = true;
};

}  // namespace weaksurg::nn
