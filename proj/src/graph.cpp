#include "weaksurg/graph.hpp"

#include <cmath>
#include <limits>

namespace weaksurg::nn {

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

inline double stable_sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double stable_softplus(double x) {
  // log(1 + exp(x)) without overflow for |x| up to ~700.
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}
}  // namespace

int Graph::push(Matrix value, bool needs_grad) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = grad_enabled_ && needs_grad;
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Matrix& Graph::g(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

bool Graph::any_grad(std::initializer_list<Var> vars) const {
  for (Var v : vars)
    if (nodes_[v.id].needs_grad) return true;
  return false;
}

Var Graph::constant(Matrix v) { return {push(std::move(v), false)}; }

Var Graph::scalar(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m));
}

Var Graph::param(Parameter& p) {
  const int id = push(p.value, true);
  if (grad_enabled_) {
    nodes_[id].sink = &p;
    nodes_[id].backprop = [](Graph& gr, int self) {
      gr.nodes_[self].sink->grad += gr.nodes_[self].grad;
    };
  }
  return {id};
}

Var Graph::matmul(Var a, Var b) {
  check_config(value(a).cols() == value(b).rows(), "matmul: inner dims ",
               value(a).cols(), " vs ", value(b).rows());
  const int id = push(value(a) * value(b), any_grad({a, b}));
  if (nodes_[id].needs_grad) {
    nodes_[id].backprop = [a, b](Graph& gr, int self) {
      const Matrix& go = gr.nodes_[self].grad;
      if (gr.nodes_[a.id].needs_grad) gr.g(a.id).noalias() += go * gr.value(b).transpose();
      if (gr.nodes_[b.id].needs_grad) gr.g(b.id).noalias() += gr.value(a).transpose() * go;
    };
  }
  return {id};
}

Var Graph::add(Var a, Var b) {
  check_config(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(),
               "add: shape mismatch");
  const int id = push(value(a) + value(b), any_grad({a, b}));
  if (nodes_[id].needs_grad) {
    nodes_[id].backprop = [a, b](Graph& gr, int self) {
      const Matrix& go = gr.nodes_[self].grad;
      if (gr.nodes_[a.id].needs_grad) gr.g(a.id) += go;
      if (gr.nodes_[b.id].needs_grad) gr.g(b.id) += go;
    };
  }
  return {id};
}

Var Graph::sub(Var a, Var b) {
  check_config(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(),
               "sub: shape mismatch");
  const int id = push(value(a) - value(b), any_grad({a, b}));
  if (nodes_[id].needs_grad) {
    nodes_[id].backprop = [a, b](Graph& gr, int self) {
      const Matrix& go = gr.nodes_[self].grad;
      if (gr.nodes_[a.id].needs_grad) gr.g(a.id) += go;
      if (gr.nodes_[b.id].needs_grad) gr.g(b.id) -= go;
    };
  }
  return {id};
}

Var Graph::cmul(Var a, Var b) {
  check_config(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(),
               "cmul: shape mismatch");
  const int id = push(value(a).cwiseProduct(value(b)), any_grad({a, b}));
  if (nodes_[id].needs_grad) {
    nodes_[id].backprop = [a, b](Graph& gr, int self) {
      const Matrix& go = gr.nodes_[self].grad;
      if (gr.nodes_[a.id].needs_grad) gr.g(a.id) += go.cwiseProduct(gr.value(b));
      if (gr.nodes_[b.id].needs_grad) gr.g(b.id) += go.cwiseProduct(gr.value(a));
    };
  }
  return {id};
}

Var Graph::neg(Var a) { return scale(a, -1.0); }

Var Graph::scale(Var a, double s) {
  const int id = push(value(a) * s, any_grad({a}));
  if (nodes_[id].needs_grad) {
    nodes_[id].backprop = [a, s](Graph& gr, int self) {
      gr.g(a.id) += gr.nodes_[self].grad * s;
    };
  }
  return {id};
}

Var Graph::add_scalar(Var a, double s) {
  const int id = push((value(a).array() + s).matrix(), any_grad({a}));
  if (nodes_[id].needs_grad) {
    nodes_[id].backprop = [a](Graph& gr, int self) { gr.g(a.id) += gr.nodes_[self].grad; };
  }
  return {id};
}

Var Graph::add_rowvec(Var a, Var row) {
  check_config(value(row).rows() == 1 && value(row).cols() == value(a).cols(),
               "add_rowvec: want 1x", value(a).cols());
  Matrix out = value(a);
  out.rowwise() += value(row).row(0);
  const int id = push(std::move(out), any_grad({a, row}));
  if (nodes_[id].needs_grad) {
    nodes_[id].backprop = [a, row](Graph& gr, int self) {
      const Matrix& go = gr.nodes_[self].grad;
      if (gr.nodes_[a.id].needs_grad) gr.g(a.id) += go;
      if (gr.nodes_[row.id].needs_grad) gr.g(row.id) += go.colwise().sum();
    };
  }
  return {id};
}

Var Graph::mul_colvec(Var a, Var col) {
  check_config(value(col).cols() == 1 && value(col).rows() == value(a).rows(),
               "mul_colvec: want ", value(a).rows(), "x1");
  const int id =
      push((value(a).array().colwise() * value(col).col(0).array()).matrix(),
           any_grad({a, col}));
  if (nodes_[id].needs_grad) {
    nodes_[id].backprop = [a, col](Graph& gr, int self) {
      const Matrix& go = gr.nodes_[self].grad;
      if (gr.nodes_[a.id].needs_grad)
        gr.g(a.id).array() += go.array().colwise() * gr.value(col).col(0).array();
      if (gr.nodes_[col.id].needs_grad)
        gr.g(col.id) += go.cwiseProduct(gr.value(a)).rowwise().sum();
    };
  }
  return {id};
}

Var Graph::div_colvec(Var a, Var col) {
  check_config(value(col).cols() == 1 && value(col).rows() == value(a).rows(),
               "div_colvec: want ", value(a).rows(), "x1");
  const int id =
      push((value(a).array().colwise() / value(col).col(0).array()).matrix(),
           any_grad({a, col}));
  if (nodes_[id].needs_grad) {
    nodes_[id].backprop = [a, col](Graph& gr, int self) {
      const Matrix& go = gr.nodes_[self].grad;
      const auto c = gr.value(col).col(0).array();
      if (gr.nodes_[a.id].needs_grad) gr.g(a.id).array() += go.array().colwise() / c;
      if (gr.nodes_[col.id].needs_grad)
        gr.g(col.id).col(0).array() -=
            (go.cwiseProduct(gr.nodes_[self].value)).rowwise().sum().array() / c;
    };
  }
  return {id};
}

Var Graph::transpose(Var a) {
  const int id = push(value(a).transpose(), any_grad({a}));
  if (nodes_[id].needs_grad) {
    nodes_[id].backprop = [a](Graph& gr, int self) {
      gr.g(a.id) += gr.nodes_[self].grad.transpose();
    };
  }
  return {id};
}

Var Graph::rows(Var a, int r0, int n) {
  check_config(r0 >= 0 && r0 + n <= value(a).rows(), "rows: slice out of range");
  const int id = push(value(a).middleRows(r0, n), any_grad({a}));
  if (nodes_[id].needs_grad) {
    nodes_[id].backprop = [a, r0, n](Graph& gr, int self) {
      gr.g(a.id).middleRows(r0, n) += gr.nodes_[self].grad;
    };
  }
  return {id};
}

Var Graph::cols(Var a, int c0, int n) {
  check_config(c0 >= 0 && c0 + n <= value(a).cols(), "cols: slice out of range");
  const int id = push(value(a).middleCols(c0, n), any_grad({a}));
  if (nodes_[id].needs_grad) {
    nodes_[id].backprop = [a, c0, n](Graph& gr, int self) {
      gr.g(a.id).middleCols(c0, n) += gr.nodes_[self].grad;
    };
  }
  return {id};
}

Var Graph::vcat(const std::vector<Var>& parts) {
  check_config(!parts.empty(), "vcat: empty");
  Eigen::Index total = 0;
  const Eigen::Index cols = value(parts[0]).cols();
  bool needs = false;
  for (Var p : parts) {
    check_config(value(p).cols() == cols, "vcat: column mismatch");
    total += value(p).rows();
    needs = needs || nodes_[p.id].needs_grad;
  }
  Matrix out(total, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    out.middleRows(at, value(p).rows()) = value(p);
    at += value(p).rows();
  }
  const int id = push(std::move(out), needs);
  if (nodes_[id].needs_grad) {
    std::vector<Var> ps = parts;
    nodes_[id].backprop = [ps](Graph& gr, int self) {
      Eigen::Index at = 0;
      for (Var p : ps) {
        const Eigen::Index n = gr.value(p).rows();
        if (gr.nodes_[p.id].needs_grad) gr.g(p.id) += gr.nodes_[self].grad.middleRows(at, n);
        at += n;
      }
    };
  }
  return {id};
}

Var Graph::hcat(const std::vector<Var>& parts) {
  check_config(!parts.empty(), "hcat: empty");
  Eigen::Index total = 0;
  const Eigen::Index rws = value(parts[0]).rows();
  bool needs = false;
  for (Var p : parts) {
    check_config(value(p).rows() == rws, "hcat: row mismatch");
    total += value(p).cols();
    needs = needs || nodes_[p.id].needs_grad;
  }
  Matrix out(rws, total);
  Eigen::Index at = 0;
  for (Var p : parts) {
    out.middleCols(at, value(p).cols()) = value(p);
    at += value(p).cols();
  }
  const int id = push(std::move(out), needs);
  if (nodes_[id].needs_grad) {
    std::vector<Var> ps = parts;
    nodes_[id].backprop = [ps](Graph& gr, int self) {
      Eigen::Index at = 0;
      for (Var p : ps) {
        const Eigen::Index n = gr.value(p).cols();
        if (gr.nodes_[p.id].needs_grad) gr.g(p.id) += gr.nodes_[self].grad.middleCols(at, n);
        at += n;
      }
    };
  }
  return {id};
}

Var Graph::relu(Var a) {
  const int id = push(value(a).cwiseMax(0.0), any_grad({a}));
  if (nodes_[id].needs_grad) {
    nodes_[id].backprop = [a](Graph& gr, int self) {
      gr.g(a.id).array() +=
          gr.nodes_[self].grad.array() * (gr.value(a).array() > 0.0).cast<double>();
    };
  }
  return {id};
}

Var Graph::gelu(Var a) {
  Matrix out = value(a).unaryExpr(
      [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); });
  const int id = push(std::move(out), any_grad({a}));
  if (nodes_[id].needs_grad) {
    nodes_[id].backprop = [a](Graph& gr, int self) {
      gr.g(a.id).array() += gr.nodes_[self].grad.array() * gr.value(a).unaryExpr([](double x) {
        const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        return cdf + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
      }).array();
    };
  }
  return {id};
}

Var Graph::sigmoid(Var a) {
  Matrix out = value(a).unaryExpr([](double x) { return stable_sigmoid(x); });
  const int id = push(std::move(out), any_grad({a}));
  if (nodes_[id].needs_grad) {
    nodes_[id].backprop = [a](Graph& gr, int self) {
      const auto& y = gr.nodes_[self].value.array();
      gr.g(a.id).array() += gr.nodes_[self].grad.array() * y * (1.0 - y);
    };
  }
  return {id};
}

Var Graph::exp(Var a) {
  const int id = push(value(a).array().exp().matrix(), any_grad({a}));
  if (nodes_[id].needs_grad) {
    nodes_[id].backprop = [a](Graph& gr, int self) {
      gr.g(a.id).array() += gr.nodes_[self].grad.array() * gr.nodes_[self].value.array();
    };
  }
  return {id};
}

Var Graph::log(Var a) {
  const int id = push(value(a).array().log().matrix(), any_grad({a}));
  if (nodes_[id].needs_grad) {
    nodes_[id].backprop = [a](Graph& gr, int self) {
      gr.g(a.id).array() += gr.nodes_[self].grad.array() / gr.value(a).array();
    };
  }
  return {id};
}

Var Graph::sqrt(Var a) {
  const int id = push(value(a).array().sqrt().matrix(), any_grad({a}));
  if (nodes_[id].needs_grad) {
    nodes_[id].backprop = [a](Graph& gr, int self) {
      gr.g(a.id).array() +=
          gr.nodes_[self].grad.array() / (2.0 * gr.nodes_[self].value.array());
    };
  }
  return {id};
}

Var Graph::square(Var a) {
  const int id = push(value(a).array().square().matrix(), any_grad({a}));
  if (nodes_[id].needs_grad) {
    nodes_[id].backprop = [a](Graph& gr, int self) {
      gr.g(a.id).array() += 2.0 * gr.nodes_[self].grad.array() * gr.value(a).array();
    };
  }
  return {id};
}

Var Graph::softplus(Var a) {
  Matrix out = value(a).unaryExpr([](double x) { return stable_softplus(x); });
  const int id = push(std::move(out), any_grad({a}));
  if (nodes_[id].needs_grad) {
    nodes_[id].backprop = [a](Graph& gr, int self) {
      gr.g(a.id).array() += gr.nodes_[self].grad.array() *
                            gr.value(a).unaryExpr([](double x) { return stable_sigmoid(x); }).array();
    };
  }
  return {id};
}

Var Graph::clamp_min(Var a, double lo) {
  const int id = push(value(a).cwiseMax(lo), any_grad({a}));
  if (nodes_[id].needs_grad) {
    nodes_[id].backprop = [a, lo](Graph& gr, int self) {
      gr.g(a.id).array() +=
          gr.nodes_[self].grad.array() * (gr.value(a).array() > lo).cast<double>();
    };
  }
  return {id};
}

Var Graph::sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = value(a).sum();
  const int id = push(std::move(out), any_grad({a}));
  if (nodes_[id].needs_grad) {
    nodes_[id].backprop = [a](Graph& gr, int self) {
      gr.g(a.id).array() += gr.nodes_[self].grad(0, 0);
    };
  }
  return {id};
}

Var Graph::mean(Var a) {
  const double inv = 1.0 / static_cast<double>(value(a).size());
  Matrix out(1, 1);
  out(0, 0) = value(a).sum() * inv;
  const int id = push(std::move(out), any_grad({a}));
  if (nodes_[id].needs_grad) {
    nodes_[id].backprop = [a, inv](Graph& gr, int self) {
      gr.g(a.id).array() += gr.nodes_[self].grad(0, 0) * inv;
    };
  }
  return {id};
}

Var Graph::rowsum(Var a) {
  const int id = push(value(a).rowwise().sum(), any_grad({a}));
  if (nodes_[id].needs_grad) {
    nodes_[id].backprop = [a](Graph& gr, int self) {
      gr.g(a.id).colwise() += gr.nodes_[self].grad.col(0);
    };
  }
  return {id};
}

Var Graph::colmean(Var a) {
  const double inv = 1.0 / static_cast<double>(value(a).rows());
  const int id = push(value(a).colwise().sum() * inv, any_grad({a}));
  if (nodes_[id].needs_grad) {
    nodes_[id].backprop = [a, inv](Graph& gr, int self) {
      gr.g(a.id).rowwise() += gr.nodes_[self].grad.row(0) * inv;
    };
  }
  return {id};
}

Var Graph::colmax(Var a) {
  const Matrix& v = value(a);
  Matrix out(1, v.cols());
  std::vector<int> arg(static_cast<std::size_t>(v.cols()));
  for (Eigen::Index c = 0; c < v.cols(); ++c) {
    Eigen::Index r;
    out(0, c) = v.col(c).maxCoeff(&r);
    arg[static_cast<std::size_t>(c)] = static_cast<int>(r);
  }
  const int id = push(std::move(out), any_grad({a}));
  if (nodes_[id].needs_grad) {
    nodes_[id].backprop = [a, arg](Graph& gr, int self) {
      for (Eigen::Index c = 0; c < gr.value(a).cols(); ++c)
        gr.g(a.id)(arg[static_cast<std::size_t>(c)], c) += gr.nodes_[self].grad(0, c);
    };
  }
  return {id};
}

Var Graph::softmax_rows(Var a) {
  const Matrix& v = value(a);
  Matrix out(v.rows(), v.cols());
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    const double m = v.row(r).maxCoeff();
    Eigen::ArrayXd e = (v.row(r).array() - m).exp();
    out.row(r) = e / e.sum();
  }
  const int id = push(std::move(out), any_grad({a}));
  if (nodes_[id].needs_grad) {
    nodes_[id].backprop = [a](Graph& gr, int self) {
      const Matrix& y = gr.nodes_[self].value;
      const Matrix& go = gr.nodes_[self].grad;
      for (Eigen::Index r = 0; r < y.rows(); ++r) {
        const double dot = go.row(r).dot(y.row(r));
        gr.g(a.id).row(r).array() += (go.row(r).array() - dot) * y.row(r).array();
      }
    };
  }
  return {id};
}

Var Graph::masked_softmax_cols(Var a, const BoolMatrix& keep) {
  const Matrix& v = value(a);
  check_config(keep.rows() == v.rows() && keep.cols() == v.cols(),
               "masked_softmax_cols: mask shape mismatch");
  Matrix out = Matrix::Zero(v.rows(), v.cols());
  for (Eigen::Index c = 0; c < v.cols(); ++c) {
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index r = 0; r < v.rows(); ++r)
      if (keep(r, c)) m = std::max(m, v(r, c));
    check_config(std::isfinite(m), "masked_softmax_cols: column ", c, " has no kept entries");
    double denom = 0.0;
    for (Eigen::Index r = 0; r < v.rows(); ++r)
      if (keep(r, c)) denom += std::exp(v(r, c) - m);
    for (Eigen::Index r = 0; r < v.rows(); ++r)
      if (keep(r, c)) out(r, c) = std::exp(v(r, c) - m) / denom;
  }
  const int id = push(std::move(out), any_grad({a}));
  if (nodes_[id].needs_grad) {
    const BoolMatrix mask = keep;
    nodes_[id].backprop = [a, mask](Graph& gr, int self) {
      const Matrix& y = gr.nodes_[self].value;
      const Matrix& go = gr.nodes_[self].grad;
      for (Eigen::Index c = 0; c < y.cols(); ++c) {
        double dot = 0.0;
        for (Eigen::Index r = 0; r < y.rows(); ++r)
          if (mask(r, c)) dot += go(r, c) * y(r, c);
        for (Eigen::Index r = 0; r < y.rows(); ++r)
          if (mask(r, c)) gr.g(a.id)(r, c) += (go(r, c) - dot) * y(r, c);
      }
    };
  }
  return {id};
}

Var Graph::masked_logsumexp_rows(Var a, const BoolMatrix& keep) {
  const Matrix& v = value(a);
  check_config(keep.rows() == v.rows() && keep.cols() == v.cols(),
               "masked_logsumexp_rows: mask shape mismatch");
  Matrix out = Matrix::Zero(v.rows(), 1);
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < v.cols(); ++c)
      if (keep(r, c)) m = std::max(m, v(r, c));
    if (!std::isfinite(m)) continue;  // empty row contributes 0 and no gradient
    double s = 0.0;
    for (Eigen::Index c = 0; c < v.cols(); ++c)
      if (keep(r, c)) s += std::exp(v(r, c) - m);
    out(r, 0) = m + std::log(s);
  }
  const int id = push(std::move(out), any_grad({a}));
  if (nodes_[id].needs_grad) {
    const BoolMatrix mask = keep;
    nodes_[id].backprop = [a, mask](Graph& gr, int self) {
      const Matrix& v = gr.value(a);
      const Matrix& lse = gr.nodes_[self].value;
      const Matrix& go = gr.nodes_[self].grad;
      for (Eigen::Index r = 0; r < v.rows(); ++r) {
        bool any = false;
        for (Eigen::Index c = 0; c < v.cols(); ++c) any = any || mask(r, c);
        if (!any) continue;
        for (Eigen::Index c = 0; c < v.cols(); ++c)
          if (mask(r, c)) gr.g(a.id)(r, c) += go(r, 0) * std::exp(v(r, c) - lse(r, 0));
      }
    };
  }
  return {id};
}

Var Graph::layer_norm_rows(Var x, Var gain, Var bias, double eps) {
  const Matrix& v = value(x);
  const Eigen::Index n = v.cols();
  check_config(value(gain).rows() == 1 && value(gain).cols() == n, "layer_norm: gain shape");
  check_config(value(bias).rows() == 1 && value(bias).cols() == n, "layer_norm: bias shape");
  Matrix xhat(v.rows(), n);
  Eigen::VectorXd inv_sigma(v.rows());
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    const double mu = v.row(r).mean();
    const double var = (v.row(r).array() - mu).square().sum() / static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_sigma(r) = is;
    xhat.row(r) = (v.row(r).array() - mu) * is;
  }
  Matrix out = ((xhat.array().rowwise() * value(gain).row(0).array()).rowwise() +
                value(bias).row(0).array())
                   .matrix();
  const int id = push(std::move(out), any_grad({x, gain, bias}));
  if (nodes_[id].needs_grad) {
    nodes_[id].backprop = [x, gain, bias, xhat, inv_sigma](Graph& gr, int self) {
      const Matrix& go = gr.nodes_[self].grad;
      if (gr.nodes_[gain.id].needs_grad)
        gr.g(gain.id).row(0) += go.cwiseProduct(xhat).colwise().sum();
      if (gr.nodes_[bias.id].needs_grad) gr.g(bias.id).row(0) += go.colwise().sum();
      if (gr.nodes_[x.id].needs_grad) {
        using RowArray = Eigen::Array<double, 1, Eigen::Dynamic>;
        for (Eigen::Index r = 0; r < go.rows(); ++r) {
          const RowArray dxhat = go.row(r).array() * gr.value(gain).row(0).array();
          const double m1 = dxhat.mean();
          const double m2 = (dxhat * xhat.row(r).array()).mean();
          gr.g(x.id).row(r).array() +=
              inv_sigma(r) * (dxhat - m1 - xhat.row(r).array() * m2);
        }
      }
    };
  }
  return {id};
}

Var Graph::l2_normalize_rows(Var a, double eps) {
  const Matrix& v = value(a);
  Eigen::VectorXd norms(v.rows());
  Matrix out(v.rows(), v.cols());
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    norms(r) = v.row(r).norm();
    out.row(r) = v.row(r) / (norms(r) + eps);
  }
  const int id = push(std::move(out), any_grad({a}));
  if (nodes_[id].needs_grad) {
    nodes_[id].backprop = [a, norms, eps](Graph& gr, int self) {
      const Matrix& v = gr.value(a);
      const Matrix& go = gr.nodes_[self].grad;
      for (Eigen::Index r = 0; r < v.rows(); ++r) {
        const double n = norms(r);
        const double d = n + eps;
        gr.g(a.id).row(r) += go.row(r) / d;
        if (n > 0.0) {
          const double dot = go.row(r).dot(v.row(r));
          gr.g(a.id).row(r) -= v.row(r) * (dot / (n * d * d));
        }
      }
    };
  }
  return {id};
}

Var Graph::detach(Var a) { return constant(value(a)); }

void Graph::backward(Var loss) {
  check_config(grad_enabled_, "backward: graph built with gradients disabled");
  check_config(value(loss).rows() == 1 && value(loss).cols() == 1, "backward: loss must be 1x1");
  g(loss.id)(0, 0) = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.needs_grad && n.grad.size() != 0 && n.backprop) n.backprop(*this, i);
  }
}

}  // namespace weaksurg::nn
