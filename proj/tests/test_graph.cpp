#include "weaksurg/graph.hpp"

#include <cmath>
#include <functional>

#include "doctest.h"
#include "weaksurg/rng.hpp"

using namespace weaksurg;
using nn::Graph;
using nn::Parameter;
using nn::Var;

namespace {

Matrix random_matrix(Rng& rng, int rows, int cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = gaussian(rng) * scale;
  return m;
}

// Central finite differences against the tape gradient for an arbitrary
// scalar-valued builder. Relative error is measured on the max-norm scale.
double gradcheck(Parameter& p, const std::function<double(Graph&)>& run) {
  // analytic gradient
  p.zero_grad();
  {
    Graph graph;
    const double base = run(graph);
    (void)base;
  }
  Matrix analytic = p.grad;

  // numeric gradient
  Matrix numeric = Matrix::Zero(p.value.rows(), p.value.cols());
  const double h = 1e-5;
  for (Eigen::Index i = 0; i < p.value.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.value.cols(); ++j) {
      const double keep = p.value(i, j);
      p.value(i, j) = keep + h;
      Graph gp;
      const double fp = run(gp);
      p.value(i, j) = keep - h;
      Graph gm;
      const double fm = run(gm);
      p.value(i, j) = keep;
      numeric(i, j) = (fp - fm) / (2.0 * h);
    }
  }
  const double scale =
      std::max({analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff(), 1e-8});
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

}  // namespace

TEST_CASE("gradients of every primitive match finite differences") {
  Rng rng(7);

  auto check = [&](const char* name, int rows, int cols,
                   const std::function<Var(Graph&, Var)>& op) {
    Parameter p(name, random_matrix(rng, rows, cols));
    Matrix weights;  // fixed random weighting so the loss is not trivially constant
    const double err = gradcheck(p, [&](Graph& g) {
      Var x = g.param(p);
      Var y = op(g, x);
      if (weights.size() == 0) weights = random_matrix(rng, static_cast<int>(g.value(y).rows()),
                                                       static_cast<int>(g.value(y).cols()));
      Var loss = g.sum(g.cmul(y, g.constant(weights)));
      g.backward(loss);
      return g.scalar_value(loss);
    });
    INFO(name);
    CHECK(err < 1e-6);
  };

  check("scale", 3, 4, [](Graph& g, Var x) { return g.scale(x, -2.5); });
  check("add_scalar", 3, 4, [](Graph& g, Var x) { return g.add_scalar(x, 1.5); });
  check("transpose", 3, 4, [](Graph& g, Var x) { return g.transpose(x); });
  check("relu", 3, 4, [](Graph& g, Var x) { return g.relu(x); });
  check("gelu", 3, 4, [](Graph& g, Var x) { return g.gelu(x); });
  check("sigmoid", 3, 4, [](Graph& g, Var x) { return g.sigmoid(x); });
  check("exp", 3, 4, [](Graph& g, Var x) { return g.exp(x); });
  check("softplus", 3, 4, [](Graph& g, Var x) { return g.softplus(x); });
  check("square", 3, 4, [](Graph& g, Var x) { return g.square(x); });
  check("softmax_rows", 5, 7, [](Graph& g, Var x) { return g.softmax_rows(x); });
  check("rowsum", 4, 3, [](Graph& g, Var x) { return g.rowsum(x); });
  check("colmean", 4, 3, [](Graph& g, Var x) { return g.colmean(x); });
  check("colmax", 6, 3, [](Graph& g, Var x) { return g.colmax(x); });
  check("l2_normalize", 4, 6, [](Graph& g, Var x) { return g.l2_normalize_rows(x); });
  check("clamp_min", 3, 4, [](Graph& g, Var x) { return g.clamp_min(x, 0.2); });
  check("slice_rows", 5, 4, [](Graph& g, Var x) { return g.rows(x, 1, 3); });
  check("slice_cols", 4, 6, [](Graph& g, Var x) { return g.cols(x, 2, 3); });
  check("mean", 4, 4, [](Graph& g, Var x) { return g.mean(x); });

  // log and sqrt need positive inputs
  {
    Parameter p("log", (random_matrix(rng, 3, 4).array().abs() + 0.5).matrix());
    const double err = gradcheck(p, [&](Graph& g) {
      Var loss = g.sum(g.log(g.param(p)));
      g.backward(loss);
      return g.scalar_value(loss);
    });
    CHECK(err < 1e-6);
  }
  {
    Parameter p("sqrt", (random_matrix(rng, 3, 4).array().abs() + 0.5).matrix());
    const double err = gradcheck(p, [&](Graph& g) {
      Var loss = g.sum(g.sqrt(g.param(p)));
      g.backward(loss);
      return g.scalar_value(loss);
    });
    CHECK(err < 1e-6);
  }
}

TEST_CASE("gradients of binary ops and reductions") {
  Rng rng(11);
  Parameter a("a", random_matrix(rng, 4, 5));
  Parameter b("b", random_matrix(rng, 4, 5));
  Parameter w("w", random_matrix(rng, 5, 3));
  Parameter row("row", random_matrix(rng, 1, 5));
  Parameter col("col", (random_matrix(rng, 4, 1).array().abs() + 0.7).matrix());

  auto loss_fn = [&](Graph& g) {
    Var x = g.param(a);
    Var y = g.param(b);
    Var z = g.add(g.cmul(x, y), g.sub(x, y));
    z = g.add_rowvec(z, g.param(row));
    z = g.div_colvec(z, g.param(col));
    z = g.mul_colvec(z, g.param(col));
    Var out = g.matmul(z, g.param(w));
    Var loss = g.mean(g.square(out));
    g.backward(loss);
    return g.scalar_value(loss);
  };

  for (Parameter* p : {&a, &b, &w, &row, &col}) {
    const double err = gradcheck(*p, loss_fn);
    INFO(p->name);
    CHECK(err < 1e-6);
  }
}

TEST_CASE("layer norm gradients match finite differences") {
  Rng rng(13);
  Parameter x("x", random_matrix(rng, 5, 8));
  Parameter gain("g", (random_matrix(rng, 1, 8).array() * 0.1 + 1.0).matrix());
  Parameter bias("b", random_matrix(rng, 1, 8, 0.1));

  // the random weighting must be identical across calls
  Rng fixed(99);
  const Matrix weights = random_matrix(fixed, 5, 8);
  auto stable_loss = [&](Graph& g) {
    Var out = g.layer_norm_rows(g.param(x), g.param(gain), g.param(bias));
    Var loss = g.sum(g.cmul(out, g.constant(weights)));
    g.backward(loss);
    return g.scalar_value(loss);
  };
  for (Parameter* p : {&x, &gain, &bias}) {
    const double err = gradcheck(*p, stable_loss);
    INFO(p->name);
    CHECK(err < 1e-6);
  }
}

TEST_CASE("masked softmax and logsumexp gradients") {
  Rng rng(17);
  const int n = 6;
  BoolMatrix keep(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) keep(i, j) = (i == j) || (uniform(rng) < 0.4);

  Parameter f("f", random_matrix(rng, n, n));
  Parameter vals("vals", random_matrix(rng, n, 4));
  Rng fixed(5);
  const Matrix weights = random_matrix(fixed, n, 4);

  auto loss_fn = [&](Graph& g) {
    Var w = g.masked_softmax_cols(g.param(f), keep);
    Var out = g.matmul(g.transpose(w), g.param(vals));
    Var loss = g.sum(g.cmul(out, g.constant(weights)));
    g.backward(loss);
    return g.scalar_value(loss);
  };
  CHECK(gradcheck(f, loss_fn) < 1e-6);
  CHECK(gradcheck(vals, loss_fn) < 1e-6);

  Parameter s("s", random_matrix(rng, 4, n));
  BoolMatrix mask(4, n);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < n; ++j) mask(i, j) = uniform(rng) < 0.5 || j == 0;
  auto lse_fn = [&](Graph& g) {
    Var out = g.masked_logsumexp_rows(g.param(s), mask);
    Var loss = g.sum(out);
    g.backward(loss);
    return g.scalar_value(loss);
  };
  CHECK(gradcheck(s, lse_fn) < 1e-6);
}

TEST_CASE("masked softmax zeroes excluded entries and normalizes columns") {
  Graph g;
  Rng rng(3);
  Matrix f = random_matrix(rng, 5, 5);
  BoolMatrix keep = BoolMatrix::Constant(5, 5, false);
  for (int j = 0; j < 5; ++j) {
    keep(j, j) = true;
    keep((j + 2) % 5, j) = true;
  }
  const Matrix w = g.value(g.masked_softmax_cols(g.constant(f), keep));
  for (int j = 0; j < 5; ++j) {
    double sum = 0;
    for (int i = 0; i < 5; ++i) {
      if (!keep(i, j)) CHECK(w(i, j) == 0.0);
      sum += w(i, j);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("vcat/hcat route gradients to the right slices") {
  Rng rng(23);
  Parameter a("a", random_matrix(rng, 2, 3));
  Parameter b("b", random_matrix(rng, 4, 3));
  Rng fixed(31);
  const Matrix w6 = random_matrix(fixed, 6, 3);
  auto loss_v = [&](Graph& g) {
    Var out = g.vcat({g.param(a), g.param(b)});
    Var loss = g.sum(g.cmul(out, g.constant(w6)));
    g.backward(loss);
    return g.scalar_value(loss);
  };
  CHECK(gradcheck(a, loss_v) < 1e-6);
  CHECK(gradcheck(b, loss_v) < 1e-6);

  Parameter c("c", random_matrix(rng, 3, 2));
  Parameter d("d", random_matrix(rng, 3, 4));
  const Matrix w36 = random_matrix(fixed, 3, 6);
  auto loss_h = [&](Graph& g) {
    Var out = g.hcat({g.param(c), g.param(d)});
    Var loss = g.sum(g.cmul(out, g.constant(w36)));
    g.backward(loss);
    return g.scalar_value(loss);
  };
  CHECK(gradcheck(c, loss_h) < 1e-6);
  CHECK(gradcheck(d, loss_h) < 1e-6);
}

TEST_CASE("detach blocks gradient flow") {
  Rng rng(29);
  Parameter a("a", random_matrix(rng, 3, 3));
  Graph g;
  Var x = g.param(a);
  Var y = g.add(g.detach(g.square(x)), x);
  Var loss = g.sum(y);
  g.backward(loss);
  // only the direct path contributes: d(loss)/da = 1 everywhere
  CHECK((a.grad.array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("graphs with gradients disabled never touch parameter grads") {
  Rng rng(41);
  Parameter a("a", random_matrix(rng, 3, 3));
  a.zero_grad();
  Graph g(false);
  Var y = g.softmax_rows(g.param(a));
  CHECK(g.value(y).rows() == 3);
  CHECK(a.grad.cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(g.backward(y), ConfigError);
}
