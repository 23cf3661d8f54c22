#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "doctest.h"
#include "tipcast/autodiff.hpp"
#include "tipcast/error.hpp"

using namespace tipcast;
using namespace tipcast::ad;

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double lo = -1.5, double hi = 1.5) {
  Matrix m(r, c);
  for (double& v : m.data) v = rng.uniform(lo, hi);
  return m;
}

Matrix from(std::size_t r, std::size_t c, std::vector<double> v) {
  Matrix m(r, c);
  m.data = std::move(v);
  return m;
}

// Contracts an arbitrary output with fixed random weights so every output
// entry carries gradient (plain sums are degenerate for softmax and layer_norm).
Var weighted(Tape& t, Var y, std::uint64_t seed) {
  Rng rng(seed, 77);
  return sum(hadamard(y, t.constant(random_matrix(rng, y.rows(), y.cols()))));
}

using Unary = std::function<Var(Tape&, Var)>;

// Runs grad_check at `points` random inputs of the given shape.
double worst_over_points(const Unary& op, std::size_t r, std::size_t c, int points, std::uint64_t seed,
                         double lo = -1.5, double hi = 1.5) {
  Rng rng(seed);
  double worst = 0.0;
  for (int k = 0; k < points; ++k) {
    const Matrix x = random_matrix(rng, r, c, lo, hi);
    worst = std::max(worst, grad_check([&](Tape& t, Var v) { return weighted(t, op(t, v), seed); }, x));
  }
  return worst;
}

}  // namespace

TEST_CASE("forward examples") {
  Tape t;
  CHECK(softmax_rows(t.constant(from(1, 2, {0, 0}))).value().data == std::vector<double>{0.5, 0.5});
  const Var g = glu(t.constant(from(1, 2, {3.0, -2.0})), t.constant(from(1, 2, {-50.0, -50.0})));
  CHECK(std::abs(g.value().data[0]) < 1e-20);
  CHECK(std::abs(g.value().data[1]) < 1e-20);

  const Var ln = layer_norm_rows(t.constant(from(1, 3, {1, 2, 3})), t.constant(from(1, 3, {1, 1, 1})),
                                 t.constant(from(1, 3, {0, 0, 0})), 0.0);
  CHECK(ln.value().data[0] == doctest::Approx(-1.224744871391589).epsilon(1e-12));
  CHECK(ln.value().data[1] == doctest::Approx(0.0).scale(1.0));
  CHECK(ln.value().data[2] == doctest::Approx(1.224744871391589).epsilon(1e-12));

  const double inf = std::numeric_limits<double>::infinity();
  const Var masked = softmax_rows(t.constant(from(1, 3, {0.3, -inf, 0.3})));
  CHECK(masked.value().data == std::vector<double>{0.5, 0.0, 0.5});
  CHECK_THROWS_AS(softmax_rows(t.constant(from(1, 2, {-inf, -inf}))), NumericalError);

  const Var e = elu(t.constant(from(1, 2, {-1.0, 2.0})));
  CHECK(e.value().data[0] == doctest::Approx(std::exp(-1.0) - 1.0));
  CHECK(e.value().data[1] == 2.0);
}

TEST_CASE("shape errors carry both shapes") {
  Tape t;
  const Var a = t.constant(Matrix(2, 3));
  const Var b = t.constant(Matrix(2, 4));
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2 x 3]") != std::string::npos);
    CHECK(msg.find("[2 x 4]") != std::string::npos);
  }
  CHECK_THROWS_AS(add(a, b), ShapeError);
  CHECK_THROWS_AS(hadamard(a, b), ShapeError);
  CHECK_THROWS_AS(add_row(a, t.constant(Matrix(1, 4))), ShapeError);
  CHECK_THROWS_AS(slice_cols(a, 2, 2), ShapeError);
  CHECK_THROWS_AS(t.backward(a), ShapeError);
}

TEST_CASE("backward examples") {
  Tape t;
  Rng rng(1);
  const Var x = t.constant(random_matrix(rng, 3, 4));
  t.backward(sum(x));
  for (double g : t.grad(x).data) CHECK(g == 1.0);

  Tape t2;
  const Matrix A = random_matrix(rng, 2, 3), B = random_matrix(rng, 3, 4);
  const Var a = t2.constant(A), b = t2.constant(B);
  t2.backward(sum(matmul(a, b)));
  const Matrix ga = t2.grad(a);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t k = 0; k < 3; ++k) {
      double expect = 0.0;
      for (std::size_t j = 0; j < 4; ++j) expect += B(k, j);  // ones * B^T
      CHECK(ga(i, k) == doctest::Approx(expect).epsilon(1e-14));
    }
  }
}

TEST_CASE("unused parameters get zero gradient and backward is repeatable") {
  ParameterSet ps;
  Rng rng(5);
  Parameter& w = ps.add("w", 3, 2);
  Parameter& unused = ps.add("unused", 2, 2);
  w.value = random_matrix(rng, 3, 2);
  unused.value = random_matrix(rng, 2, 2);
  Tape t;
  const Var x = t.constant(random_matrix(rng, 4, 3));
  const Var loss = sum(square(tanh(matmul(x, t.param(w)))));
  ps.zero_grad();
  t.backward(loss);
  const Matrix first = w.grad;
  for (double g : unused.grad.data) CHECK(g == 0.0);
  ps.zero_grad();
  t.backward(loss);
  CHECK(w.grad == first);
  CHECK(t.param(w).id == t.param(w).id);
}

TEST_CASE("dropout") {
  Rng rng(3);
  const Matrix x = random_matrix(rng, 50, 40);
  Tape eval_tape(false);
  const Var xe = eval_tape.constant(x);
  CHECK(dropout(xe, 0.3).value() == x);

  Rng drop(11);
  Tape train_tape(true, &drop);
  const Var y = dropout(train_tape.constant(x), 0.25);
  std::size_t kept = 0;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    if (y.value().data[i] != 0.0) {
      ++kept;
      CHECK(y.value().data[i] == doctest::Approx(x.data[i] / 0.75).epsilon(1e-15));
    }
  }
  CHECK(std::abs(static_cast<double>(kept) / 2000.0 - 0.75) < 0.05);
  CHECK_THROWS_AS(dropout(xe, 1.0), InvalidArgument);
}

TEST_CASE("sum of squares grad_check is exact up to roundoff") {
  Rng rng(9);
  const Matrix x = random_matrix(rng, 4, 5);
  CHECK(grad_check([](Tape&, Var v) { return sum(square(v)); }, x) < 1e-7);
}

TEST_CASE("every primitive matches central differences at 100 random points") {
  const int kPoints = 100;
  const double kTol = 1e-5;
  Rng side(123);
  const Matrix other34 = random_matrix(side, 3, 4);
  const Matrix other45 = random_matrix(side, 4, 5);
  const Matrix row4 = random_matrix(side, 1, 4);
  const Matrix col3 = random_matrix(side, 3, 1);
  const Matrix gain = random_matrix(side, 1, 4, 0.5, 1.5);
  const Matrix bias = random_matrix(side, 1, 4);

  struct Case {
    const char* name;
    Unary op;
    std::size_t r, c;
    double lo = -1.5, hi = 1.5;
  };
  const std::vector<Case> cases = {
      {"matmul_left", [&](Tape& t, Var v) { return matmul(v, t.constant(other45)); }, 3, 4},
      {"matmul_right", [&](Tape& t, Var v) { return matmul(t.constant(other34), v); }, 4, 5},
      {"add", [&](Tape& t, Var v) { return add(v, t.constant(other34)); }, 3, 4},
      {"sub", [&](Tape& t, Var v) { return sub(t.constant(other34), v); }, 3, 4},
      {"hadamard", [&](Tape& t, Var v) { return hadamard(v, t.constant(other34)); }, 3, 4},
      {"hadamard_self", [](Tape&, Var v) { return hadamard(v, v); }, 3, 4},
      {"scale", [](Tape&, Var v) { return scale(v, -2.5); }, 3, 4},
      {"add_row_input", [&](Tape& t, Var v) { return add_row(v, t.constant(row4)); }, 3, 4},
      {"add_row_bias", [&](Tape& t, Var v) { return add_row(t.constant(other34), v); }, 1, 4},
      {"affine_x", [&](Tape& t, Var v) {
         return affine(v, t.constant(other45), t.constant(Matrix(1, 5, 0.3)));
       }, 3, 4},
      {"affine_w", [&](Tape& t, Var v) {
         return affine(t.constant(other34), v, t.constant(Matrix(1, 5, 0.3)));
       }, 4, 5},
      {"affine_b", [&](Tape& t, Var v) { return affine(t.constant(other34), t.constant(other45), v); }, 1, 5},
      {"concat_cols", [&](Tape& t, Var v) { return concat_cols({t.constant(other34), v, v}); }, 3, 2},
      {"slice_cols", [](Tape&, Var v) { return slice_cols(v, 1, 2); }, 3, 4},
      {"concat_rows", [&](Tape& t, Var v) { return concat_rows({v, t.constant(other34), v}); }, 2, 4},
      {"slice_rows", [](Tape&, Var v) { return slice_rows(v, 1, 2); }, 4, 3},
      {"tile_rows", [](Tape&, Var v) { return tile_rows(v, 3); }, 2, 3},
      {"scale_rows_a", [&](Tape& t, Var v) { return scale_rows(v, t.constant(col3)); }, 3, 4},
      {"scale_rows_w", [&](Tape& t, Var v) { return scale_rows(t.constant(other34), v); }, 3, 1},
      {"sum", [](Tape&, Var v) { return sum(v); }, 3, 4},
      {"mean", [](Tape&, Var v) { return mean(v); }, 3, 4},
      {"sum_rows", [](Tape&, Var v) { return sum_rows(v); }, 3, 4},
      {"sum_cols", [](Tape&, Var v) { return sum_cols(v); }, 3, 4},
      {"sigmoid", [](Tape&, Var v) { return sigmoid(v); }, 3, 4, -4.0, 4.0},
      {"tanh", [](Tape&, Var v) { return ad::tanh(v); }, 3, 4, -3.0, 3.0},
      {"elu", [](Tape&, Var v) { return elu(v); }, 3, 4, -3.0, 3.0},
      {"abs", [](Tape&, Var v) { return ad::abs(v); }, 3, 4},
      {"square", [](Tape&, Var v) { return square(v); }, 3, 4},
      {"add_scalar", [](Tape&, Var v) { return add_scalar(v, 0.7); }, 3, 4},
      {"softmax_rows", [](Tape&, Var v) { return softmax_rows(v); }, 3, 4, -3.0, 3.0},
      {"layer_norm_x", [&](Tape& t, Var v) {
         return layer_norm_rows(v, t.constant(gain), t.constant(bias));
       }, 3, 4},
      {"layer_norm_gain", [&](Tape& t, Var v) {
         return layer_norm_rows(t.constant(other34), v, t.constant(bias));
       }, 1, 4},
      {"layer_norm_shift", [&](Tape& t, Var v) {
         return layer_norm_rows(t.constant(other34), t.constant(gain), v);
       }, 1, 4},
      {"glu_a", [&](Tape& t, Var v) { return glu(v, t.constant(other34)); }, 3, 4},
      {"glu_b", [&](Tape& t, Var v) { return glu(t.constant(other34), v); }, 3, 4},
      {"dropout_eval", [](Tape&, Var v) { return dropout(v, 0.2); }, 3, 4},
  };
  std::uint64_t seed = 1000;
  for (const auto& c : cases) {
    const std::string name = c.name;
    CAPTURE(name);
    CHECK(worst_over_points(c.op, c.r, c.c, kPoints, seed++, c.lo, c.hi) < kTol);
  }
}

TEST_CASE("train-mode dropout gradient uses the same mask") {
  Rng rng(2);
  const Matrix x = random_matrix(rng, 3, 4);
  Rng drop(7);
  Tape t(true, &drop);
  const Var xv = t.constant(x);
  const Var y = dropout(xv, 0.5);
  t.backward(weighted(t, y, 5));
  const Matrix g = t.grad(xv);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    if (y.value().data[i] == 0.0) CHECK(g.data[i] == 0.0);
    else CHECK(g.data[i] != 0.0);
  }
}

TEST_CASE("composite graph with parameters") {
  ParameterSet ps;
  Rng rng(31);
  Parameter& w1 = ps.add("w1", 4, 6);
  Parameter& b1 = ps.add("b1", 1, 6);
  Parameter& w2 = ps.add("w2", 6, 3);
  Parameter& g = ps.add("g", 1, 3);
  Parameter& s = ps.add("s", 1, 3);
  for (std::size_t k = 0; k < ps.size(); ++k) ps[k].value = random_matrix(rng, ps[k].value.rows, ps[k].value.cols);
  const Matrix x = random_matrix(rng, 5, 4);
  auto f = [&](Tape& t) {
    const Var h = elu(affine(t.constant(x), t.param(w1), t.param(b1)));
    const Var o = layer_norm_rows(matmul(h, t.param(w2)), t.param(g), t.param(s));
    return weighted(t, softmax_rows(o), 3);
  };
  CHECK(grad_check_params(f, ps) < 1e-5);
}
