#include "tipcast/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tipcast/error.hpp"
#include "tipcast/kernels.hpp"

namespace tipcast::ad {

namespace {

std::string shape_of(const Matrix& m) {
  return "[" + std::to_string(m.rows) + " x " + std::to_string(m.cols) + "]";
}

[[noreturn]] void shape_fail(const char* op, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_of(a) + " and " + shape_of(b));
}

void require_same(const char* op, const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows || a.cols != b.cols) shape_fail(op, a, b);
}

void require_same_tape(Var a, Var b) {
  if (a.tape != b.tape || a.tape == nullptr) throw InvalidArgument("operands live on different tapes");
}

// Elementwise unary op: value fn f(x), derivative expressed from (x, y).
template <typename F, typename D>
Var unary(Var a, F f, D df) {
  const Matrix& x = a.value();
  Matrix y(x.rows, x.cols);
  for (std::size_t i = 0; i < x.data.size(); ++i) y.data[i] = f(x.data[i]);
  const std::size_t ia = a.id;
  return a.tape->record(std::move(y), {ia}, [ia, df](Tape& t, std::size_t self) {
    const Matrix& g = t.out_grad(self);
    const Matrix& x = t.value(ia);
    const Matrix& y = t.value(self);
    Matrix& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * df(x.data[i], y.data[i]);
  });
}

}  // namespace

// ---------------------------------------------------------------- parameters

Parameter& ParameterSet::add(const std::string& name, std::size_t rows, std::size_t cols) {
  if (index_.count(name) != 0) throw InvalidArgument("duplicate parameter name '" + name + "'");
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = Matrix(rows, cols);
  p->grad = Matrix(rows, cols);
  index_[name] = params_.size();
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter& ParameterSet::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
  return *params_[it->second];
}

const Parameter& ParameterSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
  return *params_[it->second];
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0);
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.data.size();
  return n;
}

// ---------------------------------------------------------------------- tape

const Matrix& Var::value() const { return tape->value(id); }

Var Tape::constant(Matrix value) { return record(std::move(value), {}, nullptr); }

Var Tape::param(Parameter& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return {this, it->second};
  Var v = record(p.value, {}, nullptr);
  nodes_[v.id].param = &p;
  param_nodes_[&p] = v.id;
  return v;
}

Var Tape::record(Matrix value, std::vector<std::size_t> inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.inputs = std::move(inputs);
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Matrix Tape::grad(std::size_t id) const {
  const Node& n = nodes_.at(id);
  if (n.grad.data.empty() && !n.value.data.empty()) return Matrix(n.value.rows, n.value.cols);
  return n.grad;
}

Matrix& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.rows != n.value.rows || n.grad.cols != n.value.cols || n.grad.data.empty()) {
    n.grad = Matrix(n.value.rows, n.value.cols);
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw InvalidArgument("loss node belongs to another tape");
  const Matrix& lv = nodes_.at(loss.id).value;
  if (lv.rows != 1 || lv.cols != 1) {
    throw ShapeError("backward needs a scalar loss, got " + shape_of(lv));
  }
  for (auto& n : nodes_) n.grad = Matrix();
  grad_buffer(loss.id).data[0] = 1.0;
  for (std::size_t k = loss.id + 1; k-- > 0;) {
    Node& n = nodes_[k];
    if (n.grad.data.empty()) continue;
    if (n.backward) n.backward(*this, k);
    if (n.param != nullptr) kernels::axpy(1.0, n.grad.data.data(), n.param->grad.data.data(), n.grad.data.size());
  }
}

// ---------------------------------------------------------------- primitives

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  const Matrix& A = a.value();
  const Matrix& B = b.value();
  if (A.cols != B.rows) shape_fail("matmul", A, B);
  Matrix C(A.rows, B.cols);
  kernels::gemm_nn(A.data.data(), B.data.data(), C.data.data(), A.rows, A.cols, B.cols);
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(C), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.out_grad(self);
    const Matrix& A = t.value(ia);
    const Matrix& B = t.value(ib);
    kernels::gemm_nt(g.data.data(), B.data.data(), t.grad_buffer(ia).data.data(), A.rows, B.cols,
                     A.cols, true);
    kernels::gemm_tn(A.data.data(), g.data.data(), t.grad_buffer(ib).data.data(), A.rows, A.cols,
                     B.cols, true);
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  const Matrix& A = a.value();
  const Matrix& B = b.value();
  require_same("add", A, B);
  Matrix C = A;
  for (std::size_t i = 0; i < C.data.size(); ++i) C.data[i] += B.data[i];
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(C), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.out_grad(self);
    kernels::axpy(1.0, g.data.data(), t.grad_buffer(ia).data.data(), g.data.size());
    kernels::axpy(1.0, g.data.data(), t.grad_buffer(ib).data.data(), g.data.size());
  });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  const Matrix& A = a.value();
  const Matrix& B = b.value();
  require_same("sub", A, B);
  Matrix C = A;
  for (std::size_t i = 0; i < C.data.size(); ++i) C.data[i] -= B.data[i];
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(C), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.out_grad(self);
    kernels::axpy(1.0, g.data.data(), t.grad_buffer(ia).data.data(), g.data.size());
    kernels::axpy(-1.0, g.data.data(), t.grad_buffer(ib).data.data(), g.data.size());
  });
}

Var hadamard(Var a, Var b) {
  require_same_tape(a, b);
  const Matrix& A = a.value();
  const Matrix& B = b.value();
  require_same("hadamard", A, B);
  Matrix C = A;
  for (std::size_t i = 0; i < C.data.size(); ++i) C.data[i] *= B.data[i];
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(C), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.out_grad(self);
    const Matrix& A = t.value(ia);
    const Matrix& B = t.value(ib);
    Matrix& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * B.data[i];
    Matrix& gb = t.grad_buffer(ib);
    for (std::size_t i = 0; i < g.data.size(); ++i) gb.data[i] += g.data[i] * A.data[i];
  });
}

Var scale(Var a, double s) {
  Matrix C = a.value();
  for (double& v : C.data) v *= s;
  const std::size_t ia = a.id;
  return a.tape->record(std::move(C), {ia}, [ia, s](Tape& t, std::size_t self) {
    const Matrix& g = t.out_grad(self);
    kernels::axpy(s, g.data.data(), t.grad_buffer(ia).data.data(), g.data.size());
  });
}

Var add_scalar(Var a, double s) {
  Matrix C = a.value();
  for (double& v : C.data) v += s;
  const std::size_t ia = a.id;
  return a.tape->record(std::move(C), {ia}, [ia](Tape& t, std::size_t self) {
    const Matrix& g = t.out_grad(self);
    kernels::axpy(1.0, g.data.data(), t.grad_buffer(ia).data.data(), g.data.size());
  });
}

Var add_row(Var a, Var row) {
  require_same_tape(a, row);
  const Matrix& A = a.value();
  const Matrix& R = row.value();
  if (R.rows != 1 || R.cols != A.cols) shape_fail("add_row", A, R);
  Matrix C = A;
  for (std::size_t r = 0; r < C.rows; ++r) {
    for (std::size_t c = 0; c < C.cols; ++c) C(r, c) += R.data[c];
  }
  const std::size_t ia = a.id, ir = row.id;
  return a.tape->record(std::move(C), {ia, ir}, [ia, ir](Tape& t, std::size_t self) {
    const Matrix& g = t.out_grad(self);
    kernels::axpy(1.0, g.data.data(), t.grad_buffer(ia).data.data(), g.data.size());
    Matrix& gr = t.grad_buffer(ir);
    for (std::size_t r = 0; r < g.rows; ++r) kernels::axpy(1.0, g.row(r).data(), gr.data.data(), g.cols);
  });
}

Var affine(Var x, Var w, Var b) {
  require_same_tape(x, w);
  require_same_tape(x, b);
  const Matrix& X = x.value();
  const Matrix& W = w.value();
  const Matrix& B = b.value();
  if (X.cols != W.rows) shape_fail("affine", X, W);
  if (B.rows != 1 || B.cols != W.cols) shape_fail("affine bias", W, B);
  Matrix C(X.rows, W.cols);
  for (std::size_t r = 0; r < C.rows; ++r) std::copy(B.data.begin(), B.data.end(), C.row(r).begin());
  kernels::gemm_nn(X.data.data(), W.data.data(), C.data.data(), X.rows, X.cols, W.cols, true);
  const std::size_t ix = x.id, iw = w.id, ib = b.id;
  return x.tape->record(std::move(C), {ix, iw, ib}, [ix, iw, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.out_grad(self);
    const Matrix& X = t.value(ix);
    const Matrix& W = t.value(iw);
    kernels::gemm_nt(g.data.data(), W.data.data(), t.grad_buffer(ix).data.data(), X.rows, W.cols,
                     X.cols, true);
    kernels::gemm_tn(X.data.data(), g.data.data(), t.grad_buffer(iw).data.data(), X.rows, X.cols,
                     W.cols, true);
    Matrix& gb = t.grad_buffer(ib);
    for (std::size_t r = 0; r < g.rows; ++r) kernels::axpy(1.0, g.row(r).data(), gb.data.data(), g.cols);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw InvalidArgument("concat_cols of nothing");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    require_same_tape(parts[0], p);
    if (p.rows() != rows) shape_fail("concat_cols", parts[0].value(), p.value());
    cols += p.cols();
    ids.push_back(p.id);
  }
  Matrix C(rows, cols);
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Matrix& P = p.value();
    for (std::size_t r = 0; r < rows; ++r) std::copy(P.row(r).begin(), P.row(r).end(), C.row(r).begin() + off);
    off += P.cols;
  }
  std::vector<std::size_t> inputs = ids;
  return parts[0].tape->record(std::move(C), std::move(inputs), [ids](Tape& t, std::size_t self) {
    const Matrix& g = t.out_grad(self);
    std::size_t off = 0;
    for (std::size_t id : ids) {
      Matrix& gp = t.grad_buffer(id);
      for (std::size_t r = 0; r < g.rows; ++r) {
        const double* src = g.row(r).data() + off;
        for (std::size_t c = 0; c < gp.cols; ++c) gp(r, c) += src[c];
      }
      off += gp.cols;
    }
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Matrix& A = a.value();
  if (begin + count > A.cols || count == 0) {
    throw ShapeError("slice_cols [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of range for " + shape_of(A));
  }
  Matrix C(A.rows, count);
  for (std::size_t r = 0; r < A.rows; ++r) {
    std::copy_n(A.row(r).begin() + begin, count, C.row(r).begin());
  }
  const std::size_t ia = a.id;
  return a.tape->record(std::move(C), {ia}, [ia, begin](Tape& t, std::size_t self) {
    const Matrix& g = t.out_grad(self);
    Matrix& ga = t.grad_buffer(ia);
    for (std::size_t r = 0; r < g.rows; ++r) {
      double* dst = ga.row(r).data() + begin;
      for (std::size_t c = 0; c < g.cols; ++c) dst[c] += g(r, c);
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw InvalidArgument("concat_rows of nothing");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    require_same_tape(parts[0], p);
    if (p.cols() != cols) shape_fail("concat_rows", parts[0].value(), p.value());
    rows += p.rows();
    ids.push_back(p.id);
  }
  Matrix C(rows, cols);
  auto out = C.data.begin();
  for (const Var& p : parts) out = std::copy(p.value().data.begin(), p.value().data.end(), out);
  std::vector<std::size_t> inputs = ids;
  return parts[0].tape->record(std::move(C), std::move(inputs), [ids](Tape& t, std::size_t self) {
    const Matrix& g = t.out_grad(self);
    std::size_t off = 0;
    for (std::size_t id : ids) {
      Matrix& gp = t.grad_buffer(id);
      kernels::axpy(1.0, g.data.data() + off, gp.data.data(), gp.data.size());
      off += gp.data.size();
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Matrix& A = a.value();
  if (begin + count > A.rows || count == 0) {
    throw ShapeError("slice_rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of range for " + shape_of(A));
  }
  Matrix C(count, A.cols);
  std::copy_n(A.data.begin() + static_cast<std::ptrdiff_t>(begin * A.cols), count * A.cols, C.data.begin());
  const std::size_t ia = a.id;
  return a.tape->record(std::move(C), {ia}, [ia, begin](Tape& t, std::size_t self) {
    const Matrix& g = t.out_grad(self);
    Matrix& ga = t.grad_buffer(ia);
    kernels::axpy(1.0, g.data.data(), ga.data.data() + begin * ga.cols, g.data.size());
  });
}

Var tile_rows(Var a, std::size_t times) {
  if (times == 0) throw InvalidArgument("tile_rows needs at least one copy");
  const Matrix& A = a.value();
  Matrix C(A.rows * times, A.cols);
  for (std::size_t k = 0; k < times; ++k) {
    std::copy(A.data.begin(), A.data.end(), C.data.begin() + static_cast<std::ptrdiff_t>(k * A.data.size()));
  }
  const std::size_t ia = a.id;
  return a.tape->record(std::move(C), {ia}, [ia, times](Tape& t, std::size_t self) {
    const Matrix& g = t.out_grad(self);
    Matrix& ga = t.grad_buffer(ia);
    const std::size_t n = ga.data.size();
    for (std::size_t k = 0; k < times; ++k) kernels::axpy(1.0, g.data.data() + k * n, ga.data.data(), n);
  });
}

Var scale_rows(Var a, Var w) {
  require_same_tape(a, w);
  const Matrix& A = a.value();
  const Matrix& W = w.value();
  if (W.rows != A.rows || W.cols != 1) shape_fail("scale_rows", A, W);
  Matrix C = A;
  for (std::size_t r = 0; r < C.rows; ++r) {
    for (double& v : C.row(r)) v *= W.data[r];
  }
  const std::size_t ia = a.id, iw = w.id;
  return a.tape->record(std::move(C), {ia, iw}, [ia, iw](Tape& t, std::size_t self) {
    const Matrix& g = t.out_grad(self);
    const Matrix& A = t.value(ia);
    const Matrix& W = t.value(iw);
    Matrix& ga = t.grad_buffer(ia);
    Matrix& gw = t.grad_buffer(iw);
    for (std::size_t r = 0; r < g.rows; ++r) {
      kernels::axpy(W.data[r], g.row(r).data(), ga.row(r).data(), g.cols);
      gw.data[r] += kernels::dot(g.row(r).data(), A.row(r).data(), g.cols);
    }
  });
}

Var sum(Var a) {
  const Matrix& A = a.value();
  Matrix C(1, 1);
  for (double v : A.data) C.data[0] += v;
  const std::size_t ia = a.id;
  return a.tape->record(std::move(C), {ia}, [ia](Tape& t, std::size_t self) {
    const double g = t.out_grad(self).data[0];
    for (double& v : t.grad_buffer(ia).data) v += g;
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().data.size());
  if (n == 0) throw InvalidArgument("mean of an empty tensor");
  return scale(sum(a), 1.0 / n);
}

Var sum_rows(Var a) {
  const Matrix& A = a.value();
  Matrix C(1, A.cols);
  for (std::size_t r = 0; r < A.rows; ++r) kernels::axpy(1.0, A.row(r).data(), C.data.data(), A.cols);
  const std::size_t ia = a.id;
  return a.tape->record(std::move(C), {ia}, [ia](Tape& t, std::size_t self) {
    const Matrix& g = t.out_grad(self);
    Matrix& ga = t.grad_buffer(ia);
    for (std::size_t r = 0; r < ga.rows; ++r) kernels::axpy(1.0, g.data.data(), ga.row(r).data(), ga.cols);
  });
}

Var sum_cols(Var a) {
  const Matrix& A = a.value();
  Matrix C(A.rows, 1);
  for (std::size_t r = 0; r < A.rows; ++r) {
    for (double v : A.row(r)) C.data[r] += v;
  }
  const std::size_t ia = a.id;
  return a.tape->record(std::move(C), {ia}, [ia](Tape& t, std::size_t self) {
    const Matrix& g = t.out_grad(self);
    Matrix& ga = t.grad_buffer(ia);
    for (std::size_t r = 0; r < ga.rows; ++r) {
      for (double& v : ga.row(r)) v += g.data[r];
    }
  });
}

Var sigmoid(Var a) {
  return unary(
      a,
      [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var elu(Var a) {
  return unary(
      a, [](double x) { return x > 0 ? x : std::expm1(x); },
      [](double x, double y) { return x > 0 ? 1.0 : y + 1.0; });
}

Var abs(Var a) {
  return unary(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var softmax_rows(Var a) {
  const Matrix& A = a.value();
  Matrix C(A.rows, A.cols);
  for (std::size_t r = 0; r < A.rows; ++r) {
    const auto in = A.row(r);
    auto out = C.row(r);
    const double m = *std::max_element(in.begin(), in.end());
    if (!std::isfinite(m)) throw NumericalError("softmax row " + std::to_string(r) + " has no finite logit");
    double s = 0.0;
    for (std::size_t c = 0; c < A.cols; ++c) {
      out[c] = std::exp(in[c] - m);
      s += out[c];
    }
    for (double& v : out) v /= s;
  }
  const std::size_t ia = a.id;
  return a.tape->record(std::move(C), {ia}, [ia](Tape& t, std::size_t self) {
    const Matrix& g = t.out_grad(self);
    const Matrix& y = t.value(self);
    Matrix& ga = t.grad_buffer(ia);
    for (std::size_t r = 0; r < g.rows; ++r) {
      const double dot = kernels::dot(g.row(r).data(), y.row(r).data(), g.cols);
      for (std::size_t c = 0; c < g.cols; ++c) ga(r, c) += y(r, c) * (g(r, c) - dot);
    }
  });
}

Var layer_norm_rows(Var a, Var gain, Var shift, double eps) {
  require_same_tape(a, gain);
  require_same_tape(a, shift);
  const Matrix& A = a.value();
  const Matrix& G = gain.value();
  const Matrix& B = shift.value();
  if (G.rows != 1 || G.cols != A.cols) shape_fail("layer_norm gain", A, G);
  if (B.rows != 1 || B.cols != A.cols) shape_fail("layer_norm shift", A, B);
  const std::size_t n = A.cols;
  Matrix xhat(A.rows, n);
  std::vector<double> inv_std(A.rows);
  Matrix C(A.rows, n);
  for (std::size_t r = 0; r < A.rows; ++r) {
    const auto x = A.row(r);
    double mu = 0.0;
    for (double v : x) mu += v;
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (double v : x) var += (v - mu) * (v - mu);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) {
      xhat(r, c) = (x[c] - mu) * inv_std[r];
      C(r, c) = xhat(r, c) * G.data[c] + B.data[c];
    }
  }
  const std::size_t ia = a.id, ig = gain.id, ib = shift.id;
  return a.tape->record(
      std::move(C), {ia, ig, ib},
      [ia, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, std::size_t self) {
        const Matrix& g = t.out_grad(self);
        const Matrix& G = t.value(ig);
        Matrix& ga = t.grad_buffer(ia);
        Matrix& gg = t.grad_buffer(ig);
        Matrix& gb = t.grad_buffer(ib);
        const std::size_t n = g.cols;
        std::vector<double> dxhat(n);
        for (std::size_t r = 0; r < g.rows; ++r) {
          double m1 = 0.0, m2 = 0.0;
          for (std::size_t c = 0; c < n; ++c) {
            dxhat[c] = g(r, c) * G.data[c];
            m1 += dxhat[c];
            m2 += dxhat[c] * xhat(r, c);
            gg.data[c] += g(r, c) * xhat(r, c);
            gb.data[c] += g(r, c);
          }
          m1 /= static_cast<double>(n);
          m2 /= static_cast<double>(n);
          for (std::size_t c = 0; c < n; ++c) ga(r, c) += inv_std[r] * (dxhat[c] - m1 - xhat(r, c) * m2);
        }
      });
}

Var glu(Var a, Var b) { return hadamard(a, sigmoid(b)); }

Var dropout(Var a, double p) {
  if (!(p >= 0.0 && p < 1.0)) throw InvalidArgument("dropout rate must lie in [0, 1)");
  Tape& tape = *a.tape;
  if (!tape.train() || p == 0.0) return a;
  if (tape.rng() == nullptr) throw InvalidArgument("train-mode dropout needs an RNG");
  const Matrix& A = a.value();
  Matrix mask(A.rows, A.cols);
  const double keep = 1.0 / (1.0 - p);
  for (double& m : mask.data) m = tape.rng()->uniform() < p ? 0.0 : keep;
  Matrix C = A;
  for (std::size_t i = 0; i < C.data.size(); ++i) C.data[i] *= mask.data[i];
  const std::size_t ia = a.id;
  return tape.record(std::move(C), {ia}, [ia, mask = std::move(mask)](Tape& t, std::size_t self) {
    const Matrix& g = t.out_grad(self);
    Matrix& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * mask.data[i];
  });
}

// ---------------------------------------------------------------- grad check

namespace {

// Derivative of eval along one coordinate; `set(v)` writes the probe value.
double finite_difference(const std::function<double()>& eval, const std::function<void(double)>& set,
                         double x0, double eps, Stencil stencil) {
  auto at = [&](double v) {
    set(v);
    return eval();
  };
  double fd = 0.0;
  if (stencil == Stencil::Central2) {
    fd = (at(x0 + eps) - at(x0 - eps)) / (2.0 * eps);
  } else {
    fd = (-at(x0 + 2.0 * eps) + 8.0 * at(x0 + eps) - 8.0 * at(x0 - eps) + at(x0 - 2.0 * eps)) / (12.0 * eps);
  }
  set(x0);
  return fd;
}

double rel_err(double fd, double analytic) { return std::abs(fd - analytic) / (std::abs(analytic) + 1e-8); }

}  // namespace

double grad_check(const std::function<Var(Tape&, Var)>& f, const Matrix& x, double eps, Stencil stencil) {
  Matrix analytic;
  {
    Tape tape;
    Var xv = tape.constant(x);
    Var loss = f(tape, xv);
    tape.backward(loss);
    analytic = tape.grad(xv);
  }
  Matrix probe = x;
  auto eval = [&] {
    Tape tape;
    return f(tape, tape.constant(probe)).value().data[0];
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const double fd = finite_difference(eval, [&](double v) { probe.data[i] = v; }, x.data[i], eps, stencil);
    worst = std::max(worst, rel_err(fd, analytic.data[i]));
  }
  return worst;
}

double grad_check_params(const std::function<Var(Tape&)>& f, ParameterSet& params, double eps, Stencil stencil) {
  params.zero_grad();
  {
    Tape tape;
    tape.backward(f(tape));
  }
  auto eval = [&] {
    Tape tape;
    return f(tape).value().data[0];
  };
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = params[k];
    for (std::size_t i = 0; i < p.value.data.size(); ++i) {
      const double fd = finite_difference(eval, [&](double v) { p.value.data[i] = v; }, p.value.data[i], eps, stencil);
      worst = std::max(worst, rel_err(fd, p.grad.data[i]));
    }
  }
  return worst;
}

}  // namespace tipcast::ad
