// Tape-based reverse-mode differentiation over dense row-major float64
// matrices. Sequences are stacked time-major ([T * B x features], row
// t * B + b), so only recurrent steps need per-step nodes.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "tipcast/matrix.hpp"
#include "tipcast/rng.hpp"

namespace tipcast::ad {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
};

/// Owns named parameters with stable addresses, in registration order.
class ParameterSet {
 public:
  Parameter& add(const std::string& name, std::size_t rows, std::size_t cols);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

  void zero_grad();
  std::size_t scalar_count() const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  std::size_t rows() const { return value().rows; }
  std::size_t cols() const { return value().cols; }
};

class Tape {
 public:
  /// Backward callback: receives the output gradient and accumulates into the
  /// gradients of the node's inputs (allocated and zeroed on demand).
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(bool train = false, Rng* dropout_rng = nullptr)
      : train_(train), rng_(dropout_rng) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool train() const { return train_; }
  Rng* rng() const { return rng_; }

  Var constant(Matrix value);
  /// Leaf bound to a parameter; repeated calls return the same node.
  Var param(Parameter& p);
  Var record(Matrix value, std::vector<std::size_t> inputs, BackwardFn backward);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  /// Gradient of the last backward() target with respect to node `id`; an
  /// all-zero matrix when the node did not influence it.
  Matrix grad(std::size_t id) const;
  Matrix grad(Var v) const { return grad(v.id); }

  /// Gradient buffer of node `id`, zero-initialized on first access.
  Matrix& grad_buffer(std::size_t id);
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }
  const Matrix& out_grad(std::size_t id) const { return nodes_[id].grad; }

  /// Reverse sweep from a 1 x 1 node. Node gradients are reset first;
  /// parameter gradients are accumulated (call ParameterSet::zero_grad()).
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
  };
  std::vector<Node> nodes_;
  std::unordered_map<Parameter*, std::size_t> param_nodes_;
  bool train_;
  Rng* rng_;
};

// Primitives. Shape errors name both operand shapes.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
/// a [m x n] + row [1 x n] broadcast over rows.
Var add_row(Var a, Var row);
/// x W + b with b a [1 x out] row.
Var affine(Var x, Var w, Var b);
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
/// Stacks `times` copies of a vertically.
Var tile_rows(Var a, std::size_t times);
/// a [m x n] with row i scaled by w(i, 0), w [m x 1].
Var scale_rows(Var a, Var w);
Var sum(Var a);
Var mean(Var a);
Var sum_rows(Var a);  // [m x n] -> [1 x n]
Var sum_cols(Var a);  // [m x n] -> [m x 1]
Var sigmoid(Var a);
Var tanh(Var a);
Var elu(Var a);
Var abs(Var a);
Var square(Var a);
/// Row-wise softmax; -inf entries receive zero weight.
Var softmax_rows(Var a);
/// Row-wise layer normalization (population variance) with [1 x n] gain/shift.
Var layer_norm_rows(Var a, Var gain, Var shift, double eps = 1e-5);
/// Gated linear unit a * sigmoid(b).
Var glu(Var a, Var b);
/// Inverted dropout in train mode, exact identity otherwise.
Var dropout(Var a, double p);

/// Central2 is (f(x + eps) - f(x - eps)) / (2 eps); Central4 is the
/// five-point stencil, whose O(eps^4) truncation lets a larger eps stay clear
/// of roundoff on deep graphs with very small gradient entries.
enum class Stencil { Central2, Central4 };

/// Finite-difference check of d f / d x: returns max |fd - analytic| /
/// (|analytic| + 1e-8) over all entries. f must return a 1 x 1 node.
double grad_check(const std::function<Var(Tape&, Var)>& f, const Matrix& x, double eps = 1e-6,
                  Stencil stencil = Stencil::Central2);

/// Same check with respect to every entry of every parameter in `params`.
double grad_check_params(const std::function<Var(Tape&)>& f, ParameterSet& params, double eps = 1e-6,
                         Stencil stencil = Stencil::Central2);

}  // namespace tipcast::ad
