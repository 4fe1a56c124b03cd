#pragma once

#include "graspflow/types.hpp"

#include <functional>
#include <string>
#include <unordered_map>
#include <deque>
#include <vector>

namespace graspflow {

/// A named trainable (or buffer) tensor owned by a module.
struct Parameter {
  std::string name;
  Matrix value;
};

/// Gradient map produced by one backward pass.
class Gradients {
 public:
  /// Gradient for `p`, or a zero matrix of matching shape when `p` was not reached.
  Matrix of(const Parameter& p) const;
  bool reached(const Parameter& p) const { return grads_.count(&p) != 0; }

  void accumulate(const Parameter* p, const Matrix& g);

 private:
  std::unordered_map<const Parameter*, Matrix> grads_;
};

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
};

/// Records one forward evaluation and replays it in reverse.
///
/// The supported op set is deliberately fixed: matmul, broadcasting add/sub/mul,
/// concat/slice on columns, elementwise exp/tanh/relu/square, row sums and means,
/// and the LU weight composition used by invertible linear layers.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Leaf tracking a parameter by reference; the parameter must outlive the tape.
  Var param(const Parameter& p);

  const Matrix& value(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  /// Reverse pass from a 1x1 loss. Valid once per recording.
  Gradients backward(Var loss);

  using BackwardFn = std::function<void(const Matrix& grad_out, Tape& tape)>;
  Var record(Matrix value, BackwardFn backward, const char* op);
  void accumulate(std::size_t id, const Matrix& grad);

 private:
  struct Node {
    Matrix value;
    const Parameter* param = nullptr;
    BackwardFn backward;
  };
  std::deque<Node> nodes_;  // stable references across growth
  std::vector<Matrix> grads_;
  bool consumed_ = false;
};

// Broadcasting binary ops. Each operand may be rows x cols, 1 x cols, rows x 1 or 1 x 1.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator-(Var a);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);

Var matmul(Var a, Var b);
Var concat_cols(Var a, Var b);
Var slice_cols(Var a, Index start, Index count);

Var exp(Var a);
Var tanh(Var a);
Var relu(Var a);
Var square(Var a);
/// log(1 + exp(a)), evaluated without overflow.
Var softplus(Var a);
/// c * tanh(a / c): smooth clamp into (-c, c).
Var soft_clamp(Var a, double bound);

/// Per-row sum: rows x cols -> rows x 1.
Var sum_cols(Var a);
/// Sum of all entries -> 1 x 1.
Var sum(Var a);
/// Mean of all entries -> 1 x 1.
Var mean(Var a);

/// W = P * (I + strict_lower(lower)) * (strict_upper(upper) + diag(sign * exp(log_diag))).
/// `perm[i]` is the row of L*U that lands in row i of W.
Var lu_compose(Var lower, Var upper, Var log_diag, const std::vector<Index>& perm,
               const Vector& sign);

}  // namespace graspflow
