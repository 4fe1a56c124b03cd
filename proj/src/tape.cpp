#include "graspflow/tape.hpp"

#include <algorithm>
#include <cmath>

namespace graspflow {

Matrix Gradients::of(const Parameter& p) const {
  auto it = grads_.find(&p);
  if (it == grads_.end()) return Matrix::Zero(p.value.rows(), p.value.cols());
  return it->second;
}

void Gradients::accumulate(const Parameter* p, const Matrix& g) {
  auto [it, inserted] = grads_.try_emplace(p, g);
  if (!inserted) it->second += g;
}

const Matrix& Var::value() const { return tape->value(*this); }

Var Tape::constant(Matrix value) {
  require_finite(value, "constant");
  return record(std::move(value), nullptr, "constant");
}

Var Tape::param(const Parameter& p) {
  require_finite(p.value, p.name);
  nodes_.push_back(Node{Matrix(), &p, nullptr});
  return Var{this, nodes_.size() - 1};
}

const Matrix& Tape::value(Var v) const {
  const Node& n = nodes_[v.id];
  return n.param ? n.param->value : n.value;
}

Var Tape::record(Matrix value, BackwardFn backward, const char* op) {
  require_finite(value, op);
  nodes_.push_back(Node{std::move(value), nullptr, std::move(backward)});
  return Var{this, nodes_.size() - 1};
}

void Tape::accumulate(std::size_t id, const Matrix& grad) {
  Matrix& g = grads_[id];
  if (g.size() == 0)
    g = grad;
  else
    g += grad;
}

Gradients Tape::backward(Var loss) {
  if (consumed_) throw ContractError("backward already called on this tape");
  require(loss.tape == this, "loss was not recorded on this tape");
  require(value(loss).rows() == 1 && value(loss).cols() == 1, "loss must be a scalar");
  consumed_ = true;

  grads_.assign(nodes_.size(), Matrix());
  grads_[loss.id] = Matrix::Ones(1, 1);
  Gradients out;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    if (grads_[i].size() == 0) continue;
    Node& n = nodes_[i];
    Matrix g = std::move(grads_[i]);
    if (n.param)
      out.accumulate(n.param, g);
    else if (n.backward)
      n.backward(g, *this);
  }
  grads_.clear();
  return out;
}

namespace {

Tape& tape_of(Var a, Var b) {
  require(a.tape != nullptr && a.tape == b.tape, "operands recorded on different tapes");
  return *a.tape;
}

Index broadcast_dim(Index a, Index b, const char* op) {
  if (a == b || b == 1) return a;
  if (a == 1) return b;
  throw ContractError(std::string(op) + ": incompatible broadcast shapes");
}

Matrix expand(const Matrix& m, Index rows, Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  return m.replicate(rows / m.rows(), cols / m.cols());
}

// Sum a broadcast gradient back down to the operand's shape.
Matrix reduce_to(const Matrix& g, Index rows, Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  if (rows == 1 && cols == 1) return Matrix::Constant(1, 1, g.sum());
  if (rows == 1) return g.colwise().sum();
  return g.rowwise().sum();
}

enum class Binary { add, sub, mul };

Var binary(Var a, Var b, Binary kind, const char* op) {
  Tape& t = tape_of(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  const Index rows = broadcast_dim(av.rows(), bv.rows(), op);
  const Index cols = broadcast_dim(av.cols(), bv.cols(), op);
  Matrix ae = expand(av, rows, cols);
  Matrix be = expand(bv, rows, cols);
  Matrix out;
  switch (kind) {
    case Binary::add: out = ae + be; break;
    case Binary::sub: out = ae - be; break;
    case Binary::mul: out = ae.cwiseProduct(be); break;
  }
  const Index ar = av.rows(), ac = av.cols(), br = bv.rows(), bc = bv.cols();
  return t.record(
      std::move(out),
      [=](const Matrix& g, Tape& tp) {
        switch (kind) {
          case Binary::add:
            tp.accumulate(a.id, reduce_to(g, ar, ac));
            tp.accumulate(b.id, reduce_to(g, br, bc));
            break;
          case Binary::sub:
            tp.accumulate(a.id, reduce_to(g, ar, ac));
            tp.accumulate(b.id, reduce_to(-g, br, bc));
            break;
          case Binary::mul: {
            const Matrix ga = g.cwiseProduct(expand(tp.value(b), g.rows(), g.cols()));
            const Matrix gb = g.cwiseProduct(expand(tp.value(a), g.rows(), g.cols()));
            tp.accumulate(a.id, reduce_to(ga, ar, ac));
            tp.accumulate(b.id, reduce_to(gb, br, bc));
            break;
          }
        }
      },
      op);
}

}  // namespace

Var add(Var a, Var b) { return binary(a, b, Binary::add, "add"); }
Var sub(Var a, Var b) { return binary(a, b, Binary::sub, "sub"); }
Var mul(Var a, Var b) { return binary(a, b, Binary::mul, "mul"); }
Var operator+(Var a, Var b) { return add(a, b); }
Var operator-(Var a, Var b) { return sub(a, b); }
Var operator-(Var a) { return scale(a, -1.0); }

Var scale(Var a, double factor) {
  return a.tape->record(
      a.value() * factor,
      [=](const Matrix& g, Tape& t) { t.accumulate(a.id, g * factor); }, "scale");
}

Var add_scalar(Var a, double offset) {
  return a.tape->record(
      (a.value().array() + offset).matrix(),
      [=](const Matrix& g, Tape& t) { t.accumulate(a.id, g); }, "add_scalar");
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  return t.record(
      a.value() * b.value(),
      [=](const Matrix& g, Tape& tp) {
        tp.accumulate(a.id, g * tp.value(b).transpose());
        tp.accumulate(b.id, tp.value(a).transpose() * g);
      },
      "matmul");
}

Var concat_cols(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require(a.rows() == b.rows(), "concat_cols: row counts differ");
  const Index ac = a.cols(), bc = b.cols();
  Matrix out(a.rows(), ac + bc);
  out << a.value(), b.value();
  return t.record(
      std::move(out),
      [=](const Matrix& g, Tape& tp) {
        tp.accumulate(a.id, g.leftCols(ac));
        tp.accumulate(b.id, g.rightCols(bc));
      },
      "concat_cols");
}

Var slice_cols(Var a, Index start, Index count) {
  const Index cols = a.cols();
  require(start >= 0 && count >= 0 && start + count <= cols, "slice_cols: out of range");
  const Index rows = a.rows();
  return a.tape->record(
      a.value().middleCols(start, count),
      [=](const Matrix& g, Tape& t) {
        Matrix full = Matrix::Zero(rows, cols);
        full.middleCols(start, count) = g;
        t.accumulate(a.id, full);
      },
      "slice_cols");
}

Var exp(Var a) {
  Matrix out = a.value().array().exp().matrix();
  const std::size_t out_id = a.tape->size();
  return a.tape->record(
      std::move(out),
      [=](const Matrix& g, Tape& t) {
        t.accumulate(a.id, g.cwiseProduct(t.value(Var{&t, out_id})));
      },
      "exp");
}

Var tanh(Var a) {
  Matrix out = a.value().array().tanh().matrix();
  const std::size_t out_id = a.tape->size();
  return a.tape->record(
      std::move(out),
      [=](const Matrix& g, Tape& t) {
        const Matrix& y = t.value(Var{&t, out_id});
        t.accumulate(a.id, (g.array() * (1.0 - y.array().square())).matrix());
      },
      "tanh");
}

Var relu(Var a) {
  return a.tape->record(
      a.value().cwiseMax(0.0),
      [=](const Matrix& g, Tape& t) {
        const Matrix& x = t.value(a);
        t.accumulate(a.id, (x.array() > 0.0).select(g.array(), 0.0).matrix());
      },
      "relu");
}

Var square(Var a) {
  return a.tape->record(
      a.value().array().square().matrix(),
      [=](const Matrix& g, Tape& t) {
        t.accumulate(a.id, (2.0 * g.array() * t.value(a).array()).matrix());
      },
      "square");
}

Var softplus(Var a) {
  const Matrix& x = a.value();
  Matrix out = (x.array().max(0.0) + (-x.array().abs()).exp().log1p()).matrix();
  return a.tape->record(
      std::move(out),
      [=](const Matrix& g, Tape& t) {
        const auto sig = 1.0 / (1.0 + (-t.value(a).array()).exp());
        t.accumulate(a.id, (g.array() * sig).matrix());
      },
      "softplus");
}

Var soft_clamp(Var a, double bound) {
  require(bound > 0.0, "soft_clamp: bound must be positive");
  Matrix th = (a.value().array() / bound).tanh().matrix();
  Matrix out = bound * th;
  return a.tape->record(
      std::move(out),
      [=, th = std::move(th)](const Matrix& g, Tape& t) {
        t.accumulate(a.id, (g.array() * (1.0 - th.array().square())).matrix());
      },
      "soft_clamp");
}

Var sum_cols(Var a) {
  const Index cols = a.cols();
  return a.tape->record(
      a.value().rowwise().sum(),
      [=](const Matrix& g, Tape& t) { t.accumulate(a.id, g.replicate(1, cols)); },
      "sum_cols");
}

Var sum(Var a) {
  const Index rows = a.rows(), cols = a.cols();
  return a.tape->record(
      Matrix::Constant(1, 1, a.value().sum()),
      [=](const Matrix& g, Tape& t) { t.accumulate(a.id, Matrix::Constant(rows, cols, g(0, 0))); },
      "sum");
}

Var mean(Var a) {
  const Index rows = a.rows(), cols = a.cols();
  const double n = static_cast<double>(rows * cols);
  require(n > 0, "mean: empty operand");
  return a.tape->record(
      Matrix::Constant(1, 1, a.value().sum() / n),
      [=](const Matrix& g, Tape& t) {
        t.accumulate(a.id, Matrix::Constant(rows, cols, g(0, 0) / n));
      },
      "mean");
}

Var lu_compose(Var lower, Var upper, Var log_diag, const std::vector<Index>& perm,
               const Vector& sign) {
  Tape& t = *lower.tape;
  const Index d = lower.rows();
  require(lower.cols() == d && upper.rows() == d && upper.cols() == d,
          "lu_compose: factors must be square and equal-sized");
  require(log_diag.rows() == 1 && log_diag.cols() == d, "lu_compose: log_diag must be 1 x d");
  require(static_cast<Index>(perm.size()) == d && sign.size() == d, "lu_compose: perm/sign size");

  Matrix l = lower.value().triangularView<Eigen::StrictlyLower>();
  l.diagonal().setOnes();
  Matrix u = upper.value().triangularView<Eigen::StrictlyUpper>();
  const Vector diag = sign.cwiseProduct(log_diag.value().transpose().array().exp().matrix());
  u.diagonal() = diag;
  const Matrix lu = l * u;
  Matrix w(d, d);
  for (Index i = 0; i < d; ++i) w.row(i) = lu.row(perm[i]);

  return t.record(
      std::move(w),
      [=, l = std::move(l), u = std::move(u)](const Matrix& g, Tape& tp) {
        // Undo the row permutation, then differentiate through L*U.
        Matrix g_lu(d, d);
        for (Index i = 0; i < d; ++i) g_lu.row(perm[i]) = g.row(i);
        Matrix gl = (g_lu * u.transpose()).triangularView<Eigen::StrictlyLower>();
        const Matrix gu_full = l.transpose() * g_lu;
        Matrix gu = gu_full.triangularView<Eigen::StrictlyUpper>();
        Matrix gd = gu_full.diagonal().cwiseProduct(diag).transpose();
        tp.accumulate(lower.id, gl);
        tp.accumulate(upper.id, gu);
        tp.accumulate(log_diag.id, gd);
      },
      "lu_compose");
}

}  // namespace graspflow
