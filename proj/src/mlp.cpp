#include "graspflow/mlp.hpp"

#include <cmath>

namespace graspflow {

Mlp::Mlp(const std::string& name, const MlpShape& shape, Rng& rng) : shape_(shape) {
  require(shape.input_dim + shape.context_dim > 0 && shape.output_dim > 0,
          "Mlp: dimensions must be positive");
  std::vector<Index> dims{shape.input_dim + shape.context_dim};
  dims.insert(dims.end(), shape.hidden.begin(), shape.hidden.end());
  dims.push_back(shape.output_dim);
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[i]));
    Layer layer;
    layer.weight.name = name + ".layer" + std::to_string(i) + ".weight";
    layer.bias.name = name + ".layer" + std::to_string(i) + ".bias";
    layer.weight.value.resize(dims[i], dims[i + 1]);
    layer.bias.value.resize(1, dims[i + 1]);
    for (Index r = 0; r < dims[i]; ++r)
      for (Index c = 0; c < dims[i + 1]; ++c) layer.weight.value(r, c) = uniform(rng, -bound, bound);
    for (Index c = 0; c < dims[i + 1]; ++c) layer.bias.value(0, c) = uniform(rng, -bound, bound);
    layers_.push_back(std::move(layer));
  }
}

void Mlp::check_input(Index input_cols, Index context_cols) const {
  if (input_cols != shape_.input_dim)
    throw ContractError("Mlp: input has " + std::to_string(input_cols) + " columns, expected " +
                        std::to_string(shape_.input_dim));
  if (context_cols != shape_.context_dim)
    throw ContractError("Mlp: context has " + std::to_string(context_cols) +
                        " columns, expected " + std::to_string(shape_.context_dim));
}

Var Mlp::run(Tape& tape, Var x) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = matmul(x, tape.param(layers_[i].weight)) + tape.param(layers_[i].bias);
    if (i + 1 < layers_.size() || shape_.output_activation)
      x = shape_.activation == Activation::relu ? relu(x) : tanh(x);
  }
  return x;
}

Var Mlp::forward(Tape& tape, Var input) const {
  check_input(input.cols(), 0);
  return run(tape, input);
}

Var Mlp::forward(Tape& tape, Var input, Var context) const {
  check_input(input.cols(), context.cols());
  return run(tape, concat_cols(input, context));
}

Matrix Mlp::eval(const Matrix& input, const Matrix& context) const {
  check_input(input.cols(), context.cols());
  require_finite(input, "mlp input");
  Matrix x(input.rows(), input.cols() + context.cols());
  x.leftCols(input.cols()) = input;
  if (context.cols() > 0) {
    if (context.rows() == input.rows())
      x.rightCols(context.cols()) = context;
    else if (context.rows() == 1)
      x.rightCols(context.cols()) = context.replicate(input.rows(), 1);
    else
      throw ContractError("Mlp: context rows must match input rows or be 1");
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Matrix y = x * layers_[i].weight.value;
    y.rowwise() += layers_[i].bias.value.row(0);
    if (i + 1 < layers_.size() || shape_.output_activation) {
      if (shape_.activation == Activation::relu)
        y = y.cwiseMax(0.0);
      else
        y = y.array().tanh().matrix();
    }
    x = std::move(y);
  }
  require_finite(x, "mlp output");
  return x;
}

Vector Mlp::eval(const Vector& input, const Vector& context) const {
  Matrix ctx = context.size() ? Matrix(context.transpose()) : Matrix(1, 0);
  return eval(Matrix(input.transpose()), ctx).row(0).transpose();
}

void Mlp::zero_output_layer() {
  layers_.back().weight.value.setZero();
  layers_.back().bias.value.setZero();
}

std::vector<Parameter*> Mlp::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<const Parameter*> Mlp::parameters() const {
  std::vector<const Parameter*> out;
  for (const auto& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

}  // namespace graspflow
