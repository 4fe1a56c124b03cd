#pragma once

#include "graspflow/tape.hpp"
#include "graspflow/types.hpp"

#include <string>
#include <vector>

namespace graspflow {

enum class Activation { relu, tanh };

struct MlpShape {
  Index input_dim = 0;
  Index context_dim = 0;  // concatenated to the input of the first layer only
  std::vector<Index> hidden;
  Index output_dim = 0;
  Activation activation = Activation::relu;
  bool output_activation = false;  // apply the activation after the last layer too
};

/// Dense feed-forward network. Weights are stored input-major (in x out) so a
/// batch `X` (items x features) maps as `X * W + b`.
class Mlp {
 public:
  struct Layer {
    Parameter weight;
    Parameter bias;
  };

  Mlp() = default;
  Mlp(const std::string& name, const MlpShape& shape, Rng& rng);

  Var forward(Tape& tape, Var input) const;
  Var forward(Tape& tape, Var input, Var context) const;

  /// Tape-free evaluation. `context` may be empty when context_dim is 0, or
  /// a single row broadcast to every item.
  Matrix eval(const Matrix& input, const Matrix& context = Matrix()) const;
  Vector eval(const Vector& input, const Vector& context = Vector()) const;

  void zero_output_layer();

  const MlpShape& shape() const { return shape_; }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

 private:
  Var run(Tape& tape, Var x) const;
  void check_input(Index input_cols, Index context_cols) const;

  MlpShape shape_;
  std::vector<Layer> layers_;
};

/// Convenience collector so modules can append their parameters in declared order.
inline void append(std::vector<Parameter*>& out, std::vector<Parameter*> more) {
  out.insert(out.end(), more.begin(), more.end());
}
inline void append(std::vector<const Parameter*>& out, std::vector<const Parameter*> more) {
  out.insert(out.end(), more.begin(), more.end());
}

}  // namespace graspflow
