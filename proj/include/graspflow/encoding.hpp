#pragma once

#include "graspflow/types.hpp"

#include <numbers>

namespace graspflow {

/// Fourier features per row: [v, sin(2^0 pi v), cos(2^0 pi v), ..., sin(2^(L-1) pi v),
/// cos(2^(L-1) pi v)]. Output has (2L + 1) * cols columns; L = 0 returns the input.
template <typename Derived>
Matrix positional_encode(const Eigen::MatrixBase<Derived>& rows, int bands) {
  require(bands >= 0, "positional_encode: bands must be non-negative");
  require_finite(rows, "positional_encode input");
  const Index n = rows.cols();
  Matrix out(rows.rows(), (2 * bands + 1) * n);
  out.leftCols(n) = rows;
  double freq = std::numbers::pi;
  for (int k = 0; k < bands; ++k, freq *= 2.0) {
    out.middleCols((2 * k + 1) * n, n) = (freq * rows.array()).sin().matrix();
    out.middleCols((2 * k + 2) * n, n) = (freq * rows.array()).cos().matrix();
  }
  return out;
}

inline Vector positional_encode(const Vector& v, int bands) {
  return positional_encode(v.transpose(), bands).row(0).transpose();
}

}  // namespace graspflow
