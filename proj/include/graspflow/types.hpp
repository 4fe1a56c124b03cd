#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace graspflow {

using Index = Eigen::Index;

// Batch-major dense values: one row per item, one column per feature.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3>;

using Rng = std::mt19937_64;

/// Precondition or shape violation by the caller.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A computation produced (or was handed) a non-finite value.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& term, const std::string& what)
      : std::runtime_error(term + ": " + what), term_(term) {}
  const std::string& term() const noexcept { return term_; }

 private:
  std::string term_;
};

/// Malformed, truncated or incompatible file contents.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dataset or configuration content that cannot be used.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& m, const std::string& term) {
  if (!m.allFinite()) throw NumericError(term, "non-finite value");
}

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractError(message);
}

/// Matrix of independent standard-normal draws.
inline Matrix standard_normal(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  // Fill row by row so the draw order matches item order.
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = normal(rng);
  return m;
}

inline double uniform(Rng& rng, double lo = 0.0, double hi = 1.0) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace graspflow
