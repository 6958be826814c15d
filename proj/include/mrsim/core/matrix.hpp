#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <string>

#include <Eigen/Core>

#include "mrsim/core/errors.hpp"

namespace mrsim {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

/// Exact product with a fixed summation order: every output element is
/// accumulated over the inner index in ascending order with one rounding per
/// multiply and per add. Results are therefore reproducible bit-for-bit
/// across builds that disable FP contraction.
template <typename DerivedA, typename DerivedB>
MatrixX<typename DerivedA::Scalar> matmul(const Eigen::MatrixBase<DerivedA>& a,
                                          const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: lhs is " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + ", rhs is " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
  const Eigen::Index m = a.rows(), k = a.cols(), n = b.cols();
  MatrixX<Scalar> c = MatrixX<Scalar>::Zero(m, n);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index p = 0; p < k; ++p) {
      const Scalar aip = a(i, p);
      for (Eigen::Index j = 0; j < n; ++j) {
        c(i, j) += aip * b(p, j);
      }
    }
  }
  return c;
}

/// Frobenius-norm relative difference ||a - b|| / max(||b||, tiny).
template <typename DerivedA, typename DerivedB>
double relative_error(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  const double denom = std::max(static_cast<double>(b.norm()), 1e-300);
  return static_cast<double>((a - b).norm()) / denom;
}

// Binary container, little-endian:
//   bytes 0..7   magic "MRSIMMAT"
//   bytes 8..15  rows (uint64)
//   bytes 16..23 cols (uint64)
//   then rows*cols IEEE-754 doubles in row-major order.
void save_matrix_binary(const Matrix& m, const std::filesystem::path& path);
Matrix load_matrix_binary(const std::filesystem::path& path);
std::string encode_matrix_binary(const Matrix& m);
Matrix decode_matrix_binary(const std::string& bytes);

/// Comma-separated, one matrix row per line, values printed with 17
/// significant digits so that a save/load cycle is exact.
void save_matrix_csv(const Matrix& m, const std::filesystem::path& path);
Matrix load_matrix_csv(const std::filesystem::path& path);

} // namespace mrsim
