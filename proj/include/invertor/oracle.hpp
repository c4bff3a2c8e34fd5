#pragma once

#include "invertor/dense.hpp"

namespace invertor {

/// Reference inverse by Gauss-Jordan elimination with partial pivoting.
///
/// Independent of every block algorithm in the library and used only to
/// check them (tests, `verify`, the `oracle` CLI method). Throws
/// SingularMatrix when a pivot column's largest candidate is within
/// 1e-14 * order * max|entry|.
DenseMatrix gauss_jordan_oracle(const DenseMatrix& m);

}  // namespace invertor
