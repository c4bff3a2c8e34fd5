#include "invertor/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace invertor {

DenseMatrix gauss_jordan_oracle(const DenseMatrix& m) {
    if (!m.square()) throw DimensionMismatch("gauss_jordan_oracle needs a square matrix");
    const std::size_t n = m.rows();
    DenseMatrix a = m;
    DenseMatrix inv = DenseMatrix::identity(n);
    const double tol = 1e-14 * static_cast<double>(n) * max_abs(m.view());

    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        double best = std::abs(a(col, col));
        for (std::size_t r = col + 1; r < n; ++r) {
            if (std::abs(a(r, col)) > best) {
                best = std::abs(a(r, col));
                piv = r;
            }
        }
        if (!(best > tol)) {
            throw SingularMatrix("no usable pivot in column " + std::to_string(col));
        }
        if (piv != col) {
            for (std::size_t j = 0; j < n; ++j) {
                std::swap(a(col, j), a(piv, j));
                std::swap(inv(col, j), inv(piv, j));
            }
        }
        const double scale = 1.0 / a(col, col);
        for (std::size_t j = 0; j < n; ++j) {
            a(col, j) *= scale;
            inv(col, j) *= scale;
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = a(r, col);
            if (f == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) {
                a(r, j) -= f * a(col, j);
                inv(r, j) -= f * inv(col, j);
            }
        }
    }
    return inv;
}

}  // namespace invertor
