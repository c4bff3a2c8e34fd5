#include "invertor/dense.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <string>

namespace invertor {

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
    if (rows == 0 || cols == 0) throw InvalidOrder("matrix dimensions must be positive");
}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (rows == 0 || cols == 0) throw InvalidOrder("matrix dimensions must be positive");
    if (data_.size() != rows * cols) {
        throw DimensionMismatch("data length " + std::to_string(data_.size()) + " != " +
                                std::to_string(rows) + "x" + std::to_string(cols));
    }
}

DenseMatrix::DenseMatrix(ConstMatrixView v) : DenseMatrix(v.rows(), v.cols()) {
    copy(v, view());
}

DenseMatrix DenseMatrix::identity(std::size_t order) {
    DenseMatrix m(order, order);
    for (std::size_t i = 0; i < order; ++i) m(i, i) = 1.0;
    return m;
}

bool DenseMatrix::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

bool DenseMatrix::bitwise_equal(const DenseMatrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_ &&
           std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0;
}

bool overlaps(ConstMatrixView a, ConstMatrixView b) noexcept {
    if (a.empty() || b.empty()) return false;
    const double* a_lo = a.data();
    const double* a_hi = a.data() + (a.rows() - 1) * a.stride() + a.cols();
    const double* b_lo = b.data();
    const double* b_hi = b.data() + (b.rows() - 1) * b.stride() + b.cols();
    if (a_hi <= b_lo || b_hi <= a_lo) return false;
    if (a.stride() != b.stride()) return true;

    // Same parent layout: compare the rectangles.
    const auto stride = static_cast<std::ptrdiff_t>(a.stride());
    const std::ptrdiff_t d = b_lo - a_lo;
    std::ptrdiff_t row = d / stride;
    std::ptrdiff_t col = d % stride;
    if (col < 0) {
        col += stride;
        --row;
    }
    const auto ar = static_cast<std::ptrdiff_t>(a.rows());
    const auto ac = static_cast<std::ptrdiff_t>(a.cols());
    const auto br = static_cast<std::ptrdiff_t>(b.rows());
    const auto bc = static_cast<std::ptrdiff_t>(b.cols());
    const bool rows_meet = row < ar && row + br > 0;
    const bool cols_meet = col < ac && col + bc > 0;
    return rows_meet && cols_meet;
}

void copy(ConstMatrixView src, MatrixView dst) {
    if (src.rows() != dst.rows() || src.cols() != dst.cols()) {
        throw DimensionMismatch("copy between differently shaped views");
    }
    for (std::size_t i = 0; i < src.rows(); ++i) {
        std::copy_n(src.row(i), src.cols(), dst.row(i));
    }
}

void fill(MatrixView dst, double value) {
    for (std::size_t i = 0; i < dst.rows(); ++i) std::fill_n(dst.row(i), dst.cols(), value);
}

void set_identity(MatrixView dst) {
    fill(dst, 0.0);
    for (std::size_t i = 0; i < std::min(dst.rows(), dst.cols()); ++i) dst(i, i) = 1.0;
}

void multiply(ConstMatrixView a, ConstMatrixView b, MatrixView out, bool accumulate, bool negate) {
    if (a.cols() != b.rows() || out.rows() != a.rows() || out.cols() != b.cols()) {
        throw DimensionMismatch("multiply: (" + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + ")*(" + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ") -> (" + std::to_string(out.rows()) +
                                "x" + std::to_string(out.cols()) + ")");
    }
    assert(!overlaps(out, a) && !overlaps(out, b));

    const std::size_t inner = a.cols();
    const std::size_t m = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* o = out.row(i);
        const double* ar = a.row(i);
        std::size_t p = 0;
        if (!accumulate) {
            if (inner == 0) {
                std::fill_n(o, m, 0.0);
                continue;
            }
            const double f = negate ? -ar[0] : ar[0];
            const double* br = b.row(0);
            for (std::size_t j = 0; j < m; ++j) o[j] = f * br[j];
            p = 1;
        }
        for (; p < inner; ++p) {
            const double f = negate ? -ar[p] : ar[p];
            const double* br = b.row(p);
            for (std::size_t j = 0; j < m; ++j) o[j] += f * br[j];
        }
    }
}

void multiply_inplace_left(ConstMatrixView a_inv, MatrixView target, std::span<double> row_scratch,
                           bool negate) {
    const std::size_t n = target.rows();
    if (!a_inv.square() || a_inv.rows() != n) {
        throw DimensionMismatch("multiply_inplace_left: left factor must be square of order " +
                                std::to_string(n));
    }
    if (row_scratch.size() < n) {
        throw ScratchTooSmall("multiply_inplace_left needs " + std::to_string(n) + " scalars, got " +
                              std::to_string(row_scratch.size()));
    }
    assert(!overlaps(a_inv, target));
    if (n == 0) return;

    // Column at a time; each element accumulates over p ascending exactly as
    // `multiply` does, so results match it bit for bit.
    for (std::size_t j = 0; j < target.cols(); ++j) {
        for (std::size_t i = 0; i < n; ++i) {
            const double* ar = a_inv.row(i);
            double s = (negate ? -ar[0] : ar[0]) * target(0, j);
            for (std::size_t p = 1; p < n; ++p) s += (negate ? -ar[p] : ar[p]) * target(p, j);
            row_scratch[i] = s;
        }
        for (std::size_t i = 0; i < n; ++i) target(i, j) = row_scratch[i];
    }
}

void multiply_inplace_right(MatrixView target, ConstMatrixView b, std::span<double> row_scratch,
                            bool negate) {
    const std::size_t n = target.cols();
    if (!b.square() || b.rows() != n) {
        throw DimensionMismatch("multiply_inplace_right: right factor must be square of order " +
                                std::to_string(n));
    }
    if (row_scratch.size() < n) {
        throw ScratchTooSmall("multiply_inplace_right needs " + std::to_string(n) +
                              " scalars, got " + std::to_string(row_scratch.size()));
    }
    assert(!overlaps(b, target));
    if (n == 0) return;

    double* s = row_scratch.data();
    for (std::size_t i = 0; i < target.rows(); ++i) {
        double* t = target.row(i);
        {
            const double f = negate ? -t[0] : t[0];
            const double* br = b.row(0);
            for (std::size_t j = 0; j < n; ++j) s[j] = f * br[j];
        }
        for (std::size_t p = 1; p < n; ++p) {
            const double f = negate ? -t[p] : t[p];
            const double* br = b.row(p);
            for (std::size_t j = 0; j < n; ++j) s[j] += f * br[j];
        }
        std::copy_n(s, n, t);
    }
}

double singular_threshold(std::size_t order, double max_abs) noexcept {
    const auto n = static_cast<double>(order);
    return 1e-12 * n * n * std::pow(max_abs, n);
}

double max_abs(ConstMatrixView m) noexcept {
    double best = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) best = std::max(best, std::abs(m(i, j)));
    }
    return best;
}

namespace {

using Mat2 = std::array<double, 4>;

Mat2 mul2(const Mat2& x, const Mat2& y) {
    return {x[0] * y[0] + x[1] * y[2], x[0] * y[1] + x[1] * y[3], x[2] * y[0] + x[3] * y[2],
            x[2] * y[1] + x[3] * y[3]};
}

Mat2 add2(const Mat2& x, const Mat2& y) {
    return {x[0] + y[0], x[1] + y[1], x[2] + y[2], x[3] + y[3]};
}

Mat2 neg2(const Mat2& x) { return {-x[0], -x[1], -x[2], -x[3]}; }

double det2(const Mat2& x) { return x[0] * x[3] - x[1] * x[2]; }

double max_abs2(const Mat2& x) {
    return std::max({std::abs(x[0]), std::abs(x[1]), std::abs(x[2]), std::abs(x[3])});
}

bool inv2(const Mat2& x, Mat2& out) {
    const double det = det2(x);
    if (std::abs(det) <= singular_threshold(2, max_abs2(x))) return false;
    out = {x[3] / det, -x[1] / det, -x[2] / det, x[0] / det};
    return true;
}

using Mat4 = std::array<double, 16>;

Mat2 quadrant(const Mat4& m, int qr, int qc) {
    const int r = 2 * qr;
    const int c = 2 * qc;
    return {m[r * 4 + c], m[r * 4 + c + 1], m[(r + 1) * 4 + c], m[(r + 1) * 4 + c + 1]};
}

void put_quadrant(Mat4& m, int qr, int qc, const Mat2& q) {
    const int r = 2 * qr;
    const int c = 2 * qc;
    m[r * 4 + c] = q[0];
    m[r * 4 + c + 1] = q[1];
    m[(r + 1) * 4 + c] = q[2];
    m[(r + 1) * 4 + c + 1] = q[3];
}

// 2x2-blocked inverse with the leading quadrant as pivot. Fails when the
// pivot or its Schur complement is singular at order 2, or when
// det(A)*det(S_A) is singular at order 4.
bool pivot_a_4x4(const Mat4& x, Mat4& out) {
    const Mat2 a = quadrant(x, 0, 0);
    const Mat2 b = quadrant(x, 0, 1);
    const Mat2 c = quadrant(x, 1, 0);
    const Mat2 d = quadrant(x, 1, 1);
    Mat2 ai{};
    if (!inv2(a, ai)) return false;
    const Mat2 r = neg2(mul2(ai, b));  // -A^-1 B
    const Mat2 s = add2(d, mul2(c, r));
    Mat2 si{};
    if (!inv2(s, si)) return false;
    double mx = 0.0;
    for (double v : x) mx = std::max(mx, std::abs(v));
    if (std::abs(det2(a) * det2(s)) <= singular_threshold(4, mx)) return false;
    const Mat2 w = neg2(mul2(c, ai));  // -C A^-1
    const Mat2 bl = mul2(si, w);
    const Mat2 tl = add2(ai, mul2(r, bl));
    const Mat2 tr = mul2(r, si);
    put_quadrant(out, 0, 0, tl);
    put_quadrant(out, 0, 1, tr);
    put_quadrant(out, 1, 0, bl);
    put_quadrant(out, 1, 1, si);
    return true;
}

Mat4 swap_row_halves(const Mat4& m) {
    Mat4 out{};
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) out[((i + 2) % 4) * 4 + j] = m[i * 4 + j];
    }
    return out;
}

Mat4 swap_col_halves(const Mat4& m) {
    Mat4 out{};
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) out[i * 4 + (j + 2) % 4] = m[i * 4 + j];
    }
    return out;
}

// Pivot A, then D (swap both halves), then B (swap columns), then C (swap
// rows). The permuted A-pivot evaluations carry out exactly the D, B and C pivot
// formulas.
bool invert4(const Mat4& x, Mat4& out) {
    Mat4 tmp{};
    if (pivot_a_4x4(x, out)) return true;
    if (pivot_a_4x4(swap_row_halves(swap_col_halves(x)), tmp)) {
        out = swap_row_halves(swap_col_halves(tmp));
        return true;
    }
    if (pivot_a_4x4(swap_col_halves(x), tmp)) {
        out = swap_row_halves(tmp);
        return true;
    }
    if (pivot_a_4x4(swap_row_halves(x), tmp)) {
        out = swap_col_halves(tmp);
        return true;
    }
    return false;
}

}  // namespace

void invert_small(ConstMatrixView m, MatrixView out) {
    const std::size_t n = m.rows();
    if (!m.square() || n < 1 || n > 4) {
        throw DimensionMismatch("invert_small handles square orders 1-4, got " +
                                std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
    if (out.rows() != n || out.cols() != n) {
        throw DimensionMismatch("invert_small: output order differs from input");
    }

    std::array<double, 16> x{};
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) x[i * n + j] = m(i, j);
    }
    const double mx = max_abs(m);
    std::array<double, 16> r{};

    switch (n) {
        case 1: {
            if (std::abs(x[0]) <= singular_threshold(1, mx)) throw SingularBlock("", "order 1");
            r[0] = 1.0 / x[0];
            break;
        }
        case 2: {
            Mat2 in{x[0], x[1], x[2], x[3]};
            Mat2 inv{};
            if (!inv2(in, inv)) throw SingularBlock("", "order 2");
            std::copy(inv.begin(), inv.end(), r.begin());
            break;
        }
        case 3: {
            const double a = x[0], b = x[1], c = x[2];
            const double d = x[3], e = x[4], f = x[5];
            const double g = x[6], h = x[7], k = x[8];
            const double c00 = e * k - f * h;
            const double c01 = -(d * k - f * g);
            const double c02 = d * h - e * g;
            const double det = a * c00 + b * c01 + c * c02;
            if (std::abs(det) <= singular_threshold(3, mx)) throw SingularBlock("", "order 3");
            const double inv = 1.0 / det;
            r[0] = c00 * inv;
            r[1] = -(b * k - c * h) * inv;
            r[2] = (b * f - c * e) * inv;
            r[3] = c01 * inv;
            r[4] = (a * k - c * g) * inv;
            r[5] = -(a * f - c * d) * inv;
            r[6] = c02 * inv;
            r[7] = -(a * h - b * g) * inv;
            r[8] = (a * e - b * d) * inv;
            break;
        }
        default: {
            Mat4 inv{};
            if (!invert4(x, inv)) throw SingularBlock("", "order 4");
            r = inv;
            break;
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) out(i, j) = r[i * n + j];
    }
}

double residual_norm(const DenseMatrix& x, const DenseMatrix& x_inv) {
    if (!x.square() || !x_inv.square() || x.rows() != x_inv.rows()) {
        throw DimensionMismatch("residual_norm needs two square matrices of equal order");
    }
    DenseMatrix prod(x.rows(), x.cols());
    multiply(x.view(), x_inv.view(), prod.view());
    double worst = 0.0;
    for (std::size_t i = 0; i < prod.rows(); ++i) {
        for (std::size_t j = 0; j < prod.cols(); ++j) {
            const double target = i == j ? 1.0 : 0.0;
            const double d = std::abs(prod(i, j) - target);
            if (std::isnan(d)) return d;
            worst = std::max(worst, d);
        }
    }
    return worst;
}

double max_abs_diff(ConstMatrixView a, ConstMatrixView b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionMismatch("max_abs_diff on differently shaped views");
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            const double d = std::abs(a(i, j) - b(i, j));
            if (std::isnan(d)) return d;
            worst = std::max(worst, d);
        }
    }
    return worst;
}

}  // namespace invertor
