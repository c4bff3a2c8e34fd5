#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <type_traits>
#include <vector>

#include "invertor/errors.hpp"

namespace invertor {

/// Strided window into row-major storage. `T` is `double` for writable views
/// and `const double` for read-only ones.
template <class T>
class BasicView {
  public:
    BasicView() = default;
    BasicView(T* data, std::size_t rows, std::size_t cols, std::size_t stride)
        : data_(data), rows_(rows), cols_(cols), stride_(stride) {}

    // Writable views convert to read-only ones.
    template <class U>
        requires(std::is_const_v<T> && std::is_same_v<std::remove_const_t<T>, U>)
    BasicView(BasicView<U> other)  // NOLINT(google-explicit-constructor)
        : data_(other.data()), rows_(other.rows()), cols_(other.cols()), stride_(other.stride()) {}

    T* data() const noexcept { return data_; }
    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t stride() const noexcept { return stride_; }
    bool square() const noexcept { return rows_ == cols_; }
    bool empty() const noexcept { return rows_ == 0 || cols_ == 0; }

    T& operator()(std::size_t r, std::size_t c) const noexcept {
        assert(r < rows_ && c < cols_);
        return data_[r * stride_ + c];
    }

    T* row(std::size_t r) const noexcept { return data_ + r * stride_; }

    /// Sub-window; must lie inside this view.
    BasicView sub(std::size_t r0, std::size_t c0, std::size_t rows, std::size_t cols) const {
        if (r0 + rows > rows_ || c0 + cols > cols_) {
            throw IndexOutOfRange("view window exceeds parent");
        }
        return BasicView(data_ + r0 * stride_ + c0, rows, cols, stride_);
    }

  private:
    T* data_ = nullptr;
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::size_t stride_ = 0;
};

using MatrixView = BasicView<double>;
using ConstMatrixView = BasicView<const double>;

/// Row-major dense matrix of doubles.
class DenseMatrix {
  public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    explicit DenseMatrix(ConstMatrixView v);

    static DenseMatrix identity(std::size_t order);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool square() const noexcept { return rows_ == cols_; }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    MatrixView view() noexcept { return {data_.data(), rows_, cols_, cols_}; }
    ConstMatrixView view() const noexcept { return {data_.data(), rows_, cols_, cols_}; }
    MatrixView view(std::size_t r0, std::size_t c0, std::size_t rows, std::size_t cols) {
        return view().sub(r0, c0, rows, cols);
    }
    ConstMatrixView view(std::size_t r0, std::size_t c0, std::size_t rows, std::size_t cols) const {
        return view().sub(r0, c0, rows, cols);
    }

    bool all_finite() const noexcept;

    /// Bitwise element equality (distinguishes -0.0 from 0.0 and compares NaN payloads).
    bool bitwise_equal(const DenseMatrix& other) const noexcept;

    friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// True when the two windows share at least one element.
bool overlaps(ConstMatrixView a, ConstMatrixView b) noexcept;

void copy(ConstMatrixView src, MatrixView dst);
void fill(MatrixView dst, double value);
void set_identity(MatrixView dst);

/// out = (+/-) a*b, or out += (+/-) a*b when `accumulate` is set.
///
/// Every output element is accumulated directly into `out` in ascending inner
/// index order. The sign is folded into each factor of `a`, so the negated
/// product is the exact negation of the plain one.
void multiply(ConstMatrixView a, ConstMatrixView b, MatrixView out, bool accumulate = false,
              bool negate = false);

/// target <- a_inv * target, one column at a time through `row_scratch`.
void multiply_inplace_left(ConstMatrixView a_inv, MatrixView target, std::span<double> row_scratch,
                           bool negate = false);

/// target <- target * b, one row at a time through `row_scratch`.
void multiply_inplace_right(MatrixView target, ConstMatrixView b, std::span<double> row_scratch,
                            bool negate = false);

/// Scale-aware singularity threshold for a block of the given order whose
/// largest entry magnitude is `max_abs`: 1e-12 * order^2 * max_abs^order.
double singular_threshold(std::size_t order, double max_abs) noexcept;

double max_abs(ConstMatrixView m) noexcept;

/// Closed-form inverse for orders 1 to 4. `out` may alias `m`.
/// Throws SingularBlock when |det| is within the singularity threshold.
void invert_small(ConstMatrixView m, MatrixView out);

/// max |x * x_inv - I| over all entries.
double residual_norm(const DenseMatrix& x, const DenseMatrix& x_inv);

/// max |a - b| over all entries.
double max_abs_diff(ConstMatrixView a, ConstMatrixView b);

}  // namespace invertor
