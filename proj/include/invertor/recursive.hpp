#pragma once

#include <cstddef>
#include <span>

#include "invertor/dense.hpp"
#include "invertor/schur.hpp"

namespace invertor {

struct InvertOptions {
    /// Blocks of this order or smaller are inverted in closed form (1 to 4).
    std::size_t leaf_order = 4;
    /// Threads available to the two-pivot recursion. 1 keeps it serial.
    unsigned pair_workers = 1;
};

struct InversionResult {
    DenseMatrix inverse;
    OpCounters counters;
};

/// Recursive single-pivot inversion that allocates its block copies and
/// drops each one once it is no longer read. peak_scratch is the largest
/// number of live auxiliary scalars (the returned inverse is not counted).
InversionResult invertor_by_a(const DenseMatrix& x, const InvertOptions& opts = {});

/// Same recursion, done inside `x` itself. The only workspace is
/// `row_scratch`, which must hold at least `x.rows()` scalars.
OpCounters invertor_inplace_by_a(DenseMatrix& x, std::span<double> row_scratch,
                                 const InvertOptions& opts = {});
OpCounters invertor_inplace_by_a(MatrixView x, std::span<double> row_scratch,
                                 const InvertOptions& opts = {});

/// Recursive two-pivot inversion. peak_scratch counts Schur-complement
/// scalars with both members of each inversion pair live at once.
InversionResult invertor_by_ad(const DenseMatrix& x, const InvertOptions& opts = {});

/// Closed form up to order 4, in-place recursion on a copy above that.
const SubInverter& default_sub_inverter();

}  // namespace invertor
