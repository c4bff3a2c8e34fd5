#pragma once

// Reference helpers for the tests. Nothing here calls the block algorithms.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "invertor/dense.hpp"

namespace testing_support {

using invertor::ConstMatrixView;
using invertor::DenseMatrix;

/// Textbook triple loop.
inline DenseMatrix naive_multiply(ConstMatrixView a, ConstMatrixView b) {
    DenseMatrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(p, j);
            out(i, j) = s;
        }
    }
    return out;
}

/// Uniform [-1, 1] entries from a generator independent of the library's.
inline DenseMatrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    std::mt19937 rng(static_cast<std::uint32_t>(seed * 2654435761u + 17));
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    DenseMatrix m(rows, cols);
    for (auto& v : m.data()) v = dist(rng);
    return m;
}

/// Random square matrix made safe for every diagonal pivot.
inline DenseMatrix random_dominant(std::size_t order, std::uint64_t seed) {
    DenseMatrix m = random_matrix(order, order, seed);
    for (std::size_t i = 0; i < order; ++i) m(i, i) += 2.0 * static_cast<double>(order);
    return m;
}

/// Same, but with the dominant entries on the counter-diagonal blocks for a
/// top split of `split` rows (so B and C are the well-conditioned squares).
inline DenseMatrix random_counter_dominant(std::size_t order, std::size_t split, std::uint64_t seed) {
    const DenseMatrix d = random_dominant(order, seed);
    // Rotate columns left by (order - split): the dominant diagonal of the
    // top split rows lands in the rightmost split columns.
    DenseMatrix m(order, order);
    const std::size_t shift = order - split;
    for (std::size_t i = 0; i < order; ++i) {
        for (std::size_t j = 0; j < order; ++j) m(i, (j + shift) % order) = d(i, j);
    }
    return m;
}

inline double max_diff(const DenseMatrix& a, const DenseMatrix& b) {
    return invertor::max_abs_diff(a.view(), b.view());
}

inline bool bitwise_equal(ConstMatrixView a, ConstMatrixView b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            if (std::signbit(a(i, j)) != std::signbit(b(i, j))) return false;
            if (!(a(i, j) == b(i, j)) && !(std::isnan(a(i, j)) && std::isnan(b(i, j)))) return false;
        }
    }
    return true;
}

/// Recursion-tree size for a floor/ceil halving recursion: internal nodes
/// (orders above `leaf`) and leaves. `children` is 2 for the single-pivot
/// recursion (A, S_A) and 4 for the two-pivot one (A, D, S_D, S_A).
struct TreeCount {
    std::size_t nodes = 0;
    std::size_t leaves = 0;
};

inline TreeCount recursion_tree(std::size_t n, std::size_t leaf, int children) {
    if (n <= leaf) return {0, 1};
    const std::size_t lo = n / 2;
    const std::size_t hi = n - lo;
    const TreeCount a = recursion_tree(lo, leaf, children);
    const TreeCount d = recursion_tree(hi, leaf, children);
    TreeCount t{1 + a.nodes + d.nodes, a.leaves + d.leaves};
    if (children == 4) {
        t.nodes += a.nodes + d.nodes;
        t.leaves += a.leaves + d.leaves;
    }
    return t;
}

/// Schur scratch with both members of each pair live: 0 at the leaves,
/// otherwise this node's two complements plus the larger of the two
/// concurrent stages.
inline std::size_t pair_peak_scratch(std::size_t n, std::size_t leaf) {
    if (n <= leaf) return 0;
    const std::size_t lo = n / 2;
    const std::size_t hi = n - lo;
    const std::size_t stage = pair_peak_scratch(lo, leaf) + pair_peak_scratch(hi, leaf);
    return lo * lo + hi * hi + stage;
}

}  // namespace testing_support
