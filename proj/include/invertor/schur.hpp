#pragma once

#include <cstddef>
#include <functional>
#include <string_view>

#include "invertor/dense.hpp"

namespace invertor {

/// Tallies kept by every block-inversion path.
struct OpCounters {
    std::size_t multiplies = 0;  ///< two-matrix block products
    std::size_t inversions = 0;  ///< leaf (closed-form) inversions
    std::size_t reductions = 0;  ///< block additions folded into products
    std::size_t peak_scratch = 0;  ///< auxiliary scalars, high-water mark

    /// Sums the tallies; peak_scratch is left to the caller.
    void add_ops(const OpCounters& other) noexcept {
        multiplies += other.multiplies;
        inversions += other.inversions;
        reductions += other.reductions;
    }
};

/// Inverts `in` into `out` (same order, never aliasing). Throws SingularBlock.
using SubInverter = std::function<void(ConstMatrixView in, MatrixView out)>;

/// Runs two independent jobs and returns once both are done. The default
/// runs them one after the other.
using PairRunner = std::function<void(const std::function<void()>&, const std::function<void()>&)>;

enum class QuadLayout {
    DiagonalSquare,         ///< A and D square
    CounterdiagonalSquare,  ///< B and C square
};

/// One 2x2 split of a square matrix.
///
/// Diagonal layout with split s: A is s x s, D the rest. Counterdiagonal
/// layout with split s: the top s rows and the right s columns form the
/// square B, so C is (n-s) x (n-s), A is s x (n-s) and D is (n-s) x s.
struct BlockQuad {
    ConstMatrixView whole;
    std::size_t split = 0;
    QuadLayout layout = QuadLayout::DiagonalSquare;
    ConstMatrixView a, b, c, d;

    static BlockQuad diagonal(ConstMatrixView x, std::size_t split);
    static BlockQuad counterdiagonal(ConstMatrixView x, std::size_t split);

    std::size_t order() const noexcept { return whole.rows(); }
};

/// Workspaces for the two Schur complements of the two-pivot forms.
/// Diagonal layout: schur_a holds S_A (order of D), schur_d holds S_D (order
/// of A). Counterdiagonal layout: schur_a holds S_B (order of C), schur_d
/// holds S_C (order of B).
struct SchurScratch {
    DenseMatrix schur_a;
    DenseMatrix schur_d;

    static SchurScratch for_quad(const BlockQuad& q);
};

// Single-pivot forms. `out` must have the quad's order and not alias it.
void invert_via_a(const BlockQuad& q, const SubInverter& invert_sub, MatrixView out,
                  OpCounters* counters = nullptr);
void invert_via_d(const BlockQuad& q, const SubInverter& invert_sub, MatrixView out,
                  OpCounters* counters = nullptr);
void invert_via_b(const BlockQuad& q, const SubInverter& invert_sub, MatrixView out,
                  OpCounters* counters = nullptr);
void invert_via_c(const BlockQuad& q, const SubInverter& invert_sub, MatrixView out,
                  OpCounters* counters = nullptr);

/// out = [[S_D^-1, -A^-1 B S_A^-1], [-D^-1 C S_D^-1, S_A^-1]].
/// The (A, D) inversions and the (S_A, S_D) inversions each go through
/// `pairs`, with a join in between.
void invert_via_ad(const BlockQuad& q, const SubInverter& invert_sub, MatrixView out,
                   SchurScratch& scratch, OpCounters* counters = nullptr,
                   const PairRunner& pairs = {});

/// out = [[-S_B^-1 D B^-1, S_B^-1], [S_C^-1, -S_C^-1 A C^-1]].
void invert_via_bc(const BlockQuad& q, const SubInverter& invert_sub, MatrixView out,
                   SchurScratch& scratch, OpCounters* counters = nullptr,
                   const PairRunner& pairs = {});

enum class FormulaUsed { ViaA, ViaD, ViaB, ViaC };

std::string_view to_string(FormulaUsed f) noexcept;

/// Tries the A, D, B and C pivots in that order on the same row split and
/// reports the first that succeeds. Throws AllPivotsSingular.
FormulaUsed invert_with_fallback(const BlockQuad& q, MatrixView out,
                                 const SubInverter& invert_sub = {},
                                 OpCounters* counters = nullptr);

}  // namespace invertor
