#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "invertor/dense.hpp"

namespace invertor {

/// Half-open range of diagonal-block indices.
struct BlockRange {
    std::size_t first = 0;
    std::size_t last = 0;  // one past the end

    std::size_t count() const noexcept { return last - first; }
    bool contains(std::size_t b) const noexcept { return b >= first && b < last; }
    friend bool operator==(const BlockRange&, const BlockRange&) = default;
};

/// A 2x2 arrangement of diagonal-block spans: `level` j means the quad spans
/// 2^j diagonal blocks; `pair` is its 0-based index along the diagonal.
struct QuadIndex {
    std::size_t level = 1;
    std::size_t pair = 0;

    BlockRange span() const noexcept { return {pair << level, (pair + 1) << level}; }
    BlockRange a_range() const noexcept {
        const std::size_t f = pair << level;
        return {f, f + (std::size_t{1} << (level - 1))};
    }
    BlockRange d_range() const noexcept {
        const std::size_t half = std::size_t{1} << (level - 1);
        const std::size_t f = (pair << level) + half;
        return {f, f + half};
    }
};

/// Diagonal block sizes of a square matrix split into a power-of-two number
/// of diagonal blocks.
class PartitionScheme {
  public:
    PartitionScheme() = default;

    /// Explicit sizes (any positive orders); the block count must be a power
    /// of two.
    static PartitionScheme from_sizes(std::vector<std::size_t> sizes);

    std::size_t order() const noexcept { return offsets_.empty() ? 0 : offsets_.back(); }
    std::size_t n_blocks() const noexcept { return sizes_.size(); }
    /// log2(n_blocks)
    std::size_t levels() const noexcept { return levels_; }

    const std::vector<std::size_t>& sizes() const noexcept { return sizes_; }
    /// Prefix sums, length n_blocks + 1.
    const std::vector<std::size_t>& offsets() const noexcept { return offsets_; }
    std::size_t block_order(std::size_t i) const { return sizes_.at(i); }
    std::size_t offset(std::size_t i) const { return offsets_.at(i); }

    /// Scalar order spanned by a block range.
    std::size_t order_of(BlockRange r) const { return offsets_.at(r.last) - offsets_.at(r.first); }

    /// Offsets of the blocks in `r`, as a span of length r.count() + 1.
    std::span<const std::size_t> offsets_of(BlockRange r) const {
        return std::span<const std::size_t>(offsets_).subspan(r.first, r.count() + 1);
    }

    std::size_t quads_at(std::size_t level) const noexcept { return n_blocks() >> level; }
    void check_quad(QuadIndex q) const;

    std::uint64_t hash() const noexcept;

    friend bool operator==(const PartitionScheme&, const PartitionScheme&) = default;

  private:
    std::vector<std::size_t> sizes_;
    std::vector<std::size_t> offsets_;
    std::size_t levels_ = 0;
};

/// Block count 2^(floor(log2 order) - 1) with every block order in {2,3,4}:
/// all blocks start at 2; the remainder r = order - 2N upgrades the last r
/// blocks to 3, or when r > N, all blocks to 3 and the last r - N to 4.
PartitionScheme make_partition(std::size_t order);

template <class View>
struct QuadViewsT {
    View a, b, c, d;
};
using QuadViews = QuadViewsT<MatrixView>;
using ConstQuadViews = QuadViewsT<ConstMatrixView>;

/// A, B, C, D windows of quad `q` inside `m` (which must have the scheme's order).
QuadViews quad_views(const PartitionScheme& scheme, QuadIndex q, DenseMatrix& m);
ConstQuadViews quad_views(const PartitionScheme& scheme, QuadIndex q, const DenseMatrix& m);

}  // namespace invertor
