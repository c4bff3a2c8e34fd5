#include "invertor/partition.hpp"

#include <bit>
#include <string>

#include "invertor/matrix_io.hpp"

namespace invertor {

PartitionScheme PartitionScheme::from_sizes(std::vector<std::size_t> sizes) {
    if (sizes.empty()) throw InvalidOrder("partition needs at least one block");
    if (!std::has_single_bit(sizes.size())) {
        throw InvalidOrder("block count " + std::to_string(sizes.size()) + " is not a power of two");
    }
    PartitionScheme s;
    s.offsets_.reserve(sizes.size() + 1);
    s.offsets_.push_back(0);
    for (std::size_t m : sizes) {
        if (m == 0) throw InvalidOrder("block orders must be positive");
        s.offsets_.push_back(s.offsets_.back() + m);
    }
    s.sizes_ = std::move(sizes);
    s.levels_ = static_cast<std::size_t>(std::countr_zero(s.sizes_.size()));
    return s;
}

void PartitionScheme::check_quad(QuadIndex q) const {
    if (q.level < 1 || q.level > levels_ || q.pair >= quads_at(q.level)) {
        throw IndexOutOfRange("quad (level " + std::to_string(q.level) + ", pair " +
                              std::to_string(q.pair) + ") outside a scheme of " +
                              std::to_string(n_blocks()) + " blocks");
    }
}

std::uint64_t PartitionScheme::hash() const noexcept {
    std::vector<std::uint64_t> words(sizes_.begin(), sizes_.end());
    return fnv1a64(words.data(), words.size() * sizeof(std::uint64_t));
}

PartitionScheme make_partition(std::size_t order) {
    if (order < 2) throw InvalidOrder("partition needs order >= 2, got " + std::to_string(order));
    const auto floor_log2 = static_cast<std::size_t>(std::bit_width(order) - 1);
    const std::size_t n = std::size_t{1} << (floor_log2 - 1);
    std::vector<std::size_t> sizes(n, 2);
    const std::size_t rem = order - 2 * n;
    if (rem <= n) {
        for (std::size_t i = n - rem; i < n; ++i) sizes[i] = 3;
    } else {
        for (auto& s : sizes) s = 3;
        for (std::size_t i = n - (rem - n); i < n; ++i) sizes[i] = 4;
    }
    return PartitionScheme::from_sizes(std::move(sizes));
}

namespace {

template <class Matrix, class Quad>
Quad quad_views_impl(const PartitionScheme& scheme, QuadIndex q, Matrix& m) {
    scheme.check_quad(q);
    if (m.rows() != scheme.order() || m.cols() != scheme.order()) {
        throw DimensionMismatch("matrix order " + std::to_string(m.rows()) +
                                " does not match partition order " +
                                std::to_string(scheme.order()));
    }
    const BlockRange ar = q.a_range();
    const BlockRange dr = q.d_range();
    const std::size_t a0 = scheme.offset(ar.first);
    const std::size_t d0 = scheme.offset(dr.first);
    const std::size_t ma = scheme.order_of(ar);
    const std::size_t md = scheme.order_of(dr);
    return {m.view(a0, a0, ma, ma), m.view(a0, d0, ma, md), m.view(d0, a0, md, ma),
            m.view(d0, d0, md, md)};
}

}  // namespace

QuadViews quad_views(const PartitionScheme& scheme, QuadIndex q, DenseMatrix& m) {
    return quad_views_impl<DenseMatrix, QuadViews>(scheme, q, m);
}

ConstQuadViews quad_views(const PartitionScheme& scheme, QuadIndex q, const DenseMatrix& m) {
    return quad_views_impl<const DenseMatrix, ConstQuadViews>(scheme, q, m);
}

}  // namespace invertor
