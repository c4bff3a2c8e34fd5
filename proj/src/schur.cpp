#include "invertor/schur.hpp"

#include <algorithm>
#include <string>
#include <vector>

#include "invertor/recursive.hpp"

namespace invertor {

BlockQuad BlockQuad::diagonal(ConstMatrixView x, std::size_t split) {
    if (!x.square()) throw DimensionMismatch("block quad needs a square matrix");
    const std::size_t n = x.rows();
    if (split == 0 || split >= n) {
        throw DimensionMismatch("split " + std::to_string(split) + " invalid for order " +
                                std::to_string(n));
    }
    const std::size_t md = n - split;
    BlockQuad q;
    q.whole = x;
    q.split = split;
    q.layout = QuadLayout::DiagonalSquare;
    q.a = x.sub(0, 0, split, split);
    q.b = x.sub(0, split, split, md);
    q.c = x.sub(split, 0, md, split);
    q.d = x.sub(split, split, md, md);
    return q;
}

BlockQuad BlockQuad::counterdiagonal(ConstMatrixView x, std::size_t split) {
    if (!x.square()) throw DimensionMismatch("block quad needs a square matrix");
    const std::size_t n = x.rows();
    if (split == 0 || split >= n) {
        throw DimensionMismatch("split " + std::to_string(split) + " invalid for order " +
                                std::to_string(n));
    }
    const std::size_t mb = split;
    const std::size_t mc = n - split;
    BlockQuad q;
    q.whole = x;
    q.split = split;
    q.layout = QuadLayout::CounterdiagonalSquare;
    q.a = x.sub(0, 0, mb, mc);
    q.b = x.sub(0, mc, mb, mb);
    q.c = x.sub(mb, 0, mc, mc);
    q.d = x.sub(mb, mc, mc, mb);
    return q;
}

SchurScratch SchurScratch::for_quad(const BlockQuad& q) {
    if (q.layout == QuadLayout::DiagonalSquare) {
        return {DenseMatrix(q.d.rows(), q.d.cols()), DenseMatrix(q.a.rows(), q.a.cols())};
    }
    return {DenseMatrix(q.c.rows(), q.c.cols()), DenseMatrix(q.b.rows(), q.b.cols())};
}

namespace {

void require_layout(const BlockQuad& q, QuadLayout want, const char* who) {
    if (q.layout != want) {
        throw DimensionMismatch(std::string(who) + ": wrong quad layout");
    }
}

void require_out(const BlockQuad& q, MatrixView out) {
    if (out.rows() != q.order() || out.cols() != q.order()) {
        throw DimensionMismatch("output order differs from quad order");
    }
    if (overlaps(out, q.whole)) throw DimensionMismatch("output aliases the input quad");
}

void sub_invert(const SubInverter& inv, ConstMatrixView in, MatrixView out, std::string_view role) {
    try {
        inv(in, out);
    } catch (const SingularBlock& e) {
        throw e.nested_under(role);
    }
}

void bump(OpCounters* c, std::size_t mults, std::size_t reds) {
    if (c) {
        c->multiplies += mults;
        c->reductions += reds;
    }
}

// Shared body of the four single-pivot forms:
//   P^-1 -> out_p, X = -P^-1 * right -> out_x, W = -left * P^-1 -> out_w,
//   S = opposite + left * X, S^-1 -> out_s, out_w <- S^-1 W,
//   out_p += X * out_w, out_x <- X S^-1.
// Six products and two reductions; the final two products run in place.
void single_pivot(ConstMatrixView pivot, ConstMatrixView right, ConstMatrixView left,
                  ConstMatrixView opposite, MatrixView out_p, MatrixView out_x, MatrixView out_w,
                  MatrixView out_s, const SubInverter& invert_sub, std::string_view pivot_name,
                  std::string_view schur_name, OpCounters* counters) {
    sub_invert(invert_sub, pivot, out_p, pivot_name);
    multiply(out_p, right, out_x, false, true);
    multiply(left, out_p, out_w, false, true);
    DenseMatrix schur(opposite);
    multiply(left, out_x, schur.view(), true);
    sub_invert(invert_sub, schur.view(), out_s, schur_name);

    std::vector<double> row(std::max(out_s.rows(), out_p.rows()));
    multiply_inplace_left(out_s, out_w, row);
    multiply(out_x, out_w, out_p, true);
    multiply_inplace_right(out_x, out_s, row);
    bump(counters, 6, 2);
    if (counters) {
        counters->peak_scratch = std::max(counters->peak_scratch, schur.size() + row.size());
    }
}

void run_pair(const PairRunner& pairs, const std::function<void()>& first,
              const std::function<void()>& second) {
    if (pairs) {
        pairs(first, second);
    } else {
        first();
        second();
    }
}

void check_scratch(const DenseMatrix& m, std::size_t order, const char* name) {
    if (m.rows() != order || m.cols() != order) {
        throw DimensionMismatch(std::string("Schur scratch ") + name + " must have order " +
                                std::to_string(order));
    }
}

}  // namespace

void invert_via_a(const BlockQuad& q, const SubInverter& invert_sub, MatrixView out,
                  OpCounters* counters) {
    require_layout(q, QuadLayout::DiagonalSquare, "invert_via_a");
    require_out(q, out);
    const std::size_t ma = q.a.rows();
    const std::size_t md = q.d.rows();
    single_pivot(q.a, q.b, q.c, q.d, out.sub(0, 0, ma, ma), out.sub(0, ma, ma, md),
                 out.sub(ma, 0, md, ma), out.sub(ma, ma, md, md), invert_sub, "A", "SchurA",
                 counters);
}

void invert_via_d(const BlockQuad& q, const SubInverter& invert_sub, MatrixView out,
                  OpCounters* counters) {
    require_layout(q, QuadLayout::DiagonalSquare, "invert_via_d");
    require_out(q, out);
    const std::size_t ma = q.a.rows();
    const std::size_t md = q.d.rows();
    single_pivot(q.d, q.c, q.b, q.a, out.sub(ma, ma, md, md), out.sub(ma, 0, md, ma),
                 out.sub(0, ma, ma, md), out.sub(0, 0, ma, ma), invert_sub, "D", "SchurD",
                 counters);
}

// Output of the counterdiagonal forms: rows split (mc | mb), columns (mb | mc).

void invert_via_b(const BlockQuad& q, const SubInverter& invert_sub, MatrixView out,
                  OpCounters* counters) {
    require_layout(q, QuadLayout::CounterdiagonalSquare, "invert_via_b");
    require_out(q, out);
    const std::size_t mb = q.b.rows();
    const std::size_t mc = q.c.rows();
    single_pivot(q.b, q.a, q.d, q.c, out.sub(mc, 0, mb, mb), out.sub(mc, mb, mb, mc),
                 out.sub(0, 0, mc, mb), out.sub(0, mb, mc, mc), invert_sub, "B", "SchurB",
                 counters);
}

void invert_via_c(const BlockQuad& q, const SubInverter& invert_sub, MatrixView out,
                  OpCounters* counters) {
    require_layout(q, QuadLayout::CounterdiagonalSquare, "invert_via_c");
    require_out(q, out);
    const std::size_t mb = q.b.rows();
    const std::size_t mc = q.c.rows();
    single_pivot(q.c, q.d, q.a, q.b, out.sub(0, mb, mc, mc), out.sub(0, 0, mc, mb),
                 out.sub(mc, mb, mb, mc), out.sub(mc, 0, mb, mb), invert_sub, "C", "SchurC",
                 counters);
}

void invert_via_ad(const BlockQuad& q, const SubInverter& invert_sub, MatrixView out,
                   SchurScratch& scratch, OpCounters* counters, const PairRunner& pairs) {
    require_layout(q, QuadLayout::DiagonalSquare, "invert_via_ad");
    require_out(q, out);
    const std::size_t ma = q.a.rows();
    const std::size_t md = q.d.rows();
    check_scratch(scratch.schur_a, md, "S_A");
    check_scratch(scratch.schur_d, ma, "S_D");
    MatrixView tl = out.sub(0, 0, ma, ma);
    MatrixView tr = out.sub(0, ma, ma, md);
    MatrixView bl = out.sub(ma, 0, md, ma);
    MatrixView br = out.sub(ma, ma, md, md);

    run_pair(
        pairs, [&] { sub_invert(invert_sub, q.a, tl, "A"); },
        [&] { sub_invert(invert_sub, q.d, br, "D"); });

    multiply(tl, q.b, tr, false, true);  // -A^-1 B
    multiply(br, q.c, bl, false, true);  // -D^-1 C
    copy(q.d, scratch.schur_a.view());
    multiply(q.c, tr, scratch.schur_a.view(), true);
    copy(q.a, scratch.schur_d.view());
    multiply(q.b, bl, scratch.schur_d.view(), true);

    run_pair(
        pairs, [&] { sub_invert(invert_sub, scratch.schur_d.view(), tl, "SchurD"); },
        [&] { sub_invert(invert_sub, scratch.schur_a.view(), br, "SchurA"); });

    std::vector<double> row(std::max(ma, md));
    multiply_inplace_right(tr, br, row);
    multiply_inplace_right(bl, tl, row);
    bump(counters, 4, 2);
}

void invert_via_bc(const BlockQuad& q, const SubInverter& invert_sub, MatrixView out,
                   SchurScratch& scratch, OpCounters* counters, const PairRunner& pairs) {
    require_layout(q, QuadLayout::CounterdiagonalSquare, "invert_via_bc");
    require_out(q, out);
    const std::size_t mb = q.b.rows();
    const std::size_t mc = q.c.rows();
    check_scratch(scratch.schur_a, mc, "S_B");
    check_scratch(scratch.schur_d, mb, "S_C");
    MatrixView tl = out.sub(0, 0, mc, mb);
    MatrixView tr = out.sub(0, mb, mc, mc);
    MatrixView bl = out.sub(mc, 0, mb, mb);
    MatrixView br = out.sub(mc, mb, mb, mc);

    // B^-1 parks in the S_C^-1 slot and C^-1 in the S_B^-1 slot until the
    // Schur complements are formed.
    run_pair(
        pairs, [&] { sub_invert(invert_sub, q.b, bl, "B"); },
        [&] { sub_invert(invert_sub, q.c, tr, "C"); });

    multiply(q.d, bl, tl, false, true);  // -D B^-1
    multiply(q.a, tr, br, false, true);  // -A C^-1
    copy(q.c, scratch.schur_a.view());
    multiply(tl, q.a, scratch.schur_a.view(), true);
    copy(q.b, scratch.schur_d.view());
    multiply(br, q.d, scratch.schur_d.view(), true);

    run_pair(
        pairs, [&] { sub_invert(invert_sub, scratch.schur_a.view(), tr, "SchurB"); },
        [&] { sub_invert(invert_sub, scratch.schur_d.view(), bl, "SchurC"); });

    std::vector<double> row(std::max(mb, mc));
    multiply_inplace_left(tr, tl, row);
    multiply_inplace_left(bl, br, row);
    bump(counters, 4, 2);
}

std::string_view to_string(FormulaUsed f) noexcept {
    switch (f) {
        case FormulaUsed::ViaA: return "via_a";
        case FormulaUsed::ViaD: return "via_d";
        case FormulaUsed::ViaB: return "via_b";
        case FormulaUsed::ViaC: return "via_c";
    }
    return "?";
}

FormulaUsed invert_with_fallback(const BlockQuad& q, MatrixView out, const SubInverter& invert_sub,
                                 OpCounters* counters) {
    const SubInverter& inv = invert_sub ? invert_sub : default_sub_inverter();
    const BlockQuad diag = q.layout == QuadLayout::DiagonalSquare
                               ? q
                               : BlockQuad::diagonal(q.whole, q.split);
    const BlockQuad counter = q.layout == QuadLayout::CounterdiagonalSquare
                                  ? q
                                  : BlockQuad::counterdiagonal(q.whole, q.split);
    std::string failures;
    auto attempt = [&](auto&& fn, const BlockQuad& quad) {
        try {
            OpCounters local;
            fn(quad, inv, out, &local);
            if (counters) {
                counters->add_ops(local);
                counters->peak_scratch = std::max(counters->peak_scratch, local.peak_scratch);
            }
            return true;
        } catch (const SingularBlock& e) {
            if (!failures.empty()) failures += "; ";
            failures += e.path();
            return false;
        }
    };
    if (attempt(invert_via_a, diag)) return FormulaUsed::ViaA;
    if (attempt(invert_via_d, diag)) return FormulaUsed::ViaD;
    if (attempt(invert_via_b, counter)) return FormulaUsed::ViaB;
    if (attempt(invert_via_c, counter)) return FormulaUsed::ViaC;
    throw AllPivotsSingular("every pivot formula failed: " + failures);
}

}  // namespace invertor
