#include "invertor/recursive.hpp"

#include <algorithm>
#include <bit>
#include <future>
#include <string>
#include <vector>

namespace invertor {

namespace {

void check_input(ConstMatrixView x, const InvertOptions& opts) {
    if (x.rows() == 0 || !x.square()) {
        throw DimensionMismatch("inversion needs a nonempty square matrix, got " +
                                std::to_string(x.rows()) + "x" + std::to_string(x.cols()));
    }
    if (opts.leaf_order < 1 || opts.leaf_order > 4) {
        throw InvalidOrder("leaf order must be between 1 and 4");
    }
}

template <class F>
auto nested(std::string_view role, F&& f) {
    try {
        return f();
    } catch (const SingularBlock& e) {
        throw e.nested_under(role);
    }
}

// ---- allocating single-pivot recursion ----

class ScratchLedger {
  public:
    void take(const DenseMatrix& m) {
        live_ += m.size();
        peak_ = std::max(peak_, live_);
    }
    void drop(DenseMatrix& m) {
        live_ -= m.size();
        m = DenseMatrix();
    }
    std::size_t peak() const noexcept { return peak_; }

  private:
    std::size_t live_ = 0;
    std::size_t peak_ = 0;
};

DenseMatrix by_a_rec(ConstMatrixView x, std::size_t leaf, ScratchLedger& ledger, OpCounters& c) {
    const std::size_t n = x.rows();
    if (n <= leaf) {
        DenseMatrix out(n, n);
        invert_small(x, out.view());
        ++c.inversions;
        return out;
    }
    const std::size_t ma = n / 2;
    const std::size_t md = n - ma;

    DenseMatrix a(x.sub(0, 0, ma, ma));
    DenseMatrix b(x.sub(0, ma, ma, md));
    DenseMatrix cc(x.sub(ma, 0, md, ma));
    DenseMatrix d(x.sub(ma, ma, md, md));
    ledger.take(a);
    ledger.take(b);
    ledger.take(cc);
    ledger.take(d);

    DenseMatrix a_inv = nested("A", [&] { return by_a_rec(a.view(), leaf, ledger, c); });
    ledger.take(a_inv);
    ledger.drop(a);

    DenseMatrix r(ma, md);
    ledger.take(r);
    multiply(a_inv.view(), b.view(), r.view(), false, true);
    ledger.drop(b);

    DenseMatrix w(md, ma);
    ledger.take(w);
    multiply(cc.view(), a_inv.view(), w.view(), false, true);

    // D becomes the Schur complement in place.
    multiply(cc.view(), r.view(), d.view(), true);
    ledger.drop(cc);

    DenseMatrix s_inv = nested("SchurA", [&] { return by_a_rec(d.view(), leaf, ledger, c); });
    ledger.take(s_inv);
    ledger.drop(d);

    DenseMatrix bl(md, ma);
    ledger.take(bl);
    multiply(s_inv.view(), w.view(), bl.view());
    ledger.drop(w);

    multiply(r.view(), bl.view(), a_inv.view(), true);

    DenseMatrix tr(ma, md);
    ledger.take(tr);
    multiply(r.view(), s_inv.view(), tr.view());
    ledger.drop(r);

    c.multiplies += 6;
    c.reductions += 2;

    DenseMatrix out(n, n);
    copy(a_inv.view(), out.view(0, 0, ma, ma));
    copy(tr.view(), out.view(0, ma, ma, md));
    copy(bl.view(), out.view(ma, 0, md, ma));
    copy(s_inv.view(), out.view(ma, ma, md, md));
    ledger.drop(a_inv);
    ledger.drop(tr);
    ledger.drop(bl);
    ledger.drop(s_inv);
    return out;
}

// ---- in-place single-pivot recursion ----

void inplace_rec(MatrixView x, std::span<double> scratch, std::size_t leaf, OpCounters& c) {
    const std::size_t n = x.rows();
    if (n <= leaf) {
        invert_small(x, x);
        ++c.inversions;
        return;
    }
    const std::size_t ma = n / 2;
    const std::size_t md = n - ma;
    MatrixView a = x.sub(0, 0, ma, ma);
    MatrixView b = x.sub(0, ma, ma, md);
    MatrixView cc = x.sub(ma, 0, md, ma);
    MatrixView d = x.sub(ma, ma, md, md);

    nested("A", [&] { inplace_rec(a, scratch, leaf, c); });
    multiply_inplace_left(a, b, scratch, true);    // B <- -A^-1 B
    multiply(cc, b, d, true);                      // D <- S_A
    multiply_inplace_right(cc, a, scratch, true);  // C <- -C A^-1
    nested("SchurA", [&] { inplace_rec(d, scratch, leaf, c); });
    multiply_inplace_left(d, cc, scratch);  // C <- -S_A^-1 C A^-1
    multiply(b, cc, a, true);               // A <- A^-1 + A^-1 B S_A^-1 C A^-1
    multiply_inplace_right(b, d, scratch);  // B <- -A^-1 B S_A^-1

    c.multiplies += 6;
    c.reductions += 2;
    c.peak_scratch = std::max(c.peak_scratch, std::max(ma, md));
}

// ---- two-pivot recursion ----

void by_ad_rec(ConstMatrixView x, MatrixView out, std::span<double> scratch, std::size_t leaf,
               unsigned parallel_depth, OpCounters& c) {
    const std::size_t n = x.rows();
    if (n <= leaf) {
        invert_small(x, out);
        ++c.inversions;
        return;
    }
    const std::size_t ma = n / 2;
    const std::size_t md = n - ma;
    const BlockQuad q = BlockQuad::diagonal(x, ma);
    SchurScratch schur = SchurScratch::for_quad(q);
    const std::size_t own = schur.schur_a.size() + schur.schur_d.size();

    // Each member of a pair recurses with its own slice of the row scratch
    // and its own counters, merged in a fixed order afterwards.
    OpCounters stage_peak[2];
    auto run_pair = [&](int stage, ConstMatrixView in1, MatrixView out1, std::string_view name1,
                        ConstMatrixView in2, MatrixView out2, std::string_view name2) {
        OpCounters c1, c2;
        auto first = [&] {
            nested(name1, [&] {
                by_ad_rec(in1, out1, scratch.subspan(0, ma),
                          leaf, parallel_depth ? parallel_depth - 1 : 0, c1);
            });
        };
        auto second = [&] {
            nested(name2, [&] {
                by_ad_rec(in2, out2, scratch.subspan(ma, md),
                          leaf, parallel_depth ? parallel_depth - 1 : 0, c2);
            });
        };
        if (parallel_depth > 0) {
            auto fut = std::async(std::launch::async, first);
            std::exception_ptr second_error;
            try {
                second();
            } catch (...) {
                second_error = std::current_exception();
            }
            fut.get();  // the first member's failure wins
            if (second_error) std::rethrow_exception(second_error);
        } else {
            first();
            second();
        }
        c.add_ops(c1);
        c.add_ops(c2);
        stage_peak[stage].peak_scratch = c1.peak_scratch + c2.peak_scratch;
    };

    MatrixView tl = out.sub(0, 0, ma, ma);
    MatrixView tr = out.sub(0, ma, ma, md);
    MatrixView bl = out.sub(ma, 0, md, ma);
    MatrixView br = out.sub(ma, ma, md, md);

    run_pair(0, q.a, tl, "A", q.d, br, "D");
    multiply(tl, q.b, tr, false, true);  // R = -A^-1 B
    multiply(br, q.c, bl, false, true);  // L = -D^-1 C
    copy(q.d, schur.schur_a.view());
    multiply(q.c, tr, schur.schur_a.view(), true);
    copy(q.a, schur.schur_d.view());
    multiply(q.b, bl, schur.schur_d.view(), true);
    run_pair(1, schur.schur_d.view(), tl, "SchurD", schur.schur_a.view(), br, "SchurA");
    multiply_inplace_right(tr, br, scratch);
    multiply_inplace_right(bl, tl, scratch);

    c.multiplies += 4;
    c.reductions += 2;
    c.peak_scratch = own + std::max(stage_peak[0].peak_scratch, stage_peak[1].peak_scratch);
}

}  // namespace

InversionResult invertor_by_a(const DenseMatrix& x, const InvertOptions& opts) {
    check_input(x.view(), opts);
    ScratchLedger ledger;
    InversionResult res;
    res.inverse = by_a_rec(x.view(), opts.leaf_order, ledger, res.counters);
    res.counters.peak_scratch = ledger.peak();
    return res;
}

OpCounters invertor_inplace_by_a(MatrixView x, std::span<double> row_scratch,
                                 const InvertOptions& opts) {
    check_input(x, opts);
    if (row_scratch.size() < x.rows()) {
        throw ScratchTooSmall("row scratch holds " + std::to_string(row_scratch.size()) +
                              " scalars, order is " + std::to_string(x.rows()));
    }
    OpCounters c;
    inplace_rec(x, row_scratch, opts.leaf_order, c);
    return c;
}

OpCounters invertor_inplace_by_a(DenseMatrix& x, std::span<double> row_scratch,
                                 const InvertOptions& opts) {
    return invertor_inplace_by_a(x.view(), row_scratch, opts);
}

InversionResult invertor_by_ad(const DenseMatrix& x, const InvertOptions& opts) {
    check_input(x.view(), opts);
    const std::size_t n = x.rows();
    // Fork the pair below the top log2(workers) levels only.
    const unsigned depth = opts.pair_workers > 1
                               ? static_cast<unsigned>(std::bit_width(opts.pair_workers) - 1)
                               : 0u;
    InversionResult res;
    res.inverse = DenseMatrix(n, n);
    std::vector<double> row(n);
    by_ad_rec(x.view(), res.inverse.view(), row, opts.leaf_order, depth, res.counters);
    return res;
}

const SubInverter& default_sub_inverter() {
    static const SubInverter inv = [](ConstMatrixView in, MatrixView out) {
        if (in.rows() != out.rows() || in.cols() != out.cols()) {
            throw DimensionMismatch("sub-inverter output shape differs from input");
        }
        if (in.rows() <= 4) {
            invert_small(in, out);
            return;
        }
        copy(in, out);
        std::vector<double> row(in.rows());
        invertor_inplace_by_a(out, row);
    };
    return inv;
}

}  // namespace invertor
