#include <doctest.h>

#include <cstdlib>
#include <map>
#include <vector>

#include "invertor/engine.hpp"
#include "invertor/oracle.hpp"
#include "invertor/schur.hpp"
#include "invertor/recursive.hpp"
#include "support.hpp"

using namespace invertor;
using namespace testing_support;
using Ids = std::vector<std::size_t>;

TEST_CASE("level arrays for blocksize 8") {
    const std::vector<Ids> table{
        {1, 0, 0, 0}, {2, 0, 0, 0}, {2, 1, 0, 0}, {3, 0, 0, 0}, {3, 1, 0, 0},
        {3, 2, 0, 0}, {3, 2, 1, 0}, {4, 0, 0, 0}, {4, 1, 0, 0}, {4, 2, 0, 0},
        {4, 2, 1, 0}, {4, 3, 0, 0}, {4, 3, 1, 0}, {4, 3, 2, 0}, {4, 3, 2, 1},
    };
    CHECK(step_count(8) == 15);
    for (std::size_t s = 1; s <= 15; ++s) {
        CAPTURE(s);
        CHECK(loopid_for_step(s, 8) == table[s - 1]);
    }
    CHECK_THROWS_AS(loopid_for_step(0, 8), IndexOutOfRange);
    CHECK_THROWS_AS(loopid_for_step(16, 8), IndexOutOfRange);
    CHECK_THROWS_AS(loopid_for_step(1, 6), InvalidOrder);
    CHECK_THROWS_AS(step_count(0), InvalidOrder);
}

TEST_CASE("closing level arrays for larger blocksizes") {
    for (std::size_t k = 1; k <= 12; ++k) {
        const std::size_t n = std::size_t{1} << k;
        const std::size_t ns = step_count(n);
        Ids last, prev, prev2;
        for (std::size_t v = k + 1; v >= 1; --v) last.push_back(v);
        for (std::size_t v = k + 1; v >= 2; --v) prev.push_back(v);
        prev.push_back(0);
        for (std::size_t v = k + 1; v >= 3; --v) prev2.push_back(v);
        prev2.push_back(1);
        prev2.push_back(0);
        CAPTURE(n);
        CHECK(loopid_for_step(ns, n) == last);
        CHECK(loopid_for_step(ns - 1, n) == prev);
        if (k >= 2) CHECK(loopid_for_step(ns - 2, n) == prev2);
    }
}

TEST_CASE("step census per blocksize") {
    for (std::size_t k = 0; k <= 10; ++k) {
        const std::size_t n = std::size_t{1} << k;
        std::map<StepKind, std::size_t> census;
        std::size_t assembly_passes = 0;
        for (std::size_t s = 1; s <= step_count(n); ++s) {
            const StepAction a = plan_step(s, n).action;
            ++census[a.kind];
            assembly_passes += a.assemble_depth;
        }
        CAPTURE(n);
        // One diagonal inversion of M, one arrows step per quad level and
        // target, and one Schur inversion per arrows step.
        CHECK(census[StepKind::InvertDiagonals] == 1);
        CHECK(census[StepKind::ArrowsAndSchur] == n - 1);
        CHECK(census[StepKind::SchurDiagAndAssemble] == n - 1);
        // Every quad at every level is assembled exactly once overall.
        CHECK(assembly_passes == (k == 0 ? 0 : n - 1));
    }
}

TEST_CASE("decoding level arrays") {
    auto dec = [](Ids v) { return decode_step(v); };
    CHECK(dec({1, 0, 0, 0}).kind == StepKind::InvertDiagonals);

    StepAction a = dec({2, 0, 0, 0});
    CHECK(a.kind == StepKind::ArrowsAndSchur);
    CHECK(a.source_level == 0);
    CHECK(a.quad_level == 1);
    CHECK(a.store_level == 1);

    a = dec({2, 1, 0, 0});
    CHECK(a.kind == StepKind::SchurDiagAndAssemble);
    CHECK(a.source_level == 1);
    CHECK(a.assemble_depth == 1);

    a = dec({3, 1, 0, 0});
    CHECK(a.kind == StepKind::SchurDiagAndAssemble);
    CHECK(a.source_level == 2);
    CHECK(a.assemble_depth == 0);

    a = dec({4, 3, 0, 0});
    CHECK(a.kind == StepKind::ArrowsAndSchur);
    CHECK(a.source_level == 3);
    CHECK(a.quad_level == 2);
    CHECK(a.store_level == 2);

    a = dec({4, 2, 0, 0});
    CHECK(a.source_level == 3);
    CHECK(a.quad_level == 1);

    a = dec({4, 3, 2, 1});
    CHECK(a.kind == StepKind::SchurDiagAndAssemble);
    CHECK(a.source_level == 1);
    CHECK(a.assemble_depth == 3);

    a = dec({4, 2, 1, 0});
    CHECK(a.assemble_depth == 1);

    CHECK_THROWS_AS(dec({0, 0, 0}), MalformedLoopid);
    CHECK_THROWS_AS(dec({}), MalformedLoopid);
    CHECK_THROWS_AS(dec({2, 0, 1}), MalformedLoopid);
    CHECK_THROWS_AS(dec({2, 2, 0}), MalformedLoopid);
    CHECK_THROWS_AS(dec({1, 2, 0}), MalformedLoopid);
    CHECK(to_string(StepKind::ArrowsAndSchur) == "arrows-and-schur");
}

TEST_CASE("up/down iteration map for eight blocks") {
    const int expect[8][8] = {
        {1, 2, 2, 3, 2, 3, 3, 4}, {2, 1, 3, 2, 3, 2, 4, 3}, {2, 3, 1, 2, 3, 4, 2, 3},
        {3, 2, 2, 1, 4, 3, 3, 2}, {2, 3, 3, 4, 1, 2, 2, 3}, {3, 2, 4, 3, 2, 1, 3, 2},
        {3, 4, 2, 3, 2, 3, 1, 2}, {4, 3, 3, 2, 3, 2, 2, 1},
    };
    for (std::size_t r = 1; r <= 8; ++r) {
        for (std::size_t c = 1; c <= 8; ++c) {
            CHECK(updown_iteration_map(r, c) == static_cast<std::size_t>(expect[r - 1][c - 1]));
        }
    }
    CHECK_THROWS_AS(updown_iteration_map(0, 1), IndexOutOfRange);
}

namespace {

std::vector<std::size_t> uniform_offsets(std::size_t blocks, std::size_t size) {
    std::vector<std::size_t> o(blocks + 1);
    for (std::size_t i = 0; i <= blocks; ++i) o[i] = i * size;
    return o;
}

}  // namespace

TEST_CASE("Fox block multiplication") {
    const std::vector<std::size_t> off{0, 2, 5, 9};  // uneven tiles
    const std::vector<std::size_t> coff{0, 3, 4};
    const DenseMatrix a = random_matrix(9, 9, 1);
    const DenseMatrix b = random_matrix(9, 4, 2);
    DenseMatrix out(9, 4);
    fox_block_multiply({a.view(), off, off}, {b.view(), off, coff}, {out.view(), off, coff});
    CHECK(max_diff(out, naive_multiply(a.view(), b.view())) <= 1e-12);

    DenseMatrix neg(9, 4);
    fox_block_multiply({a.view(), off, off}, {b.view(), off, coff}, {neg.view(), off, coff}, 3, false, true);
    for (std::size_t k = 0; k < neg.size(); ++k) CHECK(neg.data()[k] == -out.data()[k]);

    DenseMatrix acc = random_matrix(9, 4, 3);
    const DenseMatrix acc0 = acc;
    fox_block_multiply({a.view(), off, off}, {b.view(), off, coff}, {acc.view(), off, coff}, 2, true);
    for (std::size_t k = 0; k < acc.size(); ++k) {
        CHECK(acc.data()[k] == doctest::Approx(acc0.data()[k] + out.data()[k]));
    }

    // One tile is a plain product, bit for bit.
    const std::vector<std::size_t> one{0, 9};
    const std::vector<std::size_t> one_c{0, 4};
    DenseMatrix single(9, 4);
    DenseMatrix plain(9, 4);
    fox_block_multiply({a.view(), one, one}, {b.view(), one, one_c}, {single.view(), one, one_c});
    multiply(a.view(), b.view(), plain.view());
    CHECK(bitwise_equal(single.view(), plain.view()));

    // Identity on a 4x4 tiling.
    const auto u = uniform_offsets(4, 3);
    const DenseMatrix i12 = DenseMatrix::identity(12);
    const DenseMatrix x = random_matrix(12, 12, 4);
    DenseMatrix ix(12, 12);
    fox_block_multiply({i12.view(), u, u}, {x.view(), u, u}, {ix.view(), u, u});
    CHECK(ix == x);

    CHECK_THROWS_AS(fox_block_multiply({a.view(), off, off}, {b.view(), coff, coff}, {out.view(), off, coff}),
                    BlockShapeMismatch);
    CHECK_THROWS_AS(fox_block_multiply({a.view(), off, uniform_offsets(3, 3)}, {b.view(), off, coff},
                                       {out.view(), off, coff}),
                    BlockShapeMismatch);
    DenseMatrix wrong(8, 4);
    CHECK_THROWS_AS(fox_block_multiply({a.view(), off, off}, {b.view(), off, coff}, {wrong.view(), off, coff}),
                    BlockShapeMismatch);
}

TEST_CASE("Fox multiplication is independent of the worker count") {
    const auto u = uniform_offsets(8, 5);
    const DenseMatrix a = random_matrix(40, 40, 5);
    const DenseMatrix b = random_matrix(40, 40, 6);
    DenseMatrix base(40, 40);
    fox_block_multiply({a.view(), u, u}, {b.view(), u, u}, {base.view(), u, u}, 1);
    for (unsigned w : {2u, 3u, 4u, 8u}) {
        DenseMatrix out(40, 40);
        fox_block_multiply({a.view(), u, u}, {b.view(), u, u}, {out.view(), u, u}, w);
        CHECK(bitwise_equal(out.view(), base.view()));
    }
}

TEST_CASE("engine on small orders") {
    for (std::size_t m : {2u, 3u, 5u, 8u, 21u}) {
        CAPTURE(m);
        const DenseMatrix i = DenseMatrix::identity(m);
        CHECK(run_inversion(i) == i);
        const DenseMatrix x = random_dominant(m, m);
        CHECK(max_diff(run_inversion(x), gauss_jordan_oracle(x)) <= 1e-12 * static_cast<double>(m));
    }
}

TEST_CASE("engine agrees with the oracle across orders") {
    for (std::size_t m = 2; m <= 140; m += 3) {
        const DenseMatrix x = random_dominant(m, 9000 + m);
        const double err = max_diff(run_inversion(x), gauss_jordan_oracle(x));
        if (err > 1e-12 * static_cast<double>(m)) FAIL("order " << m << " error " << err);
    }
}

TEST_CASE("with two blocks the engine reproduces the two-pivot formula exactly") {
    for (std::size_t m = 4; m <= 7; ++m) {
        const DenseMatrix x = random_dominant(m, 50 + m);
        const PartitionScheme s = make_partition(m);
        REQUIRE(s.n_blocks() == 2);
        const BlockQuad q = BlockQuad::diagonal(x.view(), s.block_order(0));
        DenseMatrix ref(m, m);
        SchurScratch scratch = SchurScratch::for_quad(q);
        invert_via_ad(q, default_sub_inverter(), ref.view(), scratch);
        CHECK(bitwise_equal(run_inversion(x).view(), ref.view()));
    }
}

TEST_CASE("engine results do not depend on the worker count") {
    for (std::size_t m : {9u, 37u, 100u, 257u}) {
        const DenseMatrix x = random_dominant(m, 70 + m);
        EngineOptions one;
        one.workers = 1;
        const DenseMatrix base = run_inversion(x, one);
        for (unsigned w : {2u, 4u, 8u}) {
            EngineOptions opts;
            opts.workers = w;
            opts.check_disjoint_writes = true;
            CHECK(bitwise_equal(run_inversion(x, opts).view(), base.view()));
        }
    }
}

TEST_CASE("step history and provisional capacity") {
    const DenseMatrix x = random_dominant(64, 3);
    EngineOptions opts;
    opts.check_disjoint_writes = true;
    InversionEngine e(x, make_partition(64), opts);
    CHECK(e.blocksize() == 32);
    CHECK(e.total_steps() == 63);
    e.run();
    CHECK(e.finished());
    REQUIRE(e.history().size() == 63);
    for (std::size_t s = 0; s < 63; ++s) {
        CHECK(e.history()[s].stepid == s + 1);
        CHECK(e.history()[s].tasks > 0);
    }
    CHECK(e.history()[0].tasks == 32);  // one per diagonal block
    for (std::size_t c = 1; c <= 5; ++c) {
        const ProvisionalSet& t = e.provisional(c);
        CHECK(t.within_capacity(e.scheme()));
        CHECK(t.lr_block_rows() <= 16);
        CHECK(t.s_block_rows() == 32);
        CHECK(t.written_at > 0);
    }
    CHECK_THROWS_AS(e.provisional(6), IndexOutOfRange);
    CHECK_THROWS(e.run_step());
    CHECK(max_diff(e.inverse().dense(), gauss_jordan_oracle(x)) <= 1e-10);
}

TEST_CASE("explicit partitions with large blocks") {
    const DenseMatrix x = random_dominant(40, 8);
    for (const auto& sizes : {std::vector<std::size_t>{40}, {13, 27}, {5, 9, 20, 6}, {1, 1, 1, 37}}) {
        const PartitionScheme s = PartitionScheme::from_sizes(sizes);
        CHECK(max_diff(run_inversion(x, s), gauss_jordan_oracle(x)) <= 1e-11);
    }
    CHECK_THROWS_AS(run_inversion(x, PartitionScheme::from_sizes({10, 10})), DimensionMismatch);
}

TEST_CASE("singular diagonal blocks are reported with the step") {
    DenseMatrix x = random_dominant(8, 4);
    x(0, 0) = x(0, 1) = x(1, 0) = x(1, 1) = 0.0;
    try {
        run_inversion(x);
        FAIL("expected SingularBlock");
    } catch (const SingularBlock& e) {
        CHECK(e.path() == "step1.block0");
    }
    // Same failure whatever the worker count.
    EngineOptions opts;
    opts.workers = 4;
    try {
        run_inversion(x, opts);
        FAIL("expected SingularBlock");
    } catch (const SingularBlock& e) {
        CHECK(e.path() == "step1.block0");
    }
}

TEST_CASE("assembly without its provisional data") {
    BlockMatrix minv(make_partition(8));
    std::vector<ProvisionalSet> none;
    CHECK_THROWS_AS(assemble_updown(1, minv, none), MissingProvisionalData);
    std::vector<ProvisionalSet> blank{ProvisionalSet::make(minv.scheme(), 1)};
    CHECK_THROWS_AS(assemble_updown(1, minv, blank), MissingProvisionalData);
    CHECK_NOTHROW(assemble_updown(0, minv, none));
}

TEST_CASE("worker count from the environment") {
    CHECK(resolve_workers(3) == 3);
    ::setenv("INVERTOR_WORKERS", "5", 1);
    CHECK(resolve_workers(0) == 5);
    ::setenv("INVERTOR_WORKERS", "zero", 1);
    CHECK(resolve_workers(0) == 1);
    ::unsetenv("INVERTOR_WORKERS");
    CHECK(resolve_workers(0) == 1);
}

TEST_CASE("engine input validation") {
    CHECK_THROWS_AS(run_inversion(DenseMatrix(3, 4)), DimensionMismatch);
    DenseMatrix bad = DenseMatrix::identity(4);
    bad(1, 2) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(run_inversion(bad), FormatError);
    EngineOptions fb;
    fb.file_backed = true;
    CHECK_THROWS(InversionEngine(DenseMatrix::identity(4), make_partition(4), fb));
}
