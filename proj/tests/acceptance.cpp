// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "alloc_audit.hpp"
#include "invertor/bench.hpp"
#include "invertor/engine.hpp"
#include "invertor/oracle.hpp"
#include "invertor/partition.hpp"
#include "invertor/recursive.hpp"
#include "invertor/schur.hpp"
#include "support.hpp"

using namespace invertor;
using namespace testing_support;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kOracleTolPerOrder = 1e-8;
constexpr double kSlopeRecoveryTol = 1e-3;
constexpr double kSlopeBandLo = 1.5;
constexpr double kSlopeBandHi = 4.5;

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
    std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

// Runs a criterion, turning an unexpected exception into a FAIL line.
void criterion(const std::string& name, const std::function<std::pair<bool, std::string>()>& body) {
    try {
        const auto [ok, detail] = body();
        report(name, ok, detail);
    } catch (const std::exception& e) {
        report(name, false, std::string("exception: ") + e.what());
    }
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

DenseMatrix inplace_copy(const DenseMatrix& x, const InvertOptions& opts = {}) {
    DenseMatrix y = x;
    std::vector<double> row(x.rows());
    invertor_inplace_by_a(y, row, opts);
    return y;
}

std::pair<bool, std::string> oracle_equivalence() {
    std::vector<std::size_t> orders;
    for (std::size_t m = 2; m <= 64; ++m) orders.push_back(m);
    for (std::size_t m : {100u, 129u, 256u, 512u}) orders.push_back(m);
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;  // error / tolerance
    std::size_t bad = 0;
    for (std::size_t i = 0; i < 200; ++i) {
        const std::size_t m = orders[i % orders.size()];
        const DenseMatrix x = generate(m, 1000 + i);
        const DenseMatrix ref = gauss_jordan_oracle(x);
        const double tol = kOracleTolPerOrder * static_cast<double>(m);
        const DenseMatrix results[] = {invertor_by_a(x).inverse, inplace_copy(x),
                                       invertor_by_ad(x).inverse, run_inversion(x)};
        for (const DenseMatrix& r : results) {
            const double err = max_diff(r, ref);
            const double res = residual_norm(x, r);
            worst = std::max({worst, err / tol, res / tol});
            if (!(err <= tol) || !(res <= tol)) ++bad;
        }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {bad == 0 && secs < 120.0, "200 matrices x 4 methods, " + std::to_string(bad) +
                                          " outside 1e-8*order, worst/tol " + fmt("%.2e", worst) +
                                          ", " + fmt("%.1f", secs) + " s"};
}

std::pair<bool, std::string> partition_table() {
    using Sizes = std::vector<std::size_t>;
    const std::vector<std::pair<std::size_t, Sizes>> rows{
        {2, {2}},    {3, {3}},       {4, {2, 2}},       {5, {2, 3}},       {6, {3, 3}},
        {7, {3, 4}}, {8, {2, 2, 2, 2}}, {9, {2, 2, 2, 3}}, {21, {2, 2, 2, 3, 3, 3, 3, 3}},
    };
    std::size_t matched = 0;
    for (const auto& [m, sizes] : rows) matched += make_partition(m).sizes() == sizes;
    const std::size_t n100 = make_partition(100).n_blocks();
    const std::size_t n10000 = make_partition(10000).n_blocks();
    return {matched == 9 && n100 == 32 && n10000 == 4096,
            std::to_string(matched) + "/9 rows, N(100)=" + std::to_string(n100) +
                ", N(10000)=" + std::to_string(n10000)};
}

std::pair<bool, std::string> step_table() {
    using Ids = std::vector<std::size_t>;
    const std::vector<Ids> table{
        {1, 0, 0, 0}, {2, 0, 0, 0}, {2, 1, 0, 0}, {3, 0, 0, 0}, {3, 1, 0, 0},
        {3, 2, 0, 0}, {3, 2, 1, 0}, {4, 0, 0, 0}, {4, 1, 0, 0}, {4, 2, 0, 0},
        {4, 2, 1, 0}, {4, 3, 0, 0}, {4, 3, 1, 0}, {4, 3, 2, 0}, {4, 3, 2, 1},
    };
    std::size_t matched = 0;
    for (std::size_t s = 1; s <= 15; ++s) matched += loopid_for_step(s, 8) == table[s - 1];
    bool counts = true;
    for (std::size_t b : {2u, 4u, 8u, 16u, 32u}) {
        counts = counts && step_count(b) == 2 * b - 1;
        // Every step in range decodes, and the next one does not exist.
        for (std::size_t s = 1; s <= step_count(b); ++s) plan_step(s, b);
        try {
            loopid_for_step(step_count(b) + 1, b);
            counts = false;
        } catch (const IndexOutOfRange&) {
        }
    }
    return {matched == 15 && counts, std::to_string(matched) + "/15 rows for blocksize 8, N_s = 2N-1 for N in 2..32 " +
                                         (counts ? "holds" : "broken")};
}

std::pair<bool, std::string> iteration_map() {
    const int fig[8][8] = {
        {1, 2, 2, 3, 2, 3, 3, 4}, {2, 1, 3, 2, 3, 2, 4, 3}, {2, 3, 1, 2, 3, 4, 2, 3},
        {3, 2, 2, 1, 4, 3, 3, 2}, {2, 3, 3, 4, 1, 2, 2, 3}, {3, 2, 4, 3, 2, 1, 3, 2},
        {3, 4, 2, 3, 2, 3, 1, 2}, {4, 3, 3, 2, 3, 2, 2, 1},
    };
    std::size_t matched = 0;
    for (std::size_t r = 1; r <= 8; ++r) {
        for (std::size_t c = 1; c <= 8; ++c) {
            matched += updown_iteration_map(r, c) == static_cast<std::size_t>(fig[r - 1][c - 1]);
        }
    }
    return {matched == 64, std::to_string(matched) + "/64 entries"};
}

std::pair<bool, std::string> counter_laws() {
    std::string detail;
    bool ok = true;
    for (std::size_t leaf : {1u, 4u}) {
        InvertOptions opts;
        opts.leaf_order = leaf;
        for (std::size_t k = 1; k <= 6; ++k) {
            const std::size_t n = std::size_t{1} << k;
            const DenseMatrix x = generate(n, 40 + k);
            const TreeCount two = recursion_tree(n, leaf, 2);
            const TreeCount four = recursion_tree(n, leaf, 4);
            const OpCounters a = invertor_by_a(x, opts).counters;
            DenseMatrix y = x;
            std::vector<double> row(n);
            const OpCounters ip = invertor_inplace_by_a(y, row, opts);
            const OpCounters d = invertor_by_ad(x, opts).counters;
            ok = ok && a.multiplies == 6 * two.nodes && a.reductions == 2 * two.nodes;
            ok = ok && ip.multiplies == 6 * two.nodes && ip.reductions == 2 * two.nodes;
            ok = ok && d.multiplies == 4 * four.nodes;
            if (leaf == 1 && k == 6) {
                detail = "order 64, unit leaves: by_a " + std::to_string(a.multiplies) + " mult / " +
                         std::to_string(two.nodes) + " nodes, by_ad " + std::to_string(d.multiplies) +
                         " mult / " + std::to_string(four.nodes) + " nodes";
            }
        }
    }
    return {ok, detail + (ok ? "" : " (law broken for some k <= 6)")};
}

std::pair<bool, std::string> scratch_discipline() {
    bool ok = true;
    std::size_t worst_bytes = 0;
    for (std::size_t n : {2u, 8u, 64u, 100u, 256u}) {
        DenseMatrix x = generate(n, n);
        std::vector<double> row(n);
        alloc_audit::start();
        const OpCounters c = invertor_inplace_by_a(x, row);
        const std::size_t bytes = alloc_audit::stop();
        worst_bytes = std::max(worst_bytes, bytes);
        ok = ok && bytes == 0 && c.peak_scratch <= n;
    }
    std::string series;
    InvertOptions leaf2;
    leaf2.leaf_order = 2;
    for (std::size_t k = 2; k <= 6; ++k) {
        const std::size_t n = std::size_t{1} << k;
        const std::size_t want = (std::size_t{2} << k) * ((std::size_t{1} << (k - 1)) - 1);
        const std::size_t got = invertor_by_ad(generate(n, k), leaf2).counters.peak_scratch;
        ok = ok && got == want;
        series += (series.empty() ? "" : ",") + std::to_string(got);
    }
    return {ok, "in-place heap bytes " + std::to_string(worst_bytes) +
                    ", by_ad Schur peaks k=2..6: " + series};
}

std::pair<bool, std::string> determinism() {
    std::size_t identical = 0;
    for (std::size_t i = 0; i < 20; ++i) {
        const std::size_t m = 8 + 13 * i;
        const DenseMatrix x = generate(m, 500 + i);
        EngineOptions base_opts;
        base_opts.workers = 1;
        const DenseMatrix base = run_inversion(x, base_opts);
        bool same = true;
        for (unsigned w : {2u, 4u, 8u}) {
            EngineOptions opts;
            opts.workers = w;
            same = same && bitwise_equal(run_inversion(x, opts).view(), base.view());
        }
        identical += same;
    }
    return {identical == 20, std::to_string(identical) + "/20 inputs bitwise identical for workers 1,2,4,8"};
}

std::pair<bool, std::string> resume_equivalence() {
    const DenseMatrix x = generate(23, 77);  // eight blocks, 15 steps
    const PartitionScheme scheme = make_partition(23);
    const DenseMatrix full = run_inversion(x, scheme);
    const fs::path dir = fs::temp_directory_path() / "invertor_acceptance_resume";
    std::size_t good = 0;
    for (bool file_backed : {false, true}) {
        for (std::size_t s = 1; s <= 14; ++s) {
            fs::remove_all(dir);
            EngineOptions first;
            first.checkpoint_dir = dir;
            first.file_backed = file_backed;
            first.stop_after_step = s;
            InversionEngine e(x, scheme, first);
            e.run();
            EngineOptions second;
            second.checkpoint_dir = dir;
            second.file_backed = file_backed;
            second.workers = 1 + s % 4;
            InversionEngine r = InversionEngine::resume(dir, x, second, &scheme);
            r.run();
            good += r.finished() && r.completed_steps() == 15 &&
                    bitwise_equal(r.inverse().dense().view(), full.view());
        }
    }
    fs::remove_all(dir);
    return {good == 28, std::to_string(good) + "/28 interrupted runs (14 in memory, 14 file-backed) identical"};
}

std::pair<bool, std::string> singular_pivots() {
    const DenseMatrix p(2, 2, std::vector<double>{0, 1, 1, 0});
    const BlockQuad diag = BlockQuad::diagonal(p.view(), 1);
    const BlockQuad counter = BlockQuad::counterdiagonal(p.view(), 1);
    DenseMatrix out(2, 2);
    std::string pivots;
    for (auto* f : {&invert_via_a, &invert_via_d}) {
        try {
            (*f)(diag, default_sub_inverter(), out.view(), nullptr);
            pivots += "none,";
        } catch (const SingularBlock& e) {
            pivots += e.pivot() + ",";
        }
    }
    DenseMatrix via_b(2, 2);
    DenseMatrix via_c(2, 2);
    invert_via_b(counter, default_sub_inverter(), via_b.view());
    invert_via_c(counter, default_sub_inverter(), via_c.view());
    DenseMatrix fb(2, 2);
    const FormulaUsed used = invert_with_fallback(diag, fb.view());
    const bool ok = pivots == "A,D," && via_b == p && via_c == p && fb == p && used == FormulaUsed::ViaB;
    return {ok, "via_a/via_d fail at " + pivots.substr(0, pivots.size() - 1) +
                    "; via_b/via_c exact; fallback chose " + std::string(to_string(used))};
}

std::pair<bool, std::string> timing_slopes(const fs::path& csv_path) {
    // Synthetic recovery.
    double worst = 0.0;
    for (double n : {1.5, 2.0, 2.807, 3.0, 3.74}) {
        std::vector<TimingRecord> recs;
        for (std::size_t m = 10; m <= 100; m += 10) {
            TimingRecord r;
            r.m = m;
            r.seconds = 1e-8 * std::pow(static_cast<double>(m), n);
            recs.push_back(r);
        }
        worst = std::max(worst, std::abs(fit_slope(recs, 10, 100).n - n));
    }

    BenchConfig cfg;
    cfg.methods = {Method::ByA, Method::Inplace, Method::ByAd, Method::Parallel, Method::Oracle};
    cfg.orders = {10, 16, 25, 32, 40, 50, 64, 80, 100};
    cfg.repeats = 7;
    cfg.seed = 3;
    const auto records = bench(cfg);
    std::ofstream csv(csv_path);
    write_csv(csv, records);

    bool in_band = true;
    bool rows_ok = true;
    std::ostringstream slopes;
    for (const Method m : cfg.methods) {
        std::vector<TimingRecord> medians;
        for (const auto& r : records) {
            rows_ok = rows_ok && r.status == "ok";
            if (r.median && r.method == to_string(m)) medians.push_back(r);
        }
        const SlopeFit f = fit_slope(medians, 10, 100);
        in_band = in_band && f.n >= kSlopeBandLo && f.n <= kSlopeBandHi;
        slopes << ' ' << to_string(m) << '=' << fmt("%.2f", f.n) << "+-" << fmt("%.2f", f.std_error);
    }
    const bool ok = worst <= kSlopeRecoveryTol && in_band && rows_ok && fs::file_size(csv_path) > 0;
    return {ok, "synthetic max error " + fmt("%.1e", worst) + ", measured slopes on [10,100]:" +
                    slopes.str() + ", csv " + csv_path.string()};
}

}  // namespace

int main(int argc, char** argv) {
    const fs::path csv = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_timings.csv");
    criterion("oracle-equivalence", oracle_equivalence);
    criterion("partition-table", partition_table);
    criterion("step-table", step_table);
    criterion("iteration-map", iteration_map);
    criterion("multiplication-counts", counter_laws);
    criterion("scratch-discipline", scratch_discipline);
    criterion("determinism", determinism);
    criterion("resume-equivalence", resume_equivalence);
    criterion("singular-pivots", singular_pivots);
    criterion("timing-slopes", [&] { return timing_slopes(csv); });
    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
