#include "invertor/engine.hpp"

#include <omp.h>

#include <algorithm>
#include <bit>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <system_error>

#include <json.hpp>

#include "invertor/matrix_io.hpp"
#include "invertor/recursive.hpp"

namespace invertor {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Step schedule

std::size_t step_count(std::size_t blocksize) {
    if (blocksize == 0 || !std::has_single_bit(blocksize)) {
        throw InvalidOrder("blocksize must be a power of two, got " + std::to_string(blocksize));
    }
    return 2 * blocksize - 1;
}

std::vector<std::size_t> loopid_for_step(std::size_t stepid, std::size_t blocksize) {
    const std::size_t n_steps = step_count(blocksize);
    if (stepid < 1 || stepid > n_steps) {
        throw IndexOutOfRange("stepid " + std::to_string(stepid) + " outside 1.." +
                              std::to_string(n_steps));
    }
    const auto n = static_cast<std::size_t>(std::countr_zero(blocksize)) + 1;
    std::vector<std::size_t> loopid;
    loopid.reserve(n);
    for (std::size_t bit = n; bit-- > 0;) {
        if (stepid & (std::size_t{1} << bit)) loopid.push_back(bit + 1);
    }
    loopid.resize(n, 0);
    return loopid;
}

std::string_view to_string(StepKind k) noexcept {
    switch (k) {
        case StepKind::InvertDiagonals: return "invert-diagonals";
        case StepKind::ArrowsAndSchur: return "arrows-and-schur";
        case StepKind::SchurDiagAndAssemble: return "schur-diag-and-assemble";
    }
    return "?";
}

StepAction decode_step(std::span<const std::size_t> loopid) {
    std::size_t nz = 0;
    while (nz < loopid.size() && loopid[nz] != 0) ++nz;
    if (nz == 0) throw MalformedLoopid("loopid has no nonzero level");
    for (std::size_t i = nz; i < loopid.size(); ++i) {
        if (loopid[i] != 0) throw MalformedLoopid("nonzero level after a zero in loopid");
    }
    for (std::size_t i = 1; i < nz; ++i) {
        if (loopid[i] >= loopid[i - 1]) throw MalformedLoopid("loopid levels must strictly decrease");
    }

    StepAction a;
    const std::size_t last = loopid[nz - 1];
    if (nz == 1) {
        if (last == 1) {
            a.kind = StepKind::InvertDiagonals;
        } else {
            a.kind = StepKind::ArrowsAndSchur;
            a.quad_level = last - 1;
            a.store_level = last - 1;
        }
        return a;
    }
    const std::size_t cid = loopid[nz - 2] - 1;
    a.source_level = cid;
    if (last == 1) {
        a.kind = StepKind::SchurDiagAndAssemble;
        std::size_t start = nz - 1;
        while (start > 0 && loopid[start - 1] == loopid[start] + 1) --start;
        a.assemble_depth = nz - 1 - start;
    } else {
        a.kind = StepKind::ArrowsAndSchur;
        a.quad_level = last - 1;
        a.store_level = last - 1;
    }
    return a;
}

StepPlan plan_step(std::size_t stepid, std::size_t blocksize) {
    StepPlan p;
    p.stepid = stepid;
    p.blocksize = blocksize;
    p.loopid = loopid_for_step(stepid, blocksize);
    p.action = decode_step(p.loopid);
    return p;
}

std::size_t updown_iteration_map(std::size_t r, std::size_t c) {
    if (r == 0 || c == 0) throw IndexOutOfRange("map coordinates are 1-based");
    return 1 + static_cast<std::size_t>(std::popcount((r - 1) ^ (c - 1)));
}

// ---------------------------------------------------------------------------
// Blocked storage

BlockMatrix::BlockMatrix(PartitionScheme scheme, DenseMatrix storage)
    : scheme_(std::move(scheme)), storage_(std::move(storage)) {
    if (storage_.rows() != scheme_.order() || storage_.cols() != scheme_.order()) {
        throw DimensionMismatch("matrix order " + std::to_string(storage_.rows()) +
                                " does not match scheme order " + std::to_string(scheme_.order()));
    }
}

BlockMatrix::BlockMatrix(PartitionScheme scheme)
    : scheme_(std::move(scheme)), storage_(scheme_.order(), scheme_.order()) {}

MatrixView BlockMatrix::block(std::size_t i, std::size_t j) {
    return region({i, i + 1}, {j, j + 1});
}

ConstMatrixView BlockMatrix::block(std::size_t i, std::size_t j) const {
    return region({i, i + 1}, {j, j + 1});
}

MatrixView BlockMatrix::region(BlockRange rows, BlockRange cols) {
    if (rows.last > scheme_.n_blocks() || cols.last > scheme_.n_blocks()) {
        throw IndexOutOfRange("block region outside the scheme");
    }
    return storage_.view(scheme_.offset(rows.first), scheme_.offset(cols.first),
                         scheme_.order_of(rows), scheme_.order_of(cols));
}

ConstMatrixView BlockMatrix::region(BlockRange rows, BlockRange cols) const {
    if (rows.last > scheme_.n_blocks() || cols.last > scheme_.n_blocks()) {
        throw IndexOutOfRange("block region outside the scheme");
    }
    return storage_.view(scheme_.offset(rows.first), scheme_.offset(cols.first),
                         scheme_.order_of(rows), scheme_.order_of(cols));
}

namespace {

std::string block_name(std::size_t i, std::size_t j) {
    return "B_" + std::to_string(i) + "_" + std::to_string(j) + ".blk";
}

std::string serialize(const DenseMatrix& m) {
    std::ostringstream os(std::ios::binary);
    write_binary(os, m);
    return std::move(os).str();
}

void write_file(const fs::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("cannot write " + path.string());
}

std::optional<std::string> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    return std::string(std::istreambuf_iterator<char>(in), {});
}

std::uint64_t hash_bytes(const std::string& s) { return fnv1a64(s.data(), s.size()); }

}  // namespace

void BlockMatrix::save_blocks(const fs::path& dir) const {
    fs::create_directories(dir);
    for (std::size_t i = 0; i < scheme_.n_blocks(); ++i) {
        for (std::size_t j = 0; j < scheme_.n_blocks(); ++j) {
            write_file(dir / block_name(i, j), serialize(DenseMatrix(block(i, j))));
        }
    }
}

void BlockMatrix::load_blocks(const fs::path& dir) {
    if (storage_.rows() != scheme_.order()) storage_ = DenseMatrix(scheme_.order(), scheme_.order());
    for (std::size_t i = 0; i < scheme_.n_blocks(); ++i) {
        for (std::size_t j = 0; j < scheme_.n_blocks(); ++j) {
            DenseMatrix b = load_matrix(dir / block_name(i, j));
            MatrixView dst = block(i, j);
            if (b.rows() != dst.rows() || b.cols() != dst.cols()) {
                throw FormatError("block file " + block_name(i, j) + " has the wrong shape");
            }
            copy(b.view(), dst);
        }
    }
}

// ---------------------------------------------------------------------------
// Fox multiplication

void fox_block_row(const BlockedView& a, const BlockedView& b, const MutableBlockedView& out,
                   std::size_t i, bool accumulate, bool negate) {
    const std::size_t q = a.block_cols();
    for (std::size_t j = 0; j < out.block_cols(); ++j) {
        MatrixView dst = out.tile(i, j);
        for (std::size_t t = 0; t < q; ++t) {
            const std::size_t k = (i + t) % q;
            multiply(a.tile(i, k), b.tile(k, j), dst, accumulate || t > 0, negate);
        }
    }
}

namespace {

bool same_tiling(std::span<const std::size_t> x, std::span<const std::size_t> y) {
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i + 1 < x.size(); ++i) {
        if (x[i + 1] - x[i] != y[i + 1] - y[i]) return false;
    }
    return true;
}

template <class V>
void check_tiling(const BlockedViewT<V>& v, const char* name) {
    if (v.row_offsets.size() < 2 || v.col_offsets.size() < 2 ||
        v.row_offsets.back() - v.row_offsets.front() != v.view.rows() ||
        v.col_offsets.back() - v.col_offsets.front() != v.view.cols()) {
        throw BlockShapeMismatch(std::string("tiling of ") + name + " does not cover its view");
    }
}

}  // namespace

void fox_block_multiply(const BlockedView& a, const BlockedView& b, const MutableBlockedView& out,
                        unsigned workers, bool accumulate, bool negate) {
    check_tiling(a, "a");
    check_tiling(b, "b");
    check_tiling(out, "out");
    if (!same_tiling(a.col_offsets, b.row_offsets)) {
        throw BlockShapeMismatch("column tiling of a differs from row tiling of b");
    }
    if (!same_tiling(out.row_offsets, a.row_offsets) || !same_tiling(out.col_offsets, b.col_offsets)) {
        throw BlockShapeMismatch("output tiling differs from the product's tiling");
    }
    const auto rows = static_cast<long>(out.block_rows());
#pragma omp parallel for num_threads(std::max(1u, workers)) schedule(static)
    for (long i = 0; i < rows; ++i) {
        fox_block_row(a, b, out, static_cast<std::size_t>(i), accumulate, negate);
    }
}

// ---------------------------------------------------------------------------
// Provisional sets

ProvisionalSet ProvisionalSet::make(const PartitionScheme& scheme, std::size_t level) {
    if (level < 1 || level > scheme.levels()) {
        throw IndexOutOfRange("provisional level " + std::to_string(level) + " outside 1.." +
                              std::to_string(scheme.levels()));
    }
    ProvisionalSet t;
    t.level = level;
    for (std::size_t q = 0; q < scheme.quads_at(level); ++q) {
        const QuadIndex quad{level, q};
        const std::size_t ma = scheme.order_of(quad.a_range());
        const std::size_t md = scheme.order_of(quad.d_range());
        t.r_blocks.emplace_back(ma, md);
        t.l_blocks.emplace_back(md, ma);
        t.s_blocks.emplace_back(ma, ma);
        t.s_ranges.push_back(quad.a_range());
        t.s_blocks.emplace_back(md, md);
        t.s_ranges.push_back(quad.d_range());
    }
    return t;
}

std::size_t ProvisionalSet::lr_block_rows() const noexcept {
    return r_blocks.size() * block_cols();
}

std::size_t ProvisionalSet::s_block_rows() const noexcept {
    std::size_t rows = 0;
    for (const auto& r : s_ranges) rows += r.count();
    return rows;
}

bool ProvisionalSet::within_capacity(const PartitionScheme& scheme) const {
    const std::size_t n = scheme.n_blocks();
    const std::size_t width = block_cols();
    if (r_blocks.size() != l_blocks.size() || lr_block_rows() > n / 2 || s_block_rows() > n) {
        return false;
    }
    for (std::size_t q = 0; q < r_blocks.size(); ++q) {
        const QuadIndex quad{level, q};
        if (quad.a_range().count() != width || quad.d_range().count() != width) return false;
        if (r_blocks[q].rows() != scheme.order_of(quad.a_range()) ||
            r_blocks[q].cols() != scheme.order_of(quad.d_range()) ||
            l_blocks[q].rows() != scheme.order_of(quad.d_range()) ||
            l_blocks[q].cols() != scheme.order_of(quad.a_range())) {
            return false;
        }
    }
    for (std::size_t s = 0; s < s_blocks.size(); ++s) {
        if (s_ranges[s].count() != width) return false;
        const std::size_t o = scheme.order_of(s_ranges[s]);
        if (s_blocks[s].rows() != o || s_blocks[s].cols() != o) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Task phases

namespace {

struct PhaseTask {
    std::function<void()> run;
    std::vector<MatrixView> writes;
};

void check_disjoint(const std::vector<PhaseTask>& tasks) {
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        for (std::size_t j = i + 1; j < tasks.size(); ++j) {
            for (const auto& wi : tasks[i].writes) {
                for (const auto& wj : tasks[j].writes) {
                    if (overlaps(wi, wj)) {
                        throw Error("tasks " + std::to_string(i) + " and " + std::to_string(j) +
                                    " write overlapping blocks");
                    }
                }
            }
        }
    }
}

// Fork, run, join. The lowest-numbered failing task's error is rethrown so
// the reported failure does not depend on the worker count.
void run_tasks(std::vector<PhaseTask>& tasks, unsigned workers, bool check) {
    if (check) check_disjoint(tasks);
    std::vector<std::exception_ptr> errors(tasks.size());
    const auto n = static_cast<long>(tasks.size());
#pragma omp parallel for num_threads(std::max(1u, workers)) schedule(static)
    for (long i = 0; i < n; ++i) {
        try {
            tasks[static_cast<std::size_t>(i)].run();
        } catch (...) {
            errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

std::vector<PhaseTask> assembly_tasks(std::size_t depth, BlockMatrix& minv,
                                      std::span<const ProvisionalSet> t_sets) {
    const PartitionScheme& scheme = minv.scheme();
    if (depth > scheme.levels()) {
        throw IndexOutOfRange("assembly depth " + std::to_string(depth) + " exceeds " +
                              std::to_string(scheme.levels()) + " levels");
    }
    if (t_sets.size() < depth) throw MissingProvisionalData("assembly needs T_1..T_" + std::to_string(depth));
    for (std::size_t t = 0; t < depth; ++t) {
        if (t_sets[t].level != t + 1 || t_sets[t].written_at == 0) {
            throw MissingProvisionalData("T_" + std::to_string(t + 1) + " holds no data");
        }
    }
    std::vector<PhaseTask> tasks;
    if (depth == 0) return tasks;
    const auto offsets = std::span<const std::size_t>(scheme.offsets());
    for (std::size_t c = 0; c < scheme.n_blocks(); ++c) {
        PhaseTask task;
        for (std::size_t t = 1; t <= depth; ++t) {
            const QuadIndex quad{t, c >> t};
            const bool in_d = quad.d_range().contains(c);
            const BlockRange rows = in_d ? quad.a_range() : quad.d_range();
            task.writes.push_back(minv.region(rows, {c, c + 1}));
        }
        task.run = [depth, c, &minv, t_sets, offsets] {
            for (std::size_t t = 1; t <= depth; ++t) {
                const QuadIndex quad{t, c >> t};
                const ProvisionalSet& ts = t_sets[t - 1];
                const bool in_d = quad.d_range().contains(c);
                // Column c in the D half: rows of the A half from R * (D column).
                // Column c in the A half: rows of the D half from L * (A column).
                const BlockRange rows = in_d ? quad.a_range() : quad.d_range();
                const BlockRange inner = in_d ? quad.d_range() : quad.a_range();
                const DenseMatrix& factor = in_d ? ts.r_blocks[quad.pair] : ts.l_blocks[quad.pair];
                const BlockedView f{factor.view(), offsets.subspan(rows.first, rows.count() + 1),
                                    offsets.subspan(inner.first, inner.count() + 1)};
                for (std::size_t r = rows.first; r < rows.last; ++r) {
                    MatrixView dst = minv.block(r, c);
                    for (std::size_t k = inner.first; k < inner.last; ++k) {
                        multiply(f.tile(r - rows.first, k - inner.first), minv.block(k, c), dst,
                                 k > inner.first);
                    }
                }
            }
        };
        tasks.push_back(std::move(task));
    }
    return tasks;
}

}  // namespace

void assemble_updown(std::size_t depth, BlockMatrix& minv, std::span<const ProvisionalSet> t_sets,
                     unsigned workers) {
    auto tasks = assembly_tasks(depth, minv, t_sets);
    run_tasks(tasks, workers, false);
}

// ---------------------------------------------------------------------------
// Engine

unsigned resolve_workers(unsigned requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("INVERTOR_WORKERS")) {
        char* end = nullptr;
        const unsigned long v = std::strtoul(env, &end, 10);
        if (end != env && *end == '\0' && v > 0 && v <= 1024) return static_cast<unsigned>(v);
    }
    return 1;
}

InversionEngine::InversionEngine(DenseMatrix m, PartitionScheme scheme, EngineOptions opts)
    : scheme_(std::move(scheme)), opts_(std::move(opts)), workers_(resolve_workers(opts_.workers)) {
    if (scheme_.n_blocks() == 0) throw InvalidOrder("empty partition scheme");
    m_ = BlockMatrix(scheme_, std::move(m));
    if (!m_.dense().all_finite()) throw FormatError("input matrix has non-finite entries");
    minv_ = BlockMatrix(scheme_);
    for (std::size_t c = 1; c <= scheme_.levels(); ++c) t_.push_back(ProvisionalSet::make(scheme_, c));
    input_hash_ = matrix_hash(m_.dense());
    if (opts_.file_backed) {
        if (!opts_.checkpoint_dir) throw Error("file-backed mode needs a checkpoint directory");
        save_checkpoint(*opts_.checkpoint_dir);
        release_state();
    }
}

const ProvisionalSet& InversionEngine::provisional(std::size_t level) const {
    if (level < 1 || level > t_.size()) {
        throw IndexOutOfRange("no provisional set T_" + std::to_string(level));
    }
    return t_[level - 1];
}

ConstMatrixView InversionEngine::source_region(std::size_t level, BlockRange rows,
                                               BlockRange cols) const {
    if (level == 0) return m_.region(rows, cols);
    const ProvisionalSet& ts = provisional(level);
    if (ts.written_at == 0) {
        throw MissingProvisionalData("T_" + std::to_string(level) + " read before it was written");
    }
    const std::size_t s = rows.first >> (level - 1);
    const BlockRange span = ts.s_ranges.at(s);
    if (rows.last > span.last || cols.first < span.first || cols.last > span.last) {
        throw IndexOutOfRange("window crosses an S block of T_" + std::to_string(level));
    }
    return ts.s_blocks[s].view(scheme_.offset(rows.first) - scheme_.offset(span.first),
                               scheme_.offset(cols.first) - scheme_.offset(span.first),
                               scheme_.order_of(rows), scheme_.order_of(cols));
}

std::size_t InversionEngine::invert_diagonals(std::size_t stepid, std::size_t source_level) {
    std::vector<PhaseTask> tasks;
    for (std::size_t i = 0; i < scheme_.n_blocks(); ++i) {
        const ConstMatrixView src = source_region(source_level, {i, i + 1}, {i, i + 1});
        const MatrixView dst = minv_.block(i, i);
        tasks.push_back({[src, dst, stepid, i] {
                             try {
                                 if (src.rows() <= 4) {
                                     invert_small(src, dst);
                                 } else {
                                     copy(src, dst);
                                     std::vector<double> row(dst.rows());
                                     invertor_inplace_by_a(dst, row);
                                 }
                             } catch (const SingularBlock& e) {
                                 std::string path = "step" + std::to_string(stepid) + ".block" +
                                                    std::to_string(i);
                                 if (!e.path().empty()) path += "." + e.path();
                                 throw SingularBlock(path, e.detail());
                             }
                         },
                         {dst}});
    }
    run_tasks(tasks, workers_, opts_.check_disjoint_writes);
    return tasks.size();
}

std::size_t InversionEngine::arrows_and_schur(std::size_t stepid, const StepAction& a) {
    const std::size_t j = a.quad_level;
    ProvisionalSet& ts = t_.at(a.store_level - 1);
    const auto offsets = std::span<const std::size_t>(scheme_.offsets());
    auto tiling = [&](BlockRange r) { return offsets.subspan(r.first, r.count() + 1); };

    std::vector<PhaseTask> arrows;
    std::vector<PhaseTask> schur;
    for (std::size_t q = 0; q < scheme_.quads_at(j); ++q) {
        const QuadIndex quad{j, q};
        const BlockRange ar = quad.a_range();
        const BlockRange dr = quad.d_range();
        const auto ta = tiling(ar);
        const auto td = tiling(dr);
        const BlockedView a_blk{source_region(a.source_level, ar, ar), ta, ta};
        const BlockedView b_blk{source_region(a.source_level, ar, dr), ta, td};
        const BlockedView c_blk{source_region(a.source_level, dr, ar), td, ta};
        const BlockedView d_blk{source_region(a.source_level, dr, dr), td, td};
        const BlockedView a_inv{minv_.region(ar, ar), ta, ta};
        const BlockedView d_inv{minv_.region(dr, dr), td, td};
        const MutableBlockedView r_out{ts.r_blocks[q].view(), ta, td};
        const MutableBlockedView l_out{ts.l_blocks[q].view(), td, ta};
        const MutableBlockedView sd_out{ts.s_blocks[2 * q].view(), ta, ta};
        const MutableBlockedView sa_out{ts.s_blocks[2 * q + 1].view(), td, td};
        const BlockedView r_in{r_out.view, ta, td};
        const BlockedView l_in{l_out.view, td, ta};

        for (std::size_t i = 0; i < ar.count(); ++i) {
            arrows.push_back({[=] { fox_block_row(a_inv, b_blk, r_out, i, false, true); },
                              {r_out.view.sub(ta[i] - ta[0], 0, ta[i + 1] - ta[i], r_out.view.cols())}});
        }
        for (std::size_t i = 0; i < dr.count(); ++i) {
            arrows.push_back({[=] { fox_block_row(d_inv, c_blk, l_out, i, false, true); },
                              {l_out.view.sub(td[i] - td[0], 0, td[i + 1] - td[i], l_out.view.cols())}});
        }
        // S_A = D + C R and S_D = A + B L, one block row per task.
        for (std::size_t i = 0; i < dr.count(); ++i) {
            const MatrixView rows = sa_out.view.sub(td[i] - td[0], 0, td[i + 1] - td[i], sa_out.view.cols());
            schur.push_back({[=] {
                                 copy(d_blk.view.sub(td[i] - td[0], 0, rows.rows(), rows.cols()), rows);
                                 fox_block_row(c_blk, r_in, sa_out, i, true);
                             },
                             {rows}});
        }
        for (std::size_t i = 0; i < ar.count(); ++i) {
            const MatrixView rows = sd_out.view.sub(ta[i] - ta[0], 0, ta[i + 1] - ta[i], sd_out.view.cols());
            schur.push_back({[=] {
                                 copy(a_blk.view.sub(ta[i] - ta[0], 0, rows.rows(), rows.cols()), rows);
                                 fox_block_row(b_blk, l_in, sd_out, i, true);
                             },
                             {rows}});
        }
    }
    run_tasks(arrows, workers_, opts_.check_disjoint_writes);
    run_tasks(schur, workers_, opts_.check_disjoint_writes);
    ts.written_at = stepid;
    if (!ts.within_capacity(scheme_)) {
        throw Error("T_" + std::to_string(ts.level) + " exceeds its row or column budget");
    }
    return arrows.size() + schur.size();
}

void InversionEngine::run_step() {
    if (finished()) throw Error("inversion already finished");
    if (released_) load_state(*opts_.checkpoint_dir);

    const StepPlan plan = plan_step(done_ + 1, blocksize());
    const StepAction& a = plan.action;
    std::size_t tasks = 0;
    switch (a.kind) {
        case StepKind::InvertDiagonals:
            tasks = invert_diagonals(plan.stepid, 0);
            break;
        case StepKind::ArrowsAndSchur:
            tasks = arrows_and_schur(plan.stepid, a);
            break;
        case StepKind::SchurDiagAndAssemble: {
            tasks = invert_diagonals(plan.stepid, a.source_level);
            auto assembly = assembly_tasks(a.assemble_depth, minv_, t_);
            run_tasks(assembly, workers_, opts_.check_disjoint_writes);
            tasks += assembly.size();
            break;
        }
    }
    ++done_;
    history_.push_back({plan.stepid, plan.loopid, a, tasks});

    if (opts_.checkpoint_dir) save_checkpoint(*opts_.checkpoint_dir);
    if (opts_.file_backed && !finished()) release_state();
}

void InversionEngine::run() {
    while (!finished()) {
        if (opts_.stop_after_step != 0 && done_ >= opts_.stop_after_step) break;
        run_step();
    }
    if (released_) load_state(*opts_.checkpoint_dir);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr int kCheckpointVersion = 1;

fs::path tset_path(std::size_t level, char kind, std::size_t index) {
    return fs::path("tset") / std::to_string(level) /
           (std::string(1, kind) + "_" + std::to_string(index) + ".blk");
}

}  // namespace

void InversionEngine::save_checkpoint(const fs::path& dir) const {
    if (released_) throw Error("engine state is on disk only");
    fs::create_directories(dir / "minv");
    nlohmann::json files = nlohmann::json::object();
    auto put = [&](const fs::path& rel, const DenseMatrix& m) {
        const std::string bytes = serialize(m);
        fs::create_directories((dir / rel).parent_path());
        write_file(dir / rel, bytes);
        files[rel.generic_string()] = hex64(hash_bytes(bytes));
    };
    for (std::size_t i = 0; i < scheme_.n_blocks(); ++i) {
        for (std::size_t j = 0; j < scheme_.n_blocks(); ++j) {
            put(fs::path("minv") / block_name(i, j), DenseMatrix(minv_.block(i, j)));
        }
    }
    nlohmann::json written = nlohmann::json::array();
    for (const auto& ts : t_) {
        for (std::size_t q = 0; q < ts.r_blocks.size(); ++q) {
            put(tset_path(ts.level, 'R', q), ts.r_blocks[q]);
            put(tset_path(ts.level, 'L', q), ts.l_blocks[q]);
        }
        for (std::size_t s = 0; s < ts.s_blocks.size(); ++s) put(tset_path(ts.level, 'S', s), ts.s_blocks[s]);
        written.push_back(ts.written_at);
    }
    nlohmann::json meta = {
        {"version", kCheckpointVersion},
        {"stepid", done_},
        {"blocksize", scheme_.n_blocks()},
        {"sizes", scheme_.sizes()},
        {"input_hash", hex64(input_hash_)},
        {"scheme_hash", hex64(scheme_.hash())},
        {"tset_written_at", written},
        {"files", files},
    };
    // meta.json goes last and atomically: a checkpoint without it is not one.
    const fs::path tmp = dir / "meta.json.tmp";
    write_file(tmp, meta.dump(2) + "\n");
    fs::rename(tmp, dir / "meta.json");
}

namespace {

nlohmann::json read_meta(const fs::path& dir) {
    const auto text = read_file(dir / "meta.json");
    if (!text) throw CheckpointCorrupt("no meta.json in " + dir.string());
    try {
        nlohmann::json meta = nlohmann::json::parse(*text);
        if (meta.at("version").get<int>() != kCheckpointVersion) {
            throw CheckpointCorrupt("unsupported checkpoint version");
        }
        return meta;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointCorrupt(std::string("unreadable meta.json: ") + e.what());
    }
}

DenseMatrix read_checked(const fs::path& dir, const fs::path& rel, const nlohmann::json& files,
                         std::size_t rows, std::size_t cols) {
    const std::string key = rel.generic_string();
    if (!files.contains(key)) throw CheckpointCorrupt("meta.json does not list " + key);
    const auto bytes = read_file(dir / rel);
    if (!bytes) throw CheckpointCorrupt("missing checkpoint file " + key);
    if (hex64(hash_bytes(*bytes)) != files.at(key).get<std::string>()) {
        throw CheckpointCorrupt("hash mismatch in " + key);
    }
    DenseMatrix m;
    try {
        std::istringstream in(*bytes, std::ios::binary);
        m = read_binary(in);
    } catch (const Error& e) {
        throw CheckpointCorrupt(key + ": " + e.what());
    }
    if (m.rows() != rows || m.cols() != cols) throw CheckpointCorrupt(key + " has the wrong shape");
    return m;
}

}  // namespace

void InversionEngine::load_state(const fs::path& dir) {
    const nlohmann::json meta = read_meta(dir);
    try {
        if (meta.at("sizes").get<std::vector<std::size_t>>() != scheme_.sizes() ||
            meta.at("blocksize").get<std::size_t>() != scheme_.n_blocks()) {
            throw SchemeMismatch("checkpoint was made for a different partition");
        }
        if (meta.at("input_hash").get<std::string>() != hex64(input_hash_)) {
            throw SchemeMismatch("checkpoint was made for a different input matrix");
        }
        const auto done = meta.at("stepid").get<std::size_t>();
        if (done > total_steps()) throw CheckpointCorrupt("checkpoint stepid out of range");
        const auto written = meta.at("tset_written_at").get<std::vector<std::size_t>>();
        if (written.size() != scheme_.levels()) throw CheckpointCorrupt("wrong number of T sets");
        const nlohmann::json& files = meta.at("files");

        BlockMatrix minv(scheme_);
        for (std::size_t i = 0; i < scheme_.n_blocks(); ++i) {
            for (std::size_t j = 0; j < scheme_.n_blocks(); ++j) {
                const MatrixView dst = minv.block(i, j);
                const DenseMatrix b =
                    read_checked(dir, fs::path("minv") / block_name(i, j), files, dst.rows(), dst.cols());
                copy(b.view(), dst);
            }
        }
        std::vector<ProvisionalSet> tsets;
        for (std::size_t c = 1; c <= scheme_.levels(); ++c) {
            ProvisionalSet ts = ProvisionalSet::make(scheme_, c);
            for (std::size_t q = 0; q < ts.r_blocks.size(); ++q) {
                ts.r_blocks[q] = read_checked(dir, tset_path(c, 'R', q), files, ts.r_blocks[q].rows(),
                                              ts.r_blocks[q].cols());
                ts.l_blocks[q] = read_checked(dir, tset_path(c, 'L', q), files, ts.l_blocks[q].rows(),
                                              ts.l_blocks[q].cols());
            }
            for (std::size_t s = 0; s < ts.s_blocks.size(); ++s) {
                ts.s_blocks[s] = read_checked(dir, tset_path(c, 'S', s), files, ts.s_blocks[s].rows(),
                                              ts.s_blocks[s].cols());
            }
            ts.written_at = written[c - 1];
            tsets.push_back(std::move(ts));
        }
        minv_ = std::move(minv);
        t_ = std::move(tsets);
        done_ = done;
        released_ = false;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointCorrupt(std::string("malformed meta.json: ") + e.what());
    }
}

void InversionEngine::release_state() {
    minv_ = BlockMatrix();
    for (auto& ts : t_) {
        for (auto* v : {&ts.r_blocks, &ts.l_blocks, &ts.s_blocks}) {
            for (auto& b : *v) b = DenseMatrix();
        }
    }
    released_ = true;
}

InversionEngine InversionEngine::resume(const fs::path& dir, DenseMatrix m, EngineOptions opts,
                                        const PartitionScheme* expected) {
    const nlohmann::json meta = read_meta(dir);
    PartitionScheme scheme;
    try {
        scheme = PartitionScheme::from_sizes(meta.at("sizes").get<std::vector<std::size_t>>());
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointCorrupt(std::string("malformed meta.json: ") + e.what());
    } catch (const InvalidOrder& e) {
        throw CheckpointCorrupt(std::string("bad sizes in meta.json: ") + e.what());
    }
    if (expected && !(*expected == scheme)) {
        throw SchemeMismatch("checkpoint partition differs from the requested one");
    }
    if (m.rows() != scheme.order() || m.cols() != scheme.order()) {
        throw SchemeMismatch("input order " + std::to_string(m.rows()) +
                             " does not match checkpoint order " + std::to_string(scheme.order()));
    }
    // The constructor would write a fresh file-backed state; attach first.
    const bool file_backed = opts.file_backed;
    opts.file_backed = false;
    InversionEngine engine(std::move(m), std::move(scheme), opts);
    engine.opts_.file_backed = file_backed;
    engine.load_state(dir);
    if (file_backed && !engine.finished()) {
        if (!engine.opts_.checkpoint_dir) engine.opts_.checkpoint_dir = dir;
        engine.release_state();
    }
    return engine;
}

DenseMatrix run_inversion(const DenseMatrix& m, const PartitionScheme& scheme,
                          const EngineOptions& opts) {
    InversionEngine engine(m, scheme, opts);
    engine.run();
    if (!engine.finished()) throw Error("inversion stopped before the last step");
    return engine.inverse().dense();
}

DenseMatrix run_inversion(const DenseMatrix& m, const EngineOptions& opts) {
    if (!m.square()) throw DimensionMismatch("inversion needs a square matrix");
    return run_inversion(m, make_partition(m.rows()), opts);
}

}  // namespace invertor
