#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "invertor/dense.hpp"
#include "invertor/partition.hpp"

namespace invertor {

// ---------------------------------------------------------------------------
// Step schedule

/// Level array of a step: 1-based positions of the set bits of `stepid`,
/// highest first, zero padded to log2(blocksize) + 1 entries.
std::vector<std::size_t> loopid_for_step(std::size_t stepid, std::size_t blocksize);

/// 2 * blocksize - 1
std::size_t step_count(std::size_t blocksize);

enum class StepKind {
    InvertDiagonals,        ///< invert every diagonal block of the source
    ArrowsAndSchur,         ///< -A^-1 B, -D^-1 C and both Schur complements per quad
    SchurDiagAndAssemble,   ///< invert diagonal blocks of T_cid's S blocks, then assemble
};

std::string_view to_string(StepKind k) noexcept;

struct StepAction {
    StepKind kind = StepKind::InvertDiagonals;
    /// 0 reads the input matrix M, c > 0 reads the S blocks of T_c.
    std::size_t source_level = 0;
    /// Quad level for ArrowsAndSchur (the quads span 2^quad_level blocks).
    std::size_t quad_level = 0;
    /// Provisional set written by ArrowsAndSchur, 0 otherwise.
    std::size_t store_level = 0;
    /// Number of assembly passes (T_1 .. T_depth) after the diagonal inversions.
    std::size_t assemble_depth = 0;

    friend bool operator==(const StepAction&, const StepAction&) = default;
};

/// Throws MalformedLoopid.
StepAction decode_step(std::span<const std::size_t> loopid);

struct StepPlan {
    std::size_t stepid = 0;
    std::size_t blocksize = 0;
    std::vector<std::size_t> loopid;
    StepAction action;
};

StepPlan plan_step(std::size_t stepid, std::size_t blocksize);

/// Iteration index of block (r, c) (1-based) in the combined up/down map:
/// 1 + popcount((r-1) xor (c-1)).
std::size_t updown_iteration_map(std::size_t r, std::size_t c);

// ---------------------------------------------------------------------------
// Blocked storage

/// A dense matrix with the block structure of a partition scheme.
class BlockMatrix {
  public:
    BlockMatrix() = default;
    BlockMatrix(PartitionScheme scheme, DenseMatrix storage);
    explicit BlockMatrix(PartitionScheme scheme);  // zero filled

    const PartitionScheme& scheme() const noexcept { return scheme_; }
    DenseMatrix& dense() noexcept { return storage_; }
    const DenseMatrix& dense() const noexcept { return storage_; }

    MatrixView block(std::size_t i, std::size_t j);
    ConstMatrixView block(std::size_t i, std::size_t j) const;
    MatrixView region(BlockRange rows, BlockRange cols);
    ConstMatrixView region(BlockRange rows, BlockRange cols) const;

    /// One file per block: B_<i>_<j>.blk in the binary matrix format.
    void save_blocks(const std::filesystem::path& dir) const;
    void load_blocks(const std::filesystem::path& dir);

  private:
    PartitionScheme scheme_;
    DenseMatrix storage_;
};

/// A view tiled by block offsets. The offsets are absolute scheme offsets;
/// the view starts at offsets.front().
template <class View>
struct BlockedViewT {
    View view;
    std::span<const std::size_t> row_offsets;
    std::span<const std::size_t> col_offsets;

    std::size_t block_rows() const noexcept { return row_offsets.size() - 1; }
    std::size_t block_cols() const noexcept { return col_offsets.size() - 1; }
    View tile(std::size_t i, std::size_t j) const {
        return view.sub(row_offsets[i] - row_offsets[0], col_offsets[j] - col_offsets[0],
                        row_offsets[i + 1] - row_offsets[i], col_offsets[j + 1] - col_offsets[j]);
    }
};
using BlockedView = BlockedViewT<ConstMatrixView>;
using MutableBlockedView = BlockedViewT<MatrixView>;

/// Computes block row `i` of out = (+/-) a*b in Fox order: for each output
/// tile (i, j), stage t adds a(i, k) * b(k, j) with k = (i + t) mod q.
/// Stage 0 overwrites unless `accumulate`.
void fox_block_row(const BlockedView& a, const BlockedView& b, const MutableBlockedView& out,
                   std::size_t i, bool accumulate = false, bool negate = false);

/// Whole product, block rows spread over `workers` threads. Throws
/// BlockShapeMismatch when the tilings do not line up.
void fox_block_multiply(const BlockedView& a, const BlockedView& b, const MutableBlockedView& out,
                        unsigned workers = 1, bool accumulate = false, bool negate = false);

/// Level-c scratch: for each level-c quad q, R[q] = -A^-1 B and
/// L[q] = -D^-1 C; S[2q] = S_D (A's span) and S[2q+1] = S_A (D's span).
/// S blocks therefore tile the whole diagonal.
struct ProvisionalSet {
    std::size_t level = 0;
    std::vector<DenseMatrix> r_blocks;
    std::vector<DenseMatrix> l_blocks;
    std::vector<DenseMatrix> s_blocks;
    std::vector<BlockRange> s_ranges;  ///< diagonal span of each S block
    /// Step that last wrote this set; 0 if never written.
    std::size_t written_at = 0;

    static ProvisionalSet make(const PartitionScheme& scheme, std::size_t level);

    /// Block rows across L (same for R) and S, and block columns per block.
    std::size_t lr_block_rows() const noexcept;
    std::size_t s_block_rows() const noexcept;
    std::size_t block_cols() const noexcept { return std::size_t{1} << (level - 1); }
    /// True when the set fits blocksize/2 L and R rows, blocksize S rows,
    /// and 2^(level-1) block columns per block.
    bool within_capacity(const PartitionScheme& scheme) const;
};

/// Runs the up/down assembly passes 1..depth over every block column.
/// Requires the diagonal blocks of `minv` to hold the inverted S blocks.
void assemble_updown(std::size_t depth, BlockMatrix& minv,
                     std::span<const ProvisionalSet> t_sets, unsigned workers = 1);

// ---------------------------------------------------------------------------
// Engine

/// INVERTOR_WORKERS when `requested` is 0, else `requested`; at least 1.
unsigned resolve_workers(unsigned requested);

struct EngineOptions {
    unsigned workers = 0;  ///< 0: INVERTOR_WORKERS or 1
    /// When set, the full state is written here after every step.
    std::optional<std::filesystem::path> checkpoint_dir;
    /// Keep state only on disk between steps (needs checkpoint_dir).
    bool file_backed = false;
    /// Stop once this step has completed (0 runs to the end).
    std::size_t stop_after_step = 0;
    /// Verify that the tasks of every phase write disjoint memory.
    bool check_disjoint_writes = false;
};

struct StepRecord {
    std::size_t stepid = 0;
    std::vector<std::size_t> loopid;
    StepAction action;
    std::size_t tasks = 0;
};

class InversionEngine {
  public:
    InversionEngine(DenseMatrix m, PartitionScheme scheme, EngineOptions opts = {});

    /// Continues a run from the checkpoint in `dir`. `m` must be the input
    /// the checkpoint was made for (SchemeMismatch otherwise).
    /// When `expected` is given, its sizes must match the checkpoint's.
    static InversionEngine resume(const std::filesystem::path& dir, DenseMatrix m,
                                  EngineOptions opts = {},
                                  const PartitionScheme* expected = nullptr);

    std::size_t blocksize() const noexcept { return scheme_.n_blocks(); }
    std::size_t total_steps() const noexcept { return step_count(blocksize()); }
    std::size_t completed_steps() const noexcept { return done_; }
    bool finished() const noexcept { return done_ == total_steps(); }
    unsigned workers() const noexcept { return workers_; }

    /// Runs the next step. Throws SingularBlock naming the step and block.
    void run_step();
    /// Runs until finished or until stop_after_step.
    void run();

    void save_checkpoint(const std::filesystem::path& dir) const;

    const PartitionScheme& scheme() const noexcept { return scheme_; }
    const BlockMatrix& input() const noexcept { return m_; }
    const BlockMatrix& inverse() const noexcept { return minv_; }
    const ProvisionalSet& provisional(std::size_t level) const;
    const std::vector<StepRecord>& history() const noexcept { return history_; }

  private:
    ConstMatrixView source_region(std::size_t level, BlockRange rows, BlockRange cols) const;
    std::size_t invert_diagonals(std::size_t stepid, std::size_t source_level);
    std::size_t arrows_and_schur(std::size_t stepid, const StepAction& a);
    void load_state(const std::filesystem::path& dir);
    void release_state();
    bool released_ = false;

    PartitionScheme scheme_;
    EngineOptions opts_;
    unsigned workers_ = 1;
    BlockMatrix m_;
    BlockMatrix minv_;
    std::vector<ProvisionalSet> t_;  // t_[c - 1] is T_c
    std::size_t done_ = 0;
    std::vector<StepRecord> history_;
    std::uint64_t input_hash_ = 0;
};

/// Inverts `m` with the step engine; the default scheme is make_partition.
DenseMatrix run_inversion(const DenseMatrix& m, const PartitionScheme& scheme,
                          const EngineOptions& opts = {});
DenseMatrix run_inversion(const DenseMatrix& m, const EngineOptions& opts = {});

}  // namespace invertor
