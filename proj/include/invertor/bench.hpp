#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "invertor/dense.hpp"
#include "invertor/partition.hpp"
#include "invertor/schur.hpp"

namespace invertor {

enum class MatrixKind { WellConditioned, Permutation, BlockDiagonal };

std::string_view to_string(MatrixKind k) noexcept;
/// "well-conditioned", "permutation", "block-diagonal". Throws std::invalid_argument.
MatrixKind parse_kind(std::string_view s);

/// Seeded test matrices. Well-conditioned: uniform [-1, 1] entries plus
/// 2 * order on the diagonal. Permutation: a single random cycle.
/// Block-diagonal: well-conditioned diagonal blocks of make_partition's sizes.
DenseMatrix generate(std::size_t order, std::uint64_t seed,
                     MatrixKind kind = MatrixKind::WellConditioned);

enum class Method { ByA, Inplace, ByAd, Oracle, Parallel };

std::string_view to_string(Method m) noexcept;
/// "a", "inplace", "ad", "oracle", "parallel". Throws std::invalid_argument.
Method parse_method(std::string_view s);

struct MethodRun {
    DenseMatrix inverse;
    OpCounters counters;
};

/// Inverts with the named method. `scheme` only affects the parallel engine.
MethodRun invert_with_method(const DenseMatrix& x, Method method, unsigned workers = 1,
                             const PartitionScheme* scheme = nullptr);

struct TimingRecord {
    std::string method;
    std::size_t m = 0;
    unsigned workers = 1;
    double seconds = 0.0;
    double residual = 0.0;
    OpCounters counters;
    std::size_t repeat = 0;
    bool median = false;  ///< median-time repeat of its (method, m, workers) group
    std::string status = "ok";  ///< ok, residual, singular or error
};

struct BenchConfig {
    std::vector<Method> methods;
    std::vector<std::size_t> orders;
    std::vector<unsigned> workers{1};
    std::size_t repeats = 1;
    std::uint64_t seed = 1;
    MatrixKind kind = MatrixKind::WellConditioned;
};

/// Residual bound a bench row must meet: 1e-8 * m.
double residual_limit(std::size_t m) noexcept;

/// One record per (method, order, workers, repeat). Failures are recorded in
/// `status` and the sweep goes on. `on_row` sees each record as it is made
/// (before median flags are assigned).
std::vector<TimingRecord> bench(const BenchConfig& cfg,
                                const std::function<void(const TimingRecord&)>& on_row = {});

void write_csv_header(std::ostream& os);
void write_csv_row(std::ostream& os, const TimingRecord& r);
void write_csv(std::ostream& os, std::span<const TimingRecord> records);

struct SlopeFit {
    double m_lo = 0;
    double m_hi = 0;
    double n = 0;          ///< fitted exponent
    double std_error = 0;  ///< standard error of n
    std::size_t points = 0;
};

/// Least-squares slope of log T against log m over records with m in
/// [m_lo, m_hi] and seconds > 0. Throws InsufficientData below 4 points.
SlopeFit fit_slope(std::span<const TimingRecord> records, double m_lo, double m_hi);

}  // namespace invertor
