#include "invertor/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

#include "invertor/engine.hpp"
#include "invertor/oracle.hpp"
#include "invertor/recursive.hpp"

namespace invertor {

std::string_view to_string(MatrixKind k) noexcept {
    switch (k) {
        case MatrixKind::WellConditioned: return "well-conditioned";
        case MatrixKind::Permutation: return "permutation";
        case MatrixKind::BlockDiagonal: return "block-diagonal";
    }
    return "?";
}

MatrixKind parse_kind(std::string_view s) {
    for (auto k : {MatrixKind::WellConditioned, MatrixKind::Permutation, MatrixKind::BlockDiagonal}) {
        if (s == to_string(k)) return k;
    }
    throw std::invalid_argument("unknown matrix kind: " + std::string(s));
}

namespace {

// 53 random bits mapped to [-1, 1).
double uniform_pm1(std::mt19937_64& rng) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return 2.0 * u - 1.0;
}

void fill_dominant(MatrixView v, std::mt19937_64& rng) {
    for (std::size_t i = 0; i < v.rows(); ++i) {
        for (std::size_t j = 0; j < v.cols(); ++j) v(i, j) = uniform_pm1(rng);
        v(i, i) += 2.0 * static_cast<double>(v.rows());
    }
}

}  // namespace

DenseMatrix generate(std::size_t order, std::uint64_t seed, MatrixKind kind) {
    if (order == 0) throw InvalidOrder("order must be at least 1");
    std::mt19937_64 rng(seed);
    DenseMatrix x(order, order);
    switch (kind) {
        case MatrixKind::WellConditioned:
            fill_dominant(x.view(), rng);
            break;
        case MatrixKind::Permutation: {
            // Sattolo: one cycle through every index, so no fixed points.
            std::vector<std::size_t> p(order);
            std::iota(p.begin(), p.end(), std::size_t{0});
            for (std::size_t i = order - 1; i > 0; --i) {
                const std::size_t j = static_cast<std::size_t>(rng() % i);
                std::swap(p[i], p[j]);
            }
            for (std::size_t i = 0; i < order; ++i) x(i, p[i]) = 1.0;
            break;
        }
        case MatrixKind::BlockDiagonal: {
            if (order == 1) {
                fill_dominant(x.view(), rng);
                break;
            }
            const PartitionScheme s = make_partition(order);
            for (std::size_t b = 0; b < s.n_blocks(); ++b) {
                fill_dominant(x.view(s.offset(b), s.offset(b), s.block_order(b), s.block_order(b)), rng);
            }
            break;
        }
    }
    return x;
}

std::string_view to_string(Method m) noexcept {
    switch (m) {
        case Method::ByA: return "a";
        case Method::Inplace: return "inplace";
        case Method::ByAd: return "ad";
        case Method::Oracle: return "oracle";
        case Method::Parallel: return "parallel";
    }
    return "?";
}

Method parse_method(std::string_view s) {
    for (auto m : {Method::ByA, Method::Inplace, Method::ByAd, Method::Oracle, Method::Parallel}) {
        if (s == to_string(m)) return m;
    }
    throw std::invalid_argument("unknown method: " + std::string(s));
}

MethodRun invert_with_method(const DenseMatrix& x, Method method, unsigned workers,
                             const PartitionScheme* scheme) {
    MethodRun run;
    switch (method) {
        case Method::ByA: {
            auto r = invertor_by_a(x);
            run.inverse = std::move(r.inverse);
            run.counters = r.counters;
            break;
        }
        case Method::Inplace: {
            run.inverse = x;
            std::vector<double> row(x.rows());
            run.counters = invertor_inplace_by_a(run.inverse, row);
            break;
        }
        case Method::ByAd: {
            InvertOptions opts;
            opts.pair_workers = std::max(1u, workers);
            auto r = invertor_by_ad(x, opts);
            run.inverse = std::move(r.inverse);
            run.counters = r.counters;
            break;
        }
        case Method::Oracle:
            run.inverse = gauss_jordan_oracle(x);
            break;
        case Method::Parallel: {
            EngineOptions opts;
            opts.workers = resolve_workers(workers);
            run.inverse = scheme ? run_inversion(x, *scheme, opts) : run_inversion(x, opts);
            break;
        }
    }
    return run;
}

double residual_limit(std::size_t m) noexcept { return 1e-8 * static_cast<double>(m); }

std::vector<TimingRecord> bench(const BenchConfig& cfg,
                                const std::function<void(const TimingRecord&)>& on_row) {
    if (cfg.repeats == 0) throw std::invalid_argument("repeats must be at least 1");
    if (!std::is_sorted(cfg.orders.begin(), cfg.orders.end())) {
        throw std::invalid_argument("bench orders must be ascending");
    }
    std::vector<TimingRecord> out;
    for (const Method method : cfg.methods) {
        // Only the two-pivot recursion and the engine use more than one thread.
        std::vector<unsigned> worker_list{1};
        if (method == Method::ByAd || method == Method::Parallel) worker_list = cfg.workers;
        for (const std::size_t m : cfg.orders) {
            const DenseMatrix x = generate(m, cfg.seed, cfg.kind);
            for (const unsigned w : worker_list) {
                const std::size_t group_start = out.size();
                for (std::size_t rep = 0; rep < cfg.repeats; ++rep) {
                    TimingRecord rec;
                    rec.method = std::string(to_string(method));
                    rec.m = m;
                    rec.workers = w;
                    rec.repeat = rep;
                    try {
                        const auto t0 = std::chrono::steady_clock::now();
                        MethodRun run = invert_with_method(x, method, w);
                        const auto t1 = std::chrono::steady_clock::now();
                        rec.seconds = std::chrono::duration<double>(t1 - t0).count();
                        rec.counters = run.counters;
                        rec.residual = residual_norm(x, run.inverse);
                        if (!(rec.residual <= residual_limit(m))) rec.status = "residual";
                    } catch (const SingularBlock&) {
                        rec.status = "singular";
                        rec.residual = NAN;
                    } catch (const AllPivotsSingular&) {
                        rec.status = "singular";
                        rec.residual = NAN;
                    } catch (const SingularMatrix&) {
                        rec.status = "singular";
                        rec.residual = NAN;
                    } catch (const std::exception&) {
                        rec.status = "error";
                        rec.residual = NAN;
                    }
                    if (on_row) on_row(rec);
                    out.push_back(std::move(rec));
                }
                std::vector<std::size_t> idx(cfg.repeats);
                std::iota(idx.begin(), idx.end(), group_start);
                std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
                    return out[a].seconds < out[b].seconds;
                });
                out[idx[(cfg.repeats - 1) / 2]].median = true;
            }
        }
    }
    return out;
}

void write_csv_header(std::ostream& os) {
    os << "method,m,workers,seconds,residual,multiplies,inversions,reductions,repeat,median,status\n";
}

void write_csv_row(std::ostream& os, const TimingRecord& r) {
    char sec[32];
    char res[32];
    std::snprintf(sec, sizeof sec, "%.9f", r.seconds);
    std::snprintf(res, sizeof res, "%.6e", r.residual);
    os << r.method << ',' << r.m << ',' << r.workers << ',' << sec << ',' << res << ','
       << r.counters.multiplies << ',' << r.counters.inversions << ',' << r.counters.reductions << ','
       << r.repeat << ',' << (r.median ? 1 : 0) << ',' << r.status << '\n';
}

void write_csv(std::ostream& os, std::span<const TimingRecord> records) {
    write_csv_header(os);
    for (const auto& r : records) write_csv_row(os, r);
}

SlopeFit fit_slope(std::span<const TimingRecord> records, double m_lo, double m_hi) {
    std::vector<double> xs;
    std::vector<double> ys;
    for (const auto& r : records) {
        const auto m = static_cast<double>(r.m);
        if (m < m_lo || m > m_hi || !(r.seconds > 0.0)) continue;
        xs.push_back(std::log(m));
        ys.push_back(std::log(r.seconds));
    }
    const std::size_t n = xs.size();
    if (n < 4) {
        throw InsufficientData("slope fit needs at least 4 points in [" + std::to_string(m_lo) +
                               ", " + std::to_string(m_hi) + "], got " + std::to_string(n));
    }
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(n);
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(n);
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    if (sxx == 0.0) throw InsufficientData("slope fit needs at least two distinct orders");
    SlopeFit fit;
    fit.m_lo = m_lo;
    fit.m_hi = m_hi;
    fit.points = n;
    fit.n = sxy / sxx;
    const double intercept = my - fit.n * mx;
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = ys[i] - (intercept + fit.n * xs[i]);
        sse += e * e;
    }
    fit.std_error = std::sqrt(sse / static_cast<double>(n - 2) / sxx);
    return fit;
}

}  // namespace invertor
