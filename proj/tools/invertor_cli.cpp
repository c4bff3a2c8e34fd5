// invertor: generate, partition, invert, verify and benchmark dense matrices.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "invertor/bench.hpp"
#include "invertor/engine.hpp"
#include "invertor/matrix_io.hpp"
#include "invertor/oracle.hpp"
#include "invertor/partition.hpp"
#include "invertor/recursive.hpp"
#include "invertor/schur.hpp"

namespace fs = std::filesystem;
using namespace invertor;

namespace {

enum Exit : int {
    kOk = 0,
    kFailure = 1,
    kSingular = 2,
    kIo = 3,
    kCheckpoint = 4,
};

struct Output {
    std::string path;
    bool binary = false;

    void write(const DenseMatrix& m) const {
        const MatrixFormat fmt = binary ? MatrixFormat::Binary : MatrixFormat::Text;
        if (path.empty() || path == "-") {
            if (binary) {
                write_binary(std::cout, m);
            } else {
                write_text(std::cout, m);
            }
            std::cout.flush();
        } else {
            save_matrix(path, m, fmt);
        }
    }
};

DenseMatrix read_input(const std::string& path) {
    if (path.empty() || path == "-") {
        std::stringstream buf;
        buf << std::cin.rdbuf();
        const std::string bytes = buf.str();
        std::istringstream in(bytes, std::ios::binary);
        try {
            if (bytes.rfind("BMAT", 0) == 0) return read_binary(in);
            return read_text(in);
        } catch (const FormatError& e) {
            throw FormatError(std::string("<stdin>: ") + e.what());
        }
    }
    return load_matrix(path);
}

std::optional<PartitionScheme> scheme_from(const std::vector<std::size_t>& sizes) {
    if (sizes.empty()) return std::nullopt;
    return PartitionScheme::from_sizes(sizes);
}

void print_counters(const OpCounters& c) {
    std::fprintf(stderr, "multiplies %zu\ninversions %zu\nreductions %zu\npeak_scratch %zu\n",
                 c.multiplies, c.inversions, c.reductions, c.peak_scratch);
}

std::string join(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ' ';
        s += std::to_string(v[i]);
    }
    return s;
}

// Whole-matrix fallback through the four pivot formulas at the top split.
MethodRun invert_by_fallback(const DenseMatrix& x) {
    MethodRun run;
    run.inverse = DenseMatrix(x.rows(), x.cols());
    if (x.rows() == 1) {
        invert_small(x.view(), run.inverse.view());
        run.counters.inversions = 1;
        return run;
    }
    const FormulaUsed used = invert_with_fallback(BlockQuad::diagonal(x.view(), x.rows() / 2),
                                                  run.inverse.view(), {}, &run.counters);
    std::fprintf(stderr, "formula %s\n", std::string(to_string(used)).c_str());
    return run;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Blockwise (Schur complement) dense matrix inversion"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "Write a seeded test matrix");
    std::size_t gen_order = 0;
    std::uint64_t gen_seed = 1;
    std::string gen_kind = "well-conditioned";
    Output gen_out;
    gen->add_option("--order", gen_order, "Matrix order")->required()->check(CLI::PositiveNumber);
    gen->add_option("--seed", gen_seed, "Generator seed");
    gen->add_option("--kind", gen_kind, "well-conditioned | permutation | block-diagonal")
        ->check(CLI::IsMember({"well-conditioned", "permutation", "block-diagonal"}));
    gen->add_option("-o,--output", gen_out.path, "Output file (stdout if omitted)");
    gen->add_flag("--binary,!--text", gen_out.binary, "Binary output (default text)");

    // partition
    auto* part = app.add_subcommand("partition", "Print the diagonal block sizes for an order");
    std::size_t part_order = 0;
    part->add_option("order", part_order, "Matrix order")->required();

    // invert
    auto* inv = app.add_subcommand("invert", "Invert a matrix file");
    std::string inv_in;
    Output inv_out;
    std::string method = "inplace";
    unsigned workers = 0;
    std::vector<std::size_t> sizes;
    std::string ckpt_dir;
    std::size_t stop_after = 0;
    bool file_backed = false;
    bool retry = false;
    inv->add_option("-i,--input", inv_in, "Input matrix (stdin if omitted)");
    inv->add_option("-o,--output", inv_out.path, "Output file (stdout if omitted)");
    inv->add_flag("--binary,!--text", inv_out.binary, "Binary output (default text)");
    inv->add_option("--method", method, "a | inplace | ad | oracle | parallel")
        ->check(CLI::IsMember({"a", "inplace", "ad", "oracle", "parallel"}));
    inv->add_option("--workers", workers, "Worker threads (default INVERTOR_WORKERS or 1)");
    inv->add_option("--sizes", sizes, "Explicit diagonal block sizes (parallel)")->delimiter(',');
    inv->add_option("--checkpoint-dir", ckpt_dir, "Write a checkpoint after every step (parallel)");
    inv->add_option("--stop-after", stop_after, "Stop after this step (parallel, with a checkpoint)");
    inv->add_flag("--file-backed", file_backed, "Keep engine state on disk between steps");
    inv->add_flag("--retry", retry, "On a singular pivot, retry with the D, B and C pivots");

    // verify
    auto* ver = app.add_subcommand("verify", "Check an inverse against its matrix");
    std::string ver_x;
    std::string ver_inv;
    double ver_tol = -1.0;
    ver->add_option("-i,--input", ver_x, "Matrix")->required();
    ver->add_option("-x,--inverse", ver_inv, "Candidate inverse")->required();
    ver->add_option("--tol", ver_tol, "Tolerance (default 1e-8 * order)");

    // bench
    auto* ben = app.add_subcommand("bench", "Time inversion methods over a range of orders");
    std::vector<std::string> methods{"a", "inplace", "ad"};
    std::vector<std::size_t> orders;
    std::vector<unsigned> bench_workers{1};
    std::size_t repeats = 1;
    std::uint64_t bench_seed = 1;
    std::string csv_path;
    std::vector<double> fit_range;
    ben->add_option("--method,--methods", methods, "Methods, comma separated")->delimiter(',');
    ben->add_option("--orders", orders, "Orders, ascending, comma separated")
        ->delimiter(',')
        ->required();
    ben->add_option("--workers", bench_workers, "Worker counts")->delimiter(',');
    ben->add_option("--repeats", repeats, "Repeats per configuration")->check(CLI::PositiveNumber);
    ben->add_option("--seed", bench_seed, "Generator seed");
    ben->add_option("--csv", csv_path, "CSV output file (stdout if omitted)");
    ben->add_option("--fit", fit_range, "Fit log T against log m over lo,hi")
        ->delimiter(',')
        ->expected(2);

    // resume
    auto* res = app.add_subcommand("resume", "Finish a checkpointed parallel inversion");
    std::string res_in;
    Output res_out;
    std::string res_dir;
    std::vector<std::size_t> res_sizes;
    unsigned res_workers = 0;
    bool res_file_backed = false;
    res->add_option("--checkpoint-dir", res_dir, "Checkpoint directory")->required();
    res->add_option("-i,--input", res_in, "The original input matrix")->required();
    res->add_option("-o,--output", res_out.path, "Output file (stdout if omitted)");
    res->add_flag("--binary,!--text", res_out.binary, "Binary output (default text)");
    res->add_option("--sizes", res_sizes, "Expected block sizes")->delimiter(',');
    res->add_option("--workers", res_workers, "Worker threads");
    res->add_flag("--file-backed", res_file_backed, "Keep engine state on disk between steps");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            gen_out.write(generate(gen_order, gen_seed, parse_kind(gen_kind)));
        } else if (*part) {
            const PartitionScheme s = make_partition(part_order);
            std::printf("order %zu\nblocks %zu\nsizes %s\n", s.order(), s.n_blocks(),
                        join(s.sizes()).c_str());
        } else if (*inv) {
            const DenseMatrix x = read_input(inv_in);
            if (!x.square()) throw DimensionMismatch("input matrix is not square");
            const Method m = parse_method(method);
            MethodRun run;
            if (m == Method::Parallel) {
                const auto scheme = scheme_from(sizes);
                EngineOptions opts;
                opts.workers = resolve_workers(workers);
                if (!ckpt_dir.empty()) opts.checkpoint_dir = ckpt_dir;
                opts.file_backed = file_backed;
                opts.stop_after_step = stop_after;
                if ((file_backed || stop_after) && ckpt_dir.empty()) {
                    throw Error("--file-backed and --stop-after need --checkpoint-dir");
                }
                InversionEngine engine(x, scheme ? *scheme : make_partition(x.rows()), opts);
                engine.run();
                std::fprintf(stderr, "steps %zu/%zu workers %u\n", engine.completed_steps(),
                             engine.total_steps(), engine.workers());
                if (!engine.finished()) return kOk;
                run.inverse = engine.inverse().dense();
            } else {
                try {
                    run = invert_with_method(x, m, resolve_workers(workers));
                } catch (const SingularBlock& e) {
                    if (!retry) throw;
                    std::fprintf(stderr, "%s; retrying with the other pivots\n", e.what());
                    run = invert_by_fallback(x);
                }
                if (m != Method::Oracle) print_counters(run.counters);
            }
            std::fprintf(stderr, "residual %.6e\n", residual_norm(x, run.inverse));
            inv_out.write(run.inverse);
        } else if (*ver) {
            const DenseMatrix x = load_matrix(ver_x);
            const DenseMatrix xi = load_matrix(ver_inv);
            if (x.rows() != xi.rows() || x.cols() != xi.cols()) {
                throw DimensionMismatch("matrix and inverse differ in shape");
            }
            const double tol = ver_tol >= 0 ? ver_tol : residual_limit(x.rows());
            const double r = residual_norm(x, xi);
            double diff = NAN;
            try {
                diff = max_abs_diff(gauss_jordan_oracle(x).view(), xi.view());
            } catch (const SingularMatrix&) {
            }
            std::printf("residual %.6e\noracle_diff %.6e\ntolerance %.6e\n", r, diff, tol);
            const bool ok = r <= tol && (std::isnan(diff) || diff <= tol);
            std::printf("%s\n", ok ? "PASS" : "FAIL");
            return ok ? kOk : kFailure;
        } else if (*ben) {
            BenchConfig cfg;
            for (const auto& s : methods) cfg.methods.push_back(parse_method(s));
            cfg.orders = orders;
            cfg.workers = bench_workers;
            cfg.repeats = repeats;
            cfg.seed = bench_seed;
            std::ofstream file;
            std::ostream* csv = &std::cout;
            if (!csv_path.empty()) {
                file.open(csv_path);
                if (!file) throw FormatError("cannot write " + csv_path);
                csv = &file;
            }
            const auto records = bench(cfg);
            write_csv(*csv, records);
            bool ok = true;
            for (const auto& r : records) ok = ok && r.status == "ok";
            if (!fit_range.empty()) {
                for (const Method meth : cfg.methods) {
                    std::vector<TimingRecord> medians;
                    for (const auto& r : records) {
                        if (r.method == to_string(meth) && r.median && r.workers == cfg.workers.front()) {
                            medians.push_back(r);
                        }
                    }
                    try {
                        const SlopeFit f = fit_slope(medians, fit_range[0], fit_range[1]);
                        std::fprintf(stderr, "slope %s m=[%g,%g] n=%.3f +/- %.3f (%zu points)\n",
                                     std::string(to_string(meth)).c_str(), f.m_lo, f.m_hi, f.n,
                                     f.std_error, f.points);
                    } catch (const InsufficientData& e) {
                        std::fprintf(stderr, "slope %s: %s\n", std::string(to_string(meth)).c_str(),
                                     e.what());
                    }
                }
            }
            return ok ? kOk : kFailure;
        } else if (*res) {
            const DenseMatrix x = load_matrix(res_in);
            EngineOptions opts;
            opts.workers = resolve_workers(res_workers);
            opts.checkpoint_dir = res_dir;
            opts.file_backed = res_file_backed;
            const auto expected = scheme_from(res_sizes);
            InversionEngine engine =
                InversionEngine::resume(res_dir, x, opts, expected ? &*expected : nullptr);
            const std::size_t from = engine.completed_steps();
            engine.run();
            std::fprintf(stderr, "resumed after step %zu, finished %zu/%zu\n", from,
                         engine.completed_steps(), engine.total_steps());
            std::fprintf(stderr, "residual %.6e\n", residual_norm(x, engine.inverse().dense()));
            res_out.write(engine.inverse().dense());
        }
    } catch (const SingularBlock& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kSingular;
    } catch (const AllPivotsSingular& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kSingular;
    } catch (const SingularMatrix& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kSingular;
    } catch (const FormatError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kIo;
    } catch (const fs::filesystem_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kIo;
    } catch (const CheckpointCorrupt& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kCheckpoint;
    } catch (const SchemeMismatch& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kCheckpoint;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kFailure;
    }
    return kOk;
}
