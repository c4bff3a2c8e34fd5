#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include "invertor/bench.hpp"
#include "invertor/engine.hpp"
#include "invertor/oracle.hpp"
#include "invertor/partition.hpp"
#include "invertor/recursive.hpp"
#include "invertor/schur.hpp"

namespace py = pybind11;
using namespace invertor;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

DenseMatrix to_dense(const Array& a) {
    if (a.ndim() != 2) throw DimensionMismatch("expected a 2-d array");
    const auto rows = static_cast<std::size_t>(a.shape(0));
    const auto cols = static_cast<std::size_t>(a.shape(1));
    return DenseMatrix(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

Array to_array(const DenseMatrix& m) {
    Array out({m.rows(), m.cols()});
    std::copy(m.data().begin(), m.data().end(), out.mutable_data());
    return out;
}

py::dict counters_dict(const OpCounters& c) {
    py::dict d;
    d["multiplies"] = c.multiplies;
    d["inversions"] = c.inversions;
    d["reductions"] = c.reductions;
    d["peak_scratch"] = c.peak_scratch;
    return d;
}

}  // namespace

PYBIND11_MODULE(_invertor, m) {
    m.doc() = "Blockwise Schur-complement matrix inversion";

    auto& base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<DimensionMismatch>(m, "DimensionMismatch", base.ptr());
    py::register_exception<InvalidOrder>(m, "InvalidOrder", base.ptr());
    py::register_exception<SingularMatrix>(m, "SingularMatrix", base.ptr());
    py::register_exception<AllPivotsSingular>(m, "AllPivotsSingular", base.ptr());
    py::register_exception<CheckpointCorrupt>(m, "CheckpointCorrupt", base.ptr());
    py::register_exception<SchemeMismatch>(m, "SchemeMismatch", base.ptr());
    py::register_exception<InsufficientData>(m, "InsufficientData", base.ptr());
    auto& singular = py::register_exception<SingularBlock>(m, "SingularBlock", base.ptr());
    // Registered last so it runs first: attaches the pivot path.
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const SingularBlock& e) {
            py::object cls = py::module_::import("invertor._invertor").attr("SingularBlock");
            py::object err = cls(e.what());
            err.attr("path") = e.path();
            PyErr_SetObject(cls.ptr(), err.ptr());
        }
    });
    (void)singular;

    m.def(
        "generate",
        [](std::size_t order, std::uint64_t seed, const std::string& kind) {
            return to_array(generate(order, seed, parse_kind(kind)));
        },
        py::arg("order"), py::arg("seed") = 1, py::arg("kind") = "well-conditioned",
        "Seeded test matrix: well-conditioned, permutation or block-diagonal.");

    m.def(
        "invert",
        [](const Array& x, const std::string& method, unsigned workers,
           std::optional<std::vector<std::size_t>> sizes) {
            const DenseMatrix in = to_dense(x);
            const Method meth = parse_method(method);
            std::optional<PartitionScheme> scheme;
            if (sizes) scheme = PartitionScheme::from_sizes(*sizes);
            MethodRun run;
            {
                py::gil_scoped_release release;
                run = invert_with_method(in, meth, workers, scheme ? &*scheme : nullptr);
            }
            return py::make_tuple(to_array(run.inverse), counters_dict(run.counters));
        },
        py::arg("x"), py::arg("method") = "parallel", py::arg("workers") = 1,
        py::arg("sizes") = py::none(),
        "Returns (inverse, counters). Methods: a, inplace, ad, oracle, parallel.");

    m.def(
        "invert_recursive",
        [](const Array& x, const std::string& method, std::size_t leaf_order, unsigned pair_workers) {
            DenseMatrix in = to_dense(x);
            InvertOptions opts;
            opts.leaf_order = leaf_order;
            opts.pair_workers = pair_workers;
            InversionResult r;
            {
                py::gil_scoped_release release;
                if (method == "a") {
                    r = invertor_by_a(in, opts);
                } else if (method == "ad") {
                    r = invertor_by_ad(in, opts);
                } else if (method == "inplace") {
                    std::vector<double> row(in.rows());
                    r.counters = invertor_inplace_by_a(in, row, opts);
                    r.inverse = std::move(in);
                } else {
                    throw std::invalid_argument("recursive method must be a, inplace or ad");
                }
            }
            return py::make_tuple(to_array(r.inverse), counters_dict(r.counters));
        },
        py::arg("x"), py::arg("method") = "a", py::arg("leaf_order") = 4, py::arg("pair_workers") = 1);

    m.def(
        "invert_with_fallback",
        [](const Array& x, std::size_t split) {
            const DenseMatrix in = to_dense(x);
            DenseMatrix out(in.rows(), in.cols());
            const FormulaUsed used = invert_with_fallback(BlockQuad::diagonal(in.view(), split), out.view());
            return py::make_tuple(to_array(out), std::string(to_string(used)));
        },
        py::arg("x"), py::arg("split"), "Tries the A, D, B, C pivots; returns (inverse, formula).");

    m.def(
        "gauss_jordan_oracle", [](const Array& x) { return to_array(gauss_jordan_oracle(to_dense(x))); },
        py::arg("x"));
    m.def(
        "residual_norm",
        [](const Array& x, const Array& x_inv) { return residual_norm(to_dense(x), to_dense(x_inv)); },
        py::arg("x"), py::arg("x_inv"), "max |X X^-1 - I|");

    m.def(
        "make_partition", [](std::size_t order) { return make_partition(order).sizes(); },
        py::arg("order"));
    m.def("loopid_for_step", &loopid_for_step, py::arg("stepid"), py::arg("blocksize"));
    m.def("step_count", &step_count, py::arg("blocksize"));
    m.def(
        "decode_step",
        [](const std::vector<std::size_t>& loopid) {
            const StepAction a = decode_step(loopid);
            py::dict d;
            d["kind"] = std::string(to_string(a.kind));
            d["source_level"] = a.source_level;
            d["quad_level"] = a.quad_level;
            d["store_level"] = a.store_level;
            d["assemble_depth"] = a.assemble_depth;
            return d;
        },
        py::arg("loopid"));
    m.def("updown_iteration_map", &updown_iteration_map, py::arg("r"), py::arg("c"));

    m.def(
        "run_inversion",
        [](const Array& x, unsigned workers, std::optional<std::vector<std::size_t>> sizes,
           std::optional<std::string> checkpoint_dir, std::size_t stop_after_step, bool file_backed) {
            const DenseMatrix in = to_dense(x);
            EngineOptions opts;
            opts.workers = workers;
            opts.stop_after_step = stop_after_step;
            opts.file_backed = file_backed;
            if (checkpoint_dir) opts.checkpoint_dir = *checkpoint_dir;
            const PartitionScheme scheme =
                sizes ? PartitionScheme::from_sizes(*sizes) : make_partition(in.rows());
            py::gil_scoped_release release;
            InversionEngine e(in, scheme, opts);
            e.run();
            py::gil_scoped_acquire acquire;
            return py::make_tuple(to_array(e.inverse().dense()), e.completed_steps());
        },
        py::arg("x"), py::arg("workers") = 1, py::arg("sizes") = py::none(),
        py::arg("checkpoint_dir") = py::none(), py::arg("stop_after_step") = 0,
        py::arg("file_backed") = false,
        "Step engine. Returns (inverse, completed_steps); the inverse is partial if stopped early.");

    m.def(
        "resume",
        [](const std::string& dir, const Array& x, unsigned workers, bool file_backed) {
            const DenseMatrix in = to_dense(x);
            EngineOptions opts;
            opts.workers = workers;
            opts.file_backed = file_backed;
            if (file_backed) opts.checkpoint_dir = dir;
            py::gil_scoped_release release;
            InversionEngine e = InversionEngine::resume(dir, in, opts);
            e.run();
            py::gil_scoped_acquire acquire;
            return to_array(e.inverse().dense());
        },
        py::arg("checkpoint_dir"), py::arg("x"), py::arg("workers") = 1, py::arg("file_backed") = false);

    m.def(
        "fit_slope",
        [](const std::vector<std::size_t>& orders, const std::vector<double>& seconds, double lo, double hi) {
            if (orders.size() != seconds.size()) throw DimensionMismatch("orders and seconds differ in length");
            std::vector<TimingRecord> recs(orders.size());
            for (std::size_t i = 0; i < orders.size(); ++i) {
                recs[i].m = orders[i];
                recs[i].seconds = seconds[i];
            }
            const SlopeFit f = fit_slope(recs, lo, hi);
            return py::make_tuple(f.n, f.std_error);
        },
        py::arg("orders"), py::arg("seconds"), py::arg("m_lo"), py::arg("m_hi"),
        "Least-squares exponent of seconds ~ order^n; returns (n, std_error).");

    m.def(
        "bench",
        [](const std::vector<std::string>& methods, const std::vector<std::size_t>& orders,
           const std::vector<unsigned>& workers, std::size_t repeats, std::uint64_t seed) {
            BenchConfig cfg;
            for (const auto& s : methods) cfg.methods.push_back(parse_method(s));
            cfg.orders = orders;
            cfg.workers = workers;
            cfg.repeats = repeats;
            cfg.seed = seed;
            std::vector<TimingRecord> recs;
            {
                py::gil_scoped_release release;
                recs = bench(cfg);
            }
            py::list rows;
            for (const auto& r : recs) {
                py::dict d = counters_dict(r.counters);
                d["method"] = r.method;
                d["m"] = r.m;
                d["workers"] = r.workers;
                d["seconds"] = r.seconds;
                d["residual"] = r.residual;
                d["repeat"] = r.repeat;
                d["median"] = r.median;
                d["status"] = r.status;
                rows.append(d);
            }
            return rows;
        },
        py::arg("methods"), py::arg("orders"), py::arg("workers") = std::vector<unsigned>{1},
        py::arg("repeats") = 1, py::arg("seed") = 1);
}
