// Copyright 2026 The nullora Authors
// SPDX-License-Identifier: Apache-2.0

#include "nullora/adapter.hpp"
#include "nullora/adapter_io.hpp"
#include "nullora/error.hpp"
#include "nullora/linalg.hpp"
#include "nullora/reports.hpp"
#include "nullora/tensor_file.hpp"
#include "nullora/training.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

namespace py = pybind11;
using namespace nullora;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
    if (a.ndim() != 2) throw ShapeError("expected a 2-D array, got " + std::to_string(a.ndim()) + "-D");
    Matrix m(a.shape(0), a.shape(1));
    if (m.size() > 0) std::memcpy(m.data().data(), a.data(), m.size() * sizeof(double));
    return m;
}

Array to_array(const Matrix& m) {
    Array a({m.rows(), m.cols()});
    if (m.size() > 0) std::memcpy(a.mutable_data(), m.data().data(), m.size() * sizeof(double));
    return a;
}

py::dict rank_dict(const RankReport& r) {
    py::dict d;
    d["d_out"] = r.rows;
    d["d_in"] = r.cols;
    d["rank"] = r.numerical_rank;
    d["nullity_left"] = r.nullity_left;
    d["nullity_right"] = r.nullity_right;
    d["sigma_max"] = r.sigma_max;
    d["sigma_min"] = r.sigma_min;
    d["tau"] = r.tau;
    return d;
}

} // namespace

PYBIND11_MODULE(_nullora, m) {
    m.doc() = "Null-space low-rank adapters: bindings to the C++ core";

    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<ArgumentError>(m, "ArgumentError", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);
    py::register_exception<InvariantViolation>(m, "InvariantViolation", PyExc_RuntimeError);
    py::register_exception<TrainingDiverged>(m, "TrainingDiverged", PyExc_ArithmeticError);

    m.attr("DEFAULT_TAU") = kDefaultTau;

    m.def(
        "svd",
        [](const Array& a) {
            const SvdResult s = svd(to_matrix(a));
            return py::make_tuple(to_array(s.U), s.sigma, to_array(s.Vt));
        },
        py::arg("m"), "Thin SVD (U, sigma, Vt) with descending sigma and canonical signs.");
    m.def(
        "rank_report", [](const Array& a, double tau) { return rank_dict(rank_report(to_matrix(a), tau)); },
        py::arg("m"), py::arg("tau") = kDefaultTau);
    m.def(
        "null_space_left", [](const Array& a, double tau) { return to_array(null_space_left(to_matrix(a), tau)); },
        py::arg("w"), py::arg("tau") = kDefaultTau);
    m.def(
        "null_space_right", [](const Array& a, double tau) { return to_array(null_space_right(to_matrix(a), tau)); },
        py::arg("w"), py::arg("tau") = kDefaultTau);

    py::enum_<AdapterMode>(m, "AdapterMode")
        .value("NULL_LORA", AdapterMode::null_lora)
        .value("ABLATION_RANDOM", AdapterMode::ablation_random)
        .value("VANILLA_LORA", AdapterMode::vanilla_lora);

    py::class_<AdapterLayer>(m, "AdapterLayer")
        .def_readonly("name", &AdapterLayer::name)
        .def_readonly("mode", &AdapterLayer::mode)
        .def_readonly("rank", &AdapterLayer::rank)
        .def_property_readonly("weight", [](const AdapterLayer& l) { return to_array(l.weight); })
        .def_property_readonly("frozen_B", [](const AdapterLayer& l) { return to_array(l.frozen_B); })
        .def_property_readonly("frozen_A", [](const AdapterLayer& l) { return to_array(l.frozen_A); })
        .def_property(
            "B", [](const AdapterLayer& l) { return to_array(l.lora_B); },
            [](AdapterLayer& l, const Array& a) {
                Matrix b = to_matrix(a);
                if (b.rows() != l.lora_B.rows() || b.cols() != l.lora_B.cols())
                    throw ShapeError("B must be " + l.lora_B.shape_str() + ", got " + b.shape_str());
                l.lora_B = std::move(b);
            })
        .def_property(
            "A", [](const AdapterLayer& l) { return to_array(l.lora_A); },
            [](AdapterLayer& l, const Array& a) {
                Matrix b = to_matrix(a);
                if (b.rows() != l.lora_A.rows() || b.cols() != l.lora_A.cols())
                    throw ShapeError("A must be " + l.lora_A.shape_str() + ", got " + b.shape_str());
                l.lora_A = std::move(b);
            })
        .def_property(
            "s", [](const AdapterLayer& l) { return l.scale; },
            [](AdapterLayer& l, std::vector<double> s) {
                if (s.size() != l.scale.size()) throw ShapeError("s must have length " + std::to_string(l.scale.size()));
                l.scale = std::move(s);
            })
        .def_property_readonly("trainable_count", &AdapterLayer::trainable_count)
        .def("delta_weight", [](const AdapterLayer& l) { return to_array(delta_weight(l)); })
        .def("merge", [](const AdapterLayer& l) { return to_array(merge(l)); })
        .def("forward", [](const AdapterLayer& l, const Array& x) { return to_array(forward(l, to_matrix(x))); })
        .def(
            "backward",
            [](const AdapterLayer& l, const Array& x, const Array& g) {
                const GradientSet gs = backward(l, to_matrix(x), to_matrix(g));
                return py::make_tuple(to_array(gs.dB), to_array(gs.dA), gs.ds);
            },
            py::arg("x"), py::arg("upstream"))
        .def(
            "verify",
            [](const AdapterLayer& l, const std::string& profile) {
                py::dict out;
                for (const auto& [key, c] : verify_invariants(l, TolProfile::named(profile))) {
                    py::dict d;
                    d["measured"] = c.measured;
                    d["tolerance"] = c.tolerance;
                    d["pass"] = c.pass;
                    d["applicable"] = c.applicable;
                    out[py::str(key)] = d;
                }
                return out;
            },
            py::arg("profile") = "default");

    m.def(
        "init_null_lora",
        [](const std::string& name, const Array& w, double tau, std::optional<std::size_t> max_rank) -> py::object {
            NullLoraInit init = init_null_lora(name, to_matrix(w), tau, max_rank);
            if (auto* l = std::get_if<AdapterLayer>(&init)) return py::cast(std::move(*l));
            return py::none();
        },
        py::arg("name"), py::arg("weight"), py::arg("tau") = kDefaultTau, py::arg("max_rank") = py::none(),
        "Returns None when the weight has no null space at tau.");
    m.def(
        "init_ablation",
        [](const std::string& name, const Array& w, std::size_t rank, std::uint64_t seed) {
            return init_ablation(name, to_matrix(w), rank, seed);
        },
        py::arg("name"), py::arg("weight"), py::arg("rank"), py::arg("seed") = 0);
    m.def(
        "init_vanilla_lora",
        [](const std::string& name, const Array& w, std::size_t rank, std::uint64_t seed) {
            return init_vanilla_lora(name, to_matrix(w), rank, seed);
        },
        py::arg("name"), py::arg("weight"), py::arg("rank"), py::arg("seed") = 0);

    m.def(
        "gen_planted_task",
        [](std::size_t d_out, std::size_t d_in, std::size_t nullity, std::size_t n, std::uint64_t seed) {
            const PlantedTask t = gen_planted_task(d_out, d_in, nullity, n, seed);
            py::dict d;
            d["weight"] = to_array(t.weight);
            d["delta_star"] = to_array(t.delta_star);
            d["inputs"] = to_array(t.inputs);
            d["targets"] = to_array(t.targets);
            return d;
        },
        py::arg("d_out"), py::arg("d_in"), py::arg("nullity"), py::arg("n_samples"), py::arg("seed") = 0);

    m.def(
        "train",
        [](AdapterLayer& layer, const Array& x, const Array& t, std::size_t steps, double lr, const std::string& opt,
           double wd, std::size_t batch, std::uint64_t seed) {
            TrainConfig cfg;
            cfg.steps = steps;
            cfg.learning_rate = lr;
            cfg.optimizer = parse_optimizer(opt);
            cfg.weight_decay = wd;
            cfg.batch_size = batch;
            cfg.seed = seed;
            py::list hist;
            for (const HistoryRecord& r : train(layer, to_matrix(x), to_matrix(t), cfg)) {
                py::dict d;
                d["step"] = r.step;
                d["loss"] = r.loss;
                d["grad_norm"] = r.grad_norm;
                d["null_residual"] = r.null_residual;
                d["effective_rank"] = r.effective_rank;
                hist.append(d);
            }
            return hist;
        },
        py::arg("layer"), py::arg("inputs"), py::arg("targets"), py::arg("steps") = 500, py::arg("lr") = 1e-4,
        py::arg("optimizer") = "adamw", py::arg("weight_decay") = 0.05, py::arg("batch_size") = 64,
        py::arg("seed") = 0, "Trains the layer in place and returns the logged history.");

    m.def(
        "read_tensor_file",
        [](const std::filesystem::path& p) {
            py::dict out;
            for (const auto& [name, t] : read_tensor_file(p).entries) out[py::str(name)] = to_array(t.values);
            return out;
        },
        py::arg("path"), "Reads an NLRT file into {name: float64 array}.");
    m.def(
        "write_tensor_file",
        [](const std::filesystem::path& p, const std::map<std::string, Array>& tensors) {
            TensorFile f;
            for (const auto& [name, a] : tensors) f.entries[name] = Tensor{DType::f64, to_matrix(a)};
            write_tensor_file(p, f);
        },
        py::arg("path"), py::arg("tensors"));
    m.def(
        "analyze",
        [](const std::filesystem::path& p, double tau) {
            return analysis_json(analyze_checkpoint(read_tensor_file(p), tau)).dump();
        },
        py::arg("path"), py::arg("tau") = kDefaultTau, "Analysis report of an NLRT checkpoint as a JSON string.");
}
