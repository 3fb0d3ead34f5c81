#include "mnn/config.hpp"
#include "mnn/dataset.hpp"
#include "mnn/diagnostics.hpp"
#include "mnn/evaluation.hpp"
#include "mnn/objective.hpp"
#include "mnn/support_set.hpp"
#include "mnn/trainer.hpp"
#include "mnn/vecmath.hpp"

#include <nlohmann/json.hpp>
#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace mnn;

namespace {

nlohmann::json parse(const std::string& s) { return s.empty() ? nlohmann::json::object() : nlohmann::json::parse(s); }

py::dict breakdown(const LossBreakdown& b) {
    py::dict d;
    d["total"] = b.total;
    d["positive_term"] = b.positive_term;
    d["neighbor_terms"] = b.neighbor_terms;
    d["weights"] = b.weights_used;
    return d;
}

}  // namespace

PYBIND11_MODULE(_mnn, m) {
    m.doc() = "Mixed nearest-neighbor self-supervised learning core";

    py::register_exception<Error>(m, "MnnError", PyExc_ValueError);

    m.def("l2_normalize", [](const Vector& v) { return l2_normalize(v); });
    m.def("cosine", [](const Vector& a, const Vector& b) { return cosine(a, b); });

    m.def("weights_wse", &weights_wse, py::arg("k"));
    m.def("weights_mse", &weights_mse, py::arg("k"));
    m.def(
        "mnn_loss",
        [](const Vector& p1, const Vector& z2, const std::vector<Vector>& targets, const std::vector<double>& weights,
           bool raw) {
            return breakdown(mnn_loss(p1, z2, targets, weights,
                                      raw ? MixedNormalization::raw : MixedNormalization::normalize));
        },
        py::arg("p1"), py::arg("z2"), py::arg("targets"), py::arg("weights"), py::arg("raw") = false);
    m.def(
        "simplified_loss",
        [](const Vector& p1, const Vector& z2, const std::vector<Vector>& neighbors, double lam) {
            return simplified_loss(p1, z2, neighbors, lam);
        },
        py::arg("p1"), py::arg("z2"), py::arg("neighbors"), py::arg("lam"));
    m.def("weight_entropy", [](const std::vector<double>& w) { return weight_entropy(w); }, py::arg("weights"));

    py::class_<SupportSet>(m, "SupportSet")
        .def(py::init<std::size_t, std::size_t>(), py::arg("capacity"), py::arg("dim"))
        .def_property_readonly("capacity", &SupportSet::capacity)
        .def_property_readonly("dim", &SupportSet::dim)
        .def("__len__", &SupportSet::size)
        .def(
            "refresh",
            [](SupportSet& s, const Matrix& batch, const std::vector<int>& labels) { s.refresh(batch, labels); },
            py::arg("batch"), py::arg("labels") = std::vector<int>{})
        .def("embedding", [](const SupportSet& s, std::size_t i) { return Vector(s.embedding(i)); })
        .def(
            "topk",
            [](const SupportSet& s, const Vector& z, std::size_t k) {
                std::vector<std::pair<std::size_t, double>> out;
                for (const auto& mem : s.topk_neighbors(z, k).members) out.emplace_back(mem.support_index, mem.similarity);
                return out;
            },
            py::arg("z"), py::arg("k"), "(position, cosine) pairs, most similar first");

    m.def(
        "knn_accuracy",
        [](const Matrix& train_x, std::vector<int> train_y, const Matrix& test_x, std::vector<int> test_y,
           std::size_t k) {
            return knn_accuracy(FeatureBank(train_x, std::move(train_y)), FeatureBank(test_x, std::move(test_y)), k);
        },
        py::arg("train_x"), py::arg("train_y"), py::arg("test_x"), py::arg("test_y"), py::arg("k") = 20);

    m.def("reference_config_json", [] { return RunConfig::reference().to_json().dump(); });
    m.def(
        "generate_dataset_json",
        [](const std::string& spec) {
            const Dataset d = generate_dataset(DatasetSpec::from_json(parse(spec), RunConfig::reference().dataset));
            return py::make_tuple(d.train.inputs, d.train.labels, d.test.inputs, d.test.labels);
        },
        py::arg("spec") = "");
    m.def(
        "train_json",
        [](const std::string& config, const std::function<void(std::size_t, double)>& on_epoch) {
            RunConfig c = RunConfig::from_json(parse(config), RunConfig::reference());
            Trainer t(c);
            RunManifest man;
            {
                py::gil_scoped_release release;
                man = t.run([&](const EpochMetrics& e) {
                    if (on_epoch) {
                        py::gil_scoped_acquire acquire;
                        on_epoch(e.epoch, e.loss_mean);
                    }
                });
            }
            return man.to_json().dump();
        },
        py::arg("config") = "", py::arg("on_epoch") = nullptr);
}
