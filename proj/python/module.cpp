#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dbdt/data.hpp"
#include "dbdt/importance.hpp"
#include "dbdt/metrics.hpp"
#include "dbdt/model_io.hpp"
#include "dbdt/synthetic.hpp"
#include "dbdt/trainer.hpp"

namespace py = pybind11;
using namespace dbdt;

namespace {

using FloatArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<int, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const FloatArray& x) {
    if (x.ndim() != 2) {
        throw InputError("features must be a 2-d array");
    }
    Matrix m(static_cast<std::size_t>(x.shape(0)), static_cast<std::size_t>(x.shape(1)));
    std::copy(x.data(), x.data() + x.size(), m.data.begin());
    return m;
}

std::vector<int> to_labels(const IntArray& y) {
    if (y.ndim() != 1) {
        throw InputError("labels must be a 1-d array");
    }
    std::vector<int> out(y.data(), y.data() + y.size());
    for (int v : out) {
        if (v != 1 && v != -1) {
            throw InputError("labels must be -1 or +1");
        }
    }
    return out;
}

std::vector<double> to_vector(const FloatArray& v) { return {v.data(), v.data() + v.size()}; }

FloatArray from_matrix(const Matrix& m) {
    FloatArray out({m.rows, m.cols});
    std::copy(m.data.begin(), m.data.end(), out.mutable_data());
    return out;
}

template <typename T>
py::array_t<T> from_vector(const std::vector<T>& v) {
    py::array_t<T> out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

// Numeric dataset from arrays: one feature per column.
Dataset make_dataset(const FloatArray& x, const IntArray& y, std::vector<std::string> names) {
    Dataset ds;
    ds.features = to_matrix(x);
    ds.labels = to_labels(y);
    if (ds.labels.size() != ds.features.rows) {
        throw InputError("features and labels differ in length");
    }
    if (names.empty()) {
        for (std::size_t j = 0; j < ds.dim(); ++j) {
            names.push_back("x" + std::to_string(j));
        }
    }
    if (names.size() != ds.dim()) {
        throw InputError("feature_names must have one entry per column");
    }
    ds.feature_names = names;
    ds.column_kinds.assign(ds.dim(), EncodedKind::Numeric);
    for (std::size_t j = 0; j < ds.dim(); ++j) {
        ds.groups.push_back({names[j], {j}});
    }
    ds.positive_label = "+1";
    ds.pos_ratio = positive_ratio(ds.labels);
    return ds;
}

py::list trace_to_list(const std::vector<TraceRecord>& trace) {
    py::list out;
    for (const auto& r : trace) {
        py::dict d;
        d["epoch"] = r.epoch;
        d["step"] = r.step;
        d["loss"] = r.loss;
        d["val_auc"] = r.val_auc ? py::cast(*r.val_auc) : py::none();
        out.append(d);
    }
    return out;
}

}  // namespace

PYBIND11_MODULE(_dbdt, m) {
    m.doc() = "Deep boosting with soft decision trees and compositional AUC training";

    py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    py::enum_<BalanceDecay>(m, "BalanceDecay")
        .value("TREE_DEPTH", BalanceDecay::TreeDepth)
        .value("NODE_DEPTH", BalanceDecay::NodeDepth);
    py::enum_<JacobianMode>(m, "JacobianMode")
        .value("FIRST_ORDER", JacobianMode::FirstOrder)
        .value("EXACT", JacobianMode::Exact);
    py::enum_<DualProjection>(m, "DualProjection")
        .value("NONE", DualProjection::None)
        .value("NONNEGATIVE", DualProjection::Nonnegative)
        .value("INTERVAL", DualProjection::Interval);

    py::class_<TreeShape>(m, "TreeShape")
        .def(py::init([](std::size_t input_dim, int depth, int layers, std::size_t hidden) {
                 TreeShape s{input_dim, depth, layers, hidden};
                 s.validate();
                 return s;
             }),
             py::arg("input_dim"), py::arg("depth") = 4, py::arg("layers") = 1, py::arg("hidden") = 0)
        .def_readonly("input_dim", &TreeShape::input_dim)
        .def_readonly("depth", &TreeShape::depth)
        .def_readonly("layers", &TreeShape::layers)
        .def_readonly("hidden", &TreeShape::hidden)
        .def_property_readonly("param_count", &TreeShape::param_count);

    py::class_<Regularization>(m, "Regularization")
        .def(py::init<double, double, BalanceDecay>(), py::arg("lambda1") = 0.1, py::arg("lambda2") = 0.005,
             py::arg("decay") = BalanceDecay::TreeDepth)
        .def_readwrite("lambda1", &Regularization::lambda1)
        .def_readwrite("lambda2", &Regularization::lambda2)
        .def_readwrite("decay", &Regularization::decay);

    py::class_<DbdtModel>(m, "Model")
        .def_readonly("shape", &DbdtModel::shape)
        .def_readwrite("feature_names", &DbdtModel::feature_names)
        .def_readwrite("score_squash", &DbdtModel::score_squash)
        .def_property_readonly("tree_count", &DbdtModel::tree_count)
        .def_property_readonly("param_count", &DbdtModel::param_count)
        .def("flat_params", [](const DbdtModel& self) { return from_vector(self.flat_params()); })
        .def("set_flat_params",
             [](DbdtModel& self, const FloatArray& v) {
                 if (static_cast<std::size_t>(v.size()) != self.param_count()) {
                     throw InputError("parameter vector has the wrong length");
                 }
                 self.set_flat_params(to_vector(v));
             })
        .def("score", [](const DbdtModel& self, const FloatArray& x) {
            return from_vector(self.score_batch(to_matrix(x)));
        }, "Raw ensemble score H(x) for each row.")
        .def("predict", [](const DbdtModel& self, const FloatArray& x, double threshold) {
            const auto scores = self.score_batch(to_matrix(x));
            std::vector<int> labels(scores.size());
            for (std::size_t i = 0; i < scores.size(); ++i) {
                labels[i] = predict_label(scores[i], threshold);
            }
            return from_vector(labels);
        }, py::arg("x"), py::arg("threshold") = 0.0);

    m.def("init_model", &init_model, py::arg("trees"), py::arg("shape"), py::arg("seed") = 0,
          "Xavier-uniform routing weights, zero biases, zero leaves.");

    py::class_<AucHead>(m, "AucHead")
        .def(py::init<>())
        .def_readwrite("a", &AucHead::a)
        .def_readwrite("b", &AucHead::b)
        .def_readwrite("alpha", &AucHead::alpha)
        .def_readwrite("p", &AucHead::p)
        .def_readwrite("margin", &AucHead::margin);

    py::class_<SgdConfig>(m, "SgdConfig")
        .def(py::init<>())
        .def_readwrite("epochs", &SgdConfig::epochs)
        .def_readwrite("batch_size", &SgdConfig::batch_size)
        .def_readwrite("learning_rate", &SgdConfig::learning_rate)
        .def_readwrite("reg", &SgdConfig::reg)
        .def_readwrite("stop_gradient", &SgdConfig::stop_gradient)
        .def_readwrite("seed", &SgdConfig::seed);

    py::class_<PdscaConfig>(m, "PdscaConfig")
        .def(py::init<>())
        .def_readwrite("epochs", &PdscaConfig::epochs)
        .def_readwrite("batch_size", &PdscaConfig::batch_size)
        .def_readwrite("beta", &PdscaConfig::beta)
        .def_readwrite("beta0", &PdscaConfig::beta0)
        .def_readwrite("beta1", &PdscaConfig::beta1)
        .def_readwrite("beta2", &PdscaConfig::beta2)
        .def_readwrite("g0", &PdscaConfig::g0)
        .def_readwrite("eta1", &PdscaConfig::eta1)
        .def_readwrite("eta2", &PdscaConfig::eta2)
        .def_readwrite("margin", &PdscaConfig::margin)
        .def_readwrite("weight_decay", &PdscaConfig::weight_decay)
        .def_readwrite("reg", &PdscaConfig::reg)
        .def_readwrite("jacobian", &PdscaConfig::jacobian)
        .def_readwrite("projection", &PdscaConfig::projection)
        .def_readwrite("alpha_max", &PdscaConfig::alpha_max)
        .def_readwrite("decay_epochs", &PdscaConfig::decay_epochs)
        .def_readwrite("decay_factor", &PdscaConfig::decay_factor)
        .def_readwrite("seed", &PdscaConfig::seed);

    m.def(
        "train_sgd",
        [](const DbdtModel& model, const FloatArray& x, const IntArray& y, const SgdConfig& config) {
            const Dataset ds = make_dataset(x, y, model.feature_names);
            SgdResult r;
            {
                py::gil_scoped_release release;
                r = train_sgd(model, ds, config);
            }
            return py::make_tuple(std::move(r.model), trace_to_list(r.trace));
        },
        py::arg("model"), py::arg("x"), py::arg("y"), py::arg("config") = SgdConfig{},
        "Mini-batch gradient descent on the boosting objective. Returns (model, trace).");

    m.def(
        "train_pdsca",
        [](const DbdtModel& model, const FloatArray& x, const IntArray& y, const PdscaConfig& config) {
            const Dataset ds = make_dataset(x, y, model.feature_names);
            PdscaResult r;
            {
                py::gil_scoped_release release;
                r = train_pdsca(model, ds, config);
            }
            return py::make_tuple(std::move(r.model), r.head, trace_to_list(r.trace));
        },
        py::arg("model"), py::arg("x"), py::arg("y"), py::arg("config") = PdscaConfig{},
        "Primal-dual compositional AUC training. Returns (model, head, trace).");

    m.def("residuals", [](const IntArray& y, const FloatArray& h) {
        return from_vector(residuals(to_labels(y), to_vector(h)));
    }, py::arg("labels"), py::arg("partial_scores"));

    m.def("auc", [](const FloatArray& s, const IntArray& y) { return auc(to_vector(s), to_labels(y)); },
          py::arg("scores"), py::arg("labels"));
    m.def(
        "h_measure",
        [](const FloatArray& s, const IntArray& y, double a, double b) {
            return h_measure(to_vector(s), to_labels(y), Severity{a, b});
        },
        py::arg("scores"), py::arg("labels"), py::arg("shape_a") = 2.0, py::arg("shape_b") = 2.0);
    m.def(
        "roc_curve",
        [](const FloatArray& s, const IntArray& y) {
            const auto curve = roc_curve(to_vector(s), to_labels(y));
            std::vector<double> fpr;
            std::vector<double> tpr;
            for (const auto& p : curve) {
                fpr.push_back(p.fpr);
                tpr.push_back(p.tpr);
            }
            return py::make_tuple(from_vector(fpr), from_vector(tpr));
        },
        py::arg("scores"), py::arg("labels"));
    m.def(
        "confusion",
        [](const FloatArray& s, const IntArray& y, double threshold) {
            const auto cm = confusion(to_vector(s), to_labels(y), threshold);
            py::dict d;
            d["tp"] = cm.tp;
            d["fp"] = cm.fp;
            d["fn"] = cm.fn;
            d["tn"] = cm.tn;
            return d;
        },
        py::arg("scores"), py::arg("labels"), py::arg("threshold") = 0.0);

    m.def(
        "permutation_importance",
        [](const DbdtModel& model, const FloatArray& x, const IntArray& y, std::size_t repeats, std::uint64_t seed) {
            const Dataset ds = make_dataset(x, y, model.feature_names);
            const auto report = permutation_importance(model, ds, repeats, seed);
            py::list features;
            for (const auto& f : report.features) {
                py::dict d;
                d["feature"] = f.feature;
                d["mean_drop"] = f.mean_drop;
                d["share"] = f.share;
                d["rank"] = f.rank;
                features.append(d);
            }
            py::dict out;
            out["baseline_auc"] = report.baseline_auc;
            out["features"] = features;
            return out;
        },
        py::arg("model"), py::arg("x"), py::arg("y"), py::arg("repeats") = 10, py::arg("seed") = 0);

    m.def(
        "save_model",
        [](const std::filesystem::path& path, const DbdtModel& model, const AucHead& head) {
            ModelFile f;
            f.model = model;
            f.head = head;
            f.normalization.feature_names = model.feature_names;
            save_model(path, f);
        },
        py::arg("path"), py::arg("model"), py::arg("head") = AucHead{});
    m.def(
        "load_model",
        [](const std::filesystem::path& path) {
            ModelFile f = load_model(path);
            return py::make_tuple(std::move(f.model), f.head);
        },
        py::arg("path"), "Returns (model, head).");

    m.def(
        "make_two_gaussians",
        [](std::size_t samples, double pos_ratio, std::size_t dim, double separation, double positive_scale,
           std::uint64_t seed) {
            const Dataset ds = make_two_gaussians({samples, pos_ratio, dim, separation, positive_scale}, seed);
            return py::make_tuple(from_matrix(ds.features), from_vector(ds.labels));
        },
        py::arg("samples"), py::arg("pos_ratio") = 0.1, py::arg("dim") = 2, py::arg("separation") = 2.0,
        py::arg("positive_scale") = 1.0, py::arg("seed") = 0, "Returns (x, y) with y in {-1, +1}.");

    m.def(
        "load_csv",
        [](const std::filesystem::path& data, const std::filesystem::path& schema, const std::string& positive_label) {
            const Dataset ds = load_csv(data, load_schema(schema), {positive_label, 0});
            return py::make_tuple(from_matrix(ds.features), from_vector(ds.labels), ds.feature_names);
        },
        py::arg("data"), py::arg("schema"), py::arg("positive_label") = "",
        "Encode a CSV with its schema. Returns (x, y, feature_names).");
}
