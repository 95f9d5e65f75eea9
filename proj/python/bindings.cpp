#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>
#include <sstream>

#include "deformcert/centroid.hpp"
#include "deformcert/harness.hpp"
#include "deformcert/mlp.hpp"
#include "deformcert/oracle.hpp"
#include "deformcert/smoothing.hpp"
#include "deformcert/stats.hpp"

namespace py = pybind11;
using namespace deformcert;

namespace {

using CloudArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

PointCloud to_cloud(const CloudArray& a) {
    if (a.ndim() != 2 || a.shape(1) != 3) throw py::value_error("point cloud must have shape (N, 3)");
    std::vector<Vec3> pts(static_cast<std::size_t>(a.shape(0)));
    const double* d = a.data();
    for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = {d[3 * i], d[3 * i + 1], d[3 * i + 2]};
    return PointCloud(std::move(pts));
}

CloudArray to_array(const PointCloud& c) {
    CloudArray out({static_cast<py::ssize_t>(c.size()), py::ssize_t{3}});
    double* d = out.mutable_data();
    for (std::size_t i = 0; i < c.size(); ++i) {
        d[3 * i] = c[i].x;
        d[3 * i + 1] = c[i].y;
        d[3 * i + 2] = c[i].z;
    }
    return out;
}

std::vector<PointCloud> to_clouds(const std::vector<CloudArray>& arrays) {
    std::vector<PointCloud> out;
    out.reserve(arrays.size());
    for (const auto& a : arrays) out.push_back(to_cloud(a));
    return out;
}

Dataset to_dataset(const std::vector<CloudArray>& clouds, const std::vector<Label>& labels) {
    if (clouds.size() != labels.size()) throw py::value_error("clouds and labels differ in length");
    Dataset data;
    for (std::size_t i = 0; i < clouds.size(); ++i) data.push_back({to_cloud(clouds[i]), labels[i]});
    return data;
}

SmoothingConfig make_config(const std::string& dist, double scale, std::size_t n0, std::size_t n, double alpha,
                            std::size_t batch) {
    SmoothingConfig c;
    c.distribution = {parse_distribution_family(dist), scale};
    c.n0 = n0;
    c.n = n;
    c.alpha = alpha;
    c.batch = batch;
    return c;
}

py::dict result_dict(const CertificationResult& r) {
    py::dict d;
    d["predicted"] = r.predicted;
    d["candidate"] = r.candidate;
    d["pa_lower"] = r.pa_lower;
    d["radius"] = r.radius;
    d["abstain"] = r.abstained();
    d["selection_count"] = r.selection_count;
    d["estimation_count"] = r.estimation_count;
    d["selection_tie"] = r.selection_tie;
    d["seconds"] = r.seconds;
    return d;
}

// Wraps a Python callable: list of (N, 3) arrays -> sequence of int labels.
class CallbackClassifier final : public Classifier {
public:
    explicit CallbackClassifier(py::function fn) : fn_(std::move(fn)) {}
    ~CallbackClassifier() override {
        py::gil_scoped_acquire gil;
        fn_ = py::function();
    }

    bool serial() const override { return true; }

protected:
    std::vector<Label> classify_batch(std::span<const PointCloud> clouds) const override {
        py::gil_scoped_acquire gil;
        py::list batch;
        for (const auto& c : clouds) batch.append(to_array(c));
        auto labels = fn_(batch).cast<std::vector<Label>>();
        if (labels.size() != clouds.size()) throw ClassifierError("callback returned the wrong number of labels");
        return labels;
    }

private:
    py::function fn_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Randomized smoothing certification of point-cloud classifiers under parametric deformations";

    py::register_exception<ClassifierError>(m, "ClassifierError", PyExc_RuntimeError);
    py::register_exception<TransportError>(m, "TransportError", PyExc_RuntimeError);
    py::register_exception<ProtocolError>(m, "ProtocolError", PyExc_RuntimeError);

    m.def("deformation_kinds", [] {
        std::vector<std::string> out;
        for (auto k : kAllDeformationKinds) out.emplace_back(to_string(k));
        return out;
    });
    m.def("param_dim", [](const std::string& kind, std::size_t n_points) {
        return param_dim(parse_deformation_kind(kind), n_points);
    }, py::arg("kind"), py::arg("n_points"));
    m.def("deform", [](const CloudArray& cloud, const std::string& kind, std::vector<double> params) {
        return to_array(deform(to_cloud(cloud), {parse_deformation_kind(kind), std::move(params)}));
    }, py::arg("cloud"), py::arg("kind"), py::arg("params"));
    m.def("sample_params", [](const std::string& kind, const std::string& dist, double scale, std::size_t n_points,
                              std::uint64_t seed) {
        Rng rng(seed);
        return sample_params(parse_deformation_kind(kind), {parse_distribution_family(dist), scale}, n_points, rng).values;
    }, py::arg("kind"), py::arg("dist"), py::arg("scale"), py::arg("n_points"), py::arg("seed") = 0);

    m.def("generate_shape", [](const std::string& family, std::size_t n_points, double jitter, std::uint64_t seed) {
        return to_array(generate_shape({parse_shape_family(family), n_points, jitter, seed}));
    }, py::arg("family"), py::arg("n_points") = 1024, py::arg("jitter") = 0.0, py::arg("seed") = 0);
    m.def("synthetic_dataset", [](std::size_t per_class, std::size_t n_points, double jitter, std::uint64_t seed) {
        const auto data = synthetic_dataset({per_class, n_points, jitter, seed});
        std::vector<CloudArray> clouds;
        std::vector<Label> labels;
        for (const auto& item : data) {
            clouds.push_back(to_array(item.cloud));
            labels.push_back(item.label);
        }
        return py::make_tuple(clouds, labels);
    }, py::arg("per_class") = 25, py::arg("n_points") = 256, py::arg("jitter") = 0.01, py::arg("seed") = 0);

    m.def("std_normal_quantile", &std_normal_quantile, py::arg("p"));
    m.def("std_normal_cdf", &std_normal_cdf, py::arg("x"));
    m.def("clopper_pearson_lower", &clopper_pearson_lower, py::arg("k"), py::arg("n"), py::arg("alpha"));
    m.def("binomial_two_sided_pvalue", &binomial_two_sided_pvalue, py::arg("k"), py::arg("n"));
    m.def("certified_radius", [](double pa_lower, const std::string& dist, double scale) {
        SmoothingConfig c;
        c.distribution = {parse_distribution_family(dist), scale};
        return certified_radius(pa_lower, c);
    }, py::arg("pa_lower"), py::arg("dist"), py::arg("scale"));

    py::class_<Classifier, std::shared_ptr<Classifier>>(m, "Classifier")
        .def("classify", [](const Classifier& c, const std::vector<CloudArray>& clouds) {
            const auto native = to_clouds(clouds);
            py::gil_scoped_release nogil;
            return c.classify(native);
        }, py::arg("clouds"));
    py::class_<ConstantClassifier, Classifier, std::shared_ptr<ConstantClassifier>>(m, "ConstantClassifier")
        .def(py::init<Label>(), py::arg("label"));
    py::class_<CallbackClassifier, Classifier, std::shared_ptr<CallbackClassifier>>(m, "CallbackClassifier")
        .def(py::init<py::function>(), py::arg("fn"));
    py::class_<CentroidClassifier, Classifier, std::shared_ptr<CentroidClassifier>>(m, "CentroidClassifier")
        .def_static("fit", [](const std::vector<CloudArray>& clouds, const std::vector<Label>& labels) {
            return centroid_fit(to_dataset(clouds, labels));
        }, py::arg("clouds"), py::arg("labels"))
        .def_static("load", &CentroidClassifier::load, py::arg("path"))
        .def("save", &CentroidClassifier::save, py::arg("path"))
        .def_property_readonly("num_classes", &CentroidClassifier::num_classes);
    py::class_<MlpClassifier, Classifier, std::shared_ptr<MlpClassifier>>(m, "MlpClassifier")
        .def_static("load", &MlpClassifier::load, py::arg("path"))
        .def("save", &MlpClassifier::save, py::arg("path"))
        .def_static("train", [](const std::vector<CloudArray>& clouds, const std::vector<Label>& labels,
                                std::size_t epochs, double learning_rate, double momentum, std::size_t batch_size,
                                std::uint64_t seed, std::optional<std::tuple<std::string, std::string, double>> augment) {
            TrainConfig config;
            config.epochs = epochs;
            config.learning_rate = learning_rate;
            config.momentum = momentum;
            config.batch_size = batch_size;
            config.seed = seed;
            if (augment) {
                const auto& [kind, dist, scale] = *augment;
                config.augmentation = Augmentation{parse_deformation_kind(kind), {parse_distribution_family(dist), scale}};
            }
            const auto data = to_dataset(clouds, labels);
            py::gil_scoped_release nogil;
            return mlp_train(data, config);
        }, py::arg("clouds"), py::arg("labels"), py::arg("epochs") = 20, py::arg("learning_rate") = 0.01,
           py::arg("momentum") = 0.9, py::arg("batch_size") = 16, py::arg("seed") = 0, py::arg("augment") = py::none())
        .def("scores", [](const MlpClassifier& model, const CloudArray& cloud) {
            return mlp_forward(model, to_cloud(cloud));
        }, py::arg("cloud"));
    py::class_<OracleClient, Classifier, std::shared_ptr<OracleClient>>(m, "OracleClient");
    m.def("connect_oracle", [](const std::string& spec, double timeout_seconds) {
        ConnectOptions options;
        options.timeout = std::chrono::milliseconds(static_cast<long long>(timeout_seconds * 1000.0));
        return std::shared_ptr<OracleClient>(connect(OracleEndpoint::parse(spec), options).release());
    }, py::arg("spec"), py::arg("timeout") = 30.0);

    m.def("certify", [](const Classifier& classifier, const CloudArray& cloud, const std::string& kind,
                        const std::string& dist, double scale, std::size_t n0, std::size_t n, double alpha,
                        std::size_t batch, std::uint64_t seed) {
        const auto native = to_cloud(cloud);
        const auto config = make_config(dist, scale, n0, n, alpha, batch);
        CertificationResult r;
        {
            py::gil_scoped_release nogil;
            r = smooth_certify(classifier, native, parse_deformation_kind(kind), config, seed);
        }
        return result_dict(r);
    }, py::arg("classifier"), py::arg("cloud"), py::arg("kind"), py::arg("dist"), py::arg("scale"),
       py::arg("n0") = 100, py::arg("n") = 1000, py::arg("alpha") = 1e-3, py::arg("batch") = 200, py::arg("seed") = 0);

    m.def("predict", [](const Classifier& classifier, const CloudArray& cloud, const std::string& kind,
                        const std::string& dist, double scale, std::size_t n, double alpha, std::size_t batch,
                        std::uint64_t seed) {
        const auto native = to_cloud(cloud);
        const auto config = make_config(dist, scale, 1, n, alpha, batch);
        PredictionResult r;
        {
            py::gil_scoped_release nogil;
            r = smooth_predict(classifier, native, parse_deformation_kind(kind), config, seed);
        }
        py::dict d;
        d["predicted"] = r.predicted;
        d["pvalue"] = r.pvalue;
        return d;
    }, py::arg("classifier"), py::arg("cloud"), py::arg("kind"), py::arg("dist"), py::arg("scale"),
       py::arg("n") = 1000, py::arg("alpha") = 1e-3, py::arg("batch") = 200, py::arg("seed") = 0);

    m.def("sweep_csv", [](const Classifier& classifier, const std::vector<CloudArray>& clouds,
                          const std::vector<Label>& labels, const std::string& kind, const std::string& dist,
                          std::vector<double> scales, std::size_t n0, std::size_t n, double alpha, std::size_t batch,
                          std::uint64_t seed, std::size_t workers, bool record_time) {
        SweepSpec spec;
        spec.kind = parse_deformation_kind(kind);
        spec.family = parse_distribution_family(dist);
        spec.scales = std::move(scales);
        spec.n0 = n0;
        spec.n = n;
        spec.alpha = alpha;
        spec.batch = batch;
        spec.base_seed = seed;
        spec.workers = workers;
        spec.record_time = record_time;
        const auto data = to_dataset(clouds, labels);
        std::ostringstream out;
        {
            py::gil_scoped_release nogil;
            write_csv(out, run_sweep(spec, data, classifier));
        }
        return out.str();
    }, py::arg("classifier"), py::arg("clouds"), py::arg("labels"), py::arg("kind"), py::arg("dist"),
       py::arg("scales"), py::arg("n0") = 100, py::arg("n") = 1000, py::arg("alpha") = 1e-3, py::arg("batch") = 200,
       py::arg("seed") = 0, py::arg("workers") = 1, py::arg("record_time") = true);

    m.def("summary_json", [](const std::string& csv, std::size_t samples) {
        std::istringstream in(csv);
        return summary_json(read_csv(in), samples).dump();
    }, py::arg("csv"), py::arg("samples") = 64);
}
