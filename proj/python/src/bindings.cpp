#include "ishm/checkpoint.hpp"
#include "ishm/dataset_io.hpp"
#include "ishm/error.hpp"
#include "ishm/eval.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

namespace py = pybind11;
using namespace ishm;

namespace {

py::array_t<double> signals(const Dataset& ds) {
    const std::size_t c = ds.meta.n_channels, t = ds.meta.n_samples;
    py::array_t<double> out({ds.size(), c, t});
    double* dst = out.mutable_data();
    for (const SignalInstance& inst : ds.instances) {
        std::memcpy(dst, inst.data.values().data(), c * t * sizeof(double));
        dst += c * t;
    }
    return out;
}

py::array_t<bool> labels(const Dataset& ds) {
    py::array_t<bool> out(static_cast<py::ssize_t>(ds.size()));
    bool* dst = out.mutable_data();
    for (const SignalInstance& inst : ds.instances) *dst++ = inst.label;
    return out;
}

py::object anomaly_dict(const SignalInstance& inst) {
    if (!inst.anomaly) return py::none();
    const AnomalySpec& a = *inst.anomaly;
    py::dict d;
    d["kind"] = to_string(a.kind);
    d["channel"] = a.channel;
    d["t_start_s"] = a.t_start_s;
    d["duration_s"] = a.duration_s;
    d["offset"] = a.offset;
    return d;
}

std::vector<bool> to_bool_vector(const py::array_t<bool, py::array::c_style | py::array::forcecast>& y) {
    return std::vector<bool>(y.data(), y.data() + y.size());
}

std::span<const double> as_span(const py::array_t<double, py::array::c_style | py::array::forcecast>& s) {
    return {s.data(), static_cast<std::size_t>(s.size())};
}

}  // namespace

PYBIND11_MODULE(_ishm, m) {
    m.doc() = "Synthetic railway sensor benchmark and attention-based anomaly detectors";
    m.attr("GENERATOR_VERSION") = kGeneratorVersion;

    auto base = py::register_exception<Error>(m, "IshmError");
    py::register_exception<InvalidConfig>(m, "InvalidConfig", base.ptr());
    py::register_exception<InvalidDistribution>(m, "InvalidDistribution", base.ptr());
    py::register_exception<InvalidParameter>(m, "InvalidParameter", base.ptr());
    py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());
    py::register_exception<HashMismatch>(m, "HashMismatch", base.ptr());
    py::register_exception<UndefinedMetric>(m, "UndefinedMetric", base.ptr());

    py::class_<GenConfig>(m, "GenConfig")
        .def(py::init(&GenConfig::for_stage), py::arg("stage") = 1)
        .def_readonly("stage", &GenConfig::stage)
        .def_readwrite("sample_rate_hz", &GenConfig::sample_rate_hz)
        .def_readwrite("duration_s", &GenConfig::duration_s)
        .def_readwrite("anomaly_rate", &GenConfig::anomaly_rate)
        .def_readwrite("spike_channel_probs", &GenConfig::spike_channel_probs)
        .def_readwrite("localdev_channel_probs", &GenConfig::localdev_channel_probs)
        .def_property_readonly("n_channels", &GenConfig::n_channels)
        .def_property_readonly("n_samples", &GenConfig::n_samples)
        .def("validate", &GenConfig::validate);

    py::class_<Dataset>(m, "Dataset")
        .def("__len__", &Dataset::size)
        .def_property_readonly("stage", [](const Dataset& d) { return d.meta.stage; })
        .def_property_readonly("seed", [](const Dataset& d) { return d.meta.seed; })
        .def_property_readonly("n_channels", [](const Dataset& d) { return d.meta.n_channels; })
        .def_property_readonly("n_samples", [](const Dataset& d) { return d.meta.n_samples; })
        .def_property_readonly("signals", &signals, "Copy of all signals, shape (n, channels, samples)")
        .def_property_readonly("labels", &labels)
        .def_property_readonly("ids", [](const Dataset& d) {
            std::vector<std::uint64_t> ids;
            for (const SignalInstance& inst : d.instances) ids.push_back(inst.instance_id);
            return ids;
        })
        .def("anomaly", [](const Dataset& d, std::size_t i) { return anomaly_dict(d.instances.at(i)); })
        .def("hash", &dataset_hash)
        .def("split", &split_dataset, py::arg("train_fraction"), py::arg("seed"))
        .def("filter", &filter_by_label, py::arg("label"));

    m.def(
        "generate",
        [](const GenConfig& cfg, std::size_t n, std::uint64_t seed, unsigned threads) {
            py::gil_scoped_release release;
            return generate_dataset(cfg, n, seed, threads);
        },
        py::arg("config"), py::arg("n"), py::arg("seed"), py::arg("threads") = 0);
    m.def("save_dataset", &save_dataset, py::arg("dataset"), py::arg("dir"));
    m.def("load_dataset", &load_dataset, py::arg("dir"));
    m.def("export_csv", &export_csv, py::arg("dataset"), py::arg("file"));

    py::class_<AttnTransformerConfig>(m, "AttnConfig")
        .def(py::init<>())
        .def_readwrite("patch_len", &AttnTransformerConfig::patch_len)
        .def_readwrite("d_model", &AttnTransformerConfig::d_model)
        .def_readwrite("n_heads", &AttnTransformerConfig::n_heads)
        .def_readwrite("n_layers", &AttnTransformerConfig::n_layers)
        .def_readwrite("ffn_hidden", &AttnTransformerConfig::ffn_hidden)
        .def_readwrite("decoder_hidden", &AttnTransformerConfig::decoder_hidden)
        .def_readwrite("pos_init_std", &AttnTransformerConfig::pos_init_std)
        .def_readwrite("epochs", &AttnTransformerConfig::epochs)
        .def_readwrite("batch_size", &AttnTransformerConfig::batch_size)
        .def_readwrite("lr", &AttnTransformerConfig::lr)
        .def_readwrite("seed", &AttnTransformerConfig::seed);

    py::class_<CnnAeConfig>(m, "CnnConfig")
        .def(py::init<>())
        .def_readwrite("kernel", &CnnAeConfig::kernel)
        .def_readwrite("stride", &CnnAeConfig::stride)
        .def_readwrite("channels1", &CnnAeConfig::channels1)
        .def_readwrite("channels2", &CnnAeConfig::channels2)
        .def_readwrite("epochs", &CnnAeConfig::epochs)
        .def_readwrite("batch_size", &CnnAeConfig::batch_size)
        .def_readwrite("lr", &CnnAeConfig::lr)
        .def_readwrite("seed", &CnnAeConfig::seed);

    py::class_<TrainedModel>(m, "Model")
        .def_property_readonly("kind", [](const TrainedModel& t) { return to_string(t.kind); })
        .def_property_readonly("n_channels", &TrainedModel::n_channels)
        .def(
            "score",
            [](const TrainedModel& t, const Dataset& d, const std::string& variant, double alpha) {
                const ScoreConfig sc{parse_score_variant(variant), alpha};
                std::vector<double> s;
                {
                    py::gil_scoped_release release;
                    s = t.score(d, sc);
                }
                return py::array_t<double>(static_cast<py::ssize_t>(s.size()), s.data());
            },
            py::arg("dataset"), py::arg("variant") = "attn", py::arg("alpha") = 0.5)
        .def("save", [](const TrainedModel& t, const std::filesystem::path& dir) { save_model(t, dir); }, py::arg("dir"));

    // Returns (model, per-epoch training loss).
    m.def(
        "train_attn",
        [](const Dataset& d, const AttnTransformerConfig& cfg) {
            py::gil_scoped_release release;
            AttnTrainResult r = train_attn_transformer(d, cfg);
            std::vector<double> loss = r.history.epoch_loss;
            return std::make_pair(from_result(std::move(r)), loss);
        },
        py::arg("dataset"), py::arg("config") = AttnTransformerConfig{});
    m.def(
        "train_cnn",
        [](const Dataset& d, const CnnAeConfig& cfg) {
            py::gil_scoped_release release;
            CnnTrainResult r = cnn_ae_train(d, cfg);
            std::vector<double> loss = r.history.epoch_loss;
            return std::make_pair(from_result(std::move(r)), loss);
        },
        py::arg("dataset"), py::arg("config") = CnnAeConfig{});
    m.def("load_model", &load_model, py::arg("dir"));

    m.def(
        "auc",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& s,
           const py::array_t<bool, py::array::c_style | py::array::forcecast>& y) { return auc(as_span(s), to_bool_vector(y)); },
        py::arg("scores"), py::arg("labels"));
    m.def(
        "drop_table",
        [](const std::map<int, double>& by_stage) {
            py::list rows;
            for (const DropRow& r : drop_table(by_stage))
                rows.append(py::dict(py::arg("stage") = r.stage, py::arg("auc") = r.auc, py::arg("delta") = r.delta,
                                     py::arg("significant") = r.significant, py::arg("text") = format_drop(r)));
            return rows;
        },
        py::arg("auc_by_stage"));
}
