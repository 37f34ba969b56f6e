#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "scaa/config_file.hpp"
#include "scaa/io.hpp"
#include "scaa/memest.hpp"
#include "scaa/metrics.hpp"
#include "scaa/trainer.hpp"

namespace py = pybind11;
using namespace scaa;

namespace {

py::array volume_image(const VolumeSample& v) {
    py::array_t<float> a({v.dims[0], v.dims[1], v.dims[2]});
    SCAA_CHECK(!v.image.empty(), "volume '", v.id, "' carries no image");
    std::copy(v.image.begin(), v.image.end(), a.mutable_data());
    return a;
}

py::array volume_labels(const VolumeSample& v) {
    py::array_t<uint8_t> a({v.dims[0], v.dims[1], v.dims[2]});
    SCAA_CHECK(!v.labels.empty(), "volume '", v.id, "' carries no labels");
    std::copy(v.labels.begin(), v.labels.end(), a.mutable_data());
    return a;
}

VolumeSample make_volume(const std::string& id, py::array_t<float> image,
                         py::array_t<uint8_t> labels, int64_t num_classes,
                         std::array<double, 3> spacing) {
    SCAA_CHECK(image.ndim() == 3, "image must be a 3D float32 array");
    VolumeSample v;
    v.id = id;
    v.dims = {image.shape(0), image.shape(1), image.shape(2)};
    v.spacing = spacing;
    v.num_classes = num_classes;
    auto img = py::array_t<float, py::array::c_style | py::array::forcecast>(image);
    v.image.assign(img.data(), img.data() + img.size());
    if (labels.size() > 0) {
        SCAA_CHECK(labels.ndim() == 3 && labels.shape(0) == v.dims[0] &&
                       labels.shape(1) == v.dims[1] && labels.shape(2) == v.dims[2],
                   "labels must match the image extents");
        auto lab = py::array_t<uint8_t, py::array::c_style | py::array::forcecast>(labels);
        v.labels.assign(lab.data(), lab.data() + lab.size());
    }
    v.validate();
    return v;
}

ScaaConfig build_config(const std::string& preset, const std::string& variant, int64_t classes) {
    ScaaConfig cfg;
    if (preset == "paper")
        cfg = ScaaConfig::paper(classes);
    else if (preset == "desk")
        cfg = ScaaConfig::desk(classes);
    else if (preset == "micro")
        cfg = ScaaConfig::micro(classes);
    else
        fail("unknown preset '", preset, "' (expected paper|desk|micro)");
    cfg.variant = parse_variant(variant);
    return cfg;
}

struct PyModel {
    std::unique_ptr<ScaaModel<float>> model;

    PyModel(const std::string& preset, const std::string& variant, int64_t classes,
            uint64_t seed) {
        model = std::make_unique<ScaaModel<float>>(build_config(preset, variant, classes), seed);
    }
    explicit PyModel(const std::string& ckpt_path) {
        CheckpointInfo info = read_checkpoint_info(ckpt_path);
        model = std::make_unique<ScaaModel<float>>(info.config, 0);
        load_checkpoint(ckpt_path, *model);
    }

    int64_t parameters() const { return model->params().total_parameters(); }
    std::string variant() const { return variant_name(model->config().variant); }
    int64_t num_classes() const { return model->config().num_classes; }
    void save(const std::string& path) const {
        save_checkpoint<float>(path, *model, nullptr, 0, "python");
    }

    py::tuple infer_volume(const VolumeSample& v, bool attention) {
        InferResult res;
        {
            py::gil_scoped_release release;
            res = infer(*model, v, attention);
        }
        py::list records;
        for (const auto& r : res.attention)
            records.append(py::make_tuple(r.scale, r.slice_z, r.head, r.weights));
        return py::make_tuple(volume_labels(res.pred), records);
    }

    std::vector<std::array<double, 3>> train_volumes(const std::vector<VolumeSample>& volumes,
                                                     int64_t steps, int64_t slices, double lr,
                                                     uint64_t seed) {
        SCAA_CHECK(steps >= 1, "train: steps must be >= 1");
        TrainConfig cfg;
        cfg.lr = lr;
        cfg.max_steps = steps;
        cfg.epochs = (steps + (int64_t)volumes.size() - 1) / (int64_t)volumes.size();
        cfg.slices_per_step = slices;
        cfg.seed = seed;
        AdamState<float> adam;
        adam.lr = cfg.lr;
        adam.init(model->params());
        std::vector<std::array<double, 3>> losses;
        py::gil_scoped_release release;
        train<float>(*model, volumes, cfg, adam,
                     [&](int64_t, const StepStats& st, int64_t) {
                         losses.push_back({st.l2d, st.l3d, st.total});
                     });
        return losses;
    }
};

py::dict mem_estimate(const std::string& arch, int64_t batch) {
    ArchSpec spec = builtin_arch(arch);
    if (batch > 0) spec.batch = batch;
    MemReport r = estimate(spec);
    py::dict d;
    d["arch"] = r.arch;
    d["batch"] = r.batch;
    d["flagged_elements_per_item"] = r.flagged_elements_per_item;
    d["flagged_elements_per_volume"] = r.flagged_elements_per_volume;
    d["params"] = r.param_count;
    d["activation_bytes"] = r.activation_bytes;
    d["estimate_gb"] = r.estimate_gb();
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Context-attentive volumetric segmentation core";

    py::class_<VolumeSample>(m, "Volume")
        .def_readonly("id", &VolumeSample::id)
        .def_readonly("num_classes", &VolumeSample::num_classes)
        .def_property_readonly("dims",
                               [](const VolumeSample& v) {
                                   return py::make_tuple(v.dims[0], v.dims[1], v.dims[2]);
                               })
        .def_property_readonly("spacing",
                               [](const VolumeSample& v) {
                                   return py::make_tuple(v.spacing[0], v.spacing[1],
                                                         v.spacing[2]);
                               })
        .def_property_readonly("image", &volume_image)
        .def_property_readonly("labels", &volume_labels)
        .def("__repr__", [](const VolumeSample& v) {
            return "<Volume '" + v.id + "' " + std::to_string(v.dims[0]) + "x" +
                   std::to_string(v.dims[1]) + "x" + std::to_string(v.dims[2]) + ">";
        });

    m.def("make_volume", &make_volume, py::arg("id"), py::arg("image"),
          py::arg("labels") = py::array_t<uint8_t>(), py::arg("num_classes") = 3,
          py::arg("spacing") = std::array<double, 3>{1.0, 1.0, 1.0});

    m.def(
        "generate_phantom",
        [](int64_t extent, uint64_t seed, const std::string& id) {
            PhantomSpec spec = PhantomSpec::default3();
            spec.dims = {extent, extent, extent};
            return generate_phantom(spec, seed, id);
        },
        py::arg("extent") = 64, py::arg("seed") = 0, py::arg("id") = "vol",
        py::call_guard<py::gil_scoped_release>());

    m.def("read_volume", &read_volume, py::arg("path"));
    m.def(
        "write_volume",
        [](const VolumeSample& v, const std::string& path) {
            return write_volume(v, path, "python");
        },
        py::arg("volume"), py::arg("path"));

    py::class_<PyModel>(m, "Model")
        .def(py::init<const std::string&, const std::string&, int64_t, uint64_t>(),
             py::arg("preset") = "desk", py::arg("variant") = "scaa", py::arg("classes") = 3,
             py::arg("seed") = 0)
        .def(py::init<const std::string&>(), py::arg("checkpoint"))
        .def_property_readonly("parameters", &PyModel::parameters)
        .def_property_readonly("variant", &PyModel::variant)
        .def_property_readonly("num_classes", &PyModel::num_classes)
        .def("save", &PyModel::save, py::arg("path"))
        .def("infer", &PyModel::infer_volume, py::arg("volume"), py::arg("attention") = false)
        .def("train", &PyModel::train_volumes, py::arg("volumes"), py::arg("steps"),
             py::arg("slices") = 8, py::arg("lr") = 1e-4, py::arg("seed") = 0);

    m.def(
        "dsc",
        [](const VolumeSample& pred, const VolumeSample& ref, int cls) {
            SCAA_CHECK(pred.dims == ref.dims, "volume extents differ");
            return dsc_percent(pred.labels, ref.labels, cls);
        },
        py::arg("pred"), py::arg("ref"), py::arg("cls"));
    m.def(
        "hd95",
        [](const VolumeSample& pred, const VolumeSample& ref, int cls) -> py::object {
            SCAA_CHECK(pred.dims == ref.dims, "volume extents differ");
            auto d = hd95(pred.labels, ref.labels, pred.dims, pred.spacing, cls);
            return d ? py::cast(*d) : py::none();
        },
        py::arg("pred"), py::arg("ref"), py::arg("cls"));

    m.def("mem_estimate", &mem_estimate, py::arg("arch"), py::arg("batch") = 0);
    m.def("model_parameter_count", [](const std::string& preset, const std::string& variant,
                                      int64_t classes) {
        return ScaaModel<float>::count_parameters(build_config(preset, variant, classes));
    });
}
