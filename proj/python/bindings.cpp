#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "neurotube/archive.hpp"
#include "neurotube/metrics.hpp"
#include "neurotube/model.hpp"
#include "neurotube/pipeline.hpp"
#include "neurotube/swc.hpp"
#include "neurotube/tracer.hpp"
#include "neurotube/weight_transfer.hpp"

namespace py = pybind11;
using namespace nt;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Volume to_volume(const FloatArray& a) {
    if (a.ndim() != 3) throw DimensionError("expected a 3-D array, got " + std::to_string(a.ndim()) + " dimensions");
    const auto* p = a.data();
    return Volume(a.shape(0), a.shape(1), a.shape(2), std::vector<float>(p, p + a.size()));
}

FloatArray to_array(const Volume& v) {
    FloatArray out({v.depth(), v.height(), v.width()});
    std::copy(v.voxels().begin(), v.voxels().end(), out.mutable_data());
    return out;
}

py::array_t<double> tensor_to_array(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> out(shape);
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

Tensor array_to_tensor(const DoubleArray& a, DType dtype) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    const auto* p = a.data();
    Tensor t(std::move(shape), std::vector<double>(p, p + a.size()), dtype);
    t.round_to_dtype();
    return t;
}

ModelConfig config_from_dict(const std::map<std::string, std::string>& kv) {
    KeyValues prefixed;
    for (const auto& [k, v] : kv) prefixed[k.starts_with("model.") ? k : "model." + k] = v;
    return ModelConfig::from_key_values(prefixed);
}

py::dict distance_dict(const NeuronDistance& d) {
    py::dict out;
    out["esa"] = d.esa;
    out["dsa"] = d.dsa;
    out["pds"] = d.pds;
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Segmentation, tracing and metrics for neuron volumes";

    // Hierarchy mirrors the C++ one: IncompatibleCheckpoint is an ArgumentError.
    static py::exception<ArgumentError> argument_error(m, "ArgumentError", PyExc_ValueError);
    static py::exception<DimensionError> dimension_error(m, "DimensionError", PyExc_ValueError);
    static py::exception<ContractError> contract_error(m, "ContractError", PyExc_ValueError);
    static py::exception<ParseError> parse_error(m, "ParseError", PyExc_ValueError);
    static py::exception<IncompatibleCheckpoint> incompatible(m, "IncompatibleCheckpoint", argument_error.ptr());
    static py::exception<UndefinedDistance> undefined(m, "UndefinedDistance", PyExc_ValueError);
    static py::exception<EmptyTrace> empty_trace(m, "EmptyTrace", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const IncompatibleCheckpoint& e) {
            py::set_error(incompatible, e.what());
        } catch (const ParseError& e) {
            py::set_error(parse_error, e.what());
        } catch (const ArgumentError& e) {
            py::set_error(argument_error, e.what());
        } catch (const DimensionError& e) {
            py::set_error(dimension_error, e.what());
        } catch (const ContractError& e) {
            py::set_error(contract_error, e.what());
        } catch (const UndefinedDistance& e) {
            py::set_error(undefined, e.what());
        } catch (const EmptyTrace& e) {
            py::set_error(empty_trace, e.what());
        }
    });

    m.def("load_volume", [](const std::filesystem::path& p) { return to_array(load_volume(p)); }, py::arg("path"),
          "Read a .vjson volume (and its payload) as a float32 [D, H, W] array.");
    m.def("save_volume", [](const std::filesystem::path& p, const FloatArray& a) { save_volume(p, to_volume(a)); },
          py::arg("path"), py::arg("volume"));

    m.def("load_archive", [](const std::filesystem::path& p) {
        py::dict out;
        for (const auto& [name, t] : load_archive(p)) out[py::str(name)] = tensor_to_array(t);
        return out;
    }, py::arg("path"), "Read a DTNA archive as a dict of float64 arrays.");
    m.def("save_archive", [](const std::filesystem::path& p, const std::map<std::string, DoubleArray>& tensors,
                             const std::string& dtype) {
        if (dtype != "f32" && dtype != "f64") throw ArgumentError("dtype must be 'f32' or 'f64', got '" + dtype + "'");
        TensorMap map;
        for (const auto& [name, a] : tensors) map[name] = array_to_tensor(a, dtype == "f32" ? DType::f32 : DType::f64);
        save_archive(p, map);
    }, py::arg("path"), py::arg("tensors"), py::arg("dtype") = "f64");

    m.def("write_fixture_checkpoint",
          [](const std::filesystem::path& p, std::size_t embed_dim, std::size_t channels, std::size_t layers,
             std::size_t heads, std::size_t tokens, std::uint64_t seed) {
              save_archive(p, make_fixture_checkpoint(embed_dim, channels, layers, heads, tokens, seed));
          },
          py::arg("path"), py::arg("embed_dim") = 8, py::arg("channels") = 3, py::arg("layers") = 2,
          py::arg("heads") = 2, py::arg("tokens") = 9, py::arg("seed") = 4,
          "Write a synthetic 2-D checkpoint (not real pre-trained weights).");

    m.def("gen_phantom",
          [](std::uint64_t seed, std::array<std::size_t, 3> shape, std::size_t branches,
             std::array<double, 2> radius_range, double noise, double decay) {
              PhantomSpec spec;
              spec.size = shape;
              spec.branches = branches;
              spec.radius_range = radius_range;
              spec.noise = noise;
              spec.decay = decay;
              const Phantom ph = gen_phantom(seed, spec);
              return py::make_tuple(to_array(ph.image), to_array(ph.label), write_swc(ph.swc));
          },
          py::arg("seed"), py::arg("shape") = std::array<std::size_t, 3>{16, 48, 48}, py::arg("branches") = 3,
          py::arg("radius_range") = std::array<double, 2>{1.5, 3.0}, py::arg("noise") = 0.1, py::arg("decay") = 1.5,
          "Synthetic neuron volume. Returns (image, label, swc_text).");

    m.def("dice", [](const FloatArray& pred, const FloatArray& label, double threshold) {
        return dice(BinaryMask::from_volume(to_volume(pred), threshold),
                    BinaryMask::from_volume(to_volume(label), threshold));
    }, py::arg("pred"), py::arg("label"), py::arg("threshold") = 0.5);
    m.def("hd95", [](const FloatArray& pred, const FloatArray& label, double threshold) {
        return hd95(BinaryMask::from_volume(to_volume(pred), threshold),
                    BinaryMask::from_volume(to_volume(label), threshold));
    }, py::arg("pred"), py::arg("label"), py::arg("threshold") = 0.5);

    m.def("normalize_swc", [](const std::string& text) { return write_swc(parse_swc(text)); }, py::arg("text"),
          "Parse and re-emit SWC text in canonical form.");
    m.def("neuron_distance", [](const std::string& a, const std::string& b, double threshold) {
        return distance_dict(neuron_distance(parse_swc(a), parse_swc(b), threshold));
    }, py::arg("swc_a"), py::arg("swc_b"), py::arg("threshold") = 2.0,
          "ESA, DSA and PDS between two SWC texts.");
    m.def("trace", [](const FloatArray& prob, double binarize, std::size_t prune_len) {
        return write_swc(trace(to_volume(prob), TraceOptions{binarize, prune_len}));
    }, py::arg("prob"), py::arg("binarize") = 0.5, py::arg("prune_len") = 5,
          "Skeleton-trace a probability volume; returns SWC text.");

    py::class_<SegModel>(m, "Model")
        .def_static("load", [](const std::filesystem::path& p) { return load_model(p); }, py::arg("path"))
        .def_static("random", [](const std::map<std::string, std::string>& cfg) {
            return SegModel::random(config_from_dict(cfg));
        }, py::arg("config"))
        .def_static("transfer", [](const std::filesystem::path& checkpoint, const std::map<std::string, std::string>& cfg) {
            const ModelConfig mc = config_from_dict(cfg);
            return SegModel(mc, seed_model(Checkpoint2D::from_tensors(load_archive(checkpoint)), mc));
        }, py::arg("checkpoint"), py::arg("config"),
           "Seed a 3-D model from a 2-D checkpoint. Config keys follow the model.* settings.")
        .def("save", [](const SegModel& self, const std::filesystem::path& p) { save_model(p, self); }, py::arg("path"))
        .def_property_readonly("config", [](const SegModel& self) { return self.config().to_key_values(); })
        .def("segment", [](const SegModel& self, const FloatArray& image, std::size_t threads) {
            Volume in = to_volume(image);
            Volume out;
            {
                py::gil_scoped_release release;
                out = segment_volume(self, in, threads);
            }
            return to_array(out);
        }, py::arg("image"), py::arg("threads") = 1, "Foreground probability for every voxel.");
}
