// pybind11 bindings: numpy in, numpy out. Images are float64 CHW in [-1,1];
// latents are float64 (C,H,W).
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cevae/latent_codec.hpp"
#include "cevae/metrics.hpp"
#include "cevae/trainer.hpp"

namespace py = pybind11;
using namespace cevae;

namespace {

Tensor to_tensor(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
  Shape shape(arr.ndim());
  for (py::ssize_t i = 0; i < arr.ndim(); ++i) shape[i] = arr.shape(i);
  Tensor t(shape);
  std::memcpy(t.data.data(), arr.data(), sizeof(double) * t.numel());
  return t;
}

py::array_t<double> to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
  py::array_t<double> arr(shape);
  std::memcpy(arr.mutable_data(), t.data.data(), sizeof(double) * t.numel());
  return arr;
}

CevaeConfig preset_config(const std::string& name) {
  if (name == "reference") return CevaeConfig::reference();
  if (name == "tiny") return CevaeConfig::tiny();
  if (name == "small") return CevaeConfig::small();
  throw Error(ErrorKind::Config, "unknown preset '" + name + "' (reference, tiny, small)");
}

int preset_size(const std::string& name) {
  if (name == "tiny") return 32;
  if (name == "small") return 64;
  return 256;
}

LatentDtype parse_dtype(const std::string& name) {
  if (name == "f16") return LatentDtype::kF16;
  if (name == "f32") return LatentDtype::kF32;
  if (name == "f64") return LatentDtype::kF64;
  throw Error(ErrorKind::Config, "unknown latent dtype '" + name + "' (f16, f32, f64)");
}

// Thin inference-oriented wrapper around the trainer (which owns model state,
// checkpoint IO, and the [-1,1] clamping conventions).
struct PyModel {
  Trainer trainer;

  PyModel(const std::string& preset, uint64_t seed)
      : trainer(preset_config(preset), make_cfg(preset, seed)) {}
  explicit PyModel(const std::string& checkpoint) : trainer(Trainer::from_checkpoint(checkpoint)) {}

  static TrainConfig make_cfg(const std::string& preset, uint64_t seed) {
    TrainConfig tc;
    tc.seed = seed;
    tc.image_size = preset_size(preset);
    return tc;
  }

  py::array_t<double> enhance(const py::array_t<double>& img) {
    return to_array(trainer.enhance_image(to_tensor(img)));
  }
  py::array_t<double> encode(const py::array_t<double>& img) {
    return to_array(trainer.encode_image(to_tensor(img)));
  }
  py::array_t<double> decode(const py::array_t<double>& latent) {
    return to_array(trainer.enhance_latent(to_tensor(latent)));
  }
  void save(const std::string& path) { trainer.save_checkpoint(path); }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "CE-VAE underwater image enhancement core";

  py::register_exception<Error>(m, "CevaeError");

  py::class_<PyModel>(m, "Model")
      .def(py::init<const std::string&, uint64_t>(), py::arg("preset") = "reference",
           py::arg("seed") = 0)
      .def_static("from_checkpoint", [](const std::string& p) { return PyModel(p); },
                  py::arg("checkpoint"))
      .def("enhance", &PyModel::enhance, py::arg("image"),
           "Enhance a (3,H,W) image in [-1,1]; returns the same shape.")
      .def("encode", &PyModel::encode, py::arg("image"), "Encode to the (C,h,w) latent.")
      .def("decode", &PyModel::decode, py::arg("latent"), "Decode a latent to a (3,H,W) image.")
      .def("save", &PyModel::save, py::arg("path"));

  m.def("psnr", [](const py::array_t<double>& gt, const py::array_t<double>& pred,
                   double peak) { return psnr(to_tensor(gt), to_tensor(pred), peak); },
        py::arg("gt"), py::arg("pred"), py::arg("peak") = 1.0);
  m.def("ssim", [](const py::array_t<double>& gt, const py::array_t<double>& pred,
                   double peak) { return ssim_metric(to_tensor(gt), to_tensor(pred), peak); },
        py::arg("gt"), py::arg("pred"), py::arg("peak") = 1.0);

  m.def("serialize_latent",
        [](const py::array_t<double>& latent, const std::string& dtype) {
          auto bytes = serialize_latent(to_tensor(latent), parse_dtype(dtype));
          return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
        },
        py::arg("latent"), py::arg("dtype") = "f16");
  m.def("deserialize_latent", [](const py::bytes& blob) {
    std::string s = blob;
    std::vector<uint8_t> bytes(s.begin(), s.end());
    return to_array(deserialize_latent(bytes));
  });

  m.def("compression_report",
        [](const Shape& raw_shape, const Shape& latent_shape, int bits_per_value,
           double bandwidth, double capacity, double rate) {
          auto r = compression_report(raw_shape, latent_shape, bits_per_value, bandwidth,
                                      capacity, rate);
          auto row = [](const StorageRow& s) {
            py::dict d;
            d["per_image_bytes"] = s.per_image_bytes;
            d["megabytes"] = s.megabytes;
            d["transmission_seconds"] = s.transmission_seconds;
            d["recording_hours"] = s.recording_hours;
            return d;
          };
          py::dict d;
          d["raw"] = row(r.raw);
          d["latent"] = row(r.latent);
          d["ratio_vs_raw"] = r.ratio_vs_raw;
          return d;
        },
        py::arg("raw_shape"), py::arg("latent_shape"), py::arg("bits_per_value") = 8,
        py::arg("bandwidth_bps") = 1e9, py::arg("capacity_bytes") = 2204.28e6,
        py::arg("images_per_second") = 1.0);

  m.def("presets", [] { return std::vector<std::string>{"reference", "tiny", "small"}; });
}
