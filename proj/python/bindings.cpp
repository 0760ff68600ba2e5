#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hemodet/checkpoint.hpp"
#include "hemodet/detector.hpp"
#include "hemodet/gabor.hpp"
#include "hemodet/metrics.hpp"
#include "hemodet/synth.hpp"

namespace py = pybind11;
using namespace hemodet;

namespace {

nn::Tensor array_to_tensor(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  std::vector<long> shape(a.ndim());
  for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[static_cast<size_t>(i)] = a.shape(i);
  nn::Tensor t(shape);
  std::copy(a.data(), a.data() + a.size(), t.data());
  return t;
}

py::array_t<double> tensor_to_array(const nn::Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> a(shape);
  std::copy(t.data(), t.data() + t.size(), a.mutable_data());
  return a;
}

// Thin streaming-inference wrapper: fresh weights from a config, or weights +
// config snapshot from a checkpoint.
class PyDetector {
 public:
  PyDetector(const std::string& config_text, const std::string& data_root) {
    ModelConfig cfg = parse_config(config_text);
    validate_config(cfg);
    det_ = std::make_unique<OnlineDetector>(cfg, data_root);
  }

  static std::unique_ptr<PyDetector> from_checkpoint(const std::string& path,
                                                     const std::string& data_root) {
    const Checkpoint ck = load_checkpoint(path);
    auto d = std::make_unique<PyDetector>(ck.meta.config_text, data_root);
    load_params(d->det_->params(), ck);
    return d;
  }

  void reset() { det_->reset(); }

  py::dict process(const py::array_t<double, py::array::c_style | py::array::forcecast>& image,
                   long frame_index, const std::string& clip_id) {
    nn::NoGradGuard off(false);
    const FrameResult r = det_->process_frame(array_to_tensor(image), frame_index, clip_id);
    py::dict out;
    out["mask"] = tensor_to_array(r.mask_binary);
    out["score"] = r.point.score;
    out["point"] = r.point.has_point
                       ? py::object(py::make_tuple(r.point.x, r.point.y))
                       : py::object(py::none());
    out["offset"] = py::make_tuple(r.offset.dx, r.offset.dy);
    return out;
  }

  std::string config_text() const { return serialize_config(det_->config()); }

 private:
  std::unique_ptr<OnlineDetector> det_;
};

}  // namespace

PYBIND11_MODULE(hemodet, m) {
  m.doc() = "bleeding region segmentation and bleeding point localization";
  m.attr("__version__") = "1.0.0";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);

  // ---- config ----
  m.def("default_config", [] { return serialize_config(ModelConfig{}); },
        "Default configuration in the flat-key text schema");
  m.def("normalize_config",
        [](const std::string& text) {
          ModelConfig cfg = parse_config(text);
          validate_config(cfg);
          return serialize_config(cfg);
        },
        py::arg("text"),
        "Parse, validate and re-serialize a config (round-trip canonical form)");

  // ---- synthetic data ----
  m.def("synth_dataset", &synth_dataset, py::arg("root"), py::arg("clips"),
        py::arg("frames"), py::arg("height"), py::arg("width"), py::arg("motion"),
        py::arg("seed"), "Write a synthetic dataset with GT masks, points and flow");
  m.def("list_clip_ids", &list_clip_ids, py::arg("root"));

  // ---- gabor ----
  m.def("gabor_kernel",
        [](double wavelength, double phase, double sigma, double aspect, long size,
           double theta) {
          GaborParams p;
          p.wavelength = wavelength;
          p.phase = phase;
          p.sigma = sigma;
          p.aspect = aspect;
          p.kernel_size = size;
          return tensor_to_array(gabor_kernel(p, theta));
        },
        py::arg("wavelength") = 4.0, py::arg("phase") = 0.0, py::arg("sigma") = 2.0,
        py::arg("aspect") = 0.5, py::arg("size") = 7, py::arg("theta") = 0.0);
  m.def("laplacian_of_kernel",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& k) {
          return tensor_to_array(laplacian_of_kernel(array_to_tensor(k)));
        },
        py::arg("kernel"));

  // ---- flow ----
  m.def("classical_flow",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& prev,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& cur) {
          return tensor_to_array(
              classical_flow(array_to_tensor(prev), array_to_tensor(cur)).vectors);
        },
        py::arg("prev"), py::arg("cur"),
        "Dense flow [2,H,W] (dx,dy) between two [3,H,W] RGB frames");
  m.def("mean_background_offset",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& flow,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& mask,
           const std::string& normalization) {
          FlowField f{array_to_tensor(flow)};
          const nn::Tensor m = array_to_tensor(mask);
          const Offset2 o = mean_background_offset(f, &m, normalization);
          return py::make_tuple(o.dx, o.dy);
        },
        py::arg("flow"), py::arg("mask"), py::arg("normalization") = "paper_hw");

  // ---- metrics ----
  m.def("iou",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& p,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& g) {
          return iou(array_to_tensor(p), array_to_tensor(g));
        },
        py::arg("pred"), py::arg("gt"));
  m.def("dice_score",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& p,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& g) {
          return dice_score(array_to_tensor(p), array_to_tensor(g));
        },
        py::arg("pred"), py::arg("gt"));

  // ---- inference ----
  py::class_<PyDetector>(m, "Detector")
      .def(py::init<const std::string&, const std::string&>(), py::arg("config_text"),
           py::arg("data_root") = ".")
      .def_static("from_checkpoint", &PyDetector::from_checkpoint, py::arg("path"),
                  py::arg("data_root") = ".")
      .def("reset", &PyDetector::reset)
      .def("process", &PyDetector::process, py::arg("image"), py::arg("frame_index"),
           py::arg("clip_id") = "clip")
      .def_property_readonly("config_text", &PyDetector::config_text);
}
