// Copyright (c) 2026, The Serpent Authors
// SPDX-License-Identifier: Apache-2.0
//
// Python bindings. Arrays cross the boundary as C-contiguous float32 and
// images are HxWxC in [0, 1].

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "serpent/degrade.hpp"
#include "serpent/harness.hpp"
#include "serpent/image.hpp"
#include "serpent/metrics.hpp"
#include "serpent/model.hpp"
#include "serpent/ss2d.hpp"
#include "serpent/ssm.hpp"
#include "serpent/tensor.hpp"

namespace py = pybind11;
using namespace serpent;

namespace {

using Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

std::vector<float> to_vec(const Array& a) {
  return std::vector<float>(a.data(), a.data() + a.size());
}

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor::from_data(std::move(shape), to_vec(a));
}

Array from_vec(const std::vector<float>& v) {
  Array out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

Array from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

Image to_image(const Array& a) {
  if (a.ndim() != 3) throw DimensionError("expected an HxWxC image, got rank " + std::to_string(a.ndim()));
  return Image::from_tensor(to_tensor(a));
}

Array from_image(const Image& img) { return from_tensor(img.to_tensor()); }

ssm::DiscreteSystem discrete(const Array& A_bar, const Array& B_bar, const Array& C) {
  return {to_vec(A_bar), to_vec(B_bar), to_vec(C)};
}

ssm::ScanMode parse_mode(const std::string& mode, int64_t chunk) {
  if (mode == "recurrent") return ssm::ScanMode::recurrent();
  if (mode == "convolutional") return ssm::ScanMode::convolutional();
  if (mode == "chunked") return ssm::ScanMode::chunked(chunk);
  throw std::invalid_argument("unknown scan mode: " + mode);
}

ScanDirection parse_direction(int dir) {
  if (dir < 0 || dir > 3) throw std::invalid_argument("scan direction must be in 0..3");
  return static_cast<ScanDirection>(dir);
}

py::dict flops_dict(const FlopsReport& f) {
  py::dict d;
  d["linear"] = f.linear;
  d["dwconv"] = f.dwconv;
  d["ssm"] = f.ssm;
  d["norm"] = f.norm;
  d["elementwise"] = f.elementwise;
  d["tokens"] = f.tokens;
  d["total"] = f.total();
  d["attention_reference"] = f.attention_reference;
  d["reference_total"] = f.reference_total();
  d["attention_ratio"] = f.attention_ratio();
  return d;
}

SerpentConfig make_config(int64_t patch_size, int64_t embed_dim, int64_t depth, int64_t num_scales,
                          double state_ratio, int64_t in_channels, bool global_residual) {
  SerpentConfig c;
  c.patch_size = patch_size;
  c.embed_dim = embed_dim;
  c.depth = depth;
  c.num_scales = num_scales;
  c.state_ratio = state_ratio;
  c.in_channels = in_channels;
  c.global_residual = global_residual;
  c.validate();
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Selective state space image restoration";

  py::register_exception<ImageError>(m, "ImageError", PyExc_RuntimeError);
  py::register_exception<CheckpointMismatch>(m, "CheckpointMismatch", PyExc_RuntimeError);

  // ---- state space scans
  m.def(
      "discretize_zoh",
      [](const Array& A, const Array& B, float delta) {
        auto r = ssm::discretize_zoh(to_vec(A), to_vec(B), delta);
        return py::make_tuple(from_vec(r.A_bar), from_vec(r.B_bar));
      },
      py::arg("A"), py::arg("B"), py::arg("delta"), "Zero-order hold: returns (A_bar, B_bar).");
  m.def(
      "lti_scan",
      [](const Array& A_bar, const Array& B_bar, const Array& C, const Array& u, const std::string& mode,
         int64_t chunk) { return from_vec(ssm::lti_scan(discrete(A_bar, B_bar, C), to_vec(u), parse_mode(mode, chunk))); },
      py::arg("A_bar"), py::arg("B_bar"), py::arg("C"), py::arg("u"), py::arg("mode") = "recurrent",
      py::arg("chunk") = 0, "Scan a 1-D input with a discrete diagonal LTI system.");
  m.def(
      "lti_kernel",
      [](const Array& A_bar, const Array& B_bar, const Array& C, int64_t length) {
        return from_vec(ssm::lti_kernel(discrete(A_bar, B_bar, C), length).taps);
      },
      py::arg("A_bar"), py::arg("B_bar"), py::arg("C"), py::arg("length"));
  m.def(
      "selective_scan",
      [](const Array& u, const Array& delta, const Array& A, const Array& B, const Array& C, int64_t chunk) {
        return from_tensor(
            ssm::selective_scan_core(to_tensor(u), to_tensor(delta), to_tensor(A), to_tensor(B), to_tensor(C), chunk));
      },
      py::arg("u"), py::arg("delta"), py::arg("A"), py::arg("B"), py::arg("C"), py::arg("chunk") = 0,
      "Time-varying scan. u, delta: [L, E]; A: [E, N]; B, C: [L, N]. chunk <= 0 runs step by step.");

  // ---- 2-D unrolling
  m.def(
      "unroll_order", [](int64_t h, int64_t w, int dir) { return unroll_order(h, w, parse_direction(dir)); },
      py::arg("height"), py::arg("width"), py::arg("direction"));
  m.def(
      "unroll", [](const Array& feat, int dir) { return from_tensor(unroll(to_tensor(feat), parse_direction(dir))); },
      py::arg("feat"), py::arg("direction"));
  m.def(
      "reroll",
      [](const Array& seq, int dir, int64_t h, int64_t w) {
        return from_tensor(reroll(to_tensor(seq), parse_direction(dir), h, w));
      },
      py::arg("seq"), py::arg("direction"), py::arg("height"), py::arg("width"));

  // ---- images, metrics, degradation
  m.def(
      "psnr", [](const Array& a, const Array& b) { return psnr(to_image(a), to_image(b)); }, py::arg("a"),
      py::arg("b"));
  m.def(
      "ssim", [](const Array& a, const Array& b) { return ssim(to_image(a), to_image(b)); }, py::arg("a"),
      py::arg("b"));
  m.def("gaussian_kernel", &gaussian_kernel, py::arg("size"), py::arg("sigma"));
  m.def(
      "degrade",
      [](const Array& img, int64_t kernel_size, double blur_sigma, double noise_sigma, uint64_t seed, bool clamp) {
        DegradationSpec spec;
        spec.kernel_size = kernel_size;
        spec.blur_sigma = blur_sigma;
        spec.noise_sigma = noise_sigma;
        spec.clamp = clamp;
        spec.validate();
        return from_image(degrade(to_image(img), spec, seed));
      },
      py::arg("img"), py::arg("kernel_size") = 9, py::arg("blur_sigma") = 0.0, py::arg("noise_sigma") = 0.05,
      py::arg("seed") = 0, py::arg("clamp") = true, "Gaussian blur then additive Gaussian noise.");
  m.def(
      "read_png", [](const std::string& path, int64_t channels) { return from_image(read_png(path, channels)); },
      py::arg("path"), py::arg("channels") = 3);
  m.def(
      "write_png", [](const std::string& path, const Array& img) { write_png(path, to_image(img)); },
      py::arg("path"), py::arg("img"));

  // ---- model
  py::class_<SerpentModel>(m, "Model")
      .def(py::init([](int64_t patch_size, int64_t embed_dim, int64_t depth, int64_t num_scales, double state_ratio,
                       int64_t in_channels, bool global_residual, uint64_t seed) {
             return SerpentModel::create(
                 make_config(patch_size, embed_dim, depth, num_scales, state_ratio, in_channels, global_residual),
                 seed);
           }),
           py::arg("patch_size") = 2, py::arg("embed_dim") = 32, py::arg("depth") = 2, py::arg("num_scales") = 2,
           py::arg("state_ratio") = 1.0 / 6.0, py::arg("in_channels") = 3, py::arg("global_residual") = true,
           py::arg("seed") = 0)
      .def_static(
          "load", [](const std::string& path) { return model_from_checkpoint(load_checkpoint(path)); },
          py::arg("path"), "Model stored in a training checkpoint.")
      .def(
          "forward",
          [](const SerpentModel& model, const Array& img) {
            NoGradGuard guard;
            return from_tensor(model.forward(to_tensor(img)));
          },
          py::arg("img"))
      .def(
          "restore", [](const SerpentModel& model, const Array& img) { return from_image(restore(model, to_image(img))); },
          py::arg("img"), "Forward pass clamped to [0, 1].")
      .def("num_params", [](const SerpentModel& model) { return count_params(model).total; })
      .def(
          "flops", [](const SerpentModel& model, int64_t h, int64_t w) { return flops_dict(count_flops(model, h, w)); },
          py::arg("height"), py::arg("width"))
      .def_property_readonly("size_multiple", [](const SerpentModel& model) { return model.config().size_multiple(); })
      .def("parameters", [](const SerpentModel& model) {
        py::dict d;
        for (const auto& p : model.parameters()) d[py::str(p.name)] = from_tensor(p.tensor);
        return d;
      });
}
