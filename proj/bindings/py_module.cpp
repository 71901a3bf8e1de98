// Copyright 2026 the maura authors
// SPDX-License-Identifier: Apache-2.0
//
// Python bindings for the main operations: synthetic data and masking,
// quantizers, the mask-diffusion schedule ops, Fourier mixing, rotary
// embeddings, reconstruction metrics and the generation entry point.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "maura/adapt.hpp"
#include "maura/maskdiff.hpp"
#include "maura/metrics.hpp"
#include "maura/quantize.hpp"
#include "maura/spectral.hpp"
#include "maura/synthdata.hpp"
#include "maura/trainer.hpp"

namespace py = pybind11;
using namespace maura;

namespace {

template <class S>
Tensor<S> tensor_from(py::array_t<S, py::array::c_style | py::array::forcecast> arr) {
    Tensor<S> t;
    t.shape.assign(static_cast<size_t>(arr.ndim()), 0);
    for (py::ssize_t i = 0; i < arr.ndim(); ++i) t.shape[static_cast<size_t>(i)] = arr.shape(i);
    t.data.assign(arr.data(), arr.data() + arr.size());
    return t;
}

template <class S>
py::array_t<S> array_from(const Tensor<S>& t) {
    std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
    py::array_t<S> arr(shape);
    std::copy(t.data.begin(), t.data.end(), arr.mutable_data());
    return arr;
}

SceneSpec spec_from_kwargs(const std::string& shape, std::array<float, 3> color,
                           std::array<float, 2> velocity, std::array<int, 2> start,
                           std::array<float, 3> background, int extent) {
    SceneSpec s;
    s.shape = shape_from_name(shape);
    s.color = color;
    s.velocity = velocity;
    s.start = start;
    s.background = background;
    s.extent = extent;
    return s;
}

} // namespace

PYBIND11_MODULE(_maura, m) {
    m.doc() = "vector-quantized video diffusion sandbox (C++ core)";

    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    // ---- synthetic data + masking
    m.def(
        "generate_clip",
        [](const std::string& shape, std::array<float, 3> color, std::array<float, 2> velocity,
           std::array<int, 2> start, std::array<float, 3> background, int extent, int frames,
           int size, uint64_t seed) {
            auto s = generate_clip(
                spec_from_kwargs(shape, color, velocity, start, background, extent), frames,
                size, seed);
            py::dict out;
            out["pixels"] = array_from(s.clip.pixels);
            out["masks"] = array_from(s.masks);
            out["sketch"] = array_from(s.sketch);
            out["caption"] = s.caption;
            out["fps"] = s.clip.fps;
            return out;
        },
        py::arg("shape"), py::arg("color"), py::arg("velocity"), py::arg("start"),
        py::arg("background"), py::arg("extent") = 4, py::arg("frames") = 8,
        py::arg("size") = 32, py::arg("seed") = 0);

    m.def("cosine_ratio", &cosine_ratio, py::arg("step"), py::arg("total_steps"), py::arg("lo"),
          py::arg("hi"));

    m.def(
        "patch_mask",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> pixels, int patch_size,
           double ratio, uint64_t seed) {
            VideoClip clip;
            clip.pixels = tensor_from(pixels);
            auto [masked, ev] = patch_mask(clip, patch_size, ratio, seed);
            return py::make_tuple(array_from(masked.pixels), ev.patches);
        },
        py::arg("pixels"), py::arg("patch_size"), py::arg("ratio"), py::arg("seed") = 0);

    m.def(
        "full_frame_mask",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> pixels, uint64_t seed) {
            VideoClip clip;
            clip.pixels = tensor_from(pixels);
            auto [masked, idx] = full_frame_mask(clip, seed);
            return py::make_tuple(array_from(masked.pixels), idx);
        },
        py::arg("pixels"), py::arg("seed") = 0);

    // ---- quantizers
    m.def(
        "vq_quantize",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> z,
           py::array_t<float, py::array::c_style | py::array::forcecast> codebook) {
            TensorF zr = tensor_from(z), cb = tensor_from(codebook);
            TensorI idx = nearest_indices(zr, cb);
            CodebookSpec spec = CodebookSpec::vq(cb.shape[0], cb.shape[1]);
            TensorF zq = lookup_rows(idx, spec, &cb);
            return py::make_tuple(array_from(idx), array_from(zq));
        },
        py::arg("z_rows"), py::arg("codebook"));

    m.def(
        "lfq_quantize",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> z) {
            TensorF zr = tensor_from(z);
            TensorI idx = lfq_indices(zr);
            CodebookSpec spec = CodebookSpec::lfq(zr.shape[1]);
            TensorF zq = lookup_rows<float>(idx, spec, nullptr);
            return py::make_tuple(array_from(idx), array_from(zq));
        },
        py::arg("z_rows"));

    m.def(
        "codebook_usage",
        [](const std::vector<int32_t>& stream, int64_t k) {
            auto u = codebook_usage(stream, k);
            return py::make_tuple(u.fraction_used, u.perplexity);
        },
        py::arg("stream"), py::arg("k"));

    // ---- diffusion schedule ops
    m.def(
        "build_schedule",
        [](int64_t timesteps, const std::string& shape) {
            auto s = build_schedule(timesteps, schedule_kind_from_name(shape));
            return py::make_tuple(s.mbar, s.gamma);
        },
        py::arg("timesteps"), py::arg("shape") = "linear");

    m.def(
        "forward_corrupt",
        [](py::array_t<int32_t, py::array::c_style | py::array::forcecast> tokens, int64_t k,
           int64_t t, int64_t timesteps, const std::string& shape, uint64_t seed) {
            TokenGrid g;
            g.K = k;
            g.indices = tensor_from(tokens);
            auto s = build_schedule(timesteps, schedule_kind_from_name(shape));
            return array_from(forward_corrupt(g, t, s, seed).indices);
        },
        py::arg("tokens"), py::arg("k"), py::arg("t"), py::arg("timesteps") = 30,
        py::arg("shape") = "linear", py::arg("seed") = 0);

    m.def(
        "cfg_combine",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> cond,
           py::array_t<float, py::array::c_style | py::array::forcecast> uncond, double scale) {
            return array_from(cfg_combine(tensor_from(cond), tensor_from(uncond), scale));
        },
        py::arg("logits_cond"), py::arg("logits_uncond"), py::arg("scale") = 10.0);

    // ---- spectral pieces
    m.def(
        "fft2d_real",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> x) {
            Tape<double> t;
            int y = fft2d_real(t, t.leaf(tensor_from(x), false));
            return array_from(t.val(y));
        },
        py::arg("x"));

    m.def(
        "ifft2d_real",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> x) {
            Tape<double> t;
            int y = ifft2d_real(t, t.leaf(tensor_from(x), false));
            return array_from(t.val(y));
        },
        py::arg("x"));

    m.def(
        "rope_apply",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> x,
           const std::vector<int64_t>& positions) {
            Tape<double> t;
            int y = rope_apply(t, t.leaf(tensor_from(x), false), positions);
            return array_from(t.val(y));
        },
        py::arg("x"), py::arg("positions"));

    m.def("tokenize_caption", &tokenize_caption, py::arg("caption"));
    m.def("vocabulary", [] { return toy_vocabulary(); });

    // ---- metrics
    m.def(
        "psnr",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> a,
           py::array_t<float, py::array::c_style | py::array::forcecast> b) {
            return psnr(tensor_from(a), tensor_from(b));
        },
        py::arg("a"), py::arg("b"));
    m.def(
        "ssim",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> a,
           py::array_t<float, py::array::c_style | py::array::forcecast> b) {
            return ssim(tensor_from(a), tensor_from(b));
        },
        py::arg("a"), py::arg("b"));

    // ---- array container + dataset
    m.def(
        "save_array",
        [](const std::filesystem::path& path, py::array arr) {
            if (py::isinstance<py::array_t<float>>(arr))
                save_array(path, to_raw(tensor_from<float>(arr.cast<py::array_t<float>>())));
            else if (py::isinstance<py::array_t<int32_t>>(arr))
                save_array(path, to_raw(tensor_from<int32_t>(arr.cast<py::array_t<int32_t>>())));
            else if (py::isinstance<py::array_t<uint8_t>>(arr))
                save_array(path, to_raw(tensor_from<uint8_t>(arr.cast<py::array_t<uint8_t>>())));
            else
                throw ValidationError("save_array supports float32, int32 and uint8");
        },
        py::arg("path"), py::arg("array"));

    m.def(
        "load_array",
        [](const std::filesystem::path& path) -> py::object {
            RawArray raw = load_array(path);
            switch (raw.dtype) {
                case DType::f32: return array_from(raw_to_f32(raw));
                case DType::i32: return array_from(raw_to_i32(raw));
                case DType::u8: return array_from(raw_to_u8(raw));
            }
            throw FormatError("unknown dtype");
        },
        py::arg("path"));

    m.def(
        "make_dataset",
        [](const std::filesystem::path& dir, int64_t clips, int frames, int size, uint64_t seed) {
            write_dataset(make_dataset(clips, frames, size, seed), dir);
        },
        py::arg("dir"), py::arg("clips") = 8, py::arg("frames") = 8, py::arg("size") = 32,
        py::arg("seed") = 0);

    // ---- generation
    m.def(
        "generate",
        [](const std::filesystem::path& checkpoint, const std::string& caption,
           const std::filesystem::path& out_dir, int64_t steps, double cfg_scale, uint64_t seed) {
            GenerateArgs args;
            args.checkpoint = checkpoint;
            args.caption = caption;
            args.out_dir = out_dir;
            args.steps = steps;
            args.cfg_scale = cfg_scale;
            args.seed = seed;
            auto out = generate_video(args);
            py::dict d;
            d["gif"] = out.gif.string();
            d["strip"] = out.strip.string();
            d["clip"] = out.clip_array.string();
            d["tokens"] = out.tokens_array.string();
            return d;
        },
        py::arg("checkpoint"), py::arg("caption"), py::arg("out_dir"), py::arg("steps") = 30,
        py::arg("cfg_scale") = 10.0, py::arg("seed") = 0);

    m.attr("__version__") = "0.1.0";
}
