// Copyright 2026 the maura authors
// SPDX-License-Identifier: Apache-2.0
//
// Low-rank adapter fine-tuning over a frozen denoiser, plus the sketch and
// masked-video condition injection used for guided inpainting. Attention
// adapters sit in parallel on the Q/K projections of every self- and
// cross-attention block; the feed-forward adapter wraps the block's output
// linear sequentially. W_up starts at zero so a freshly adapted model is
// bitwise identical to its base.

#pragma once

#include <set>
#include <string>
#include <vector>

#include "maura/maskdiff.hpp"
#include "maura/spectral.hpp"
#include "maura/vae3d.hpp"

namespace maura {

struct LoraConfig {
    int64_t rank = 8;
    bool attention_kq = true;
    bool feedforward = true;
    double scaling = 1.0;
    int64_t sketch_patch = 8;
    int64_t sketch_hidden = 32;

    void validate(int64_t embed_dim) const {
        require(rank >= 1, "lora rank must be >= 1");
        require(rank < embed_dim, "lora rank must be smaller than the adapted width");
        require(attention_kq || feedforward, "at least one adapter placement required");
        require(sketch_patch >= 1 && sketch_hidden >= 1, "sketch encoder dims");
    }
};

// x -> W_up(GeLU(W_down(x))) * scaling; the parallel/sequential placement is
// decided by what `x` is (projection input vs feed-forward output).
template <class S>
int lora_branch(Tape<S>& t, Binder<S>& p, const std::string& prefix, int x, double scaling) {
    int h = gelu(t, matmul(t, x, p(prefix + ".down")));
    int up = matmul(t, h, p(prefix + ".up"));
    return scaling == 1.0 ? up : scale(t, up, static_cast<S>(scaling));
}

// Parallel placement on a linear layer: L'(x) = L(x) + branch(x).
template <class S>
int lora_forward(Tape<S>& t, Binder<S>& p, const std::string& prefix, int x, int base_out,
                 double scaling = 1.0) {
    return add(t, base_out, lora_branch(t, p, prefix, x, scaling));
}

template <class S>
struct AdaptedDenoiser {
    SpectralDenoiser<S> model; // base weights + adapter weights in one store
    LoraConfig lora;
    std::vector<std::string> adapter_names;   // exactly the low-rank pairs
    std::vector<std::string> condition_names; // segment/sketch conditioning
    std::vector<std::string> base_names;      // frozen

    std::set<std::string> trainable_set() const {
        std::set<std::string> s(adapter_names.begin(), adapter_names.end());
        s.insert(condition_names.begin(), condition_names.end());
        return s;
    }

    int64_t adapter_parameter_count() const {
        int64_t n = 0;
        for (const auto& name : adapter_names) n += model.params.get(name).numel();
        return n;
    }

    DenoiserHooks<S> hooks() const {
        DenoiserHooks<S> h;
        double scaling = lora.scaling;
        if (lora.attention_kq) {
            h.attn_qk = [scaling](Tape<S>& t, Binder<S>& p, const std::string& layer, int x_rows,
                                  int base_out) {
                return lora_forward(t, p, "lora." + layer, x_rows, base_out, scaling);
            };
        }
        if (lora.feedforward) {
            h.ff_out = [scaling](Tape<S>& t, Binder<S>& p, const std::string& layer, int y_rows) {
                return add(t, y_rows, lora_branch(t, p, "lora." + layer, y_rows, scaling));
            };
        }
        return h;
    }
};

namespace detail {

template <class S>
double empirical_std(const Tensor<S>& w) {
    double mean = 0;
    for (S v : w.data) mean += static_cast<double>(v);
    mean /= static_cast<double>(w.numel());
    double var = 0;
    for (S v : w.data) {
        double d = static_cast<double>(v) - mean;
        var += d * d;
    }
    return std::sqrt(var / static_cast<double>(w.numel()));
}

// W_down ~ N(0, std(base)); W_up = 0 (identity at attach).
template <class S>
void register_adapter_pair(ParamStore<S>& ps, const std::string& layer, int64_t width,
                           int64_t rank, uint64_t seed) {
    double stddev = empirical_std(ps.get(layer));
    ps.add_normal("lora." + layer + ".down", {width, rank}, stddev, seed);
    ps.add_zeros("lora." + layer + ".up", {rank, width});
}

} // namespace detail

// Attaches adapters at every block's self/cross Q and K projections
// (parallel) and the block feed-forward output (sequential); registers the
// sketch encoder. Base parameter values are untouched.
template <class S>
AdaptedDenoiser<S> attach_adapters(SpectralDenoiser<S> base, const LoraConfig& lora,
                                   uint64_t seed) {
    lora.validate(base.cfg.embed_dim);
    AdaptedDenoiser<S> out;
    out.lora = lora;
    out.base_names = base.params.names();
    out.model = std::move(base);
    ParamStore<S>& ps = out.model.params;
    const int64_t e = out.model.cfg.embed_dim;
    for (int64_t b = 0; b < out.model.cfg.blocks; ++b) {
        std::string blk = "blk" + std::to_string(b);
        if (lora.attention_kq) {
            for (const char* attn : {".self", ".cross"})
                for (const char* proj : {".wq", ".wk"}) {
                    std::string layer = blk + attn + proj;
                    detail::register_adapter_pair(ps, layer, e, lora.rank, seed);
                    out.adapter_names.push_back("lora." + layer + ".down");
                    out.adapter_names.push_back("lora." + layer + ".up");
                }
        }
        if (lora.feedforward) {
            std::string layer = blk + ".ff.w2";
            detail::register_adapter_pair(ps, layer, e, lora.rank, seed);
            out.adapter_names.push_back("lora." + layer + ".down");
            out.adapter_names.push_back("lora." + layer + ".up");
        }
    }
    // sketch conditioning: patch flatten + linear, then projection to width E
    int64_t patch_elems = lora.sketch_patch * lora.sketch_patch;
    ps.add_he("sketch.patch.w", {patch_elems, lora.sketch_hidden}, patch_elems, seed);
    ps.add_zeros("sketch.patch.b", {lora.sketch_hidden});
    ps.add_he("sketch.proj.w", {lora.sketch_hidden, e}, lora.sketch_hidden, seed);
    ps.add_zeros("sketch.proj.b", {e});
    out.condition_names = {"embed.segment", "sketch.patch.w", "sketch.patch.b",
                           "sketch.proj.w", "sketch.proj.b"};
    return out;
}

// V_m = V (.) (1 - m) per frame and channel; mask values must be 0/1.
inline VideoClip mask_video(const VideoClip& clip, const TensorU8& masks) {
    require(masks.rank() == 3 && masks.shape[0] == clip.frames() &&
                masks.shape[1] == clip.height() && masks.shape[2] == clip.width(),
            "mask shape must match the clip");
    for (uint8_t v : masks.data) require(v == 0 || v == 1, "mask values must be 0 or 1");
    VideoClip out = clip;
    const int64_t n = clip.frames(), h = clip.height(), w = clip.width();
    for (int64_t f = 0; f < n; ++f)
        for (int64_t c = 0; c < 3; ++c)
            for (int64_t y = 0; y < h; ++y)
                for (int64_t x = 0; x < w; ++x)
                    if (masks.at(f, y, x)) out.pixels.at(f, c, y, x) = 0.f;
    return out;
}

// Sketch -> (S' x E) rows through the toy patch encoder. S' = patch count.
template <class S>
int sketch_encode(Tape<S>& t, Binder<S>& p, const TensorU8& sketch, const LoraConfig& lora) {
    require(sketch.rank() == 2, "sketch must be single-channel");
    const int64_t hs = sketch.shape[0], ws = sketch.shape[1], ps = lora.sketch_patch;
    require(hs % ps == 0 && ws % ps == 0,
            "sketch dims must be divisible by the patch size " + std::to_string(ps));
    const int64_t gy = hs / ps, gx = ws / ps;
    Tensor<S> rows({gy * gx, ps * ps});
    for (int64_t py = 0; py < gy; ++py)
        for (int64_t px = 0; px < gx; ++px) {
            int64_t r = py * gx + px;
            for (int64_t y = 0; y < ps; ++y)
                for (int64_t x = 0; x < ps; ++x)
                    rows.at(r, y * ps + x) =
                        static_cast<S>(sketch.at(py * ps + y, px * ps + x));
        }
    int h = gelu(t, add_rowvec(t, matmul(t, t.leaf(std::move(rows), false), p("sketch.patch.w")),
                               p("sketch.patch.b")));
    return add_rowvec(t, matmul(t, h, p("sketch.proj.w")), p("sketch.proj.b"));
}

// Flattens and concatenates the diffused and context grids, embeds them with
// segment markers, and appends sketch rows: S_total = 2*|grid| + S'.
template <class S>
SequenceInput<S> build_input_sequence(const TokenGrid& z_t, const TokenGrid& z_m,
                                      int sketch_rows /* -1 to disable */, int text_node) {
    require(z_t.indices.shape == z_m.indices.shape, "diffused/context grid shapes differ");
    require(!z_m.has_mask(), "context grid must not contain MASK");
    SequenceInput<S> in;
    in.tokens.assign(z_t.indices.data.begin(), z_t.indices.data.end());
    in.tokens.insert(in.tokens.end(), z_m.indices.data.begin(), z_m.indices.data.end());
    in.segments.assign(static_cast<size_t>(z_t.count()), static_cast<int32_t>(Segment::diffused));
    in.segments.insert(in.segments.end(), static_cast<size_t>(z_m.count()),
                       static_cast<int32_t>(Segment::context));
    in.sketch_rows = sketch_rows;
    in.text = text_node;
    return in;
}

struct InpaintOptions {
    int64_t steps = 30;
    double cfg_scale = 10.0;
    double temperature = 1.0;
    bool argmax = false;
    uint64_t seed = 0;
    bool composite = true;   // copy source pixels outside the inpaint mask
    bool use_sketch = true;  // disable for the text-only ablation
    std::string caption;
};

// Masked video + sketch + caption -> inpainted clip. Encodes the masked
// video as context tokens, reverse-samples the diffused half with
// classifier-free guidance, decodes, and optionally composites the sources
// back outside the mask.
template <class S>
VideoClip inpaint_sample(Vae3d<S>& vae, AdaptedDenoiser<S>& adapted, const VideoClip& v_m,
                         const TensorU8& masks, const TensorU8& sketch,
                         const NoiseSchedule& schedule, const InpaintOptions& opt) {
    TokenGrid z_m = vae.tokenize(clip_to_cthw(v_m));
    const int64_t grid_count = z_m.count();
    DenoiserHooks<S> hooks = adapted.hooks();

    auto denoise = [&](const std::string& caption, bool with_sketch) {
        return [&, caption, with_sketch](const TokenGrid& z_t, int64_t t_step) {
            Tape<S> t;
            Binder<S> bind(t, adapted.model.params);
            int sk = with_sketch ? sketch_encode(t, bind, sketch, adapted.lora) : -1;
            int text = adapted.model.encode_caption(t, bind, caption);
            auto in = build_input_sequence<S>(z_t, z_m, sk, text);
            CondSignal cond{t_step, v_m.fps};
            int logits = adapted.model.forward_logits(t, bind, in, cond, &hooks);
            int diffused = slice_rows(t, logits, 0, grid_count);
            return t.val(diffused).template cast<float>();
        };
    };

    SampleOptions sopt;
    sopt.steps = opt.steps;
    sopt.cfg_scale = opt.cfg_scale;
    sopt.temperature = opt.temperature;
    sopt.argmax = opt.argmax;
    sopt.seed = opt.seed;
    TokenGrid sampled = reverse_sample(
        denoise(opt.caption, opt.use_sketch), denoise("", false), schedule,
        {z_m.indices.shape[0], z_m.indices.shape[1], z_m.indices.shape[2]}, z_m.K, sopt);

    TensorF decoded = vae.detokenize(sampled);
    VideoClip out = cthw_to_clip(decoded, v_m.fps);
    if (opt.composite) {
        for (int64_t f = 0; f < out.frames(); ++f)
            for (int64_t c = 0; c < 3; ++c)
                for (int64_t y = 0; y < out.height(); ++y)
                    for (int64_t x = 0; x < out.width(); ++x)
                        if (!masks.at(f, y, x))
                            out.pixels.at(f, c, y, x) = v_m.pixels.at(f, c, y, x);
    }
    return out;
}

} // namespace maura
