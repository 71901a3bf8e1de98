// Copyright 2026 the maura authors
// SPDX-License-Identifier: Apache-2.0
//
// Fourier-domain transformer denoiser. Self-attention projects Q/K/V from
// the real part of a 2-D DFT of the conditioned sequence, applies rotary
// embeddings to Q/K, attends, transforms back and wraps the residual in an
// outer adaptive layer norm; cross-attention does the same against projected
// text embeddings. Conditioning is (diffusion step, frames-per-second).

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "maura/maskdiff.hpp"
#include "maura/nn.hpp"
#include "maura/quantize.hpp"
#include "maura/tape.hpp"

namespace maura {

struct CondSignal {
    int64_t t = 0;
    int fps = 8;
};

struct SpectralConfig {
    int64_t embed_dim = 64; // E
    int64_t heads = 4;
    int64_t blocks = 2;
    int64_t vocab_k = 256;  // codebook size K; MASK embeds as row K
    int64_t text_dim = 32;  // width of incoming text embeddings
    int64_t max_timestep = 30;
    int64_t fps_min = 1, fps_max = 60;
    int64_t time_embed_dim = 32;
    int64_t fps_embed_dim = 16;
    int64_t cond_hidden = 64;
    int64_t ff_mult = 4;
    bool rope_enabled = true;
    bool fft_enabled = true;

    int64_t head_dim() const { return embed_dim / heads; }
    int64_t cond_dim() const { return time_embed_dim + fps_embed_dim; }

    void validate() const {
        require(embed_dim >= 1 && heads >= 1 && blocks >= 1, "model dims must be positive");
        require(embed_dim % heads == 0, "embed_dim must be divisible by heads");
        if (rope_enabled) require(head_dim() % 2 == 0, "head dim must be even for rotary embeddings");
        require(vocab_k >= 2, "vocab_k must be >= 2");
        require(text_dim >= 1 && time_embed_dim >= 2 && fps_embed_dim >= 1, "cond dims");
        require(fps_min >= 1 && fps_max >= fps_min, "fps vocabulary empty");
        require(max_timestep >= 1, "max_timestep must be >= 1");
    }
};

std::string spectral_config_to_json_text(const SpectralConfig& cfg);
SpectralConfig spectral_config_from_json_text(const std::string& text);

// ---------------------------------------------------------------------------
// toy text encoder: whitespace tokens over the synthetic caption grammar
// ---------------------------------------------------------------------------

const std::vector<std::string>& toy_vocabulary();
int32_t toy_unk_id();
int32_t toy_null_id();
uint64_t toy_vocabulary_hash();

// Empty captions map to the single <null> token (the unconditional branch).
std::vector<int32_t> tokenize_caption(const std::string& caption);

// ---------------------------------------------------------------------------
// conditioning
// ---------------------------------------------------------------------------

// Standard transformer sinusoid, length `dim` (even).
template <class S>
Tensor<S> sinusoid_embedding(double value, int64_t dim) {
    Tensor<S> out({1, dim});
    for (int64_t i = 0; i < dim / 2; ++i) {
        double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
        out.at(0, 2 * i) = static_cast<S>(std::sin(value * freq));
        out.at(0, 2 * i + 1) = static_cast<S>(std::cos(value * freq));
    }
    return out;
}

template <class S>
Tensor<S> sinusoid_positions(int64_t count, int64_t dim) {
    Tensor<S> out({count, dim});
    for (int64_t p = 0; p < count; ++p) {
        Tensor<S> row = sinusoid_embedding<S>(static_cast<double>(p), dim);
        std::copy(row.data.begin(), row.data.end(), out.data.begin() + p * dim);
    }
    return out;
}

// y = LayerNorm(x) * (1 + gamma(cond)) + beta(cond); gamma/beta from an MLP
// over [sinusoid(t) | fps embedding]. Zero-initialized MLP output makes this
// plain layer norm.
template <class S>
int adln(Tape<S>& t, Binder<S>& p, const std::string& prefix, int x, const CondSignal& cond,
         const SpectralConfig& cfg) {
    require(cond.fps >= cfg.fps_min && cond.fps <= cfg.fps_max,
            "fps " + std::to_string(cond.fps) + " outside the embedding vocabulary [" +
                std::to_string(cfg.fps_min) + "," + std::to_string(cfg.fps_max) + "]");
    require(cond.t >= 0 && cond.t <= cfg.max_timestep, "conditioning step out of range");
    int tsin = t.leaf(sinusoid_embedding<S>(static_cast<double>(cond.t), cfg.time_embed_dim));
    int fps_row = embed_rows(t, p("cond.fps_embed"),
                             {static_cast<int32_t>(cond.fps - cfg.fps_min)});
    int cv = concat_cols<S>(t, {tsin, fps_row});
    int h = silu(t, add_rowvec(t, matmul(t, cv, p(prefix + ".w1")), p(prefix + ".b1")));
    int gb = add_rowvec(t, matmul(t, h, p(prefix + ".w2")), p(prefix + ".b2"));
    const int64_t e = cfg.embed_dim;
    int gamma = reshape(t, slice_cols(t, gb, 0, e), {e});
    int beta = reshape(t, slice_cols(t, gb, e, e), {e});
    int y = layernorm_rows(t, x);
    y = mul_rowvec(t, y, add_scalar(t, gamma, S(1)));
    return add_rowvec(t, y, beta);
}

// ---------------------------------------------------------------------------
// attention blocks
// ---------------------------------------------------------------------------

template <class S>
struct AttnResult {
    int out = -1;
    std::vector<int> attn_probs; // one (rows x keys) node per head
};

namespace detail {

// Multi-head attention given already-mixed q/k/v sources (2-D nodes).
template <class S>
AttnResult<S> mha(Tape<S>& t, Binder<S>& p, const std::string& prefix, int q_src, int kv_src,
                  const std::vector<int64_t>& q_pos, const std::vector<int64_t>& k_pos,
                  bool use_rope, const SpectralConfig& cfg) {
    const int64_t e = cfg.embed_dim, nh = cfg.heads, dh = cfg.head_dim();
    int q = add_rowvec(t, matmul(t, q_src, p(prefix + ".wq")), p(prefix + ".bq"));
    int k = add_rowvec(t, matmul(t, kv_src, p(prefix + ".wk")), p(prefix + ".bk"));
    int v = add_rowvec(t, matmul(t, kv_src, p(prefix + ".wv")), p(prefix + ".bv"));
    AttnResult<S> res;
    std::vector<int> heads;
    const S inv_sqrt = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
    for (int64_t h = 0; h < nh; ++h) {
        int qh = slice_cols(t, q, h * dh, dh);
        int kh = slice_cols(t, k, h * dh, dh);
        int vh = slice_cols(t, v, h * dh, dh);
        if (use_rope) {
            qh = rope_apply(t, qh, q_pos);
            kh = rope_apply(t, kh, k_pos);
        }
        int scores = scale(t, matmul(t, qh, kh, false, true), inv_sqrt);
        int probs = softmax_rows(t, scores);
        res.attn_probs.push_back(probs);
        heads.push_back(matmul(t, probs, vh));
    }
    int ctx = concat_cols(t, heads);
    res.out = add_rowvec(t, matmul(t, ctx, p(prefix + ".wo")), p(prefix + ".bo"));
    return res;
}

} // namespace detail

// Q,K,V from fft2d_real(AdLN(z,cond)); rotary Q/K; attention; ifft2d_real;
// outer AdLN around (attention + AdLN(z,cond) residual).
template <class S>
AttnResult<S> spectral_self_attention(Tape<S>& t, Binder<S>& p, const std::string& prefix, int z,
                                      const CondSignal& cond,
                                      const std::vector<int64_t>& positions,
                                      const SpectralConfig& cfg) {
    int b_t = adln(t, p, prefix + ".adln_in", z, cond, cfg);
    int mixed = cfg.fft_enabled ? fft2d_real(t, b_t) : b_t;
    AttnResult<S> attn =
        detail::mha(t, p, prefix, mixed, mixed, positions, positions, cfg.rope_enabled, cfg);
    int back = cfg.fft_enabled ? ifft2d_real(t, attn.out) : attn.out;
    int residual = adln(t, p, prefix + ".adln_res", z, cond, cfg);
    attn.out = adln(t, p, prefix + ".adln_out", add(t, back, residual), cond, cfg);
    return attn;
}

// Q from fft2d_real(z_out); K,V from fft2d_real(projected text); attention;
// ifft2d_real; outer AdLN around (attention + AdLN(z_out,cond)).
template <class S>
AttnResult<S> spectral_cross_attention(Tape<S>& t, Binder<S>& p, const std::string& prefix,
                                       int z_out, int text_e /* (L x E) */,
                                       const CondSignal& cond,
                                       const std::vector<int64_t>& positions,
                                       const SpectralConfig& cfg) {
    int q_src = cfg.fft_enabled ? fft2d_real(t, z_out) : z_out;
    int kv_src = cfg.fft_enabled ? fft2d_real(t, text_e) : text_e;
    std::vector<int64_t> text_pos(static_cast<size_t>(t.val(text_e).shape[0]), 0);
    AttnResult<S> attn =
        detail::mha(t, p, prefix, q_src, kv_src, positions, text_pos, false, cfg);
    int back = cfg.fft_enabled ? ifft2d_real(t, attn.out) : attn.out;
    int residual = adln(t, p, prefix + ".adln_res", z_out, cond, cfg);
    attn.out = adln(t, p, prefix + ".adln_out", add(t, back, residual), cond, cfg);
    return attn;
}

// Pre-norm feed-forward with AdLN and GeLU, expansion cfg.ff_mult.
// The second linear is the "output feed-forward" that sequential adapters
// wrap; adapted models pass its name through `ff_output_adapter`.
template <class S>
int spectral_feedforward(Tape<S>& t, Binder<S>& p, const std::string& prefix, int z,
                         const CondSignal& cond, const SpectralConfig& cfg,
                         const std::function<int(Tape<S>&, Binder<S>&, int)>* output_adapter =
                             nullptr) {
    int h = adln(t, p, prefix + ".adln", z, cond, cfg);
    h = gelu(t, add_rowvec(t, matmul(t, h, p(prefix + ".w1")), p(prefix + ".b1")));
    int y = add_rowvec(t, matmul(t, h, p(prefix + ".w2")), p(prefix + ".b2"));
    if (output_adapter) y = (*output_adapter)(t, p, y);
    return add(t, z, y);
}

// ---------------------------------------------------------------------------
// the denoiser
// ---------------------------------------------------------------------------

// Adapter hook points; the base model runs with no hooks installed.
template <class S>
struct DenoiserHooks {
    // parallel adapters on Q/K projection inputs: name -> extra output
    // computed from the projection input rows
    std::function<int(Tape<S>&, Binder<S>&, const std::string& layer, int x_rows, int base_out)>
        attn_qk;
    // sequential adapter on the feed-forward output rows
    std::function<int(Tape<S>&, Binder<S>&, const std::string& layer, int y_rows)> ff_out;
};

enum class Segment : int32_t { diffused = 0, context = 1, sketch = 2 };

template <class S>
struct SequenceInput {
    std::vector<int32_t> tokens;    // token ids in [0, K]; MASK == K
    std::vector<int32_t> segments;  // Segment::diffused / Segment::context per token
    int sketch_rows = -1;           // optional (S' x E) node appended as the sketch segment
    int text = -1;                  // (L x text_dim) node; required for cross-attention
};

template <class S>
struct SpectralDenoiser {
    SpectralConfig cfg;
    ParamStore<S> params;

    static SpectralDenoiser init(const SpectralConfig& cfg, uint64_t seed) {
        cfg.validate();
        SpectralDenoiser m;
        m.cfg = cfg;
        ParamStore<S>& ps = m.params;
        const int64_t e = cfg.embed_dim;
        ps.add_normal("embed.token", {cfg.vocab_k + 1, e}, 0.02, seed);
        ps.add_normal("embed.segment", {3, e}, 0.02, seed);
        ps.add_normal("cond.fps_embed", {cfg.fps_max - cfg.fps_min + 1, cfg.fps_embed_dim}, 0.02,
                      seed);
        ps.add_he("text.proj.w", {cfg.text_dim, e}, cfg.text_dim, seed);
        ps.add_zeros("text.proj.b", {e});
        ps.add_normal("text.embed", {static_cast<int64_t>(toy_vocabulary().size()), cfg.text_dim},
                      0.02, seed);
        auto reg_adln = [&](const std::string& prefix) {
            ps.add_he(prefix + ".w1", {cfg.cond_dim(), cfg.cond_hidden}, cfg.cond_dim(), seed);
            ps.add_zeros(prefix + ".b1", {cfg.cond_hidden});
            ps.add_zeros(prefix + ".w2", {cfg.cond_hidden, 2 * e}); // starts as plain LN
            ps.add_zeros(prefix + ".b2", {2 * e});
        };
        auto reg_attn = [&](const std::string& prefix) {
            for (const char* nm : {"wq", "wk", "wv", "wo"}) ps.add_he(prefix + "." + nm, {e, e}, e, seed);
            for (const char* nm : {"bq", "bk", "bv", "bo"}) ps.add_zeros(prefix + "." + nm, {e});
        };
        for (int64_t b = 0; b < cfg.blocks; ++b) {
            std::string blk = "blk" + std::to_string(b);
            reg_attn(blk + ".self");
            reg_adln(blk + ".self.adln_in");
            reg_adln(blk + ".self.adln_res");
            reg_adln(blk + ".self.adln_out");
            reg_attn(blk + ".cross");
            reg_adln(blk + ".cross.adln_res");
            reg_adln(blk + ".cross.adln_out");
            reg_adln(blk + ".ff.adln");
            ps.add_he(blk + ".ff.w1", {e, cfg.ff_mult * e}, e, seed);
            ps.add_zeros(blk + ".ff.b1", {cfg.ff_mult * e});
            ps.add_he(blk + ".ff.w2", {cfg.ff_mult * e, e}, cfg.ff_mult * e, seed);
            ps.add_zeros(blk + ".ff.b2", {e});
        }
        ps.add_he("head.w", {e, cfg.vocab_k}, e, seed);
        ps.add_zeros("head.b", {cfg.vocab_k});
        return m;
    }

    // Text node from a caption through the toy embedding table.
    int encode_caption(Tape<S>& t, Binder<S>& p, const std::string& caption) const {
        return embed_rows(t, p("text.embed"), tokenize_caption(caption));
    }

    // Full sequence forward; returns (S_total x K) logits.
    int forward_logits(Tape<S>& t, Binder<S>& p, const SequenceInput<S>& in,
                       const CondSignal& cond, const DenoiserHooks<S>* hooks = nullptr) const {
        require(!in.tokens.empty(), "denoiser input must contain at least one token");
        require(in.tokens.size() == in.segments.size(), "segment markers must match tokens");
        for (int32_t id : in.tokens)
            if (id < 0 || id > cfg.vocab_k)
                throw ValidationError("token index " + std::to_string(id) +
                                      " out of range [0,K]");
        int x = add(t, embed_rows(t, p("embed.token"), in.tokens),
                    embed_rows(t, p("embed.segment"), in.segments));
        if (in.sketch_rows >= 0) {
            int64_t s_rows = t.val(in.sketch_rows).shape[0];
            std::vector<int32_t> seg(static_cast<size_t>(s_rows),
                                     static_cast<int32_t>(Segment::sketch));
            int marked = add(t, in.sketch_rows, embed_rows(t, p("embed.segment"), seg));
            x = concat_rows<S>(t, {x, marked});
        }
        const int64_t s_total = t.val(x).shape[0];
        if (!cfg.rope_enabled)
            x = add(t, x, t.leaf(sinusoid_positions<S>(s_total, cfg.embed_dim)));
        std::vector<int64_t> positions(static_cast<size_t>(s_total));
        for (int64_t i = 0; i < s_total; ++i) positions[static_cast<size_t>(i)] = i;

        int text_e = -1;
        if (in.text >= 0)
            text_e = add_rowvec(t, matmul(t, in.text, p("text.proj.w")), p("text.proj.b"));

        for (int64_t b = 0; b < cfg.blocks; ++b) {
            std::string blk = "blk" + std::to_string(b);
            x = self_attn_with_hooks(t, p, blk + ".self", x, cond, positions, hooks).out;
            if (text_e >= 0)
                x = cross_attn_with_hooks(t, p, blk + ".cross", x, text_e, cond, positions, hooks)
                        .out;
            std::function<int(Tape<S>&, Binder<S>&, int)> ff_adapter;
            const std::function<int(Tape<S>&, Binder<S>&, int)>* ff_ptr = nullptr;
            if (hooks && hooks->ff_out) {
                std::string layer = blk + ".ff.w2";
                ff_adapter = [hooks, layer](Tape<S>& tt, Binder<S>& pp, int y) {
                    return hooks->ff_out(tt, pp, layer, y);
                };
                ff_ptr = &ff_adapter;
            }
            x = spectral_feedforward(t, p, blk + ".ff", x, cond, cfg, ff_ptr);
        }
        return add_rowvec(t, matmul(t, x, p("head.w")), p("head.b"));
    }

    // Plain-generation surface: one token grid, logits (|grid| x K).
    int forward_grid(Tape<S>& t, Binder<S>& p, const TokenGrid& grid, const CondSignal& cond,
                     int text_node, const DenoiserHooks<S>* hooks = nullptr) const {
        grid.validate();
        require(grid.K == cfg.vocab_k, "token grid K mismatch");
        SequenceInput<S> in;
        in.tokens.assign(grid.indices.data.begin(), grid.indices.data.end());
        in.segments.assign(in.tokens.size(), static_cast<int32_t>(Segment::diffused));
        in.text = text_node;
        return forward_logits(t, p, in, cond, hooks);
    }

private:
    // Attention with optional parallel Q/K adapter hooks; mirrors
    // detail::mha but lets the finetuning module add its branch to the
    // Q and K projections.
    AttnResult<S> self_attn_with_hooks(Tape<S>& t, Binder<S>& p, const std::string& prefix, int z,
                                       const CondSignal& cond,
                                       const std::vector<int64_t>& positions,
                                       const DenoiserHooks<S>* hooks) const {
        if (!hooks || !hooks->attn_qk)
            return spectral_self_attention(t, p, prefix, z, cond, positions, cfg);
        int b_t = adln(t, p, prefix + ".adln_in", z, cond, cfg);
        int mixed = cfg.fft_enabled ? fft2d_real(t, b_t) : b_t;
        AttnResult<S> attn = mha_hooked(t, p, prefix, mixed, mixed, positions, positions,
                                        cfg.rope_enabled, hooks);
        int back = cfg.fft_enabled ? ifft2d_real(t, attn.out) : attn.out;
        int residual = adln(t, p, prefix + ".adln_res", z, cond, cfg);
        attn.out = adln(t, p, prefix + ".adln_out", add(t, back, residual), cond, cfg);
        return attn;
    }

    AttnResult<S> cross_attn_with_hooks(Tape<S>& t, Binder<S>& p, const std::string& prefix,
                                        int z_out, int text_e, const CondSignal& cond,
                                        const std::vector<int64_t>& positions,
                                        const DenoiserHooks<S>* hooks) const {
        if (!hooks || !hooks->attn_qk)
            return spectral_cross_attention(t, p, prefix, z_out, text_e, cond, positions, cfg);
        int q_src = cfg.fft_enabled ? fft2d_real(t, z_out) : z_out;
        int kv_src = cfg.fft_enabled ? fft2d_real(t, text_e) : text_e;
        std::vector<int64_t> text_pos(static_cast<size_t>(t.val(text_e).shape[0]), 0);
        AttnResult<S> attn =
            mha_hooked(t, p, prefix, q_src, kv_src, positions, text_pos, false, hooks);
        int back = cfg.fft_enabled ? ifft2d_real(t, attn.out) : attn.out;
        int residual = adln(t, p, prefix + ".adln_res", z_out, cond, cfg);
        attn.out = adln(t, p, prefix + ".adln_out", add(t, back, residual), cond, cfg);
        return attn;
    }

    AttnResult<S> mha_hooked(Tape<S>& t, Binder<S>& p, const std::string& prefix, int q_src,
                             int kv_src, const std::vector<int64_t>& q_pos,
                             const std::vector<int64_t>& k_pos, bool use_rope,
                             const DenoiserHooks<S>* hooks) const {
        const int64_t nh = cfg.heads, dh = cfg.head_dim();
        int q = add_rowvec(t, matmul(t, q_src, p(prefix + ".wq")), p(prefix + ".bq"));
        int k = add_rowvec(t, matmul(t, kv_src, p(prefix + ".wk")), p(prefix + ".bk"));
        int v = add_rowvec(t, matmul(t, kv_src, p(prefix + ".wv")), p(prefix + ".bv"));
        q = hooks->attn_qk(t, p, prefix + ".wq", q_src, q);
        k = hooks->attn_qk(t, p, prefix + ".wk", kv_src, k);
        AttnResult<S> res;
        std::vector<int> heads;
        const S inv_sqrt = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
        for (int64_t h = 0; h < nh; ++h) {
            int qh = slice_cols(t, q, h * dh, dh);
            int kh = slice_cols(t, k, h * dh, dh);
            int vh = slice_cols(t, v, h * dh, dh);
            if (use_rope) {
                qh = rope_apply(t, qh, q_pos);
                kh = rope_apply(t, kh, k_pos);
            }
            int scores = scale(t, matmul(t, qh, kh, false, true), inv_sqrt);
            int probs = softmax_rows(t, scores);
            res.attn_probs.push_back(probs);
            heads.push_back(matmul(t, probs, vh));
        }
        int ctx = concat_cols(t, heads);
        res.out = add_rowvec(t, matmul(t, ctx, p(prefix + ".wo")), p(prefix + ".bo"));
        return res;
    }
};

} // namespace maura
