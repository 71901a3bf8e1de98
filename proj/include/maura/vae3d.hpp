// Copyright 2026 the maura authors
// SPDX-License-Identifier: Apache-2.0
//
// 3-D convolutional video autoencoder built from mobile-inverted bottleneck
// and inception-fused blocks, with a masked-frame-index head and the
// combined quantized-autoencoder training loss. The encoder follows an
// explicit block plan; the decoder is its mirror image (strided convs become
// nearest upsample + conv).

#pragma once

#include <array>
#include <string>
#include <vector>

#include "maura/nn.hpp"
#include "maura/quantize.hpp"
#include "maura/synthdata.hpp"
#include "maura/tape.hpp"

namespace maura {

struct BlockSpec {
    enum class Op { conv3d, mbconv, inception_fused, downsample };
    Op op = Op::mbconv;
    int64_t out_channels = 32;
    std::array<int64_t, 3> kernel{3, 3, 3};
    std::array<int64_t, 3> stride{1, 1, 1};
};

std::string block_op_name(BlockSpec::Op op);
BlockSpec::Op block_op_from_name(const std::string& name);

struct Vae3dConfig {
    int64_t base_channels = 32;
    int64_t latent_dim = 8;    // d, also the quantizer dimension
    int64_t temporal_down = 4; // f_t in {1, 4}
    int64_t n_frames = 8;      // training clip length (fixes the MFI head)
    double beta = 0.25;        // commitment weight
    std::vector<BlockSpec> plan; // encoder plan; decoder mirrors it
    int64_t mfi_hidden = 64;
    std::string quantizer = "lfq"; // "lfq" (K = 2^d) or "vq" (learned codebook)
    int64_t codebook_size = 256;   // K

    // Miniature default: one bottleneck block at the highest resolution,
    // full stages deeper where voxels are cheap.
    static Vae3dConfig desk(int64_t temporal_down = 4, int64_t n_frames = 8,
                            int64_t base_channels = 32, int64_t latent_dim = 8);

    int64_t spatial_factor() const {
        int64_t f = 1;
        for (const auto& b : plan) f *= b.stride[1];
        return f;
    }
    int64_t temporal_factor() const {
        int64_t f = 1;
        for (const auto& b : plan) f *= b.stride[0];
        return f;
    }
    int64_t latent_frames() const { return n_frames / temporal_down; }

    void validate() const;
};

Vae3dConfig vae_config_from_json_text(const std::string& text);
std::string vae_config_to_json_text(const Vae3dConfig& cfg);

// (N,3,H,W) clip pixels -> (3,N,H,W) conv layout and back.
TensorF clip_to_cthw(const VideoClip& clip);
VideoClip cthw_to_clip(const TensorF& x, int fps);

// ---------------------------------------------------------------------------
// blocks
// ---------------------------------------------------------------------------

// y = x (.) sigmoid(W2 * act(W1 * gap(x))); shape preserved.
template <class S>
int se3d(Tape<S>& t, Binder<S>& p, const std::string& prefix, int x) {
    int pooled = reshape(t, global_avg_pool(t, x), {1, t.val(x).shape[0]});
    int h = silu(t, add_rowvec(t, matmul(t, pooled, p(prefix + ".w1")), p(prefix + ".b1")));
    int s = sigmoid(t, add_rowvec(t, matmul(t, h, p(prefix + ".w2")), p(prefix + ".b2")));
    return mul_channels(t, x, reshape(t, s, {t.val(x).shape[0]}));
}

// conv3x3x3 C_in->C, pointwise expand C->4C, SE at 4C, depthwise 3x3x3,
// pointwise project 4C->C; residual when C_in == C.
template <class S>
int mbconv3d(Tape<S>& t, Binder<S>& p, const std::string& prefix, int x) {
    const int64_t c_in = t.val(x).shape[0];
    Conv3dSpec k3;
    k3.pad = {1, 1, 1};
    Conv3dSpec k1; // pointwise
    int h = silu(t, conv3d(t, x, p(prefix + ".c1.w"), p(prefix + ".c1.b"), k3));
    h = silu(t, conv3d(t, h, p(prefix + ".exp.w"), p(prefix + ".exp.b"), k1));
    h = se3d(t, p, prefix + ".se", h);
    Conv3dSpec dw = k3;
    dw.groups = t.val(h).shape[0];
    h = silu(t, conv3d(t, h, p(prefix + ".dw.w"), p(prefix + ".dw.b"), dw));
    h = conv3d(t, h, p(prefix + ".proj.w"), p(prefix + ".proj.b"), k1);
    if (c_in == t.val(h).shape[0]) h = add(t, x, h);
    return h;
}

// Three parallel branches with kernels 3x3x1, 3x1x3, 1x3x3, each followed by
// a depthwise separable sub-block; concatenated and fused back to C by a
// pointwise conv.
template <class S>
int inception_fused(Tape<S>& t, Binder<S>& p, const std::string& prefix, int x) {
    static const std::array<std::array<int64_t, 3>, 3> kernels{{{3, 3, 1}, {3, 1, 3}, {1, 3, 3}}};
    std::vector<int> branches;
    for (int b = 0; b < 3; ++b) {
        std::string bp = prefix + ".br" + std::to_string(b);
        Conv3dSpec sp;
        for (int i = 0; i < 3; ++i) sp.pad[static_cast<size_t>(i)] = kernels[b][static_cast<size_t>(i)] / 2;
        int h = silu(t, conv3d(t, x, p(bp + ".w"), p(bp + ".b"), sp));
        Conv3dSpec dw;
        dw.pad = {1, 1, 1};
        dw.groups = t.val(h).shape[0];
        h = silu(t, conv3d(t, h, p(bp + ".dw.w"), p(bp + ".dw.b"), dw));
        Conv3dSpec pw;
        h = conv3d(t, h, p(bp + ".pw.w"), p(bp + ".pw.b"), pw);
        branches.push_back(h);
    }
    // channel concat via 2-D rows
    const auto& sh = t.val(branches[0]).shape;
    int64_t c = sh[0], v = sh[1] * sh[2] * sh[3];
    std::vector<int> flat;
    for (int b : branches) flat.push_back(reshape(t, b, {c, v}));
    int cat = reshape(t, concat_rows(t, flat), {3 * c, sh[1], sh[2], sh[3]});
    Conv3dSpec pw;
    return conv3d(t, cat, p(prefix + ".fuse.w"), p(prefix + ".fuse.b"), pw);
}

// ---------------------------------------------------------------------------
// model
// ---------------------------------------------------------------------------

template <class S>
struct Vae3d {
    Vae3dConfig cfg;
    ParamStore<S> params;

    static Vae3d init(const Vae3dConfig& cfg, uint64_t seed);

    // x: (3, N, H, W) -> z_c: (d, N/f_t, H/16, W/16)
    int encode(Tape<S>& t, Binder<S>& p, int x) const {
        const auto& sh = t.val(x).shape;
        require(sh.size() == 4 && sh[0] == 3, "encode: input must be (3,N,H,W)");
        require(sh[1] % cfg.temporal_down == 0,
                "encode: N must be divisible by the temporal factor " +
                    std::to_string(cfg.temporal_down));
        require(sh[2] % 16 == 0 && sh[3] % 16 == 0, "encode: H and W must be divisible by 16");
        int h = x;
        for (size_t i = 0; i < cfg.plan.size(); ++i) {
            const BlockSpec& b = cfg.plan[i];
            std::string name = "enc." + std::to_string(i);
            switch (b.op) {
                case BlockSpec::Op::conv3d:
                case BlockSpec::Op::downsample: {
                    Conv3dSpec sp;
                    sp.stride = b.stride;
                    for (int k = 0; k < 3; ++k) sp.pad[static_cast<size_t>(k)] = b.kernel[static_cast<size_t>(k)] / 2;
                    h = silu(t, conv3d(t, h, p(name + ".w"), p(name + ".b"), sp));
                    break;
                }
                case BlockSpec::Op::mbconv:
                    h = mbconv3d(t, p, name, h);
                    break;
                case BlockSpec::Op::inception_fused:
                    h = inception_fused(t, p, name, h);
                    break;
            }
        }
        Conv3dSpec pw;
        return conv3d(t, h, p("enc.head.w"), p("enc.head.b"), pw);
    }

    // z: (d, N', H', W') -> (3, N, H, W) clamped to [0,1]
    int decode(Tape<S>& t, Binder<S>& p, int z) const {
        const auto& sh = t.val(z).shape;
        require(sh.size() == 4 && sh[0] == cfg.latent_dim, "decode: latent shape mismatch");
        Conv3dSpec pw;
        int h = silu(t, conv3d(t, z, p("dec.head.w"), p("dec.head.b"), pw));
        for (int64_t i = static_cast<int64_t>(cfg.plan.size()) - 1; i >= 0; --i) {
            const BlockSpec& b = cfg.plan[static_cast<size_t>(i)];
            std::string name = "dec." + std::to_string(i);
            switch (b.op) {
                case BlockSpec::Op::conv3d:
                case BlockSpec::Op::downsample: {
                    if (b.stride != std::array<int64_t, 3>{1, 1, 1})
                        h = upsample3d(t, h, b.stride);
                    Conv3dSpec sp;
                    for (int k = 0; k < 3; ++k) sp.pad[static_cast<size_t>(k)] = b.kernel[static_cast<size_t>(k)] / 2;
                    int y = conv3d(t, h, p(name + ".w"), p(name + ".b"), sp);
                    h = (i == 0) ? clamp01(t, y) : silu(t, y);
                    break;
                }
                case BlockSpec::Op::mbconv:
                    h = mbconv3d(t, p, name, h);
                    break;
                case BlockSpec::Op::inception_fused:
                    h = inception_fused(t, p, name, h);
                    break;
            }
        }
        return h;
    }

    // z_c -> (1, N) logits over which frame was fully masked.
    int mfi_logits(Tape<S>& t, Binder<S>& p, int z) const {
        const auto& sh = t.val(z).shape;
        require(sh.size() == 4 && sh[0] == cfg.latent_dim, "mfi: latent shape mismatch");
        require(sh[1] == cfg.latent_frames(), "mfi: latent frame count mismatch");
        int pooled = avg_pool_hw(t, z); // (d, N')
        int flat = reshape(t, pooled, {1, cfg.latent_dim * cfg.latent_frames()});
        int h = silu(t, add_rowvec(t, matmul(t, flat, p("mfi.w1")), p("mfi.b1")));
        return add_rowvec(t, matmul(t, h, p("mfi.w2")), p("mfi.b2"));
    }

    // Latent grid <-> (V, d) rows for the quantizer.
    int latent_to_rows(Tape<S>& t, int z) const {
        const auto& sh = t.val(z).shape;
        return transpose2d(t, reshape(t, z, {sh[0], sh[1] * sh[2] * sh[3]}));
    }
    int rows_to_latent(Tape<S>& t, int rows, std::array<int64_t, 3> grid) const {
        return reshape(t, transpose2d(t, rows), {cfg.latent_dim, grid[0], grid[1], grid[2]});
    }

    CodebookSpec codebook_spec() const {
        return cfg.quantizer == "lfq" ? CodebookSpec::lfq(cfg.latent_dim)
                                      : CodebookSpec::vq(cfg.codebook_size, cfg.latent_dim);
    }

    QuantizeNodes<S> quantize_rows(Tape<S>& t, Binder<S>& p, int rows) const {
        if (cfg.quantizer == "lfq") return lfq_quantize(t, rows);
        return vq_quantize(t, rows, p("quant.codebook"));
    }

    // Inference helpers (throwaway tapes, no gradients).
    TokenGrid tokenize(const TensorF& cthw);
    TensorF detokenize(const TokenGrid& grid);
};

namespace detail {

template <class S>
void register_conv(ParamStore<S>& ps, const std::string& name, int64_t c_out, int64_t c_in_g,
                   std::array<int64_t, 3> k, uint64_t seed, double bias_init = 0.0,
                   double weight_scale = 1.0) {
    int64_t fan_in = c_in_g * k[0] * k[1] * k[2];
    Tensor<S>& w = ps.add_he(name + ".w", {c_out, c_in_g, k[0], k[1], k[2]}, fan_in, seed);
    if (weight_scale != 1.0)
        for (auto& v : w.data) v *= static_cast<S>(weight_scale);
    if (bias_init == 0.0)
        ps.add_zeros(name + ".b", {c_out});
    else
        ps.add_full(name + ".b", {c_out}, static_cast<S>(bias_init));
}

template <class S>
void register_mbconv(ParamStore<S>& ps, const std::string& prefix, int64_t c_in, int64_t c,
                     uint64_t seed) {
    register_conv(ps, prefix + ".c1", c, c_in, {3, 3, 3}, seed);
    register_conv(ps, prefix + ".exp", 4 * c, c, {1, 1, 1}, seed);
    int64_t wide = 4 * c, r = std::max<int64_t>(1, wide / 4);
    ps.add_he(prefix + ".se.w1", {wide, r}, wide, seed);
    ps.add_zeros(prefix + ".se.b1", {r});
    ps.add_he(prefix + ".se.w2", {r, wide}, r, seed);
    ps.add_zeros(prefix + ".se.b2", {wide});
    register_conv(ps, prefix + ".dw", wide, 1, {3, 3, 3}, seed); // groups == wide
    register_conv(ps, prefix + ".proj", c, wide, {1, 1, 1}, seed);
}

template <class S>
void register_inception(ParamStore<S>& ps, const std::string& prefix, int64_t c_in, int64_t c,
                        uint64_t seed) {
    static const std::array<std::array<int64_t, 3>, 3> kernels{{{3, 3, 1}, {3, 1, 3}, {1, 3, 3}}};
    for (int b = 0; b < 3; ++b) {
        std::string bp = prefix + ".br" + std::to_string(b);
        register_conv(ps, bp, c, c_in, kernels[static_cast<size_t>(b)], seed);
        register_conv(ps, bp + ".dw", c, 1, {3, 3, 3}, seed);
        register_conv(ps, bp + ".pw", c, c, {1, 1, 1}, seed);
    }
    register_conv(ps, prefix + ".fuse", c, 3 * c, {1, 1, 1}, seed);
}

} // namespace detail

template <class S>
Vae3d<S> Vae3d<S>::init(const Vae3dConfig& cfg, uint64_t seed) {
    cfg.validate();
    Vae3d<S> m;
    m.cfg = cfg;
    ParamStore<S>& ps = m.params;

    std::vector<int64_t> c_in(cfg.plan.size());
    int64_t c = 3;
    for (size_t i = 0; i < cfg.plan.size(); ++i) {
        const BlockSpec& b = cfg.plan[i];
        c_in[i] = c;
        std::string name = "enc." + std::to_string(i);
        switch (b.op) {
            case BlockSpec::Op::conv3d:
            case BlockSpec::Op::downsample:
                detail::register_conv(ps, name, b.out_channels, c, b.kernel, seed);
                break;
            case BlockSpec::Op::mbconv:
                detail::register_mbconv(ps, name, c, b.out_channels, seed);
                break;
            case BlockSpec::Op::inception_fused:
                detail::register_inception(ps, name, c, b.out_channels, seed);
                break;
        }
        c = b.out_channels;
    }
    detail::register_conv(ps, "enc.head", cfg.latent_dim, c, {1, 1, 1}, seed);
    detail::register_conv(ps, "dec.head", c, cfg.latent_dim, {1, 1, 1}, seed);
    for (int64_t i = static_cast<int64_t>(cfg.plan.size()) - 1; i >= 0; --i) {
        const BlockSpec& b = cfg.plan[static_cast<size_t>(i)];
        int64_t out = (i == 0) ? 3 : c_in[static_cast<size_t>(i)];
        std::string name = "dec." + std::to_string(i);
        switch (b.op) {
            case BlockSpec::Op::conv3d:
            case BlockSpec::Op::downsample:
                // The i==0 mirror writes pixels: bias starts mid-range and the
                // weights start small so the output clamp begins in its
                // interior where gradients are alive.
                detail::register_conv(ps, name, out, b.out_channels, b.kernel, seed,
                                      i == 0 ? 0.5 : 0.0, i == 0 ? 0.05 : 1.0);
                break;
            case BlockSpec::Op::mbconv:
                detail::register_mbconv(ps, name, b.out_channels, out, seed);
                break;
            case BlockSpec::Op::inception_fused:
                detail::register_inception(ps, name, b.out_channels, out, seed);
                break;
        }
    }
    int64_t mfi_in = cfg.latent_dim * cfg.latent_frames();
    ps.add_he("mfi.w1", {mfi_in, cfg.mfi_hidden}, mfi_in, seed);
    ps.add_zeros("mfi.b1", {cfg.mfi_hidden});
    ps.add_he("mfi.w2", {cfg.mfi_hidden, cfg.n_frames}, cfg.mfi_hidden, seed);
    ps.add_zeros("mfi.b2", {cfg.n_frames});
    if (cfg.quantizer == "vq")
        ps.add_normal("quant.codebook", {cfg.codebook_size, cfg.latent_dim}, 1.0, seed);
    return m;
}

template <class S>
TokenGrid Vae3d<S>::tokenize(const TensorF& cthw) {
    Tape<S> t;
    Binder<S> bind(t, params);
    int z = encode(t, bind, t.leaf(cthw.template cast<S>(), false));
    const auto& sh = t.val(z).shape;
    int rows = latent_to_rows(t, z);
    TokenGrid grid;
    grid.K = codebook_spec().K;
    TensorI flat = cfg.quantizer == "lfq"
                       ? lfq_indices(t.val(rows))
                       : nearest_indices(t.val(rows), params.get("quant.codebook"));
    grid.indices = TensorI({sh[1], sh[2], sh[3]});
    grid.indices.data = std::move(flat.data);
    return grid;
}

template <class S>
TensorF Vae3d<S>::detokenize(const TokenGrid& grid) {
    CodebookSpec spec = codebook_spec();
    require(grid.K == spec.K, "token grid K does not match the checkpointed quantizer");
    const Tensor<S>* vectors =
        cfg.quantizer == "vq" ? &params.get("quant.codebook") : nullptr;
    TensorI flat({grid.count()});
    flat.data = grid.indices.data;
    Tensor<S> rows = lookup_rows<S>(flat, spec, vectors);
    Tape<S> t;
    Binder<S> bind(t, params);
    int z = rows_to_latent(t, t.leaf(rows, false),
                           {grid.indices.shape[0], grid.indices.shape[1], grid.indices.shape[2]});
    int decoded = decode(t, bind, z);
    return t.val(decoded).template cast<float>();
}

template <class S>
struct VaeLossNodes {
    int rec = -1;
    int codebook = -1;
    int commit = -1;
    int mfi = -1;   // scalar node, 0 when no frame was masked
    int total = -1;
};

// total = rec + codebook + beta*commit + mfi, with rec the mean squared
// pixel error and codebook/commit squared norms over latent rows.
template <class S>
VaeLossNodes<S> vae_loss_nodes(Tape<S>& t, int target_cthw, int decoded, int codebook_loss,
                               int commit_loss, double beta, int mfi_nll /* -1 if unused */) {
    VaeLossNodes<S> n;
    n.rec = mse(t, decoded, target_cthw);
    n.codebook = codebook_loss;
    n.commit = commit_loss;
    int total = add(t, n.rec, n.codebook);
    total = add(t, total, scale(t, n.commit, static_cast<S>(beta)));
    if (mfi_nll >= 0) {
        n.mfi = mfi_nll;
        total = add(t, total, n.mfi);
    } else {
        n.mfi = t.leaf(Tensor<S>::zeros({1}), false);
    }
    n.total = total;
    return n;
}

struct VaeLossReport {
    double rec = 0, codebook = 0, commit = 0, mfi = 0, total = 0;
};

// Plain-value loss per the training objective; mfi_prob_true must lie in (0,1].
VaeLossReport vae_loss_report(const TensorF& v, const TensorF& v_hat, const TensorF& z_c_rows,
                              const TensorF& z_q_rows, double beta, double mfi_prob_true);

} // namespace maura
