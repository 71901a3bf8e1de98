// Copyright 2026 the maura authors
// SPDX-License-Identifier: Apache-2.0

#include "maura/vae3d.hpp"

#include <set>

#include <json.hpp>

namespace maura {

using json = nlohmann::ordered_json;

std::string block_op_name(BlockSpec::Op op) {
    switch (op) {
        case BlockSpec::Op::conv3d: return "conv3d";
        case BlockSpec::Op::mbconv: return "mbconv";
        case BlockSpec::Op::inception_fused: return "inception_fused";
        case BlockSpec::Op::downsample: return "downsample";
    }
    throw ValidationError("bad block op");
}

BlockSpec::Op block_op_from_name(const std::string& name) {
    if (name == "conv3d") return BlockSpec::Op::conv3d;
    if (name == "mbconv") return BlockSpec::Op::mbconv;
    if (name == "inception_fused") return BlockSpec::Op::inception_fused;
    if (name == "downsample") return BlockSpec::Op::downsample;
    throw ValidationError("unknown block op: " + name);
}

Vae3dConfig Vae3dConfig::desk(int64_t temporal_down, int64_t n_frames, int64_t base_channels,
                              int64_t latent_dim) {
    Vae3dConfig cfg;
    cfg.base_channels = base_channels;
    cfg.latent_dim = latent_dim;
    cfg.temporal_down = temporal_down;
    cfg.n_frames = n_frames;
    cfg.codebook_size = int64_t(1) << latent_dim;
    const int64_t c = base_channels;
    const int64_t td = temporal_down == 4 ? 2 : 1;
    auto conv = [](int64_t out, std::array<int64_t, 3> k, std::array<int64_t, 3> s) {
        return BlockSpec{BlockSpec::Op::conv3d, out, k, s};
    };
    auto down = [](int64_t out, std::array<int64_t, 3> s) {
        return BlockSpec{BlockSpec::Op::downsample, out, {3, 3, 3}, s};
    };
    auto mb = [](int64_t out) { return BlockSpec{BlockSpec::Op::mbconv, out, {3, 3, 3}, {1, 1, 1}}; };
    auto inc = [](int64_t out) {
        return BlockSpec{BlockSpec::Op::inception_fused, out, {3, 3, 3}, {1, 1, 1}};
    };
    cfg.plan = {
        conv(c, {1, 3, 3}, {1, 2, 2}), // stem: spatial /2
        mb(c),
        down(c, {td, 2, 2}),           // /4, temporal /2 when f_t == 4
        mb(c), mb(c), inc(c),
        down(c, {td, 2, 2}),           // /8, temporal /4
        mb(c), mb(c), inc(c),
        down(c, {1, 2, 2}),            // /16
    };
    cfg.validate();
    return cfg;
}

void Vae3dConfig::validate() const {
    require(base_channels >= 1 && latent_dim >= 1, "channel counts must be positive");
    require(temporal_down == 1 || temporal_down == 4, "temporal_down must be 1 or 4");
    require(n_frames >= 1 && n_frames % temporal_down == 0,
            "n_frames must be divisible by temporal_down");
    require(!plan.empty(), "block plan must not be empty");
    require(spatial_factor() == 16,
            "block plan must downsample spatially by exactly 16 (got " +
                std::to_string(spatial_factor()) + ")");
    require(temporal_factor() == temporal_down,
            "block plan temporal strides must multiply to temporal_down");
    for (const auto& b : plan) {
        require(b.out_channels >= 1, "block out_channels must be positive");
        bool strided = b.stride != std::array<int64_t, 3>{1, 1, 1};
        if (strided)
            require(b.op == BlockSpec::Op::conv3d || b.op == BlockSpec::Op::downsample,
                    "only conv3d/downsample entries may carry strides");
        require(b.stride[1] == b.stride[2], "spatial strides must match (square pixels)");
    }
    require(beta >= 0.0, "beta must be nonnegative");
    require(mfi_hidden >= 1, "mfi_hidden must be positive");
    require(quantizer == "lfq" || quantizer == "vq", "quantizer must be 'lfq' or 'vq'");
    if (quantizer == "lfq") {
        require(latent_dim <= 30, "lfq latent_dim too large");
        require(codebook_size == (int64_t(1) << latent_dim),
                "lfq requires codebook_size == 2^latent_dim");
    } else {
        require(codebook_size >= 2, "vq codebook needs at least 2 entries");
    }
}

namespace {

json block_to_json(const BlockSpec& b) {
    json j;
    j["op"] = block_op_name(b.op);
    j["out"] = b.out_channels;
    j["kernel"] = b.kernel;
    j["stride"] = b.stride;
    return j;
}

BlockSpec block_from_json(const json& j) {
    BlockSpec b;
    b.op = block_op_from_name(j.at("op").get<std::string>());
    b.out_channels = j.at("out").get<int64_t>();
    if (j.contains("kernel")) b.kernel = j.at("kernel").get<std::array<int64_t, 3>>();
    if (j.contains("stride")) b.stride = j.at("stride").get<std::array<int64_t, 3>>();
    return b;
}

} // namespace

std::string vae_config_to_json_text(const Vae3dConfig& cfg) {
    json j;
    j["base_channels"] = cfg.base_channels;
    j["latent_dim"] = cfg.latent_dim;
    j["temporal_down"] = cfg.temporal_down;
    j["n_frames"] = cfg.n_frames;
    j["beta"] = cfg.beta;
    j["mfi_hidden"] = cfg.mfi_hidden;
    j["quantizer"] = cfg.quantizer;
    j["codebook_size"] = cfg.codebook_size;
    j["plan"] = json::array();
    for (const auto& b : cfg.plan) j["plan"].push_back(block_to_json(b));
    return j.dump();
}

Vae3dConfig vae_config_from_json_text(const std::string& text) {
    json j = json::parse(text);
    static const std::set<std::string> allowed = {
        "base_channels", "latent_dim", "temporal_down", "n_frames", "beta",
        "mfi_hidden",    "quantizer",  "codebook_size", "plan"};
    for (const auto& [key, value] : j.items())
        require(allowed.count(key) != 0, "unknown key '" + key + "' in vae model config");
    Vae3dConfig base = Vae3dConfig::desk();
    Vae3dConfig cfg;
    cfg.base_channels = j.value("base_channels", base.base_channels);
    cfg.latent_dim = j.value("latent_dim", base.latent_dim);
    cfg.temporal_down = j.value("temporal_down", base.temporal_down);
    cfg.n_frames = j.value("n_frames", base.n_frames);
    cfg.beta = j.value("beta", base.beta);
    cfg.mfi_hidden = j.value("mfi_hidden", base.mfi_hidden);
    cfg.quantizer = j.value("quantizer", base.quantizer);
    cfg.codebook_size = j.value("codebook_size", int64_t(1) << cfg.latent_dim);
    if (j.contains("plan")) {
        cfg.plan.clear();
        for (const auto& b : j.at("plan")) cfg.plan.push_back(block_from_json(b));
    } else {
        cfg.plan = Vae3dConfig::desk(cfg.temporal_down, cfg.n_frames, cfg.base_channels,
                                     cfg.latent_dim)
                       .plan;
    }
    cfg.validate();
    return cfg;
}

TensorF clip_to_cthw(const VideoClip& clip) {
    const int64_t n = clip.frames(), h = clip.height(), w = clip.width();
    TensorF out({3, n, h, w});
    for (int64_t f = 0; f < n; ++f)
        for (int64_t c = 0; c < 3; ++c)
            for (int64_t y = 0; y < h; ++y)
                for (int64_t x = 0; x < w; ++x) out.at(c, f, y, x) = clip.pixels.at(f, c, y, x);
    return out;
}

VideoClip cthw_to_clip(const TensorF& x, int fps) {
    require(x.rank() == 4 && x.shape[0] == 3, "expected (3,N,H,W)");
    const int64_t n = x.shape[1], h = x.shape[2], w = x.shape[3];
    VideoClip clip;
    clip.fps = fps;
    clip.pixels = TensorF({n, 3, h, w});
    for (int64_t f = 0; f < n; ++f)
        for (int64_t c = 0; c < 3; ++c)
            for (int64_t y = 0; y < h; ++y)
                for (int64_t x2 = 0; x2 < w; ++x2)
                    clip.pixels.at(f, c, y, x2) = x.at(c, f, y, x2);
    return clip;
}

VaeLossReport vae_loss_report(const TensorF& v, const TensorF& v_hat, const TensorF& z_c_rows,
                              const TensorF& z_q_rows, double beta, double mfi_prob_true) {
    require(v.same_shape(v_hat), "loss: V and V_hat shapes differ");
    require(z_c_rows.same_shape(z_q_rows), "loss: latent row shapes differ");
    require(mfi_prob_true > 0.0 && mfi_prob_true <= 1.0, "mfi probability must be in (0,1]");
    VaeLossReport r;
    double acc = 0;
    for (int64_t i = 0; i < v.numel(); ++i) {
        double d = static_cast<double>(v[i]) - static_cast<double>(v_hat[i]);
        acc += d * d;
    }
    r.rec = acc / static_cast<double>(v.numel());
    double q = 0;
    for (int64_t i = 0; i < z_c_rows.numel(); ++i) {
        double d = static_cast<double>(z_c_rows[i]) - static_cast<double>(z_q_rows[i]);
        q += d * d;
    }
    r.codebook = q;
    r.commit = q;
    r.mfi = -std::log(mfi_prob_true);
    r.total = r.rec + r.codebook + beta * r.commit + r.mfi;
    return r;
}

} // namespace maura
