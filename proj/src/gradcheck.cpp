// Copyright 2026 the maura authors
// SPDX-License-Identifier: Apache-2.0
//
// Named finite-difference targets behind `maura gradcheck`. Each target
// builds a small double-precision graph on random inputs and compares
// reverse-mode gradients against central differences.

#include "maura/gradcheck.hpp"

#include "maura/adapt.hpp"
#include "maura/maskdiff.hpp"
#include "maura/spectral.hpp"
#include "maura/vae3d.hpp"

namespace maura {

namespace {

TensorD rand_t(std::vector<int64_t> sh, uint64_t seed, double sd = 1.0) {
    Rng rng(seed);
    return TensorD::randn(std::move(sh), rng, sd);
}

SpectralConfig check_cfg() {
    SpectralConfig cfg;
    cfg.embed_dim = 8;
    cfg.heads = 2;
    cfg.blocks = 1;
    cfg.vocab_k = 6;
    cfg.text_dim = 5;
    cfg.time_embed_dim = 4;
    cfg.fps_embed_dim = 2;
    cfg.cond_hidden = 6;
    return cfg;
}

// Check inputs plus every registered parameter of a store-backed builder.
GradCheckResult check_with_params(
    ParamStore<double>& ps, std::vector<TensorD> extra_inputs,
    const std::function<int(Tape<double>&, Binder<double>&, const std::vector<int>&)>& fwd) {
    std::vector<std::string> names = ps.names();
    std::vector<TensorD> inputs = std::move(extra_inputs);
    const size_t n_extra = inputs.size();
    for (const auto& n : names) inputs.push_back(ps.get(n));
    auto build = [&, n_extra](Tape<double>& t, const std::vector<int>& in) {
        Binder<double> bind(t, ps);
        for (size_t i = 0; i < names.size(); ++i) bind.bind_existing(names[i], in[n_extra + i]);
        std::vector<int> extras(in.begin(), in.begin() + static_cast<std::ptrdiff_t>(n_extra));
        return fwd(t, bind, extras);
    };
    return finite_diff_check(inputs, build);
}

std::vector<GradTarget> make_targets() {
    std::vector<GradTarget> targets;

    targets.push_back({"fft2d_real", 1e-6, [](uint64_t seed) {
        auto build = [](Tape<double>& t, const std::vector<int>& in) {
            return sum_sq(t, ifft2d_real(t, fft2d_real(t, in[0])));
        };
        return finite_diff_check({rand_t({5, 7}, seed)}, build);
    }});

    targets.push_back({"rope_apply", 1e-6, [](uint64_t seed) {
        auto build = [](Tape<double>& t, const std::vector<int>& in) {
            return sum_sq(t, rope_apply(t, in[0], {0, 3, 11, 64}));
        };
        return finite_diff_check({rand_t({4, 8}, seed)}, build);
    }});

    targets.push_back({"se3d", 1e-4, [](uint64_t seed) {
        ParamStore<double> ps;
        Rng rng(seed);
        ps.add("se.w1", TensorD::randn({4, 2}, rng, 0.5));
        ps.add("se.b1", TensorD::randn({2}, rng, 0.1));
        ps.add("se.w2", TensorD::randn({2, 4}, rng, 0.5));
        ps.add("se.b2", TensorD::randn({4}, rng, 0.1));
        return check_with_params(ps, {rand_t({4, 2, 2, 2}, seed + 1)},
                                 [](Tape<double>& t, Binder<double>& p, const std::vector<int>& x) {
                                     return sum_sq(t, se3d(t, p, "se", x[0]));
                                 });
    }});

    targets.push_back({"mbconv3d", 1e-4, [](uint64_t seed) {
        ParamStore<double> ps;
        detail::register_mbconv(ps, "mb", 3, 3, seed);
        return check_with_params(ps, {rand_t({3, 2, 3, 3}, seed + 1, 0.5)},
                                 [](Tape<double>& t, Binder<double>& p, const std::vector<int>& x) {
                                     return sum_sq(t, mbconv3d(t, p, "mb", x[0]));
                                 });
    }});

    targets.push_back({"inception_fused", 1e-4, [](uint64_t seed) {
        ParamStore<double> ps;
        detail::register_inception(ps, "inc", 3, 3, seed);
        return check_with_params(ps, {rand_t({3, 2, 3, 3}, seed + 1, 0.5)},
                                 [](Tape<double>& t, Binder<double>& p, const std::vector<int>& x) {
                                     return sum_sq(t, inception_fused(t, p, "inc", x[0]));
                                 });
    }});

    targets.push_back({"mfi_head", 1e-4, [](uint64_t seed) {
        Vae3dConfig cfg;
        cfg.base_channels = 4;
        cfg.latent_dim = 3;
        cfg.codebook_size = 8;
        cfg.temporal_down = 1;
        cfg.n_frames = 2;
        cfg.mfi_hidden = 8;
        cfg.plan = Vae3dConfig::desk(1, 2, 4, 3).plan;
        auto vae = Vae3d<double>::init(cfg, seed);
        ParamStore<double> head;
        for (const char* n : {"mfi.w1", "mfi.b1", "mfi.w2", "mfi.b2"})
            head.add(n, vae.params.get(n));
        return check_with_params(
            head, {rand_t({3, 2, 2, 2}, seed + 1)},
            [&](Tape<double>& t, Binder<double>& p, const std::vector<int>& x) {
                int logits = vae.mfi_logits(t, p, x[0]);
                return masked_nll_rows(t, logits, {1}, {1});
            });
    }});

    targets.push_back({"adln", 1e-4, [](uint64_t seed) {
        auto m = SpectralDenoiser<double>::init(check_cfg(), seed);
        Rng rng(seed + 2);
        m.params.get("blk0.self.adln_in.w2") = TensorD::randn({6, 16}, rng, 0.3);
        m.params.get("blk0.self.adln_in.b2") = TensorD::randn({16}, rng, 0.1);
        ParamStore<double> sub;
        for (const char* n : {"blk0.self.adln_in.w1", "blk0.self.adln_in.b1",
                              "blk0.self.adln_in.w2", "blk0.self.adln_in.b2", "cond.fps_embed"})
            sub.add(n, m.params.get(n));
        auto cfg = m.cfg;
        return check_with_params(sub, {rand_t({3, 8}, seed + 1)},
                                 [cfg](Tape<double>& t, Binder<double>& p, const std::vector<int>& x) {
                                     return sum_sq(t, adln(t, p, "blk0.self.adln_in", x[0],
                                                           CondSignal{3, 8}, cfg));
                                 });
    }});

    targets.push_back({"spectral_self_attention", 1e-4, [](uint64_t seed) {
        auto m = SpectralDenoiser<double>::init(check_cfg(), seed);
        auto cfg = m.cfg;
        ParamStore<double> sub;
        for (const char* n : {"blk0.self.wq", "blk0.self.wk", "blk0.self.wv", "blk0.self.wo",
                              "blk0.self.bq", "blk0.self.bk", "blk0.self.bv", "blk0.self.bo"})
            sub.add(n, m.params.get(n));
        auto& ps = m.params;
        return check_with_params(
            sub, {rand_t({4, 8}, seed + 1)},
            [cfg, &ps](Tape<double>& t, Binder<double>& p, const std::vector<int>& x) {
                // remaining params (adln) enter as constants from the full store
                Binder<double> full(t, ps);
                for (const auto& [name, id] : p.bound()) full.bind_existing(name, id);
                auto res = spectral_self_attention(t, full, "blk0.self", x[0], CondSignal{1, 8},
                                                   {0, 1, 2, 3}, cfg);
                return sum_sq(t, res.out);
            });
    }});

    targets.push_back({"spectral_cross_attention", 1e-4, [](uint64_t seed) {
        auto m = SpectralDenoiser<double>::init(check_cfg(), seed);
        auto cfg = m.cfg;
        ParamStore<double> sub;
        for (const char* n : {"blk0.cross.wq", "blk0.cross.wk", "blk0.cross.wv", "blk0.cross.wo"})
            sub.add(n, m.params.get(n));
        auto& ps = m.params;
        return check_with_params(
            sub, {rand_t({3, 8}, seed + 1), rand_t({2, 8}, seed + 2)},
            [cfg, &ps](Tape<double>& t, Binder<double>& p, const std::vector<int>& x) {
                Binder<double> full(t, ps);
                for (const auto& [name, id] : p.bound()) full.bind_existing(name, id);
                auto res = spectral_cross_attention(t, full, "blk0.cross", x[0], x[1],
                                                    CondSignal{1, 8}, {0, 1, 2}, cfg);
                return sum_sq(t, res.out);
            });
    }});

    targets.push_back({"lora_forward", 1e-4, [](uint64_t seed) {
        ParamStore<double> ps;
        Rng rng(seed);
        ps.add("layer.down", TensorD::randn({6, 2}, rng, 0.5));
        ps.add("layer.up", TensorD::randn({2, 6}, rng, 0.5));
        return check_with_params(ps, {rand_t({3, 6}, seed + 1)},
                                 [](Tape<double>& t, Binder<double>& p, const std::vector<int>& x) {
                                     int base = silu(t, x[0]);
                                     return sum_sq(t, lora_forward(t, p, "layer", x[0], base));
                                 });
    }});

    targets.push_back({"diffusion_loss", 1e-4, [](uint64_t seed) {
        TokenGrid z0, zt;
        z0.K = zt.K = 6;
        z0.indices = TensorI({1, 2, 2});
        z0.indices.data = {0, 3, 5, 2};
        zt.indices = TensorI({1, 2, 2});
        zt.indices.data = {6, 3, 6, 2};
        auto build = [&](Tape<double>& t, const std::vector<int>& in) {
            return diffusion_loss(t, in[0], z0, zt).loss;
        };
        return finite_diff_check({rand_t({4, 6}, seed)}, build);
    }});

    targets.push_back({"denoiser_forward", 1e-4, [](uint64_t seed) {
        auto m = SpectralDenoiser<double>::init(check_cfg(), seed);
        TokenGrid g, z0;
        g.K = z0.K = 6;
        g.indices = TensorI({2, 2, 2});
        g.indices.data = {0, 5, 6, 3, 2, 6, 1, 4};
        z0.indices = TensorI({2, 2, 2});
        z0.indices.data = {0, 5, 2, 3, 2, 1, 1, 4};
        ParamStore<double> sub;
        for (const char* n : {"embed.token", "blk0.self.wq", "blk0.cross.wk", "blk0.ff.w2",
                              "head.w", "text.proj.w"})
            sub.add(n, m.params.get(n));
        auto& full_store = m.params;
        auto model = m;
        return check_with_params(
            sub, {},
            [model, &full_store, g, z0](Tape<double>& t, Binder<double>& p,
                                        const std::vector<int>&) mutable {
                Binder<double> full(t, full_store);
                for (const auto& [name, id] : p.bound()) full.bind_existing(name, id);
                int text = model.encode_caption(t, full, "a red square moves right");
                int logits = model.forward_grid(t, full, g, CondSignal{2, 8}, text);
                return diffusion_loss(t, logits, z0, g).loss;
            });
    }});

    targets.push_back({"vae_loss", 1e-4, [](uint64_t seed) {
        Vae3dConfig cfg;
        cfg.base_channels = 4;
        cfg.latent_dim = 3;
        cfg.codebook_size = 8;
        cfg.temporal_down = 1;
        cfg.n_frames = 1;
        cfg.mfi_hidden = 8;
        cfg.plan = Vae3dConfig::desk(1, 1, 4, 3).plan;
        auto vae = Vae3d<double>::init(cfg, seed);
        TensorD target = rand_t({3, 1, 16, 16}, seed + 1, 0.1);
        for (auto& x : target.data) x = 0.5 + x;
        TensorD z0 = rand_t({3, 1, 1, 1}, seed + 2, 0.5);
        TensorD q0({1, 3}), offset({1, 3});
        double commit0 = 0;
        for (int64_t i = 0; i < 3; ++i) {
            q0[i] = z0[i] >= 0 ? 1.0 : -1.0;
            offset[i] = q0[i] - z0[i];
            commit0 += offset[i] * offset[i];
        }
        // stop-gradient captures frozen at the base point (surrogate semantics)
        auto build = [&](Tape<double>& t, const std::vector<int>& in) {
            Binder<double> bind(t, vae.params, nullptr);
            int rows = vae.latent_to_rows(t, in[0]);
            int qn = t.leaf(q0, false);
            int z_st_rows = add(t, rows, t.leaf(offset, false));
            int commit = sum_sq(t, sub(t, rows, qn));
            int codebook = t.leaf(TensorD({1}, {commit0}), false);
            int z_st = vae.rows_to_latent(t, z_st_rows, {1, 1, 1});
            int decoded = vae.decode(t, bind, z_st);
            int tgt = t.leaf(target, false);
            auto nodes = vae_loss_nodes(t, tgt, decoded, codebook, commit, 0.25, -1);
            return nodes.total;
        };
        return finite_diff_check({z0}, build);
    }});

    return targets;
}

} // namespace

const std::vector<GradTarget>& grad_targets() {
    static const std::vector<GradTarget> targets = make_targets();
    return targets;
}

const GradTarget& find_grad_target(const std::string& name) {
    for (const auto& t : grad_targets())
        if (t.name == name) return t;
    std::string known;
    for (const auto& t : grad_targets()) known += " " + t.name;
    throw ValidationError("unknown gradcheck target '" + name + "'; registered targets:" + known);
}

} // namespace maura
