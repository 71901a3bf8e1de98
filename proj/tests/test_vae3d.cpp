// Copyright 2026 the maura authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "maura/gradcheck.hpp"
#include "maura/vae3d.hpp"

using namespace maura;

namespace {

// Tiny config used for gradient checks: one block per kind, 8x8 frames would
// still be heavy, so the plan is exercised at the smallest legal sizes.
Vae3dConfig tiny_cfg(int64_t temporal_down = 4) {
    Vae3dConfig cfg;
    cfg.base_channels = 4;
    cfg.latent_dim = 3;
    cfg.temporal_down = temporal_down;
    cfg.n_frames = temporal_down == 4 ? 4 : 2;
    cfg.mfi_hidden = 8;
    cfg.codebook_size = 8; // 2^latent_dim
    int64_t td = temporal_down == 4 ? 2 : 1;
    cfg.plan = {
        BlockSpec{BlockSpec::Op::conv3d, 4, {1, 3, 3}, {1, 2, 2}},
        BlockSpec{BlockSpec::Op::mbconv, 4, {3, 3, 3}, {1, 1, 1}},
        BlockSpec{BlockSpec::Op::downsample, 4, {3, 3, 3}, {td, 2, 2}},
        BlockSpec{BlockSpec::Op::inception_fused, 4, {3, 3, 3}, {1, 1, 1}},
        BlockSpec{BlockSpec::Op::downsample, 4, {3, 3, 3}, {td, 2, 2}},
        BlockSpec{BlockSpec::Op::downsample, 4, {3, 3, 3}, {1, 2, 2}},
    };
    return cfg;
}

template <class S>
Tensor<S> rand_t(std::vector<int64_t> sh, uint64_t seed, double sd = 1.0) {
    Rng rng(seed);
    return Tensor<S>::randn(std::move(sh), rng, sd);
}

} // namespace

TEST_CASE("se3d: shape preserved, zero weights gate at one half, zero input stays zero") {
    ParamStore<double> ps;
    ps.add_zeros("se.w1", {4, 1});
    ps.add_zeros("se.b1", {1});
    ps.add_zeros("se.w2", {1, 4});
    ps.add_zeros("se.b2", {4});
    Tape<double> t;
    Binder<double> bind(t, ps);
    TensorD x = rand_t<double>({4, 2, 3, 3}, 1);
    int y = se3d(t, bind, "se", t.leaf(x, false));
    REQUIRE(t.val(y).shape == x.shape);
    for (int64_t i = 0; i < x.numel(); ++i)
        CHECK(t.val(y)[i] == doctest::Approx(0.5 * x[i])); // sigmoid(0) = 0.5

    Tape<double> t2;
    Binder<double> bind2(t2, ps);
    int y0 = se3d(t2, bind2, "se", t2.leaf(TensorD::zeros({4, 2, 3, 3}), false));
    for (double v : t2.val(y0).data) CHECK(v == 0.0);
}

TEST_CASE("se3d gradcheck") {
    ParamStore<double> ps;
    Rng rng(3);
    ps.add("se.w1", TensorD::randn({4, 2}, rng, 0.5));
    ps.add("se.b1", TensorD::randn({2}, rng, 0.1));
    ps.add("se.w2", TensorD::randn({2, 4}, rng, 0.5));
    ps.add("se.b2", TensorD::randn({4}, rng, 0.1));
    std::vector<std::string> names = ps.names();
    std::vector<TensorD> inputs;
    inputs.push_back(rand_t<double>({4, 2, 2, 2}, 5));
    for (const auto& n : names) inputs.push_back(ps.get(n));
    auto build = [&](Tape<double>& t, const std::vector<int>& in) {
        Binder<double> bind(t, ps);
        for (size_t i = 0; i < names.size(); ++i) bind.bind_existing(names[i], in[i + 1]);
        return sum_sq(t, se3d(t, bind, "se", in[0]));
    };
    auto res = finite_diff_check(inputs, build);
    CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("mbconv3d: channel trace, identity at zero weights, dims preserved") {
    ParamStore<double> ps;
    detail::register_mbconv(ps, "mb", 4, 4, 7);
    CHECK(ps.get("mb.c1.w").shape == std::vector<int64_t>{4, 4, 3, 3, 3});
    CHECK(ps.get("mb.exp.w").shape == std::vector<int64_t>{16, 4, 1, 1, 1});  // C -> 4C
    CHECK(ps.get("mb.dw.w").shape == std::vector<int64_t>{16, 1, 3, 3, 3});   // 4C depthwise
    CHECK(ps.get("mb.proj.w").shape == std::vector<int64_t>{4, 16, 1, 1, 1}); // 4C -> C

    // all weights zero with matching channels: residual makes it the identity
    for (auto& [name, p] : ps.params) std::fill(p.data.begin(), p.data.end(), 0.0);
    Tape<double> t;
    Binder<double> bind(t, ps);
    TensorD x = rand_t<double>({4, 2, 4, 4}, 8);
    int y = mbconv3d(t, bind, "mb", t.leaf(x, false));
    REQUIRE(t.val(y).shape == x.shape);
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(t.val(y)[i] == x[i]);
}

TEST_CASE("mbconv3d gradcheck (input and all parameters)") {
    ParamStore<double> ps;
    detail::register_mbconv(ps, "mb", 3, 3, 11);
    std::vector<std::string> names = ps.names();
    std::vector<TensorD> inputs;
    inputs.push_back(rand_t<double>({3, 2, 3, 3}, 12, 0.5));
    for (const auto& n : names) inputs.push_back(ps.get(n));
    auto build = [&](Tape<double>& t, const std::vector<int>& in) {
        Binder<double> bind(t, ps);
        for (size_t i = 0; i < names.size(); ++i) bind.bind_existing(names[i], in[i + 1]);
        return sum_sq(t, mbconv3d(t, bind, "mb", in[0]));
    };
    auto res = finite_diff_check(inputs, build);
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("inception_fused gradcheck (input and all parameters)") {
    ParamStore<double> ps;
    detail::register_inception(ps, "inc", 3, 3, 17);
    std::vector<std::string> names = ps.names();
    std::vector<TensorD> inputs;
    inputs.push_back(rand_t<double>({3, 2, 3, 3}, 18, 0.5));
    for (const auto& n : names) inputs.push_back(ps.get(n));
    auto build = [&](Tape<double>& t, const std::vector<int>& in) {
        Binder<double> bind(t, ps);
        for (size_t i = 0; i < names.size(); ++i) bind.bind_existing(names[i], in[i + 1]);
        return sum_sq(t, inception_fused(t, bind, "inc", in[0]));
    };
    auto res = finite_diff_check(inputs, build);
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("inception_fused: zero weights give zero output; shape preserved") {
    ParamStore<double> ps;
    detail::register_inception(ps, "inc", 3, 3, 13);
    CHECK(ps.get("inc.fuse.w").shape == std::vector<int64_t>{3, 9, 1, 1, 1}); // 3C -> C
    Tape<double> t;
    Binder<double> bind(t, ps);
    TensorD x = rand_t<double>({3, 2, 4, 4}, 14);
    int y = inception_fused(t, bind, "inc", t.leaf(x, false));
    REQUIRE(t.val(y).shape == x.shape);

    for (auto& [name, p] : ps.params) std::fill(p.data.begin(), p.data.end(), 0.0);
    Tape<double> t2;
    Binder<double> bind2(t2, ps);
    int y2 = inception_fused(t2, bind2, "inc", t2.leaf(x, false));
    for (double v : t2.val(y2).data) CHECK(v == 0.0);
}

TEST_CASE("encode/decode shape law across a config sweep") {
    for (int64_t ft : {1, 4})
        for (int64_t size : {32, 48})
            for (int64_t n : {4, 8}) {
                if (n % ft) continue;
                Vae3dConfig cfg = tiny_cfg(ft);
                cfg.n_frames = n;
                auto vae = Vae3d<float>::init(cfg, 21);
                Tape<float> t;
                Binder<float> bind(t, vae.params);
                int x = t.leaf(rand_t<float>({3, n, size, size}, 22, 0.2), false);
                int z = vae.encode(t, bind, x);
                CAPTURE(ft);
                CAPTURE(size);
                CAPTURE(n);
                REQUIRE(t.val(z).shape ==
                        std::vector<int64_t>{cfg.latent_dim, n / ft, size / 16, size / 16});
                int back = vae.decode(t, bind, z);
                REQUIRE(t.val(back).shape == std::vector<int64_t>{3, n, size, size});
            }
}

TEST_CASE("desk config shape arithmetic: 8 frames, 32x32, d=8") {
    auto cfg = Vae3dConfig::desk(4, 8);
    auto vae = Vae3d<float>::init(cfg, 31);
    Tape<float> t;
    Binder<float> bind(t, vae.params);
    int x = t.leaf(rand_t<float>({3, 8, 32, 32}, 32, 0.2), false);
    int z = vae.encode(t, bind, x);
    CHECK(t.val(z).shape == std::vector<int64_t>{8, 2, 2, 2});
    int back = vae.decode(t, bind, z);
    CHECK(t.val(back).shape == std::vector<int64_t>{3, 8, 32, 32});

    auto cfg1 = Vae3dConfig::desk(1, 8);
    auto vae1 = Vae3d<float>::init(cfg1, 31);
    Tape<float> t1;
    Binder<float> bind1(t1, vae1.params);
    int z1 = vae1.encode(t1, bind1, t1.leaf(rand_t<float>({3, 8, 32, 32}, 32, 0.2), false));
    CHECK(t1.val(z1).shape == std::vector<int64_t>{8, 8, 2, 2});
}

TEST_CASE("encode determinism and precondition errors") {
    auto cfg = tiny_cfg(4);
    auto vae = Vae3d<float>::init(cfg, 41);
    TensorF x = rand_t<float>({3, 4, 32, 32}, 42, 0.2);
    auto run = [&]() {
        Tape<float> t;
        Binder<float> bind(t, vae.params);
        return t.val(vae.encode(t, bind, t.leaf(x, false))).data;
    };
    CHECK(run() == run());

    Tape<float> t;
    Binder<float> bind(t, vae.params);
    CHECK_THROWS_AS(vae.encode(t, bind, t.leaf(rand_t<float>({3, 5, 32, 32}, 1), false)),
                    ValidationError); // N not divisible by f_t
    CHECK_THROWS_AS(vae.encode(t, bind, t.leaf(rand_t<float>({3, 4, 24, 24}, 1), false)),
                    ValidationError); // H not divisible by 16
}

TEST_CASE("decode clamps to [0,1]") {
    auto cfg = tiny_cfg(4);
    auto vae = Vae3d<float>::init(cfg, 51);
    Tape<float> t;
    Binder<float> bind(t, vae.params);
    int z = t.leaf(rand_t<float>({3, 1, 2, 2}, 52, 10.0), false);
    int y = vae.decode(t, bind, z);
    for (float v : t.val(y).data) {
        REQUIRE(v >= 0.f);
        REQUIRE(v <= 1.f);
    }
}

TEST_CASE("mfi head: sums to one, uniform at zero weights") {
    auto cfg = tiny_cfg(4);
    auto vae = Vae3d<double>::init(cfg, 61);
    Tape<double> t;
    Binder<double> bind(t, vae.params);
    int z = t.leaf(rand_t<double>({3, 1, 2, 2}, 62), false);
    int logits = vae.mfi_logits(t, bind, z);
    REQUIRE(t.val(logits).shape == std::vector<int64_t>{1, cfg.n_frames});
    int probs = softmax_rows(t, logits);
    double sum = 0;
    for (double v : t.val(probs).data) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));

    // zero-weight MLP -> uniform
    for (const char* n : {"mfi.w1", "mfi.b1", "mfi.w2", "mfi.b2"})
        std::fill(vae.params.get(n).data.begin(), vae.params.get(n).data.end(), 0.0);
    Tape<double> t2;
    Binder<double> bind2(t2, vae.params);
    int probs2 = softmax_rows(t2, vae.mfi_logits(t2, bind2, t2.leaf(rand_t<double>({3, 1, 2, 2}, 63), false)));
    for (double v : t2.val(probs2).data)
        CHECK(v == doctest::Approx(1.0 / static_cast<double>(cfg.n_frames)));
}

TEST_CASE("vae_loss_report: zero at perfect reconstruction, -log on mfi, decomposition") {
    TensorF v = rand_t<float>({2, 3, 4, 4}, 71, 0.2);
    TensorF z = rand_t<float>({4, 3}, 72);
    auto r0 = vae_loss_report(v, v, z, z, 0.25, 1.0);
    CHECK(r0.total == doctest::Approx(0.0));

    auto r1 = vae_loss_report(v, v, z, z, 0.25, 1.0 / std::exp(1.0));
    CHECK(r1.mfi == doctest::Approx(1.0));

    TensorF vh = rand_t<float>({2, 3, 4, 4}, 73, 0.2);
    TensorF zq = rand_t<float>({4, 3}, 74);
    auto r = vae_loss_report(v, vh, z, zq, 0.25, 0.5);
    CHECK(r.total == doctest::Approx(r.rec + r.codebook + 0.25 * r.commit + r.mfi));
    CHECK(r.rec >= 0);
    CHECK(r.codebook >= 0);
    CHECK(r.commit >= 0);
    CHECK(r.mfi >= 0);
    CHECK_THROWS_AS(vae_loss_report(v, vh, z, zq, 0.25, 0.0), ValidationError);
    CHECK_THROWS_AS(vae_loss_report(v, vh, z, zq, 0.25, -0.5), ValidationError);
}

TEST_CASE("vae loss gradcheck w.r.t. encoder output through quantize+decode") {
    auto cfg = tiny_cfg(4);
    auto vae = Vae3d<double>::init(cfg, 81);
    TensorD target = rand_t<double>({3, 4, 16, 16}, 82, 0.2);
    for (auto& x : target.data) x = std::min(0.9, std::max(0.1, 0.5 + 0.2 * x));
    TensorD z0 = rand_t<double>({3, 1, 1, 1}, 83, 0.5);
    // Freeze the quantization at the base point: the straight-through
    // estimator is by definition the gradient of this surrogate.
    TensorD q0({3, 1});
    for (int64_t i = 0; i < 3; ++i) q0[i] = z0[i] >= 0 ? 1.0 : -1.0;
    TensorD offset({1, 3});
    double commit0 = 0;
    for (int64_t i = 0; i < 3; ++i) {
        offset[i] = q0[i] - z0[i];
        commit0 += offset[i] * offset[i];
    }
    // Surrogate semantics: every stop-gradient capture is frozen at the base
    // point (the straight-through offset and the codebook term's value), so
    // plain finite differences of the surrogate equal the analytic gradient
    // of the real graph.
    auto build = [&](Tape<double>& t, const std::vector<int>& in) {
        Binder<double> bind(t, vae.params, nullptr);
        int rows = vae.latent_to_rows(t, in[0]); // (V=1, d=3)
        int qn = t.leaf(TensorD({1, 3}, {q0[0], q0[1], q0[2]}), false);
        int z_st_rows = add(t, rows, t.leaf(offset, false));
        int commit = sum_sq(t, sub(t, rows, qn));
        int codebook = t.leaf(TensorD({1}, {commit0}), false);
        int z_st = vae.rows_to_latent(t, z_st_rows, {1, 1, 1});
        int decoded = vae.decode(t, bind, z_st);
        int tgt = t.leaf(target, false);
        auto nodes = vae_loss_nodes(t, tgt, decoded, codebook, commit, 0.25, -1);
        return nodes.total;
    };
    auto res = finite_diff_check({z0}, build);
    CHECK(res.max_rel_err < 1e-4);

    // The real quantize graph produces the same gradient at the base point.
    TensorD surrogate_grad, real_grad;
    {
        Tape<double> t;
        int zn = t.leaf(z0, true);
        t.backward(build(t, {zn}));
        surrogate_grad = t.grad(zn);
    }
    {
        Tape<double> t;
        Binder<double> bind(t, vae.params, nullptr);
        int zn = t.leaf(z0, true);
        int rows = vae.latent_to_rows(t, zn);
        auto q = lfq_quantize(t, rows);
        int z_st = vae.rows_to_latent(t, q.z_st, {1, 1, 1});
        int decoded = vae.decode(t, bind, z_st);
        int tgt = t.leaf(target, false);
        auto nodes = vae_loss_nodes(t, tgt, decoded, q.codebook_loss, q.commit_loss, 0.25, -1);
        t.backward(nodes.total);
        real_grad = t.grad(zn);
    }
    for (int64_t i = 0; i < 3; ++i)
        CHECK(real_grad[i] == doctest::Approx(surrogate_grad[i]).epsilon(1e-10));
}

TEST_CASE("loss decomposition on tape is exact") {
    auto cfg = tiny_cfg(4);
    auto vae = Vae3d<double>::init(cfg, 91);
    Tape<double> t;
    Binder<double> bind(t, vae.params, nullptr);
    int x = t.leaf(rand_t<double>({3, 4, 16, 16}, 92, 0.2), false);
    int z = vae.encode(t, bind, x);
    int rows = vae.latent_to_rows(t, z);
    auto q = lfq_quantize(t, rows);
    int z_st = vae.rows_to_latent(t, q.z_st, {1, 1, 1});
    int decoded = vae.decode(t, bind, z_st);
    auto nodes = vae_loss_nodes(t, x, decoded, q.codebook_loss, q.commit_loss, 0.25, -1);
    double expect = t.val(nodes.rec)[0] + t.val(nodes.codebook)[0] +
                    0.25 * t.val(nodes.commit)[0] + t.val(nodes.mfi)[0];
    CHECK(t.val(nodes.total)[0] == expect); // same summation order, bit-exact
}
