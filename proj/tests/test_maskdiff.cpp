// Copyright 2026 the maura authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "maura/gradcheck.hpp"
#include "maura/maskdiff.hpp"

using namespace maura;

namespace {

TokenGrid make_grid(std::array<int64_t, 3> sh, int64_t K, uint64_t seed) {
    TokenGrid g;
    g.K = K;
    g.indices = TensorI({sh[0], sh[1], sh[2]});
    Rng rng(seed);
    for (auto& v : g.indices.data) v = static_cast<int32_t>(rng.uniform_int(0, K - 1));
    return g;
}

} // namespace

TEST_CASE("schedule: endpoints, monotonicity, gamma by hand for linear T=4") {
    for (auto kind : {NoiseSchedule::Kind::linear, NoiseSchedule::Kind::cosine}) {
        auto s = build_schedule(30, kind);
        CHECK(s.mbar.front() == 0.0);
        CHECK(s.mbar.back() == 1.0);
        for (int64_t t = 1; t <= 30; ++t) REQUIRE(s.mbar[t] > s.mbar[t - 1]);
    }
    auto s4 = build_schedule(4, NoiseSchedule::Kind::linear);
    CHECK(s4.gamma[1] == doctest::Approx(1.0 / 4.0));
    CHECK(s4.gamma[2] == doctest::Approx(1.0 / 3.0));
    CHECK(s4.gamma[3] == doctest::Approx(1.0 / 2.0));
    CHECK(s4.gamma[4] == doctest::Approx(1.0));
    CHECK_THROWS_AS(build_schedule(0, NoiseSchedule::Kind::linear), ValidationError);
}

TEST_CASE("forward_corrupt: t=0 identity, t=T fully masked, out-of-range rejected") {
    auto s = build_schedule(30, NoiseSchedule::Kind::linear);
    auto z0 = make_grid({2, 2, 2}, 16, 1);
    auto same = forward_corrupt(z0, 0, s, 99);
    CHECK(same.indices.data == z0.indices.data);
    auto full = forward_corrupt(z0, 30, s, 99);
    for (int32_t v : full.indices.data) CHECK(v == 16);
    CHECK_THROWS_AS(forward_corrupt(z0, 31, s, 99), ValidationError);
    CHECK_THROWS_AS(forward_corrupt(z0, -1, s, 99), ValidationError);
    CHECK_THROWS_AS(forward_corrupt(full, 5, s, 99), ValidationError); // already masked
}

TEST_CASE("forward_corrupt marginals within 3 sigma at T/4, T/2, 3T/4") {
    auto s = build_schedule(32, NoiseSchedule::Kind::linear);
    auto z0 = make_grid({10, 100, 10}, 8, 2); // 10,000 positions
    const int64_t n = z0.count();
    for (int64_t t : {8, 16, 24}) {
        auto zt = forward_corrupt(z0, t, s, 123);
        int64_t masked = 0;
        for (int32_t v : zt.indices.data) masked += v == 8;
        double p = s.mbar[static_cast<size_t>(t)];
        double sigma = std::sqrt(p * (1 - p) / static_cast<double>(n));
        double freq = static_cast<double>(masked) / static_cast<double>(n);
        CAPTURE(t);
        CHECK(std::abs(freq - p) <= 3 * sigma);
    }
}

TEST_CASE("corruption is monotone under coupled seeds") {
    auto s = build_schedule(30, NoiseSchedule::Kind::cosine);
    auto z0 = make_grid({4, 8, 8}, 32, 3);
    for (int64_t t = 1; t <= 30; ++t) {
        auto prev = forward_corrupt(z0, t - 1, s, 777);
        auto cur = forward_corrupt(z0, t, s, 777);
        for (int64_t p = 0; p < z0.count(); ++p)
            if (prev.indices[p] == 32) REQUIRE(cur.indices[p] == 32);
    }
}

TEST_CASE("gamma/mbar composition: stepwise chain reproduces the marginal") {
    auto s = build_schedule(20, NoiseSchedule::Kind::cosine);
    const int64_t n = 10000;
    for (int64_t t_star : {5, 10, 20}) {
        Rng rng(static_cast<uint64_t>(4000 + t_star));
        int64_t masked = 0;
        for (int64_t p = 0; p < n; ++p) {
            bool is_masked = false;
            for (int64_t t = 1; t <= t_star && !is_masked; ++t)
                if (rng.uniform() < s.gamma[static_cast<size_t>(t)]) is_masked = true;
            masked += is_masked;
        }
        double p = s.mbar[static_cast<size_t>(t_star)];
        double sigma = std::sqrt(p * (1 - p) / static_cast<double>(n));
        if (p == 1.0) {
            CHECK(masked == n);
        } else {
            double freq = static_cast<double>(masked) / static_cast<double>(n);
            CAPTURE(t_star);
            CHECK(std::abs(freq - p) <= 3 * sigma);
        }
    }
}

TEST_CASE("diffusion loss: perfect prediction, uniform logits, vacuous case") {
    const int64_t K = 256;
    TokenGrid z0 = make_grid({1, 2, 2}, K, 5);
    TokenGrid zt = z0;
    for (auto& v : zt.indices.data) v = static_cast<int32_t>(K); // all masked

    Tape<double> t;
    // near one-hot logits at the true indices
    TensorD logits({4, K});
    for (int64_t p = 0; p < 4; ++p) logits.at(p, z0.indices[p]) = 50.0;
    auto l = diffusion_loss(t, t.leaf(logits, false), z0, zt);
    CHECK(!l.no_masked);
    CHECK(t.val(l.loss)[0] == doctest::Approx(0.0).epsilon(1e-6));

    auto lu = diffusion_loss(t, t.leaf(TensorD::zeros({4, K}), false), z0, zt);
    CHECK(t.val(lu.loss)[0] == doctest::Approx(std::log(256.0)));

    auto lv = diffusion_loss(t, t.leaf(TensorD::zeros({4, K}), false), z0, z0);
    CHECK(lv.no_masked);
    CHECK(t.val(lv.loss)[0] == 0.0);
}

TEST_CASE("diffusion loss gradcheck") {
    TokenGrid z0 = make_grid({1, 2, 2}, 6, 7);
    TokenGrid zt = z0;
    zt.indices[0] = 6;
    zt.indices[2] = 6;
    Rng rng(8);
    auto build = [&](Tape<double>& t, const std::vector<int>& in) {
        return diffusion_loss(t, in[0], z0, zt).loss;
    };
    auto res = finite_diff_check({TensorD::randn({4, 6}, rng)}, build);
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("cfg_combine endpoints") {
    Rng rng(9);
    TensorF c = TensorF::randn({3, 4}, rng), u = TensorF::randn({3, 4}, rng);
    auto at1 = cfg_combine(c, u, 1.0);
    CHECK(at1.data == c.data);
    auto at0 = cfg_combine(c, u, 0.0);
    CHECK(at0.data == u.data);
    auto at10 = cfg_combine(c, u, 10.0);
    for (int64_t i = 0; i < 12; ++i)
        CHECK(at10[i] == doctest::Approx(u[i] + 10.0 * (c[i] - u[i])));
}

TEST_CASE("oracle denoiser: reverse_sample recovers the target for steps 1, 5, 30") {
    const int64_t K = 16;
    TokenGrid target = make_grid({2, 2, 2}, K, 10);
    DenoiserFn oracle = [&](const TokenGrid& zt, int64_t) {
        TensorF logits({zt.count(), K});
        for (int64_t p = 0; p < zt.count(); ++p) logits.at(p, target.indices[p]) = 30.f;
        return logits;
    };
    auto schedule = build_schedule(30, NoiseSchedule::Kind::linear);
    for (int64_t steps : {int64_t(1), int64_t(5), int64_t(30)}) {
        SampleOptions opt;
        opt.steps = steps;
        opt.seed = 42;
        auto out = reverse_sample(oracle, nullptr, schedule, {2, 2, 2}, K, opt);
        CAPTURE(steps);
        CHECK(out.indices.data == target.indices.data);
        CHECK(!out.has_mask());
    }
}

TEST_CASE("reverse_sample is deterministic and commit-once") {
    const int64_t K = 8;
    Rng wrng(11);
    TensorF w = TensorF::randn({64, K}, wrng); // arbitrary fixed logits per position
    DenoiserFn noisy = [&](const TokenGrid& zt, int64_t t) {
        TensorF logits({zt.count(), K});
        for (int64_t p = 0; p < zt.count(); ++p)
            for (int64_t k = 0; k < K; ++k)
                logits.at(p, k) = w.at(p % 64, k) + 0.01f * static_cast<float>(t);
        return logits;
    };
    auto schedule = build_schedule(30, NoiseSchedule::Kind::cosine);

    SampleOptions opt;
    opt.steps = 10;
    opt.seed = 1234;
    opt.temperature = 1.0;
    std::vector<TensorI> trace;
    opt.observer = [&](int64_t, const TokenGrid& g) { trace.push_back(g.indices); };
    auto a = reverse_sample(noisy, nullptr, schedule, {4, 4, 4}, K, opt);
    auto b = reverse_sample(noisy, nullptr, schedule, {4, 4, 4}, K, opt);
    CHECK(a.indices.data == b.indices.data);

    // commit-once: once a position leaves MASK it never changes
    for (size_t s = 1; s < trace.size() / 2; ++s)
        for (int64_t p = 0; p < 64; ++p)
            if (trace[s - 1][p] != K) REQUIRE(trace[s][p] == trace[s - 1][p]);
}

TEST_CASE("reverse_sample applies CFG toward the conditional branch") {
    const int64_t K = 4;
    TokenGrid cond_target = make_grid({1, 2, 2}, K, 12);
    TokenGrid uncond_target = make_grid({1, 2, 2}, K, 13);
    auto one_hot = [&](const TokenGrid& tgt) {
        return [&tgt](const TokenGrid& zt, int64_t) {
            TensorF logits({zt.count(), 4});
            for (int64_t p = 0; p < zt.count(); ++p) logits.at(p, tgt.indices[p]) = 5.f;
            return logits;
        };
    };
    SampleOptions opt;
    opt.steps = 4;
    opt.seed = 7;
    opt.cfg_scale = 10.0;
    opt.argmax = true;
    auto schedule = build_schedule(30, NoiseSchedule::Kind::linear);
    auto out = reverse_sample(one_hot(cond_target), one_hot(uncond_target), schedule, {1, 2, 2}, K, opt);
    CHECK(out.indices.data == cond_target.indices.data);
}

TEST_CASE("reverse_sample rejects bad denoiser output shape") {
    DenoiserFn bad = [](const TokenGrid& zt, int64_t) { return TensorF({zt.count(), 3}); };
    auto schedule = build_schedule(10, NoiseSchedule::Kind::linear);
    SampleOptions opt;
    opt.steps = 2;
    CHECK_THROWS_AS(reverse_sample(bad, nullptr, schedule, {1, 2, 2}, 5, opt), ValidationError);
}
