// Copyright 2026 the maura authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "maura/gradcheck.hpp"
#include "maura/quantize.hpp"

using namespace maura;

TEST_CASE("vq nearest neighbour basics and tie rule") {
    TensorD cb({2, 2}, {0, 0, 1, 1});
    TensorD z({3, 2}, {0.2, 0.1, /**/ 1.0, 1.0, /**/ 0.5, 0.5});
    TensorI idx = nearest_indices(z, cb);
    CHECK(idx[0] == 0); // 0.05 < 1.45
    CHECK(idx[1] == 1); // exact codeword
    CHECK(idx[2] == 0); // equidistant -> lowest index
}

TEST_CASE("vq commit loss vanishes at exact codeword") {
    Tape<double> t;
    int cb = t.leaf(TensorD({2, 2}, {0, 0, 1, 1}), true);
    int z = t.leaf(TensorD({1, 2}, {1.0, 1.0}), true);
    auto q = vq_quantize(t, z, cb);
    CHECK(t.val(q.commit_loss)[0] == doctest::Approx(0.0));
    CHECK(t.val(q.codebook_loss)[0] == doctest::Approx(0.0));
}

TEST_CASE("vq matches exhaustive oracle on 1000 random instances") {
    Rng rng(2024);
    for (int trial = 0; trial < 1000; ++trial) {
        int64_t k = rng.uniform_int(2, 64);
        int64_t d = rng.uniform_int(1, 8);
        TensorD cb = TensorD::randn({k, d}, rng);
        TensorD z = TensorD::randn({4, d}, rng);
        TensorI got = nearest_indices(z, cb);
        for (int64_t i = 0; i < 4; ++i) {
            // independent oracle: scan all pairs with explicit loops
            double best = 1e300;
            int32_t arg = -1;
            for (int64_t j = 0; j < k; ++j) {
                double dist = 0;
                for (int64_t c = 0; c < d; ++c) {
                    double diff = z.at(i, c) - cb.at(j, c);
                    dist += diff * diff;
                }
                if (dist < best) {
                    best = dist;
                    arg = static_cast<int32_t>(j);
                }
            }
            REQUIRE(got[i] == arg);
        }
    }
}

TEST_CASE("vq never increases distance vs any codeword") {
    Rng rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        int64_t k = rng.uniform_int(2, 16);
        TensorD cb = TensorD::randn({k, 4}, rng);
        TensorD z = TensorD::randn({1, 4}, rng);
        TensorI idx = nearest_indices(z, cb);
        double chosen = 0;
        for (int64_t c = 0; c < 4; ++c) {
            double d = z.at(0, c) - cb.at(idx[0], c);
            chosen += d * d;
        }
        for (int64_t j = 0; j < k; ++j) {
            double dist = 0;
            for (int64_t c = 0; c < 4; ++c) {
                double d = z.at(0, c) - cb.at(j, c);
                dist += d * d;
            }
            REQUIRE(chosen <= dist + 1e-12);
        }
    }
}

TEST_CASE("lfq sign rule, zero rule and index packing") {
    TensorD z({2, 2}, {0.3, -0.7, /**/ 0.0, 0.0});
    TensorI idx = lfq_indices(z);
    CHECK(idx[0] == 1); // bit0=1 (0.3>=0), bit1=0
    CHECK(idx[1] == 3); // zero maps to +1 on both dims

    double q0[2];
    lfq_codeword<double>(idx[0], 2, q0);
    CHECK(q0[0] == 1.0);
    CHECK(q0[1] == -1.0);
}

TEST_CASE("lfq d=8 reaches exactly 256 distinct codes") {
    std::set<int32_t> seen;
    // enumerate all sign patterns explicitly
    for (int pattern = 0; pattern < 256; ++pattern) {
        TensorD z({1, 8});
        for (int j = 0; j < 8; ++j) z.at(0, j) = (pattern >> j) & 1 ? 0.5 : -0.5;
        seen.insert(lfq_indices(z)[0]);
    }
    CHECK(seen.size() == 256);
    CHECK(*seen.begin() == 0);
    CHECK(*seen.rbegin() == 255);
}

TEST_CASE("lfq is idempotent") {
    Rng rng(5);
    Tape<double> t;
    int z = t.leaf(TensorD::randn({6, 4}, rng), false);
    auto q1 = lfq_quantize(t, z);
    auto q2 = lfq_quantize(t, q1.z_q);
    CHECK(t.val(q2.z_q).data == t.val(q1.z_q).data);
    CHECK(q2.token_rows.data == q1.token_rows.data);
}

TEST_CASE("codebook and commit losses are numerically equal before weighting") {
    Rng rng(6);
    Tape<double> t;
    int cb = t.leaf(TensorD::randn({8, 3}, rng), true);
    int z = t.leaf(TensorD::randn({5, 3}, rng), true);
    auto q = vq_quantize(t, z, cb);
    CHECK(t.val(q.codebook_loss)[0] == doctest::Approx(t.val(q.commit_loss)[0]));
}

TEST_CASE("stop-gradient split: codebook term moves codebook, commit term moves encoder") {
    Rng rng(7);
    TensorD cb_v = TensorD::randn({8, 3}, rng);
    TensorD z_v = TensorD::randn({5, 3}, rng);

    Tape<double> t;
    int cb = t.leaf(cb_v, true);
    int z = t.leaf(z_v, true);
    auto q = vq_quantize(t, z, cb);
    t.backward(q.codebook_loss);
    double cb_grad = 0, z_grad = 0;
    for (double g : t.grad(cb).data) cb_grad += std::abs(g);
    for (double g : t.grad(z).data) z_grad += std::abs(g);
    CHECK(cb_grad > 0.0);
    CHECK(z_grad == 0.0);

    Tape<double> t2;
    int cb2 = t2.leaf(cb_v, true);
    int z2 = t2.leaf(z_v, true);
    auto q2 = vq_quantize(t2, z2, cb2);
    t2.backward(q2.commit_loss);
    cb_grad = z_grad = 0;
    for (double g : t2.grad(cb2).data) cb_grad += std::abs(g);
    for (double g : t2.grad(z2).data) z_grad += std::abs(g);
    CHECK(cb_grad == 0.0);
    CHECK(z_grad > 0.0);
}

TEST_CASE("straight-through gradient through a decoder-style loss") {
    Rng rng(8);
    TensorD z_v = TensorD::randn({4, 3}, rng);
    TensorD w_v = TensorD::randn({3, 3}, rng);
    // The estimator's gradient equals the true gradient of the surrogate
    // f(z) = loss(z + (q0 - z0)) with the quantization offset frozen at the
    // base point. Analytic side runs the real straight_through graph.
    TensorD q_v({4, 3});
    for (int64_t i = 0; i < 12; ++i) q_v[i] = z_v[i] >= 0 ? 1.0 : -1.0;
    TensorD analytic;
    {
        Tape<double> t;
        int z = t.leaf(z_v, true);
        int zq = t.leaf(q_v, false);
        int st = straight_through(t, z, zq);
        int w = t.leaf(w_v, false);
        t.backward(sum_sq(t, matmul(t, st, w)));
        analytic = t.grad(z);
    }
    auto surrogate = [&](Tape<double>& t, const std::vector<int>& in) {
        TensorD offset({4, 3});
        for (int64_t i = 0; i < 12; ++i) offset[i] = q_v[i] - z_v[i];
        int st = add(t, in[0], t.leaf(offset, false));
        int w = t.leaf(w_v, false);
        return sum_sq(t, matmul(t, st, w));
    };
    auto res = finite_diff_check({z_v}, surrogate);
    // finite_diff_check verified the surrogate against its own analytic
    // gradient; now confirm the estimator produced the same vector.
    CHECK(res.max_rel_err < 1e-6);
    Tape<double> ts;
    int z2 = ts.leaf(z_v, true);
    ts.backward(surrogate(ts, {z2}));
    for (int64_t i = 0; i < 12; ++i)
        CHECK(analytic[i] == doctest::Approx(ts.grad(z2)[i]).epsilon(1e-10));
}

TEST_CASE("lookup rejects MASK and out-of-range; round-trips tokens") {
    CodebookSpec spec = CodebookSpec::lfq(3);
    TensorI tokens({4});
    tokens.data = {0, 7, 3, 5};
    TensorD rows = lookup_rows<double>(tokens, spec, nullptr);
    CHECK(rows.at(0, 0) == -1.0);
    CHECK(rows.at(1, 2) == 1.0);
    TensorI re = lfq_indices(rows);
    CHECK(re.data == tokens.data);

    TensorI masked({1});
    masked.data = {8}; // MASK_ID for K=8
    CHECK_THROWS_AS(lookup_rows<double>(masked, spec, nullptr), ValidationError);
    TensorI bad({1});
    bad.data = {-1};
    CHECK_THROWS_AS(lookup_rows<double>(bad, spec, nullptr), ValidationError);

    // vq: all-zero tokens give codebook row 0 everywhere
    CodebookSpec vq = CodebookSpec::vq(4, 2);
    TensorD vecs({4, 2}, {9, 9, 1, 2, 3, 4, 5, 6});
    TensorI zeros({3});
    TensorD out = lookup_rows(zeros, vq, &vecs);
    for (int64_t i = 0; i < 3; ++i) {
        CHECK(out.at(i, 0) == 9.0);
        CHECK(out.at(i, 1) == 9.0);
    }
}

TEST_CASE("codebook usage: uniform, degenerate, mixed") {
    std::vector<int32_t> uniform;
    for (int32_t i = 0; i < 16; ++i) uniform.push_back(i);
    auto u = codebook_usage(uniform, 16);
    CHECK(u.fraction_used == doctest::Approx(1.0));
    CHECK(u.perplexity == doctest::Approx(16.0));

    auto single = codebook_usage(std::vector<int32_t>(9, 3), 4);
    CHECK(single.fraction_used == doctest::Approx(0.25));
    CHECK(single.perplexity == doctest::Approx(1.0));

    auto mixed = codebook_usage({0, 0, 1, 1}, 4);
    CHECK(mixed.fraction_used == doctest::Approx(0.5));
    CHECK(mixed.perplexity == doctest::Approx(2.0));

    CHECK_THROWS_AS(codebook_usage({}, 4), ValidationError);
}
