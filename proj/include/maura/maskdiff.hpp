// Copyright 2026 the maura authors
// SPDX-License-Identifier: Apache-2.0
//
// Absorbing mask-token discrete diffusion: forward corruption toward an
// all-MASK grid, the masked-token objective, classifier-free guidance, and
// iterative confidence-based reverse sampling with commit-once decoding.

#pragma once

#include <algorithm>
#include <functional>
#include <vector>

#include "maura/quantize.hpp"
#include "maura/rng.hpp"
#include "maura/tape.hpp"

namespace maura {

struct NoiseSchedule {
    enum class Kind { linear, cosine };
    int64_t T = 30;
    Kind kind = Kind::linear;
    std::vector<double> mbar;  // cumulative mask probability, size T+1
    std::vector<double> gamma; // per-step conditional, gamma[t] for t in [1,T]

    void validate() const {
        require(T >= 1, "schedule needs T >= 1");
        require(static_cast<int64_t>(mbar.size()) == T + 1, "mbar size");
        require(mbar.front() == 0.0 && mbar.back() == 1.0, "mbar endpoints must be 0 and 1");
        for (int64_t t = 1; t <= T; ++t) {
            require(mbar[static_cast<size_t>(t)] > mbar[static_cast<size_t>(t - 1)],
                    "mbar must be strictly increasing");
            double g = gamma[static_cast<size_t>(t)];
            require(g > 0.0 && g <= 1.0, "gamma must lie in (0,1]");
        }
    }
};

inline NoiseSchedule build_schedule(int64_t T, NoiseSchedule::Kind kind) {
    require(T >= 1, "schedule needs T >= 1");
    constexpr double kPi = 3.14159265358979323846;
    NoiseSchedule s;
    s.T = T;
    s.kind = kind;
    s.mbar.resize(static_cast<size_t>(T) + 1);
    s.gamma.assign(static_cast<size_t>(T) + 1, 0.0);
    for (int64_t t = 0; t <= T; ++t) {
        double x = static_cast<double>(t) / static_cast<double>(T);
        double m = kind == NoiseSchedule::Kind::linear
                       ? x
                       : std::sin(kPi * x / 2.0) * std::sin(kPi * x / 2.0);
        s.mbar[static_cast<size_t>(t)] = m;
    }
    s.mbar.back() = 1.0; // exact terminal state
    for (int64_t t = 1; t <= T; ++t)
        s.gamma[static_cast<size_t>(t)] =
            (s.mbar[static_cast<size_t>(t)] - s.mbar[static_cast<size_t>(t - 1)]) /
            (1.0 - s.mbar[static_cast<size_t>(t - 1)]);
    s.validate();
    return s;
}

inline NoiseSchedule::Kind schedule_kind_from_name(const std::string& name) {
    if (name == "linear") return NoiseSchedule::Kind::linear;
    if (name == "cosine") return NoiseSchedule::Kind::cosine;
    throw ValidationError("unknown schedule shape: " + name);
}

inline std::string schedule_kind_name(NoiseSchedule::Kind k) {
    return k == NoiseSchedule::Kind::linear ? "linear" : "cosine";
}

// One uniform per position keyed by (seed, position): positions masked at t
// stay masked at every t' > t under the same seed.
inline double position_uniform(uint64_t seed, int64_t position) {
    uint64_t h = splitmix64(mix_seed(seed, static_cast<uint64_t>(position)));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

// Samples the t-step marginal directly: each position becomes MASK with
// probability mbar[t], independently.
inline TokenGrid forward_corrupt(const TokenGrid& z0, int64_t t, const NoiseSchedule& s,
                                 uint64_t seed) {
    require(t >= 0 && t <= s.T, "t out of range [0, T]");
    require(!z0.has_mask(), "forward corruption expects an unmasked grid");
    TokenGrid out = z0;
    double m = s.mbar[static_cast<size_t>(t)];
    for (int64_t p = 0; p < out.count(); ++p)
        if (position_uniform(seed, p) < m) out.indices[p] = static_cast<int32_t>(out.mask_id());
    return out;
}

// Mean over masked positions of -log softmax(logits)[z0]; unmasked positions
// contribute nothing. no_masked flags the vacuous case (loss 0).
template <class S>
struct DiffusionLossNodes {
    int loss = -1;
    bool no_masked = false;
};

template <class S>
DiffusionLossNodes<S> diffusion_loss(Tape<S>& t, int logits, const TokenGrid& z0,
                                     const TokenGrid& z_t) {
    require(t.val(logits).rank() == 2, "diffusion loss expects (positions, K) logits");
    require(z0.indices.numel() == z_t.indices.numel(), "z0/z_t size mismatch");
    require(t.val(logits).shape[0] == z0.indices.numel(), "logit rows must match positions");
    std::vector<int32_t> targets(z0.indices.data.begin(), z0.indices.data.end());
    std::vector<uint8_t> select(static_cast<size_t>(z_t.count()), 0);
    bool any = false;
    for (int64_t p = 0; p < z_t.count(); ++p) {
        if (z_t.indices[p] == z_t.mask_id()) {
            select[static_cast<size_t>(p)] = 1;
            any = true;
        }
    }
    DiffusionLossNodes<S> out;
    out.no_masked = !any;
    out.loss = masked_nll_rows(t, logits, std::move(targets), std::move(select));
    return out;
}

// logits_uncond + scale * (logits_cond - logits_uncond), evaluated as
// (1-scale)*uncond + scale*cond so the endpoints are exact.
template <class S>
Tensor<S> cfg_combine(const Tensor<S>& cond, const Tensor<S>& uncond, double scale) {
    require(cond.same_shape(uncond), "cfg: shape mismatch");
    Tensor<S> out = uncond;
    const S s = static_cast<S>(scale), r = static_cast<S>(1.0 - scale);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = r * uncond[i] + s * cond[i];
    return out;
}

// Denoiser callback: logits (positions x K) for the given corrupted grid at
// schedule step t.
using DenoiserFn = std::function<TensorF(const TokenGrid& z_t, int64_t t)>;

struct SampleOptions {
    int64_t steps = 30;
    double cfg_scale = 10.0;
    double temperature = 1.0;
    bool argmax = false;
    uint64_t seed = 0;
    // called after each iteration with the partially committed grid
    std::function<void(int64_t step, const TokenGrid&)> observer;
};

// Iterative reverse sampling. Starts from all-MASK; at each of `steps`
// iterations runs the denoiser (CFG-combined when an unconditional branch is
// supplied), samples candidates at masked positions, commits the most
// confident so the masked count tracks mbar resampled at the step count, and
// never revisits a committed token.
inline TokenGrid reverse_sample(const DenoiserFn& cond, const DenoiserFn& uncond,
                                const NoiseSchedule& schedule, std::array<int64_t, 3> grid,
                                int64_t K, const SampleOptions& opt) {
    require(opt.steps >= 1, "steps must be >= 1");
    require(opt.temperature > 0.0, "temperature must be positive");
    TokenGrid z;
    z.K = K;
    z.indices = TensorI({grid[0], grid[1], grid[2]});
    const int64_t total = z.count();
    std::fill(z.indices.data.begin(), z.indices.data.end(), static_cast<int32_t>(K));

    Rng rng(mix_seed(opt.seed, 0x72657673 /* 'revs' */));
    auto t_of = [&](int64_t j) {
        return static_cast<int64_t>(std::llround(static_cast<double>(j) *
                                                 static_cast<double>(schedule.T) /
                                                 static_cast<double>(opt.steps)));
    };

    for (int64_t j = opt.steps; j >= 1; --j) {
        int64_t t_now = std::max<int64_t>(1, t_of(j));
        int64_t target_masked =
            (j == 1) ? 0
                     : static_cast<int64_t>(std::llround(
                           schedule.mbar[static_cast<size_t>(t_of(j - 1))] *
                           static_cast<double>(total)));

        std::vector<int64_t> masked;
        for (int64_t p = 0; p < total; ++p)
            if (z.indices[p] == K) masked.push_back(p);
        if (masked.empty()) break;
        if (target_masked >= static_cast<int64_t>(masked.size()) && j != 1) {
            if (opt.observer) opt.observer(j, z);
            continue;
        }

        TensorF logits = cond(z, t_now);
        require(logits.rank() == 2 && logits.shape[0] == total && logits.shape[1] == K,
                "denoiser output shape mismatch: expected (" + std::to_string(total) + "," +
                    std::to_string(K) + "), got " + logits.shape_str());
        if (uncond) {
            TensorF lu = uncond(z, t_now);
            require(lu.same_shape(logits), "denoiser output shape mismatch (uncond)");
            logits = cfg_combine(logits, lu, opt.cfg_scale);
        }

        struct Cand {
            int64_t pos;
            int32_t token;
            double conf;
        };
        std::vector<Cand> cands;
        cands.reserve(masked.size());
        std::vector<double> probs(static_cast<size_t>(K));
        for (int64_t p : masked) {
            const float* row = logits.ptr() + p * K;
            double mx = row[0];
            for (int64_t k = 1; k < K; ++k) mx = std::max(mx, static_cast<double>(row[k]));
            double sum = 0;
            for (int64_t k = 0; k < K; ++k) {
                probs[static_cast<size_t>(k)] =
                    std::exp((static_cast<double>(row[k]) - mx) / opt.temperature);
                sum += probs[static_cast<size_t>(k)];
            }
            int32_t choice = 0;
            if (opt.argmax) {
                double best = -1;
                for (int64_t k = 0; k < K; ++k)
                    if (probs[static_cast<size_t>(k)] > best) {
                        best = probs[static_cast<size_t>(k)];
                        choice = static_cast<int32_t>(k);
                    }
            } else {
                double u = rng.uniform() * sum, acc = 0;
                choice = static_cast<int32_t>(K - 1);
                for (int64_t k = 0; k < K; ++k) {
                    acc += probs[static_cast<size_t>(k)];
                    if (u <= acc) {
                        choice = static_cast<int32_t>(k);
                        break;
                    }
                }
            }
            cands.push_back({p, choice, probs[static_cast<size_t>(choice)] / sum});
        }
        std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            if (a.conf != b.conf) return a.conf > b.conf;
            return a.pos < b.pos;
        });
        int64_t commit = static_cast<int64_t>(masked.size()) - target_masked;
        for (int64_t i = 0; i < commit && i < static_cast<int64_t>(cands.size()); ++i)
            z.indices[cands[static_cast<size_t>(i)].pos] = cands[static_cast<size_t>(i)].token;
        if (opt.observer) opt.observer(j, z);
    }
    require(!z.has_mask(), "reverse sampling left masked positions");
    return z;
}

} // namespace maura
