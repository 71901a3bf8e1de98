// Copyright 2026 the maura authors
// SPDX-License-Identifier: Apache-2.0
//
// Discretization of continuous latents: learned-codebook VQ (nearest
// neighbour in squared Euclidean distance, ties to the lowest index) and
// lookup-free quantization (sign bits, z >= 0 -> +1). Straight-through
// gradients; losses follow the standard stop-gradient split.

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "maura/tape.hpp"

namespace maura {

// Grid of codebook indices; MASK_ID == K marks a masked position when the
// grid is mask-aware.
struct TokenGrid {
    TensorI indices; // (N', H', W')
    int64_t K = 0;

    int64_t mask_id() const { return K; }
    int64_t count() const { return indices.numel(); }

    bool has_mask() const {
        for (int32_t v : indices.data)
            if (v == K) return true;
        return false;
    }

    void validate() const {
        require(indices.rank() == 3, "token grid must be (N',H',W')");
        bool ok = true;
        for (int32_t v : indices.data) ok = ok && v >= 0 && v <= K;
        require(ok, "token index out of range [0, K]");
    }
};

// Codebook descriptor. VQ keeps explicit vectors (a trainable parameter);
// LFQ's +-1 vectors are implicit with K = 2^dim.
struct CodebookSpec {
    enum class Kind { vq, lfq };
    Kind kind = Kind::lfq;
    int64_t K = 256;
    int64_t dim = 8;

    static CodebookSpec vq(int64_t K, int64_t dim) {
        require(K >= 2, "codebook needs K >= 2");
        return {Kind::vq, K, dim};
    }
    static CodebookSpec lfq(int64_t dim) {
        require(dim >= 1 && dim <= 30, "lfq dim out of range");
        return {Kind::lfq, int64_t(1) << dim, dim};
    }
};

// ---------------------------------------------------------------------------
// plain-tensor paths (tokenization / decoding outside training graphs)
// ---------------------------------------------------------------------------

// z_rows: (V, d); codebook: (K, d). Ties break to the lowest index.
template <class S>
TensorI nearest_indices(const Tensor<S>& z_rows, const Tensor<S>& codebook) {
    require(codebook.rank() == 2 && codebook.shape[0] >= 1, "codebook must be nonempty (K,d)");
    require(z_rows.rank() == 2 && z_rows.shape[1] == codebook.shape[1],
            "latent dim incompatible with codebook dim");
    const int64_t v = z_rows.shape[0], k = codebook.shape[0], d = codebook.shape[1];
    TensorI out({v});
    for (int64_t i = 0; i < v; ++i) {
        double best = 1e300;
        int32_t arg = 0;
        for (int64_t j = 0; j < k; ++j) {
            double dist = 0;
            for (int64_t c = 0; c < d; ++c) {
                double t = static_cast<double>(z_rows.at(i, c)) -
                           static_cast<double>(codebook.at(j, c));
                dist += t * t;
            }
            if (dist < best) {
                best = dist;
                arg = static_cast<int32_t>(j);
            }
        }
        out[i] = arg;
    }
    return out;
}

// Sign-bit indices: bit j set iff z_j >= 0 (zero maps to +1); index = sum b_j 2^j.
template <class S>
TensorI lfq_indices(const Tensor<S>& z_rows) {
    require(z_rows.rank() == 2, "lfq input must be (V,d)");
    const int64_t v = z_rows.shape[0], d = z_rows.shape[1];
    require(d <= 30, "lfq dim too large for int32 indices");
    TensorI out({v});
    for (int64_t i = 0; i < v; ++i) {
        int32_t idx = 0;
        for (int64_t j = 0; j < d; ++j)
            if (z_rows.at(i, j) >= S(0)) idx |= (int32_t(1) << j);
        out[i] = idx;
    }
    return out;
}

// Explicit codeword for an LFQ index.
template <class S>
void lfq_codeword(int32_t index, int64_t dim, S* out) {
    for (int64_t j = 0; j < dim; ++j)
        out[j] = (index >> j) & 1 ? S(1) : S(-1);
}

// Vector gather; rejects MASK_ID (masked grids are not decodable).
template <class S>
Tensor<S> lookup_rows(const TensorI& indices, const CodebookSpec& spec,
                      const Tensor<S>* vq_vectors) {
    const int64_t v = indices.numel();
    Tensor<S> out({v, spec.dim});
    for (int64_t i = 0; i < v; ++i) {
        int32_t idx = indices[i];
        require(idx != spec.K, "token grid contains MASK; masked grids are not decodable");
        require(idx >= 0 && idx < spec.K, "token index out of range");
        if (spec.kind == CodebookSpec::Kind::lfq) {
            lfq_codeword(idx, spec.dim, out.ptr() + i * spec.dim);
        } else {
            require(vq_vectors != nullptr, "vq lookup needs codebook vectors");
            for (int64_t c = 0; c < spec.dim; ++c) out.at(i, c) = vq_vectors->at(idx, c);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// tape paths (training)
// ---------------------------------------------------------------------------

template <class S>
struct QuantizeNodes {
    int z_q = -1;          // (V,d) quantized rows, value == lookup(tokens)
    int z_st = -1;         // straight-through rows to feed downstream
    int codebook_loss = -1; // scalar ||sg[z] - z_q||^2
    int commit_loss = -1;   // scalar ||z - sg[z_q]||^2
    TensorI token_rows;    // (V)
};

// z_rows: (V,d) node; codebook: (K,d) node (trainable for VQ).
template <class S>
QuantizeNodes<S> vq_quantize(Tape<S>& t, int z_rows, int codebook) {
    QuantizeNodes<S> q;
    q.token_rows = nearest_indices(t.val(z_rows), t.val(codebook));
    std::vector<int32_t> ids(q.token_rows.data.begin(), q.token_rows.data.end());
    q.z_q = embed_rows(t, codebook, ids);
    q.codebook_loss = sum_sq(t, sub(t, detach(t, z_rows), q.z_q));
    q.commit_loss = sum_sq(t, sub(t, z_rows, detach(t, q.z_q)));
    q.z_st = straight_through(t, z_rows, q.z_q);
    return q;
}

template <class S>
QuantizeNodes<S> lfq_quantize(Tape<S>& t, int z_rows) {
    const Tensor<S>& z = t.val(z_rows);
    QuantizeNodes<S> q;
    q.token_rows = lfq_indices(z);
    Tensor<S> codes({z.shape[0], z.shape[1]});
    for (int64_t i = 0; i < z.shape[0]; ++i)
        lfq_codeword(q.token_rows[i], z.shape[1], codes.ptr() + i * z.shape[1]);
    q.z_q = t.leaf(std::move(codes), false);
    q.codebook_loss = sum_sq(t, sub(t, detach(t, z_rows), q.z_q));
    q.commit_loss = sum_sq(t, sub(t, z_rows, detach(t, q.z_q)));
    q.z_st = straight_through(t, z_rows, q.z_q);
    return q;
}

// ---------------------------------------------------------------------------
// diagnostics
// ---------------------------------------------------------------------------

struct CodebookUsage {
    double fraction_used = 0.0;
    double perplexity = 0.0;
};

inline CodebookUsage codebook_usage(const std::vector<int32_t>& stream, int64_t K) {
    require(!stream.empty(), "codebook usage needs a nonempty token stream");
    require(K >= 1, "K must be positive");
    std::map<int32_t, int64_t> counts;
    for (int32_t v : stream) {
        require(v >= 0 && v < K, "token outside [0,K)");
        counts[v]++;
    }
    double n = static_cast<double>(stream.size());
    double entropy = 0.0;
    for (const auto& [idx, c] : counts) {
        double p = static_cast<double>(c) / n;
        entropy -= p * std::log(p);
    }
    return {static_cast<double>(counts.size()) / static_cast<double>(K), std::exp(entropy)};
}

} // namespace maura
