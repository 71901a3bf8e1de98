// Copyright 2026 the maura authors
// SPDX-License-Identifier: Apache-2.0
//
// Define-by-run reverse-mode autodiff on dense tensors. A Tape owns the
// nodes of one forward evaluation; ops append nodes and register backward
// closures that run in reverse creation order. Matrix products go through
// Eigen; everything is single-threaded and bit-deterministic for a fixed
// op sequence.

#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <vector>

#include "maura/tensor.hpp"

namespace maura {

template <class S>
using EigenRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class S>
Eigen::Map<EigenRM<S>> as_matrix(Tensor<S>& t, int64_t rows, int64_t cols) {
    return Eigen::Map<EigenRM<S>>(t.ptr(), rows, cols);
}
template <class S>
Eigen::Map<const EigenRM<S>> as_matrix(const Tensor<S>& t, int64_t rows, int64_t cols) {
    return Eigen::Map<const EigenRM<S>>(t.ptr(), rows, cols);
}

template <class S>
class Tape {
public:
    struct Node {
        Tensor<S> value;
        Tensor<S> grad;
        bool requires_grad = false;
        std::function<void()> backward;
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    int leaf(Tensor<S> v, bool requires_grad = false) {
        Node n;
        n.value = std::move(v);
        n.requires_grad = requires_grad;
        if (requires_grad) n.grad = Tensor<S>::zeros(n.value.shape);
        nodes.push_back(std::move(n));
        return static_cast<int>(nodes.size()) - 1;
    }

    int make(Tensor<S> v, bool requires_grad, std::function<void()> back) {
        Node n;
        n.value = std::move(v);
        n.requires_grad = requires_grad;
        if (requires_grad) {
            n.grad = Tensor<S>::zeros(n.value.shape);
            n.backward = std::move(back);
        }
        nodes.push_back(std::move(n));
        return static_cast<int>(nodes.size()) - 1;
    }

    const Tensor<S>& val(int id) const { return nodes[static_cast<size_t>(id)].value; }
    Tensor<S>& val(int id) { return nodes[static_cast<size_t>(id)].value; }
    Tensor<S>& grad(int id) { return nodes[static_cast<size_t>(id)].grad; }
    bool requires_grad(int id) const { return nodes[static_cast<size_t>(id)].requires_grad; }
    int size() const { return static_cast<int>(nodes.size()); }

    // Seeds d(root)/d(root) = 1 and propagates to every reachable leaf.
    void backward(int root) {
        Node& r = nodes[static_cast<size_t>(root)];
        require(r.value.numel() == 1, "backward root must be scalar");
        require(r.requires_grad, "backward root does not require grad");
        r.grad.data[0] = S(1);
        for (int i = root; i >= 0; --i) {
            Node& n = nodes[static_cast<size_t>(i)];
            if (n.requires_grad && n.backward) n.backward();
        }
    }

    std::vector<Node> nodes;
};

// ---------------------------------------------------------------------------
// elementwise + scalar ops
// ---------------------------------------------------------------------------

template <class S>
int add(Tape<S>& t, int a, int b) {
    require(t.val(a).same_shape(t.val(b)), "add: shape mismatch");
    Tensor<S> out = t.val(a);
    const Tensor<S>& vb = t.val(b);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += vb[i];
    bool rg = t.requires_grad(a) || t.requires_grad(b);
    return t.make(std::move(out), rg, [&t, a, b, id = t.size()]() {
        const Tensor<S>& g = t.grad(id);
        if (t.requires_grad(a)) {
            Tensor<S>& ga = t.grad(a);
            for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
        }
        if (t.requires_grad(b)) {
            Tensor<S>& gb = t.grad(b);
            for (int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i];
        }
    });
}

template <class S>
int sub(Tape<S>& t, int a, int b) {
    require(t.val(a).same_shape(t.val(b)), "sub: shape mismatch");
    Tensor<S> out = t.val(a);
    const Tensor<S>& vb = t.val(b);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] -= vb[i];
    bool rg = t.requires_grad(a) || t.requires_grad(b);
    return t.make(std::move(out), rg, [&t, a, b, id = t.size()]() {
        const Tensor<S>& g = t.grad(id);
        if (t.requires_grad(a)) {
            Tensor<S>& ga = t.grad(a);
            for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
        }
        if (t.requires_grad(b)) {
            Tensor<S>& gb = t.grad(b);
            for (int64_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
        }
    });
}

template <class S>
int mul(Tape<S>& t, int a, int b) {
    require(t.val(a).same_shape(t.val(b)), "mul: shape mismatch");
    Tensor<S> out = t.val(a);
    const Tensor<S>& vb = t.val(b);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= vb[i];
    bool rg = t.requires_grad(a) || t.requires_grad(b);
    return t.make(std::move(out), rg, [&t, a, b, id = t.size()]() {
        const Tensor<S>& g = t.grad(id);
        if (t.requires_grad(a)) {
            Tensor<S>& ga = t.grad(a);
            const Tensor<S>& vb2 = t.val(b);
            for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * vb2[i];
        }
        if (t.requires_grad(b)) {
            Tensor<S>& gb = t.grad(b);
            const Tensor<S>& va2 = t.val(a);
            for (int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * va2[i];
        }
    });
}

template <class S>
int scale(Tape<S>& t, int a, S c) {
    Tensor<S> out = t.val(a);
    for (auto& v : out.data) v *= c;
    return t.make(std::move(out), t.requires_grad(a), [&t, a, c, id = t.size()]() {
        const Tensor<S>& g = t.grad(id);
        Tensor<S>& ga = t.grad(a);
        for (int64_t i = 0; i < g.numel(); ++i) ga[i] += c * g[i];
    });
}

template <class S>
int add_scalar(Tape<S>& t, int a, S c) {
    Tensor<S> out = t.val(a);
    for (auto& v : out.data) v += c;
    return t.make(std::move(out), t.requires_grad(a), [&t, a, id = t.size()]() {
        const Tensor<S>& g = t.grad(id);
        Tensor<S>& ga = t.grad(a);
        for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
    });
}

// Forward value only; cuts the graph (stop-gradient).
template <class S>
int detach(Tape<S>& t, int a) {
    return t.leaf(t.val(a), false);
}

// Forward z_q, backward identity into z_c.
template <class S>
int straight_through(Tape<S>& t, int z_c, int z_q) {
    require(t.val(z_c).same_shape(t.val(z_q)), "straight_through: shape mismatch");
    return add(t, z_c, sub(t, detach(t, z_q), detach(t, z_c)));
}

template <class S, class F, class DF>
int unary_op(Tape<S>& t, int a, F f, DF df) {
    Tensor<S> out = t.val(a);
    for (auto& v : out.data) v = f(v);
    return t.make(std::move(out), t.requires_grad(a), [&t, a, df, id = t.size()]() {
        const Tensor<S>& g = t.grad(id);
        const Tensor<S>& x = t.val(a);
        Tensor<S>& ga = t.grad(a);
        for (int64_t i = 0; i < g.numel(); ++i) ga[i] += df(x[i]) * g[i];
    });
}

namespace detail {

// Vectorized sigmoid over fixed-size aligned chunks. Dynamic-size Eigen
// traversals pick alignment-dependent scalar/SIMD splits, which breaks
// bitwise reproducibility across allocations; fixed-size chunks through an
// aligned stack buffer evaluate every element through the same code path.
template <class S, class F>
void chunked_apply(const S* x, S* y, int64_t n, F f) {
    constexpr int64_t B = 16;
    alignas(64) S buf[B];
    for (int64_t i = 0; i < n; i += B) {
        int64_t m = std::min<int64_t>(B, n - i);
        std::copy(x + i, x + i + m, buf);
        std::fill(buf + m, buf + B, S(0));
        Eigen::Map<Eigen::Array<S, B, 1>, Eigen::Aligned64> a(buf);
        f(a);
        std::copy(buf, buf + m, y + i);
    }
}

template <class S>
void sigmoid_values(const S* x, S* y, int64_t n) {
    chunked_apply(x, y, n, [](auto& a) { a = S(1) / (S(1) + (-a).exp()); });
}

template <class S>
void silu_values(const S* x, S* y, int64_t n) {
    chunked_apply(x, y, n, [](auto& a) { a = a / (S(1) + (-a).exp()); });
}

// d(silu)/dx = s(x) * (1 + x * (1 - s(x)))
template <class S>
void silu_derivative(const S* x, S* d, int64_t n) {
    chunked_apply(x, d, n, [](auto& a) {
        auto s = S(1) / (S(1) + (-a).exp());
        a = s * (S(1) + a * (S(1) - s));
    });
}

} // namespace detail

template <class S>
int sigmoid(Tape<S>& t, int a) {
    Tensor<S> out(t.val(a).shape);
    detail::sigmoid_values(t.val(a).ptr(), out.ptr(), out.numel());
    return t.make(std::move(out), t.requires_grad(a), [&t, a, id = t.size()]() {
        const Tensor<S>& g = t.grad(id);
        const Tensor<S>& y = t.val(id);
        Tensor<S>& ga = t.grad(a);
        for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * y[i] * (S(1) - y[i]);
    });
}

template <class S>
int silu(Tape<S>& t, int a) {
    Tensor<S> out(t.val(a).shape);
    detail::silu_values(t.val(a).ptr(), out.ptr(), out.numel());
    return t.make(std::move(out), t.requires_grad(a), [&t, a, id = t.size()]() {
        const Tensor<S>& g = t.grad(id);
        const Tensor<S>& x = t.val(a);
        Tensor<S>& ga = t.grad(a);
        Tensor<S> d(x.shape);
        detail::silu_derivative(x.ptr(), d.ptr(), x.numel());
        for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * d[i];
    });
}

template <class S>
int gelu(Tape<S>& t, int a) {
    const S inv_sqrt2 = S(0.7071067811865475);
    const S inv_sqrt2pi = S(0.3989422804014327);
    return unary_op(
        t, a,
        [=](S x) { return S(0.5) * x * (S(1) + std::erf(x * inv_sqrt2)); },
        [=](S x) {
            S phi = S(0.5) * (S(1) + std::erf(x * inv_sqrt2));
            return phi + x * inv_sqrt2pi * std::exp(S(-0.5) * x * x);
        });
}

template <class S>
int relu(Tape<S>& t, int a) {
    return unary_op(t, a, [](S x) { return x > S(0) ? x : S(0); },
                    [](S x) { return x > S(0) ? S(1) : S(0); });
}

// Hard clamp to [0,1]; zero gradient outside the open interval.
template <class S>
int clamp01(Tape<S>& t, int a) {
    return unary_op(t, a, [](S x) { return x < S(0) ? S(0) : (x > S(1) ? S(1) : x); },
                    [](S x) { return (x > S(0) && x < S(1)) ? S(1) : S(0); });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <class S>
int sum_all(Tape<S>& t, int a) {
    S acc = S(0);
    for (S v : t.val(a).data) acc += v;
    Tensor<S> out({1});
    out[0] = acc;
    return t.make(std::move(out), t.requires_grad(a), [&t, a, id = t.size()]() {
        S g = t.grad(id)[0];
        Tensor<S>& ga = t.grad(a);
        for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += g;
    });
}

template <class S>
int mean_all(Tape<S>& t, int a) {
    int64_t n = t.val(a).numel();
    return scale(t, sum_all(t, a), S(1) / static_cast<S>(n));
}

// mean squared error between two same-shape tensors -> scalar
template <class S>
int mse(Tape<S>& t, int a, int b) {
    int d = sub(t, a, b);
    return mean_all(t, mul(t, d, d));
}

// sum of squares -> scalar
template <class S>
int sum_sq(Tape<S>& t, int a) {
    return sum_all(t, mul(t, a, a));
}

// ---------------------------------------------------------------------------
// matrix ops (2-D)
// ---------------------------------------------------------------------------

template <class S>
int matmul(Tape<S>& t, int a, int b, bool trans_a = false, bool trans_b = false) {
    const Tensor<S>& va = t.val(a);
    const Tensor<S>& vb = t.val(b);
    require(va.rank() == 2 && vb.rank() == 2, "matmul: rank-2 tensors required");
    int64_t m = trans_a ? va.shape[1] : va.shape[0];
    int64_t ka = trans_a ? va.shape[0] : va.shape[1];
    int64_t kb = trans_b ? vb.shape[1] : vb.shape[0];
    int64_t n = trans_b ? vb.shape[0] : vb.shape[1];
    require(ka == kb, "matmul: inner dimension mismatch");
    Tensor<S> out({m, n});
    {
        auto A = as_matrix(va, va.shape[0], va.shape[1]);
        auto B = as_matrix(vb, vb.shape[0], vb.shape[1]);
        auto C = as_matrix(out, m, n);
        if (!trans_a && !trans_b) C.noalias() = A * B;
        else if (trans_a && !trans_b) C.noalias() = A.transpose() * B;
        else if (!trans_a && trans_b) C.noalias() = A * B.transpose();
        else C.noalias() = A.transpose() * B.transpose();
    }
    bool rg = t.requires_grad(a) || t.requires_grad(b);
    return t.make(std::move(out), rg, [&t, a, b, trans_a, trans_b, m, n, id = t.size()]() {
        const Tensor<S>& g = t.grad(id);
        auto G = as_matrix(g, m, n);
        const Tensor<S>& va2 = t.val(a);
        const Tensor<S>& vb2 = t.val(b);
        auto A = as_matrix(va2, va2.shape[0], va2.shape[1]);
        auto B = as_matrix(vb2, vb2.shape[0], vb2.shape[1]);
        if (t.requires_grad(a)) {
            Tensor<S>& ga = t.grad(a);
            auto GA = as_matrix(ga, ga.shape[0], ga.shape[1]);
            if (!trans_a && !trans_b) GA.noalias() += G * B.transpose();
            else if (trans_a && !trans_b) GA.noalias() += B * G.transpose();
            else if (!trans_a && trans_b) GA.noalias() += G * B;
            else GA.noalias() += B.transpose() * G.transpose();
        }
        if (t.requires_grad(b)) {
            Tensor<S>& gb = t.grad(b);
            auto GB = as_matrix(gb, gb.shape[0], gb.shape[1]);
            if (!trans_a && !trans_b) GB.noalias() += A.transpose() * G;
            else if (trans_a && !trans_b) GB.noalias() += A * G;
            else if (!trans_a && trans_b) GB.noalias() += G.transpose() * A;
            else GB.noalias() += G.transpose() * A.transpose();
        }
    });
}

template <class S>
int transpose2d(Tape<S>& t, int a) {
    const Tensor<S>& va = t.val(a);
    require(va.rank() == 2, "transpose2d: rank-2 required");
    int64_t r = va.shape[0], c = va.shape[1];
    Tensor<S> out({c, r});
    for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) out.at(j, i) = va.at(i, j);
    return t.make(std::move(out), t.requires_grad(a), [&t, a, r, c, id = t.size()]() {
        const Tensor<S>& g = t.grad(id);
        Tensor<S>& ga = t.grad(a);
        for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < c; ++j) ga.at(i, j) += g.at(j, i);
    });
}

// Same data, new shape (copies; sizes here are small).
template <class S>
int reshape(Tape<S>& t, int a, std::vector<int64_t> sh) {
    require(Tensor<S>::numel_of(sh) == t.val(a).numel(), "reshape: element count mismatch");
    Tensor<S> out(std::move(sh), t.val(a).data);
    return t.make(std::move(out), t.requires_grad(a), [&t, a, id = t.size()]() {
        const Tensor<S>& g = t.grad(id);
        Tensor<S>& ga = t.grad(a);
        for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
    });
}

// (R x C) + row vector (C), broadcast down rows. Used for biases.
template <class S>
int add_rowvec(Tape<S>& t, int x, int v) {
    const Tensor<S>& vx = t.val(x);
    const Tensor<S>& vv = t.val(v);
    require(vx.rank() == 2 && vv.numel() == vx.shape[1], "add_rowvec: shape mismatch");
    Tensor<S> out = vx;
    int64_t r = vx.shape[0], c = vx.shape[1];
    for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) out.at(i, j) += vv[j];
    bool rg = t.requires_grad(x) || t.requires_grad(v);
    return t.make(std::move(out), rg, [&t, x, v, r, c, id = t.size()]() {
        const Tensor<S>& g = t.grad(id);
        if (t.requires_grad(x)) {
            Tensor<S>& gx = t.grad(x);
            for (int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
        }
        if (t.requires_grad(v)) {
            Tensor<S>& gv = t.grad(v);
            for (int64_t i = 0; i < r; ++i)
                for (int64_t j = 0; j < c; ++j) gv[j] += g.at(i, j);
        }
    });
}

// (R x C) * row vector (C) elementwise per row.
template <class S>
int mul_rowvec(Tape<S>& t, int x, int v) {
    const Tensor<S>& vx = t.val(x);
    const Tensor<S>& vv = t.val(v);
    require(vx.rank() == 2 && vv.numel() == vx.shape[1], "mul_rowvec: shape mismatch");
    Tensor<S> out = vx;
    int64_t r = vx.shape[0], c = vx.shape[1];
    for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) out.at(i, j) *= vv[j];
    bool rg = t.requires_grad(x) || t.requires_grad(v);
    return t.make(std::move(out), rg, [&t, x, v, r, c, id = t.size()]() {
        const Tensor<S>& g = t.grad(id);
        if (t.requires_grad(x)) {
            Tensor<S>& gx = t.grad(x);
            const Tensor<S>& vv2 = t.val(v);
            for (int64_t i = 0; i < r; ++i)
                for (int64_t j = 0; j < c; ++j) gx.at(i, j) += g.at(i, j) * vv2[j];
        }
        if (t.requires_grad(v)) {
            Tensor<S>& gv = t.grad(v);
            const Tensor<S>& vx2 = t.val(x);
            for (int64_t i = 0; i < r; ++i)
                for (int64_t j = 0; j < c; ++j) gv[j] += g.at(i, j) * vx2.at(i, j);
        }
    });
}

template <class S>
int slice_rows(Tape<S>& t, int a, int64_t r0, int64_t count) {
    const Tensor<S>& va = t.val(a);
    require(va.rank() == 2, "slice_rows: rank-2 required");
    require(r0 >= 0 && r0 + count <= va.shape[0], "slice_rows: out of range");
    int64_t c = va.shape[1];
    Tensor<S> out({count, c});
    std::copy(va.data.begin() + r0 * c, va.data.begin() + (r0 + count) * c, out.data.begin());
    return t.make(std::move(out), t.requires_grad(a), [&t, a, r0, count, c, id = t.size()]() {
        const Tensor<S>& g = t.grad(id);
        Tensor<S>& ga = t.grad(a);
        for (int64_t i = 0; i < count; ++i)
            for (int64_t j = 0; j < c; ++j) ga.at(r0 + i, j) += g.at(i, j);
    });
}

template <class S>
int slice_cols(Tape<S>& t, int a, int64_t c0, int64_t count) {
    const Tensor<S>& va = t.val(a);
    require(va.rank() == 2, "slice_cols: rank-2 required");
    require(c0 >= 0 && c0 + count <= va.shape[1], "slice_cols: out of range");
    int64_t r = va.shape[0];
    Tensor<S> out({r, count});
    for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < count; ++j) out.at(i, j) = va.at(i, c0 + j);
    return t.make(std::move(out), t.requires_grad(a), [&t, a, c0, count, r, id = t.size()]() {
        const Tensor<S>& g = t.grad(id);
        Tensor<S>& ga = t.grad(a);
        for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < count; ++j) ga.at(i, c0 + j) += g.at(i, j);
    });
}

template <class S>
int concat_rows(Tape<S>& t, const std::vector<int>& parts) {
    require(!parts.empty(), "concat_rows: empty");
    int64_t c = t.val(parts[0]).shape[1];
    int64_t rows = 0;
    bool rg = false;
    for (int p : parts) {
        require(t.val(p).rank() == 2 && t.val(p).shape[1] == c, "concat_rows: column mismatch");
        rows += t.val(p).shape[0];
        rg = rg || t.requires_grad(p);
    }
    Tensor<S> out({rows, c});
    int64_t r = 0;
    for (int p : parts) {
        const Tensor<S>& v = t.val(p);
        std::copy(v.data.begin(), v.data.end(), out.data.begin() + r * c);
        r += v.shape[0];
    }
    return t.make(std::move(out), rg, [&t, parts, c, id = t.size()]() {
        const Tensor<S>& g = t.grad(id);
        int64_t r0 = 0;
        for (int p : parts) {
            int64_t pr = t.val(p).shape[0];
            if (t.requires_grad(p)) {
                Tensor<S>& gp = t.grad(p);
                for (int64_t i = 0; i < pr; ++i)
                    for (int64_t j = 0; j < c; ++j) gp.at(i, j) += g.at(r0 + i, j);
            }
            r0 += pr;
        }
    });
}

template <class S>
int concat_cols(Tape<S>& t, const std::vector<int>& parts) {
    require(!parts.empty(), "concat_cols: empty");
    int64_t r = t.val(parts[0]).shape[0];
    int64_t cols = 0;
    bool rg = false;
    for (int p : parts) {
        require(t.val(p).rank() == 2 && t.val(p).shape[0] == r, "concat_cols: row mismatch");
        cols += t.val(p).shape[1];
        rg = rg || t.requires_grad(p);
    }
    Tensor<S> out({r, cols});
    int64_t c0 = 0;
    for (int p : parts) {
        const Tensor<S>& v = t.val(p);
        for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < v.shape[1]; ++j) out.at(i, c0 + j) = v.at(i, j);
        c0 += v.shape[1];
    }
    return t.make(std::move(out), rg, [&t, parts, r, id = t.size()]() {
        const Tensor<S>& g = t.grad(id);
        int64_t c0b = 0;
        for (int p : parts) {
            int64_t pc = t.val(p).shape[1];
            if (t.requires_grad(p)) {
                Tensor<S>& gp = t.grad(p);
                for (int64_t i = 0; i < r; ++i)
                    for (int64_t j = 0; j < pc; ++j) gp.at(i, j) += g.at(i, c0b + j);
            }
            c0b += pc;
        }
    });
}

// ---------------------------------------------------------------------------
// rows: softmax / layernorm / nll / embedding
// ---------------------------------------------------------------------------

template <class S>
int softmax_rows(Tape<S>& t, int a) {
    const Tensor<S>& va = t.val(a);
    require(va.rank() == 2, "softmax_rows: rank-2 required");
    int64_t r = va.shape[0], c = va.shape[1];
    Tensor<S> out = va;
    for (int64_t i = 0; i < r; ++i) {
        S mx = out.at(i, 0);
        for (int64_t j = 1; j < c; ++j) mx = std::max(mx, out.at(i, j));
        S sum = S(0);
        for (int64_t j = 0; j < c; ++j) {
            S e = std::exp(out.at(i, j) - mx);
            out.at(i, j) = e;
            sum += e;
        }
        for (int64_t j = 0; j < c; ++j) out.at(i, j) /= sum;
    }
    return t.make(std::move(out), t.requires_grad(a), [&t, a, r, c, id = t.size()]() {
        const Tensor<S>& g = t.grad(id);
        const Tensor<S>& y = t.val(id);
        Tensor<S>& ga = t.grad(a);
        for (int64_t i = 0; i < r; ++i) {
            S dot = S(0);
            for (int64_t j = 0; j < c; ++j) dot += g.at(i, j) * y.at(i, j);
            for (int64_t j = 0; j < c; ++j) ga.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
        }
    });
}

// Row-wise layer normalization without learned affine terms.
template <class S>
int layernorm_rows(Tape<S>& t, int a, S eps = S(1e-5)) {
    const Tensor<S>& va = t.val(a);
    require(va.rank() == 2, "layernorm_rows: rank-2 required");
    int64_t r = va.shape[0], c = va.shape[1];
    Tensor<S> out({r, c});
    auto inv_std = std::make_shared<std::vector<S>>(static_cast<size_t>(r));
    for (int64_t i = 0; i < r; ++i) {
        S mu = S(0);
        for (int64_t j = 0; j < c; ++j) mu += va.at(i, j);
        mu /= static_cast<S>(c);
        S var = S(0);
        for (int64_t j = 0; j < c; ++j) {
            S d = va.at(i, j) - mu;
            var += d * d;
        }
        var /= static_cast<S>(c);
        S is = S(1) / std::sqrt(var + eps);
        (*inv_std)[static_cast<size_t>(i)] = is;
        for (int64_t j = 0; j < c; ++j) out.at(i, j) = (va.at(i, j) - mu) * is;
    }
    return t.make(std::move(out), t.requires_grad(a), [&t, a, r, c, inv_std, id = t.size()]() {
        const Tensor<S>& g = t.grad(id);
        const Tensor<S>& y = t.val(id);
        Tensor<S>& ga = t.grad(a);
        for (int64_t i = 0; i < r; ++i) {
            S gmean = S(0), gymean = S(0);
            for (int64_t j = 0; j < c; ++j) {
                gmean += g.at(i, j);
                gymean += g.at(i, j) * y.at(i, j);
            }
            gmean /= static_cast<S>(c);
            gymean /= static_cast<S>(c);
            S is = (*inv_std)[static_cast<size_t>(i)];
            for (int64_t j = 0; j < c; ++j)
                ga.at(i, j) += is * (g.at(i, j) - gmean - y.at(i, j) * gymean);
        }
    });
}

// Mean over selected rows of -log softmax(logits)[target]; rows with
// select=false contribute nothing. Returns scalar; if no row is selected the
// result is 0 (callers decide whether that warrants a warning).
template <class S>
int masked_nll_rows(Tape<S>& t, int logits, std::vector<int32_t> targets, std::vector<uint8_t> select) {
    const Tensor<S>& v = t.val(logits);
    require(v.rank() == 2, "masked_nll_rows: rank-2 required");
    int64_t r = v.shape[0], c = v.shape[1];
    require(static_cast<int64_t>(targets.size()) == r, "masked_nll_rows: target count");
    require(static_cast<int64_t>(select.size()) == r, "masked_nll_rows: select count");
    int64_t count = 0;
    double acc = 0.0;
    for (int64_t i = 0; i < r; ++i) {
        if (!select[static_cast<size_t>(i)]) continue;
        require(targets[static_cast<size_t>(i)] >= 0 && targets[static_cast<size_t>(i)] < c,
                "masked_nll_rows: target out of range");
        S mx = v.at(i, 0);
        for (int64_t j = 1; j < c; ++j) mx = std::max(mx, v.at(i, j));
        double sum = 0.0;
        for (int64_t j = 0; j < c; ++j) sum += std::exp(static_cast<double>(v.at(i, j) - mx));
        double lse = std::log(sum) + static_cast<double>(mx);
        acc += lse - static_cast<double>(v.at(i, targets[static_cast<size_t>(i)]));
        ++count;
    }
    Tensor<S> out({1});
    out[0] = count ? static_cast<S>(acc / static_cast<double>(count)) : S(0);
    auto tg = std::make_shared<std::vector<int32_t>>(std::move(targets));
    auto sel = std::make_shared<std::vector<uint8_t>>(std::move(select));
    return t.make(std::move(out), t.requires_grad(logits),
                  [&t, logits, tg, sel, r, c, count, id = t.size()]() {
        if (!count) return;
        S g = t.grad(id)[0] / static_cast<S>(count);
        const Tensor<S>& v2 = t.val(logits);
        Tensor<S>& gl = t.grad(logits);
        for (int64_t i = 0; i < r; ++i) {
            if (!(*sel)[static_cast<size_t>(i)]) continue;
            S mx = v2.at(i, 0);
            for (int64_t j = 1; j < c; ++j) mx = std::max(mx, v2.at(i, j));
            S sum = S(0);
            for (int64_t j = 0; j < c; ++j) sum += std::exp(v2.at(i, j) - mx);
            for (int64_t j = 0; j < c; ++j) {
                S p = std::exp(v2.at(i, j) - mx) / sum;
                gl.at(i, j) += g * (p - (j == (*tg)[static_cast<size_t>(i)] ? S(1) : S(0)));
            }
        }
    });
}

// Gather rows of an embedding table; backward scatter-adds.
template <class S>
int embed_rows(Tape<S>& t, int table, std::vector<int32_t> ids) {
    const Tensor<S>& tb = t.val(table);
    require(tb.rank() == 2, "embed_rows: table must be rank-2");
    int64_t v = tb.shape[0], e = tb.shape[1];
    int64_t n = static_cast<int64_t>(ids.size());
    Tensor<S> out({n, e});
    for (int64_t i = 0; i < n; ++i) {
        int32_t r = ids[static_cast<size_t>(i)];
        require(r >= 0 && r < v, "embed_rows: index out of range");
        std::copy(tb.data.begin() + r * e, tb.data.begin() + (r + 1) * e, out.data.begin() + i * e);
    }
    auto idv = std::make_shared<std::vector<int32_t>>(std::move(ids));
    return t.make(std::move(out), t.requires_grad(table), [&t, table, idv, e, n, id = t.size()]() {
        const Tensor<S>& g = t.grad(id);
        Tensor<S>& gt = t.grad(table);
        for (int64_t i = 0; i < n; ++i) {
            int32_t r = (*idv)[static_cast<size_t>(i)];
            for (int64_t j = 0; j < e; ++j) gt.at(r, j) += g.at(i, j);
        }
    });
}

// ---------------------------------------------------------------------------
// 3-D conv stack ops; activations are (C, T, H, W)
// ---------------------------------------------------------------------------

struct Conv3dSpec {
    std::array<int64_t, 3> stride{1, 1, 1};
    std::array<int64_t, 3> pad{0, 0, 0};
    int64_t groups = 1;
};

namespace detail {

inline int64_t conv_out(int64_t n, int64_t k, int64_t s, int64_t p) {
    return (n + 2 * p - k) / s + 1;
}

// im2col for one (C,T,H,W) tensor restricted to channels [c0, c0+cn):
// result is (cn*kt*kh*kw) x (To*Ho*Wo), row-major.
template <class S>
void im2col3d(const Tensor<S>& x, int64_t c0, int64_t cn, const std::array<int64_t, 3>& k,
              const Conv3dSpec& sp, int64_t To, int64_t Ho, int64_t Wo, S* out) {
    const int64_t T = x.shape[1], H = x.shape[2], W = x.shape[3];
    const int64_t cols = To * Ho * Wo;
    int64_t row = 0;
    for (int64_t c = c0; c < c0 + cn; ++c) {
        for (int64_t dt = 0; dt < k[0]; ++dt)
            for (int64_t dy = 0; dy < k[1]; ++dy)
                for (int64_t dx = 0; dx < k[2]; ++dx, ++row) {
                    S* dst = out + row * cols;
                    int64_t col = 0;
                    for (int64_t to = 0; to < To; ++to) {
                        int64_t ti = to * sp.stride[0] + dt - sp.pad[0];
                        bool t_ok = ti >= 0 && ti < T;
                        for (int64_t yo = 0; yo < Ho; ++yo) {
                            int64_t yi = yo * sp.stride[1] + dy - sp.pad[1];
                            bool y_ok = t_ok && yi >= 0 && yi < H;
                            if (!y_ok) {
                                for (int64_t xo = 0; xo < Wo; ++xo, ++col) dst[col] = S(0);
                                continue;
                            }
                            const S* src = x.ptr() + ((c * T + ti) * H + yi) * W;
                            for (int64_t xo = 0; xo < Wo; ++xo, ++col) {
                                int64_t xi = xo * sp.stride[2] + dx - sp.pad[2];
                                dst[col] = (xi >= 0 && xi < W) ? src[xi] : S(0);
                            }
                        }
                    }
                }
    }
}

// Scatter-add transpose of im2col3d into the gradient tensor.
template <class S>
void col2im3d(const S* cols_mat, int64_t c0, int64_t cn, const std::array<int64_t, 3>& k,
              const Conv3dSpec& sp, int64_t To, int64_t Ho, int64_t Wo, Tensor<S>& gx) {
    const int64_t T = gx.shape[1], H = gx.shape[2], W = gx.shape[3];
    const int64_t cols = To * Ho * Wo;
    int64_t row = 0;
    for (int64_t c = c0; c < c0 + cn; ++c) {
        for (int64_t dt = 0; dt < k[0]; ++dt)
            for (int64_t dy = 0; dy < k[1]; ++dy)
                for (int64_t dx = 0; dx < k[2]; ++dx, ++row) {
                    const S* src = cols_mat + row * cols;
                    int64_t col = 0;
                    for (int64_t to = 0; to < To; ++to) {
                        int64_t ti = to * sp.stride[0] + dt - sp.pad[0];
                        bool t_ok = ti >= 0 && ti < T;
                        for (int64_t yo = 0; yo < Ho; ++yo) {
                            int64_t yi = yo * sp.stride[1] + dy - sp.pad[1];
                            bool y_ok = t_ok && yi >= 0 && yi < H;
                            if (!y_ok) {
                                col += Wo;
                                continue;
                            }
                            S* dst = gx.ptr() + ((c * T + ti) * H + yi) * W;
                            for (int64_t xo = 0; xo < Wo; ++xo, ++col) {
                                int64_t xi = xo * sp.stride[2] + dx - sp.pad[2];
                                if (xi >= 0 && xi < W) dst[xi] += src[col];
                            }
                        }
                    }
                }
    }
}

// Depthwise (groups == Cin == Cout) forward/backward without im2col.
template <class S>
void depthwise_forward(const Tensor<S>& x, const Tensor<S>& w, const Conv3dSpec& sp,
                       Tensor<S>& out) {
    const int64_t C = x.shape[0], T = x.shape[1], H = x.shape[2], W = x.shape[3];
    const int64_t To = out.shape[1], Ho = out.shape[2], Wo = out.shape[3];
    const std::array<int64_t, 3> k{w.shape[2], w.shape[3], w.shape[4]};
    std::fill(out.data.begin(), out.data.end(), S(0));
    for (int64_t c = 0; c < C; ++c)
        for (int64_t dt = 0; dt < k[0]; ++dt)
            for (int64_t dy = 0; dy < k[1]; ++dy)
                for (int64_t dx = 0; dx < k[2]; ++dx) {
                    const S wv = w[((c * k[0] + dt) * k[1] + dy) * k[2] + dx];
                    for (int64_t to = 0; to < To; ++to) {
                        int64_t ti = to * sp.stride[0] + dt - sp.pad[0];
                        if (ti < 0 || ti >= T) continue;
                        for (int64_t yo = 0; yo < Ho; ++yo) {
                            int64_t yi = yo * sp.stride[1] + dy - sp.pad[1];
                            if (yi < 0 || yi >= H) continue;
                            S* dst = out.ptr() + ((c * To + to) * Ho + yo) * Wo;
                            const S* src = x.ptr() + ((c * T + ti) * H + yi) * W;
                            for (int64_t xo = 0; xo < Wo; ++xo) {
                                int64_t xi = xo * sp.stride[2] + dx - sp.pad[2];
                                if (xi >= 0 && xi < W) dst[xo] += wv * src[xi];
                            }
                        }
                    }
                }
}

template <class S>
void depthwise_backward(const Tensor<S>& x, const Tensor<S>& w, const Conv3dSpec& sp,
                        const Tensor<S>& gy, Tensor<S>* gx, Tensor<S>* gw) {
    const int64_t C = x.shape[0], T = x.shape[1], H = x.shape[2], W = x.shape[3];
    const int64_t To = gy.shape[1], Ho = gy.shape[2], Wo = gy.shape[3];
    const std::array<int64_t, 3> k{w.shape[2], w.shape[3], w.shape[4]};
    for (int64_t c = 0; c < C; ++c)
        for (int64_t dt = 0; dt < k[0]; ++dt)
            for (int64_t dy = 0; dy < k[1]; ++dy)
                for (int64_t dx = 0; dx < k[2]; ++dx) {
                    const int64_t widx = ((c * k[0] + dt) * k[1] + dy) * k[2] + dx;
                    const S wv = w[widx];
                    S wacc = S(0);
                    for (int64_t to = 0; to < To; ++to) {
                        int64_t ti = to * sp.stride[0] + dt - sp.pad[0];
                        if (ti < 0 || ti >= T) continue;
                        for (int64_t yo = 0; yo < Ho; ++yo) {
                            int64_t yi = yo * sp.stride[1] + dy - sp.pad[1];
                            if (yi < 0 || yi >= H) continue;
                            const S* gr = gy.ptr() + ((c * To + to) * Ho + yo) * Wo;
                            const S* src = x.ptr() + ((c * T + ti) * H + yi) * W;
                            S* gxr = gx ? gx->ptr() + ((c * T + ti) * H + yi) * W : nullptr;
                            for (int64_t xo = 0; xo < Wo; ++xo) {
                                int64_t xi = xo * sp.stride[2] + dx - sp.pad[2];
                                if (xi < 0 || xi >= W) continue;
                                wacc += gr[xo] * src[xi];
                                if (gxr) gxr[xi] += wv * gr[xo];
                            }
                        }
                    }
                    if (gw) (*gw)[widx] += wacc;
                }
}

} // namespace detail

// x: (Cin, T, H, W); w: (Cout, Cin/groups, kt, kh, kw); b: (Cout) or -1.
template <class S>
int conv3d(Tape<S>& t, int x, int w, int b, const Conv3dSpec& sp) {
    const Tensor<S>& vx = t.val(x);
    const Tensor<S>& vw = t.val(w);
    require(vx.rank() == 4, "conv3d: input must be (C,T,H,W)");
    require(vw.rank() == 5, "conv3d: weight must be (Cout,Cin_g,kt,kh,kw)");
    const int64_t Cin = vx.shape[0], T = vx.shape[1], H = vx.shape[2], W = vx.shape[3];
    const int64_t Cout = vw.shape[0], Cin_g = vw.shape[1];
    const std::array<int64_t, 3> k{vw.shape[2], vw.shape[3], vw.shape[4]};
    const int64_t g = sp.groups;
    require(Cin % g == 0 && Cout % g == 0 && Cin / g == Cin_g, "conv3d: group/channel mismatch");
    const int64_t To = detail::conv_out(T, k[0], sp.stride[0], sp.pad[0]);
    const int64_t Ho = detail::conv_out(H, k[1], sp.stride[1], sp.pad[1]);
    const int64_t Wo = detail::conv_out(W, k[2], sp.stride[2], sp.pad[2]);
    require(To > 0 && Ho > 0 && Wo > 0, "conv3d: output would be empty");
    const int64_t V = To * Ho * Wo;
    const int64_t K = Cin_g * k[0] * k[1] * k[2];
    const int64_t Cout_g = Cout / g;
    const bool depthwise = g == Cin && Cout == Cin && Cin_g == 1;

    Tensor<S> out({Cout, To, Ho, Wo});
    if (depthwise) {
        detail::depthwise_forward(vx, vw, sp, out);
    } else {
        std::vector<S> cols(static_cast<size_t>(K * V));
        for (int64_t gi = 0; gi < g; ++gi) {
            detail::im2col3d(vx, gi * Cin_g, Cin_g, k, sp, To, Ho, Wo, cols.data());
            Eigen::Map<const EigenRM<S>> Wm(vw.ptr() + gi * Cout_g * K, Cout_g, K);
            Eigen::Map<const EigenRM<S>> Xc(cols.data(), K, V);
            Eigen::Map<EigenRM<S>> Y(out.ptr() + gi * Cout_g * V, Cout_g, V);
            Y.noalias() = Wm * Xc;
        }
    }
    if (b >= 0) {
        const Tensor<S>& vb = t.val(b);
        require(vb.numel() == Cout, "conv3d: bias size");
        for (int64_t c = 0; c < Cout; ++c) {
            S bias = vb[c];
            S* p = out.ptr() + c * V;
            for (int64_t i = 0; i < V; ++i) p[i] += bias;
        }
    }
    bool rg = t.requires_grad(x) || t.requires_grad(w) || (b >= 0 && t.requires_grad(b));
    return t.make(std::move(out), rg, [&t, x, w, b, sp, k, g, Cin_g, Cout_g, K, V, To, Ho, Wo,
                                       Cout, depthwise, id = t.size()]() {
        const Tensor<S>& gy = t.grad(id);
        const Tensor<S>& vx2 = t.val(x);
        const Tensor<S>& vw2 = t.val(w);
        if (depthwise) {
            detail::depthwise_backward(vx2, vw2, sp, gy,
                                       t.requires_grad(x) ? &t.grad(x) : nullptr,
                                       t.requires_grad(w) ? &t.grad(w) : nullptr);
        } else {
            std::vector<S> cols(static_cast<size_t>(K * V));
            std::vector<S> gcols;
            for (int64_t gi = 0; gi < g; ++gi) {
                Eigen::Map<const EigenRM<S>> Gy(gy.ptr() + gi * Cout_g * V, Cout_g, V);
                if (t.requires_grad(w)) {
                    detail::im2col3d(vx2, gi * Cin_g, Cin_g, k, sp, To, Ho, Wo, cols.data());
                    Eigen::Map<const EigenRM<S>> Xc(cols.data(), K, V);
                    Eigen::Map<EigenRM<S>> Gw(t.grad(w).ptr() + gi * Cout_g * K, Cout_g, K);
                    Gw.noalias() += Gy * Xc.transpose();
                }
                if (t.requires_grad(x)) {
                    gcols.assign(static_cast<size_t>(K * V), S(0));
                    Eigen::Map<const EigenRM<S>> Wm(vw2.ptr() + gi * Cout_g * K, Cout_g, K);
                    Eigen::Map<EigenRM<S>> Gc(gcols.data(), K, V);
                    Gc.noalias() = Wm.transpose() * Gy;
                    detail::col2im3d(gcols.data(), gi * Cin_g, Cin_g, k, sp, To, Ho, Wo,
                                     t.grad(x));
                }
            }
        }
        if (b >= 0 && t.requires_grad(b)) {
            Tensor<S>& gb = t.grad(b);
            for (int64_t c = 0; c < Cout; ++c) {
                S acc = S(0);
                const S* p = gy.ptr() + c * V;
                for (int64_t i = 0; i < V; ++i) acc += p[i];
                gb[c] += acc;
            }
        }
    });
}

// Nearest-neighbour upsampling by integer factors along (T,H,W).
template <class S>
int upsample3d(Tape<S>& t, int x, std::array<int64_t, 3> f) {
    const Tensor<S>& vx = t.val(x);
    require(vx.rank() == 4, "upsample3d: input must be (C,T,H,W)");
    const int64_t C = vx.shape[0], T = vx.shape[1], H = vx.shape[2], W = vx.shape[3];
    Tensor<S> out({C, T * f[0], H * f[1], W * f[2]});
    for (int64_t c = 0; c < C; ++c)
        for (int64_t ti = 0; ti < T * f[0]; ++ti)
            for (int64_t y = 0; y < H * f[1]; ++y)
                for (int64_t xx = 0; xx < W * f[2]; ++xx)
                    out.at(c, ti, y, xx) = vx.at(c, ti / f[0], y / f[1], xx / f[2]);
    return t.make(std::move(out), t.requires_grad(x), [&t, x, f, C, T, H, W, id = t.size()]() {
        const Tensor<S>& g = t.grad(id);
        Tensor<S>& gx = t.grad(x);
        for (int64_t c = 0; c < C; ++c)
            for (int64_t ti = 0; ti < T * f[0]; ++ti)
                for (int64_t y = 0; y < H * f[1]; ++y)
                    for (int64_t xx = 0; xx < W * f[2]; ++xx)
                        gx.at(c, ti / f[0], y / f[1], xx / f[2]) += g.at(c, ti, y, xx);
    });
}

// Global average over (T,H,W) -> (C).
template <class S>
int global_avg_pool(Tape<S>& t, int x) {
    const Tensor<S>& vx = t.val(x);
    require(vx.rank() == 4, "global_avg_pool: input must be (C,T,H,W)");
    const int64_t C = vx.shape[0];
    const int64_t V = vx.shape[1] * vx.shape[2] * vx.shape[3];
    Tensor<S> out({C});
    for (int64_t c = 0; c < C; ++c) {
        S acc = S(0);
        const S* p = vx.ptr() + c * V;
        for (int64_t i = 0; i < V; ++i) acc += p[i];
        out[c] = acc / static_cast<S>(V);
    }
    return t.make(std::move(out), t.requires_grad(x), [&t, x, C, V, id = t.size()]() {
        const Tensor<S>& g = t.grad(id);
        Tensor<S>& gx = t.grad(x);
        for (int64_t c = 0; c < C; ++c) {
            S gv = g[c] / static_cast<S>(V);
            S* p = gx.ptr() + c * V;
            for (int64_t i = 0; i < V; ++i) p[i] += gv;
        }
    });
}

// Average over (H,W) only -> (C, T).
template <class S>
int avg_pool_hw(Tape<S>& t, int x) {
    const Tensor<S>& vx = t.val(x);
    require(vx.rank() == 4, "avg_pool_hw: input must be (C,T,H,W)");
    const int64_t C = vx.shape[0], T = vx.shape[1];
    const int64_t A = vx.shape[2] * vx.shape[3];
    Tensor<S> out({C, T});
    for (int64_t c = 0; c < C; ++c)
        for (int64_t ti = 0; ti < T; ++ti) {
            S acc = S(0);
            const S* p = vx.ptr() + (c * T + ti) * A;
            for (int64_t i = 0; i < A; ++i) acc += p[i];
            out.at(c, ti) = acc / static_cast<S>(A);
        }
    return t.make(std::move(out), t.requires_grad(x), [&t, x, C, T, A, id = t.size()]() {
        const Tensor<S>& g = t.grad(id);
        Tensor<S>& gx = t.grad(x);
        for (int64_t c = 0; c < C; ++c)
            for (int64_t ti = 0; ti < T; ++ti) {
                S gv = g.at(c, ti) / static_cast<S>(A);
                S* p = gx.ptr() + (c * T + ti) * A;
                for (int64_t i = 0; i < A; ++i) p[i] += gv;
            }
    });
}

// (C,T,H,W) scaled per-channel by s (C). The squeeze-excitation gate.
template <class S>
int mul_channels(Tape<S>& t, int x, int s) {
    const Tensor<S>& vx = t.val(x);
    const Tensor<S>& vs = t.val(s);
    require(vx.rank() == 4 && vs.numel() == vx.shape[0], "mul_channels: shape mismatch");
    const int64_t C = vx.shape[0];
    const int64_t V = vx.shape[1] * vx.shape[2] * vx.shape[3];
    Tensor<S> out = vx;
    for (int64_t c = 0; c < C; ++c) {
        S sc = vs[c];
        S* p = out.ptr() + c * V;
        for (int64_t i = 0; i < V; ++i) p[i] *= sc;
    }
    bool rg = t.requires_grad(x) || t.requires_grad(s);
    return t.make(std::move(out), rg, [&t, x, s, C, V, id = t.size()]() {
        const Tensor<S>& g = t.grad(id);
        if (t.requires_grad(x)) {
            const Tensor<S>& vs2 = t.val(s);
            Tensor<S>& gx = t.grad(x);
            for (int64_t c = 0; c < C; ++c) {
                S sc = vs2[c];
                const S* gp = g.ptr() + c * V;
                S* p = gx.ptr() + c * V;
                for (int64_t i = 0; i < V; ++i) p[i] += sc * gp[i];
            }
        }
        if (t.requires_grad(s)) {
            const Tensor<S>& vx2 = t.val(x);
            Tensor<S>& gs = t.grad(s);
            for (int64_t c = 0; c < C; ++c) {
                S acc = S(0);
                const S* gp = g.ptr() + c * V;
                const S* xp = vx2.ptr() + c * V;
                for (int64_t i = 0; i < V; ++i) acc += gp[i] * xp[i];
                gs[c] += acc;
            }
        }
    });
}

// ---------------------------------------------------------------------------
// rotary position embedding
// ---------------------------------------------------------------------------

// x: (Spos, D) with D even; positions: one integer per row.
// Pair j rotates by angle pos * base^(-2j/D).
template <class S>
int rope_apply(Tape<S>& t, int x, std::vector<int64_t> positions, double base = 10000.0) {
    const Tensor<S>& vx = t.val(x);
    require(vx.rank() == 2, "rope_apply: rank-2 required");
    const int64_t n = vx.shape[0], d = vx.shape[1];
    require(d % 2 == 0, "rope_apply: head dimension must be even");
    require(static_cast<int64_t>(positions.size()) == n, "rope_apply: one position per row");
    auto pos = std::make_shared<std::vector<int64_t>>(std::move(positions));
    auto rotate = [d](const Tensor<S>& in, Tensor<S>& outp, const std::vector<int64_t>& ps,
                      double b, bool inverse) {
        for (int64_t i = 0; i < in.shape[0]; ++i) {
            double m = static_cast<double>(ps[static_cast<size_t>(i)]);
            for (int64_t j = 0; j < d / 2; ++j) {
                double theta = std::pow(b, -2.0 * static_cast<double>(j) / static_cast<double>(d));
                double ang = m * theta * (inverse ? -1.0 : 1.0);
                S c = static_cast<S>(std::cos(ang)), s = static_cast<S>(std::sin(ang));
                S x0 = in.at(i, 2 * j), x1 = in.at(i, 2 * j + 1);
                outp.at(i, 2 * j) = x0 * c - x1 * s;
                outp.at(i, 2 * j + 1) = x0 * s + x1 * c;
            }
        }
    };
    Tensor<S> out({n, d});
    rotate(vx, out, *pos, base, false);
    return t.make(std::move(out), t.requires_grad(x), [&t, x, pos, base, rotate, n, d, id = t.size()]() {
        const Tensor<S>& g = t.grad(id);
        Tensor<S> gin({n, d});
        rotate(g, gin, *pos, base, true);
        Tensor<S>& gx = t.grad(x);
        for (int64_t i = 0; i < gin.numel(); ++i) gx[i] += gin[i];
    });
}

// ---------------------------------------------------------------------------
// Fourier mixing: real part of two chained 1-D DFTs
// ---------------------------------------------------------------------------

namespace detail {

// Cached symmetric cos/sin DFT kernels for a given length.
template <class S>
const std::pair<Tensor<S>, Tensor<S>>& dft_kernels(int64_t n) {
    static std::map<int64_t, std::pair<Tensor<S>, Tensor<S>>> cache;
    auto it = cache.find(n);
    if (it == cache.end()) {
        constexpr double kTwoPi = 6.283185307179586476925286766559;
        Tensor<S> c({n, n}), s({n, n});
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < n; ++j) {
                double a = kTwoPi * static_cast<double>(i * j) / static_cast<double>(n);
                c.at(i, j) = static_cast<S>(std::cos(a));
                s.at(i, j) = static_cast<S>(std::sin(a));
            }
        it = cache.emplace(n, std::make_pair(std::move(c), std::move(s))).first;
    }
    return it->second;
}

// For real x: Re(DFT_rows(DFT_cols(x))) = C_r x C_c - S_r x S_c. The same
// kernel combination implements the inverse (with 1/(S*E) scaling), because
// Re((C+iS)y(C+iS)) = CyC - SyS for real y. Both maps are self-adjoint since
// C and S are symmetric.
template <class S>
int fourier_mix(Tape<S>& t, int x, bool inverse) {
    const Tensor<S>& vx = t.val(x);
    require(vx.rank() == 2, "fourier_mix: rank-2 required");
    const int64_t r = vx.shape[0], c = vx.shape[1];
    const auto& [Cr, Sr] = dft_kernels<S>(r);
    const auto& [Cc, Sc] = dft_kernels<S>(c);
    int cr = t.leaf(Cr), sr = t.leaf(Sr), cc = t.leaf(Cc), sc = t.leaf(Sc);
    int term1 = matmul(t, matmul(t, cr, x), cc);
    int term2 = matmul(t, matmul(t, sr, x), sc);
    int y = sub(t, term1, term2);
    if (inverse) y = scale(t, y, S(1) / static_cast<S>(r * c));
    return y;
}

} // namespace detail

// 2-D Fourier mixing of a (S x E) sequence: unnormalized forward pair of
// 1-D DFTs (embedding axis then sequence axis), real part kept.
template <class S>
int fft2d_real(Tape<S>& t, int x) {
    return detail::fourier_mix(t, x, false);
}

// Inverse pair with 1/(S*E) normalization, real part kept.
template <class S>
int ifft2d_real(Tape<S>& t, int x) {
    return detail::fourier_mix(t, x, true);
}

} // namespace maura
