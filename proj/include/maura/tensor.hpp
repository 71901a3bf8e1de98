// Copyright 2026 the maura authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "maura/error.hpp"
#include "maura/rng.hpp"

namespace maura {

// Dense row-major n-d array. Plain value type: copyable, no views.
template <class S>
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<S> data;

    Tensor() = default;
    explicit Tensor(std::vector<int64_t> sh) : shape(std::move(sh)) {
        data.assign(static_cast<size_t>(numel_of(shape)), S(0));
    }
    Tensor(std::vector<int64_t> sh, std::vector<S> d) : shape(std::move(sh)), data(std::move(d)) {
        require(static_cast<int64_t>(data.size()) == numel_of(shape), "tensor data/shape mismatch");
    }

    static int64_t numel_of(const std::vector<int64_t>& sh) {
        int64_t n = 1;
        for (int64_t d : sh) {
            require(d >= 0, "negative dimension");
            n *= d;
        }
        return n;
    }

    static Tensor zeros(std::vector<int64_t> sh) { return Tensor(std::move(sh)); }

    static Tensor full(std::vector<int64_t> sh, S v) {
        Tensor t(std::move(sh));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    static Tensor randn(std::vector<int64_t> sh, Rng& rng, double stddev = 1.0) {
        Tensor t(std::move(sh));
        for (auto& v : t.data) v = static_cast<S>(rng.normal(0.0, stddev));
        return t;
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }

    S* ptr() { return data.data(); }
    const S* ptr() const { return data.data(); }

    S& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    const S& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

    // flat offset for up to 4 indices (row-major)
    int64_t off(int64_t a, int64_t b) const { return a * shape[1] + b; }
    int64_t off(int64_t a, int64_t b, int64_t c) const { return (a * shape[1] + b) * shape[2] + c; }
    int64_t off(int64_t a, int64_t b, int64_t c, int64_t d) const {
        return ((a * shape[1] + b) * shape[2] + c) * shape[3] + d;
    }

    S& at(int64_t a, int64_t b) { return data[static_cast<size_t>(off(a, b))]; }
    S& at(int64_t a, int64_t b, int64_t c) { return data[static_cast<size_t>(off(a, b, c))]; }
    S& at(int64_t a, int64_t b, int64_t c, int64_t d) { return data[static_cast<size_t>(off(a, b, c, d))]; }
    const S& at(int64_t a, int64_t b) const { return data[static_cast<size_t>(off(a, b))]; }
    const S& at(int64_t a, int64_t b, int64_t c) const { return data[static_cast<size_t>(off(a, b, c))]; }
    const S& at(int64_t a, int64_t b, int64_t c, int64_t d) const {
        return data[static_cast<size_t>(off(a, b, c, d))];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (S v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <class T>
    Tensor<T> cast() const {
        Tensor<T> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<T>(data[i]);
        return out;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << "(";
        for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
        os << ")";
        return os.str();
    }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;
using TensorI = Tensor<int32_t>;
using TensorU8 = Tensor<uint8_t>;

} // namespace maura
