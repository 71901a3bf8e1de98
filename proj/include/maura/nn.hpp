// Copyright 2026 the maura authors
// SPDX-License-Identifier: Apache-2.0
//
// Named parameter storage, deterministic initialization, per-tape binding
// and the AdamW optimizer. Parameters are seeded from (seed, name) so that
// initialization does not depend on registration order.

#pragma once

#include <map>
#include <set>
#include <string>

#include "maura/tape.hpp"
#include "maura/tensor.hpp"

namespace maura {

template <class S>
struct ParamStore {
    std::map<std::string, Tensor<S>> params; // ordered: deterministic iteration

    bool has(const std::string& name) const { return params.count(name) != 0; }

    Tensor<S>& get(const std::string& name) {
        auto it = params.find(name);
        require(it != params.end(), "unknown parameter: " + name);
        return it->second;
    }
    const Tensor<S>& get(const std::string& name) const {
        auto it = params.find(name);
        require(it != params.end(), "unknown parameter: " + name);
        return it->second;
    }

    Tensor<S>& add(const std::string& name, Tensor<S> t) {
        require(!has(name), "duplicate parameter: " + name);
        return params.emplace(name, std::move(t)).first->second;
    }

    // Normal init with std = sqrt(2 / fan_in) (He). Deterministic per name.
    Tensor<S>& add_he(const std::string& name, std::vector<int64_t> shape, int64_t fan_in,
                      uint64_t seed) {
        Rng rng(mix_seed(seed, fnv1a64(name)));
        double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
        return add(name, Tensor<S>::randn(std::move(shape), rng, stddev));
    }

    Tensor<S>& add_normal(const std::string& name, std::vector<int64_t> shape, double stddev,
                          uint64_t seed) {
        Rng rng(mix_seed(seed, fnv1a64(name)));
        return add(name, Tensor<S>::randn(std::move(shape), rng, stddev));
    }

    Tensor<S>& add_zeros(const std::string& name, std::vector<int64_t> shape) {
        return add(name, Tensor<S>::zeros(std::move(shape)));
    }

    Tensor<S>& add_full(const std::string& name, std::vector<int64_t> shape, S v) {
        return add(name, Tensor<S>::full(std::move(shape), v));
    }

    int64_t total_elements() const {
        int64_t n = 0;
        for (const auto& [k, v] : params) n += v.numel();
        return n;
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& [k, v] : params) out.push_back(k);
        return out;
    }

    template <class T>
    ParamStore<T> cast() const {
        ParamStore<T> out;
        for (const auto& [k, v] : params) out.params.emplace(k, v.template cast<T>());
        return out;
    }
};

// Binds parameters of one store into one tape as leaves. Parameters in the
// trainable set require grad; everything else enters as a constant.
template <class S>
class Binder {
public:
    Binder(Tape<S>& tape, ParamStore<S>& store, const std::set<std::string>* trainable = nullptr)
        : tape_(tape), store_(store), trainable_(trainable) {}

    int operator()(const std::string& name) {
        auto it = ids_.find(name);
        if (it != ids_.end()) return it->second;
        bool rg = trainable_ == nullptr || trainable_->count(name) != 0;
        int id = tape_.leaf(store_.get(name), rg);
        ids_.emplace(name, id);
        return id;
    }

    // Route a name to a node already on the tape (gradient checks bind
    // parameters as externally owned leaves this way).
    void bind_existing(const std::string& name, int id) { ids_[name] = id; }

    // Gradients of every bound trainable parameter, accumulated into `sink`.
    void collect_grads(std::map<std::string, Tensor<S>>& sink) const {
        for (const auto& [name, id] : ids_) {
            if (!tape_.requires_grad(id)) continue;
            auto it = sink.find(name);
            if (it == sink.end()) {
                sink.emplace(name, tape_.grad(id));
            } else {
                Tensor<S>& acc = it->second;
                const Tensor<S>& g = tape_.grad(id);
                for (int64_t i = 0; i < g.numel(); ++i) acc[i] += g[i];
            }
        }
    }

    const std::map<std::string, int>& bound() const { return ids_; }

private:
    Tape<S>& tape_;
    ParamStore<S>& store_;
    const std::set<std::string>* trainable_;
    std::map<std::string, int> ids_;
};

// Decoupled-weight-decay Adam. lr is passed per step (schedules live in the
// trainer); clip is a global-norm bound applied before the update.
template <class S>
class AdamW {
public:
    struct Hyper {
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double weight_decay = 0.0;
        double grad_clip = 0.0; // 0 disables
    };

    explicit AdamW(Hyper h = {}) : h_(h) {}

    void step(ParamStore<S>& store, std::map<std::string, Tensor<S>>& grads, double lr) {
        ++t_;
        double norm_sq = 0.0;
        for (auto& [name, g] : grads)
            for (int64_t i = 0; i < g.numel(); ++i)
                norm_sq += static_cast<double>(g[i]) * static_cast<double>(g[i]);
        double clip_scale = 1.0;
        if (h_.grad_clip > 0.0) {
            double norm = std::sqrt(norm_sq);
            if (norm > h_.grad_clip) clip_scale = h_.grad_clip / norm;
        }
        double bc1 = 1.0 - std::pow(h_.beta1, t_);
        double bc2 = 1.0 - std::pow(h_.beta2, t_);
        for (auto& [name, g] : grads) {
            Tensor<S>& p = store.get(name);
            auto& st = state_[name];
            if (st.m.numel() == 0) {
                st.m = Tensor<S>::zeros(p.shape);
                st.v = Tensor<S>::zeros(p.shape);
            }
            for (int64_t i = 0; i < p.numel(); ++i) {
                double gi = static_cast<double>(g[i]) * clip_scale;
                double m = h_.beta1 * st.m[i] + (1.0 - h_.beta1) * gi;
                double v = h_.beta2 * st.v[i] + (1.0 - h_.beta2) * gi * gi;
                st.m[i] = static_cast<S>(m);
                st.v[i] = static_cast<S>(v);
                double update = (m / bc1) / (std::sqrt(v / bc2) + h_.eps);
                double decayed = static_cast<double>(p[i]) * h_.weight_decay;
                p[i] = static_cast<S>(static_cast<double>(p[i]) - lr * (update + decayed));
            }
        }
    }

    int64_t steps_taken() const { return t_; }
    const Hyper& hyper() const { return h_; }

private:
    struct State {
        Tensor<S> m, v;
    };
    Hyper h_;
    std::map<std::string, State> state_;
    int64_t t_ = 0;
};

inline double cosine_lr(double base, int64_t step, int64_t total) {
    if (total <= 0) return base;
    double x = static_cast<double>(step) / static_cast<double>(total);
    return base * 0.5 * (1.0 + std::cos(3.14159265358979323846 * x));
}

inline double linear_lr(double base, int64_t step, int64_t total) {
    if (total <= 0) return base;
    return base * (1.0 - static_cast<double>(step) / static_cast<double>(total));
}

} // namespace maura
