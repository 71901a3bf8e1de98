// Copyright 2026 the maura authors
// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference verification of reverse-mode gradients, plus the
// registry of named checkable targets behind `maura gradcheck`.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "maura/tape.hpp"

namespace maura {

struct GradCheckResult {
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
    int64_t elements = 0;

    bool ok(double tol) const { return max_rel_err <= tol; }
};

// build(tape, input_ids) constructs a scalar loss from leaves bound in the
// same order as `inputs` and returns its node id. Gradients are checked at
// every element of every input with central differences of width h.
// Relative error is measured per input tensor against the gradient's
// infinity norm, so near-zero entries do not spuriously dominate.
inline GradCheckResult finite_diff_check(
    const std::vector<TensorD>& inputs,
    const std::function<int(Tape<double>&, const std::vector<int>&)>& build, double h = 1e-5) {
    std::vector<TensorD> analytic;
    {
        Tape<double> tape;
        std::vector<int> ids;
        for (const auto& in : inputs) ids.push_back(tape.leaf(in, true));
        int loss = build(tape, ids);
        tape.backward(loss);
        for (int id : ids) analytic.push_back(tape.grad(id));
    }
    auto eval = [&](const std::vector<TensorD>& pts) {
        Tape<double> tape;
        std::vector<int> ids;
        for (const auto& in : pts) ids.push_back(tape.leaf(in, false));
        int loss = build(tape, ids);
        return tape.val(loss)[0];
    };
    GradCheckResult res;
    std::vector<TensorD> work = inputs;
    for (size_t k = 0; k < inputs.size(); ++k) {
        double max_abs = 0.0, scale = 0.0;
        std::vector<double> numeric(static_cast<size_t>(inputs[k].numel()));
        for (int64_t i = 0; i < inputs[k].numel(); ++i) {
            double orig = work[k][i];
            work[k][i] = orig + h;
            double fp = eval(work);
            work[k][i] = orig - h;
            double fm = eval(work);
            work[k][i] = orig;
            numeric[static_cast<size_t>(i)] = (fp - fm) / (2.0 * h);
            ++res.elements;
        }
        for (int64_t i = 0; i < inputs[k].numel(); ++i) {
            double a = analytic[k][i], n = numeric[static_cast<size_t>(i)];
            max_abs = std::max(max_abs, std::abs(a - n));
            scale = std::max({scale, std::abs(a), std::abs(n)});
        }
        res.max_abs_err = std::max(res.max_abs_err, max_abs);
        res.max_rel_err = std::max(res.max_rel_err, max_abs / std::max(scale, 1e-6));
    }
    return res;
}

struct GradTarget {
    std::string name;
    double tolerance;
    std::function<GradCheckResult(uint64_t seed)> run;
};

// All registered targets, in a stable order.
const std::vector<GradTarget>& grad_targets();

// Throws ValidationError for unknown names.
const GradTarget& find_grad_target(const std::string& name);

} // namespace maura
