#pragma once
// Central finite-difference oracle for tape gradients (test-only).

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "tcseg/ops.hpp"

namespace tcseg::testing {

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor t(shape);
    for (double& v : t.mutable_values()) v = dist(rng);
    return t;
}

// Relative error with an absolute floor so near-zero gradients compare sanely.
inline double relative_error(double analytic, double numeric, double floor = 1e-4) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
};

// Compares d loss / d inputs from backward() against central differences.
// `loss_fn` must rebuild the graph from the given inputs on every call.
// At most `max_per_input` coordinates per input are probed (all if 0).
inline GradCheckResult grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& loss_fn,
                                  std::vector<Tensor> inputs, double h = 1e-5,
                                  std::size_t max_per_input = 0, std::uint64_t seed = 7) {
    for (auto& in : inputs) {
        in.set_requires_grad(true);
        in.clear_grad();
    }
    Tensor loss = loss_fn(inputs);
    backward(loss);
    std::vector<std::vector<double>> analytic;
    for (auto& in : inputs) {
        if (in.has_grad())
            analytic.emplace_back(in.grad().begin(), in.grad().end());
        else
            analytic.emplace_back(in.numel(), 0.0);
    }

    GradCheckResult res;
    std::mt19937_64 rng(seed);
    NoGradGuard no_grad;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        std::vector<std::size_t> idx(inputs[t].numel());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        if (max_per_input && idx.size() > max_per_input) {
            std::shuffle(idx.begin(), idx.end(), rng);
            idx.resize(max_per_input);
        }
        auto vals = inputs[t].mutable_values();
        for (std::size_t i : idx) {
            const double orig = vals[i];
            vals[i] = orig + h;
            const double fp = loss_fn(inputs).item();
            vals[i] = orig - h;
            const double fm = loss_fn(inputs).item();
            vals[i] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            res.max_rel_error = std::max(res.max_rel_error, relative_error(analytic[t][i], numeric));
            ++res.checked;
        }
    }
    return res;
}

// Random linear functional of a tensor, so every output coordinate gets a distinct weight.
inline Tensor random_projection(const Tensor& y, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Tensor w = random_tensor(y.shape(), rng);
    return sum(mul(y, w));
}

} // namespace tcseg::testing
