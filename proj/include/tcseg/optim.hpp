#pragma once

#include <span>

#include "tcseg/tensor.hpp"

namespace tcseg {

struct SgdOptions {
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 1e-4;
};

// v <- momentum v + grad + weight_decay theta; theta <- theta - lr v; grads are zeroed.
// Throws StateError if any parameter lacks a gradient buffer.
void sgd_step(std::span<Parameter> params, const SgdOptions& opts);
void sgd_step(std::span<Parameter> params, double lr, double momentum, double weight_decay);

// teacher <- alpha teacher + (1 - alpha) student, elementwise per parameter pair.
void ema_update(std::span<Parameter> teacher, std::span<const Parameter> student, double alpha);

} // namespace tcseg
