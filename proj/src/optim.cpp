#include "tcseg/optim.hpp"

#include <algorithm>

#include "tcseg/errors.hpp"

namespace tcseg {

void sgd_step(std::span<Parameter> params, const SgdOptions& opts) {
    for (const Parameter& p : params)
        if (!p.value.has_grad()) throw StateError("sgd_step: parameter '" + p.name + "' has no gradient");
    for (Parameter& p : params) {
        auto theta = p.value.mutable_values();
        auto grad = p.value.mutable_grad();
        auto vel = p.velocity.mutable_values();
        for (std::size_t i = 0; i < theta.size(); ++i) {
            vel[i] = opts.momentum * vel[i] + grad[i] + opts.weight_decay * theta[i];
            theta[i] -= opts.lr * vel[i];
        }
        std::fill(grad.begin(), grad.end(), 0.0);
    }
}

void sgd_step(std::span<Parameter> params, double lr, double momentum, double weight_decay) {
    sgd_step(params, SgdOptions{lr, momentum, weight_decay});
}

void ema_update(std::span<Parameter> teacher, std::span<const Parameter> student, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ArgumentError("ema_update: alpha must lie in [0, 1]");
    if (teacher.size() != student.size())
        throw ArgumentError("ema_update: teacher has " + std::to_string(teacher.size()) +
                            " parameters, student has " + std::to_string(student.size()));
    for (std::size_t i = 0; i < teacher.size(); ++i)
        if (teacher[i].value.shape() != student[i].value.shape())
            throw ArgumentError("ema_update: shape mismatch for '" + teacher[i].name + "'");
    for (std::size_t i = 0; i < teacher.size(); ++i) {
        auto t = teacher[i].value.mutable_values();
        auto s = student[i].value.values();
        for (std::size_t j = 0; j < t.size(); ++j) t[j] = alpha * t[j] + (1.0 - alpha) * s[j];
    }
}

} // namespace tcseg
