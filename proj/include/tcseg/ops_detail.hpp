#pragma once
// Internal helpers shared by op implementations.

#include <span>

#include "tcseg/tensor.hpp"

namespace tcseg::detail {

// Gradient buffer of t, allocated on demand; empty when t needs no gradient.
std::span<double> grad_of(const Tensor& t);

} // namespace tcseg::detail
