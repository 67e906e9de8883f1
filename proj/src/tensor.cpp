#include "tcseg/tensor.hpp"

#include <sstream>
#include <unordered_set>

#include "tcseg/errors.hpp"

namespace tcseg {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::span<double> detail::TensorImpl::grad_buffer() {
    if (!has_grad) {
        grad.assign(values.size(), 0.0);
        has_grad = true;
    }
    return grad;
}

Tensor::Tensor(Shape shape, double fill) {
    for (std::size_t d : shape)
        if (d == 0) throw ArgumentError("tensor extents must be positive, got " + shape_str(shape));
    impl_ = std::make_shared<detail::TensorImpl>();
    impl_->values.assign(shape_numel(shape), fill);
    impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) {
    for (std::size_t d : shape)
        if (d == 0) throw ArgumentError("tensor extents must be positive, got " + shape_str(shape));
    if (shape_numel(shape) != values.size())
        throw ArgumentError("tensor shape " + shape_str(shape) + " does not match " +
                            std::to_string(values.size()) + " values");
    impl_ = std::make_shared<detail::TensorImpl>();
    impl_->shape = std::move(shape);
    impl_->values = std::move(values);
}

Tensor make_tensor(std::shared_ptr<detail::TensorImpl> impl) { return Tensor(std::move(impl)); }

static detail::TensorImpl& checked(const std::shared_ptr<detail::TensorImpl>& p) {
    if (!p) throw StateError("use of an undefined tensor");
    return *p;
}

const Shape& Tensor::shape() const { return checked(impl_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    const Shape& s = shape();
    if (axis >= s.size())
        throw ArgumentError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
    return s[axis];
}

std::size_t Tensor::numel() const { return checked(impl_).values.size(); }

std::span<const double> Tensor::values() const { return checked(impl_).values; }

std::span<double> Tensor::mutable_values() { return checked(impl_).values; }

double Tensor::item() const {
    const auto& impl = checked(impl_);
    if (impl.values.size() != 1)
        throw ArgumentError("item() on non-scalar tensor " + shape_str(impl.shape));
    return impl.values[0];
}

bool Tensor::requires_grad() const { return checked(impl_).requires_grad; }
void Tensor::set_requires_grad(bool on) { checked(impl_).requires_grad = on; }
bool Tensor::is_taped() const { return checked(impl_).node != nullptr; }
bool Tensor::has_grad() const { return checked(impl_).has_grad; }

std::span<const double> Tensor::grad() const {
    auto& impl = checked(impl_);
    if (!impl.has_grad) throw StateError("tensor has no gradient");
    return impl.grad;
}

std::span<double> Tensor::mutable_grad() {
    auto& impl = checked(impl_);
    if (!impl.has_grad) throw StateError("tensor has no gradient");
    return impl.grad;
}

void Tensor::zero_grad() {
    auto& impl = checked(impl_);
    impl.grad.assign(impl.values.size(), 0.0);
    impl.has_grad = true;
}

void Tensor::clear_grad() {
    auto& impl = checked(impl_);
    impl.grad.clear();
    impl.grad.shrink_to_fit();
    impl.has_grad = false;
}

Tensor Tensor::detach() const {
    const auto& impl = checked(impl_);
    return Tensor(impl.shape, impl.values);
}

bool needs_grad(const Tensor& t) { return t.defined() && t.impl()->needs_grad(); }

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                   detail::BackwardFn backward_fn) {
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->values = std::move(values);
    if (g_grad_enabled) {
        bool any = false;
        for (const auto& in : inputs) any = any || needs_grad(in);
        if (any) {
            auto node = std::make_shared<detail::Node>();
            node->inputs.reserve(inputs.size());
            for (const auto& in : inputs)
                if (in.defined()) node->inputs.push_back(in.impl());
            node->backward = std::move(backward_fn);
            impl->node = std::move(node);
        }
    }
    return make_tensor(std::move(impl));
}

void backward(const Tensor& loss) {
    if (!loss.defined()) throw StateError("backward on an undefined tensor");
    if (loss.numel() != 1)
        throw ArgumentError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
    const auto& root = loss.impl();
    if (!root->node && !root->requires_grad)
        throw StateError("backward on a tensor that is not part of a recorded graph");

    // Iterative post-order DFS gives a topological order of taped impls.
    std::vector<detail::TensorImpl*> order;
    std::unordered_set<detail::TensorImpl*> visited;
    std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [impl, next] = stack.back();
        if (impl->node && next < impl->node->inputs.size()) {
            detail::TensorImpl* child = impl->node->inputs[next++].get();
            if (child->node && visited.insert(child).second) stack.emplace_back(child, 0);
            continue;
        }
        order.push_back(impl);
        stack.pop_back();
    }

    root->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::TensorImpl* impl = *it;
        if (!impl->node) continue;
        if (impl->has_grad) impl->node->backward(*impl);
    }
    // Release the graph; intermediate buffers die with their last handle.
    for (detail::TensorImpl* impl : order) {
        impl->node.reset();
        if (!impl->requires_grad && impl != root.get()) {
            impl->grad.clear();
            impl->grad.shrink_to_fit();
            impl->has_grad = false;
        }
    }
}

Parameter::Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
    value.set_requires_grad(true);
    velocity = Tensor::zeros(value.shape());
}

} // namespace tcseg
