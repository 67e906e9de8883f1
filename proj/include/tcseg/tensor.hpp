#pragma once
// Dense row-major float64 tensors with a dynamic reverse-mode tape.
//
// A Tensor is a cheap shared handle. Ops never mutate their inputs; the
// result of an op whose inputs need gradients carries a tape node that
// backward() walks in reverse topological order.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tcseg {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct TensorImpl;
}

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor scalar(double v) { return Tensor(Shape{1}, v); }

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> values() const;
    // In-place access for leaf tensors (parameter init, optimizer updates).
    std::span<double> mutable_values();
    double item() const;

    bool requires_grad() const;
    void set_requires_grad(bool on);
    // True when this tensor is produced by a recorded op.
    bool is_taped() const;
    bool has_grad() const;
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    // Allocates (or resets) a zero gradient buffer.
    void zero_grad();
    void clear_grad();

    // Same values, no tape, no grad requirement. Values are copied.
    Tensor detach() const;
    Tensor clone() const { return detach(); }

    const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

private:
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<detail::TensorImpl> impl_;

    friend Tensor make_tensor(std::shared_ptr<detail::TensorImpl>);
};

namespace detail {

struct TensorImpl;
// Receives the op output (values and accumulated grad).
using BackwardFn = std::function<void(const TensorImpl& out)>;

struct Node {
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    BackwardFn backward;
};

struct TensorImpl {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::shared_ptr<Node> node;

    bool needs_grad() const { return requires_grad || node != nullptr; }
    // Returns the gradient buffer, allocating zeros on first use.
    std::span<double> grad_buffer();
};

} // namespace detail

Tensor make_tensor(std::shared_ptr<detail::TensorImpl> impl);

// Builds an op result. The tape node is attached only when grad mode is on
// and at least one input needs gradients.
Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                   detail::BackwardFn backward);

bool needs_grad(const Tensor& t);

bool grad_enabled();

// Disables taping for its lifetime (teacher forward, evaluation).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

// Reverse sweep from a scalar loss. Throws ArgumentError for non-scalar
// losses and StateError when the loss was not recorded on the tape.
void backward(const Tensor& loss);

struct Parameter {
    std::string name;
    Tensor value;
    Tensor velocity;

    Parameter() = default;
    Parameter(std::string name, Tensor value);
};

} // namespace tcseg
