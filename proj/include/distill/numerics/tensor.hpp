#pragma once

// Dense float64 tensor with a reverse-mode autodiff graph.
//
// A Tensor is a cheap handle onto a shared node. Operations on tensors that
// require gradients record a backward closure on the result node; backward()
// walks the recorded graph in reverse topological order and accumulates
// dLoss/dNode into every node that requires gradients.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "distill/error.hpp"

namespace distill::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}

inline void check_finite(std::span<const double> values, const char* op, const char* what) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string("non-finite ") + what + " in " + op);
        }
    }
}

}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode(); }

/// Disables graph recording for the guard's lifetime (inference).
class NoGradGuard {
public:
    NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
    ~NoGradGuard() { detail::grad_mode() = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

class Tensor {
public:
    Tensor() = default;

    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
        : node_(std::make_shared<detail::Node>()) {
        if (nn::numel(shape) != data.size()) {
            throw ShapeError("tensor: shape " + to_string(shape) + " holds " +
                             std::to_string(nn::numel(shape)) + " values, got " +
                             std::to_string(data.size()));
        }
        detail::check_finite(data, "tensor construction", "value");
        node_->shape = std::move(shape);
        node_->data = std::move(data);
        node_->requires_grad = requires_grad;
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        const std::size_t n = nn::numel(shape);
        return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
    }

    static Tensor full(Shape shape, double value, bool requires_grad = false) {
        const std::size_t n = nn::numel(shape);
        return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
    }

    static Tensor scalar(double value, bool requires_grad = false) {
        return Tensor({1}, {value}, requires_grad);
    }

    bool defined() const noexcept { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->data.size(); }

    std::span<const double> data() const { return node_->data; }
    /// Direct write access, for optimizers and parameter loading. Bypasses the graph.
    std::span<double> mutable_data() { return node_->data; }

    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return node_->grad.size() == node_->data.size(); }
    std::span<const double> grad() const { return node_->grad; }
    std::span<double> mutable_grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    void zero_grad() {
        if (has_grad()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
    }

    double item() const {
        if (numel() != 1) throw ShapeError("item: tensor " + to_string(shape()) + " is not scalar");
        return node_->data[0];
    }

    double operator[](std::size_t i) const { return node_->data[i]; }

    /// Copy of the values, cut from the graph.
    Tensor detach(bool requires_grad = false) const {
        return Tensor(shape(), node_->data, requires_grad);
    }

    const std::shared_ptr<detail::Node>& node() const { return node_; }

private:
    std::shared_ptr<detail::Node> node_;
};

namespace detail {

/// Builds an op result. The backward closure is only kept when grad mode is on
/// and some input requires gradients.
inline Tensor make_result(Shape shape, std::vector<double> data,
                          std::initializer_list<const Tensor*> inputs, const char* op,
                          std::function<void(Node&)> backward) {
    check_finite(data, op, "value");
    Tensor out(std::move(shape), std::move(data));
    if (!grad_mode()) return out;
    bool any = false;
    for (const Tensor* t : inputs) any = any || (t->defined() && t->requires_grad());
    if (!any) return out;
    auto& node = *out.node();
    node.requires_grad = true;
    node.op = op;
    for (const Tensor* t : inputs) {
        if (t->defined()) node.parents.push_back(t->node());
    }
    node.backward = std::move(backward);
    return out;
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
    }
}

}  // namespace detail

/// Reverse pass from a scalar loss. Gradients accumulate into existing buffers.
inline void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ShapeError("backward: loss must be scalar, got " +
                         (loss.defined() ? to_string(loss.shape()) : std::string("undefined")));
    }
    if (!loss.requires_grad()) {
        throw InvalidArgument("backward: loss does not depend on any tensor requiring grad");
    }

    // Iterative post-order DFS gives a topological order (parents before children).
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, std::size_t>> stack{{loss.node().get(), 0}};
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            detail::Node* parent = node->parents[next++].get();
            if (parent->requires_grad && visited.insert(parent).second) stack.push_back({parent, 0});
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    auto& root = *loss.node();
    root.ensure_grad();
    root.grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node& node = **it;
        if (node.backward) {
            node.ensure_grad();
            node.backward(node);
        }
    }
    for (detail::Node* node : order) detail::check_finite(node->grad, node->op, "gradient");
}

// ---------------------------------------------------------------------------
// Elementwise and reduction ops

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "add");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    auto pa = a.node(), pb = b.node();
    return detail::make_result(a.shape(), std::move(out), {&a, &b}, "add", [pa, pb](detail::Node& self) {
        for (auto* p : {pa.get(), pb.get()}) {
            if (!p->requires_grad) continue;
            p->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
        }
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "sub");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
    auto pa = a.node(), pb = b.node();
    return detail::make_result(a.shape(), std::move(out), {&a, &b}, "sub", [pa, pb](detail::Node& self) {
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] -= self.grad[i];
        }
    });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "mul");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    auto pa = a.node(), pb = b.node();
    return detail::make_result(a.shape(), std::move(out), {&a, &b}, "mul", [pa, pb](detail::Node& self) {
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] * pb->data[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] += self.grad[i] * pa->data[i];
        }
    });
}

inline Tensor scale(const Tensor& a, double factor) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
    auto pa = a.node();
    return detail::make_result(a.shape(), std::move(out), {&a}, "scale", [pa, factor](detail::Node& self) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] * factor;
    });
}

inline Tensor sum(const Tensor& a) {
    double total = 0.0;
    for (double v : a.data()) total += v;
    auto pa = a.node();
    return detail::make_result({1}, {total}, {&a}, "sum", [pa](detail::Node& self) {
        pa->ensure_grad();
        for (double& g : pa->grad) g += self.grad[0];
    });
}

inline Tensor mean(const Tensor& a) {
    return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

inline Tensor relu(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
    auto pa = a.node();
    return detail::make_result(a.shape(), std::move(out), {&a}, "relu", [pa](detail::Node& self) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            if (pa->data[i] > 0.0) pa->grad[i] += self.grad[i];
        }
    });
}

inline double sigmoid_scalar(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

inline Tensor sigmoid(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_scalar(a[i]);
    auto pa = a.node();
    return detail::make_result(a.shape(), std::move(out), {&a}, "sigmoid", [pa](detail::Node& self) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const double s = self.data[i];
            pa->grad[i] += self.grad[i] * s * (1.0 - s);
        }
    });
}

inline Tensor reshape(const Tensor& a, Shape shape) {
    if (numel(shape) != a.numel()) {
        throw ShapeError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
    }
    std::vector<double> out(a.data().begin(), a.data().end());
    auto pa = a.node();
    return detail::make_result(std::move(shape), std::move(out), {&a}, "reshape", [pa](detail::Node& self) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
    });
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

}  // namespace distill::nn
