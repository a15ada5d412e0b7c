#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hairmatte/tensor.hpp"

namespace hairmatte {

// Define-by-run reverse-mode tape. Each op allocates a node holding its
// forward result and a closure that routes the node's gradient into its
// parents. A node graph belongs to one training step and one thread.

namespace autodiff_detail {
inline thread_local bool grad_enabled = true;
}

struct NoGradGuard {
    NoGradGuard() : prev_(autodiff_detail::grad_enabled) { autodiff_detail::grad_enabled = false; }
    ~NoGradGuard() { autodiff_detail::grad_enabled = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

inline bool grad_enabled() { return autodiff_detail::grad_enabled; }

template <typename T>
struct NodeT {
    TensorT<T> value;
    TensorT<T> grad;  // allocated on first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<NodeT<T>>> parents;
    std::function<void(NodeT<T>&)> backward_fn;  // empty for leaves

    void ensure_grad() {
        if (grad.shape() != value.shape()) grad = TensorT<T>(value.shape());
    }

    void accumulate(const TensorT<T>& g) {
        ensure_grad();
        T* dst = grad.data();
        const T* src = g.data();
        for (std::size_t i = 0; i < grad.size(); ++i) dst[i] += src[i];
    }

    void zero_grad() {
        if (!grad.empty()) grad.fill(T(0));
    }
};

template <typename T>
using ValueT = std::shared_ptr<NodeT<T>>;

using Value = ValueT<float>;

template <typename T>
ValueT<T> make_leaf(TensorT<T> value, bool requires_grad) {
    auto node = std::make_shared<NodeT<T>>();
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    return node;
}

template <typename T>
ValueT<T> constant(TensorT<T> value) {
    return make_leaf(std::move(value), false);
}

template <typename T>
ValueT<T> parameter(TensorT<T> value) {
    return make_leaf(std::move(value), true);
}

template <typename T>
void check_recorded(const ValueT<T>& v, const char* op) {
    if (!v) fail(ErrorKind::data, std::string(op) + ": detached (null) tensor in graph");
}

// Wires a freshly computed output into the tape. With gradients disabled, or
// when no parent needs them, the result is a free-standing constant and the
// closure is dropped.
template <typename T>
ValueT<T> make_op(TensorT<T> out, std::vector<ValueT<T>> parents,
                  std::function<void(NodeT<T>&)> backward_fn) {
    bool needs = false;
    if (grad_enabled()) {
        for (const auto& p : parents) {
            if (p && p->requires_grad) {
                needs = true;
                break;
            }
        }
    }
    auto node = std::make_shared<NodeT<T>>();
    node->value = std::move(out);
    node->requires_grad = needs;
    if (needs) {
        node->parents = std::move(parents);
        node->backward_fn = std::move(backward_fn);
    }
    return node;
}

// Reverse-mode sweep from a recorded scalar. Gradients accumulate into every
// reachable node with requires_grad (leaves keep theirs until zeroed).
template <typename T>
void backward(const ValueT<T>& loss) {
    check_recorded(loss, "backward");
    require(loss->value.shape() == Shape{1, 1, 1, 1}, ErrorKind::shape,
            "backward: loss must be a scalar tensor, got " + loss->value.shape().str());
    require(loss->requires_grad, ErrorKind::data,
            "backward: loss is not part of a recorded graph");
    loss->value.check_finite("backward: loss");

    // iterative post-order over the DAG
    std::vector<NodeT<T>*> order;
    std::unordered_set<NodeT<T>*> seen;
    std::vector<std::pair<NodeT<T>*, std::size_t>> stack;
    stack.emplace_back(loss.get(), 0);
    seen.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            NodeT<T>* parent = node->parents[next].get();
            ++next;
            if (parent && parent->requires_grad && !seen.count(parent)) {
                seen.insert(parent);
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss->ensure_grad();
    loss->grad[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        NodeT<T>* node = *it;
        if (node->backward_fn) {
            node->ensure_grad();
            node->backward_fn(*node);
        }
    }
}

}  // namespace hairmatte
