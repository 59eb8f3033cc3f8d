#pragma once

#include <qaf/diffcore/array.hpp>

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace qaf {

class Node;
using Var = std::shared_ptr<Node>;

/// A value in the define-by-run graph. Parameters are long-lived leaf nodes;
/// everything else is rebuilt each step and freed with the root.
class Node {
public:
    using BackwardFn = std::function<void(Node&)>;

    Node(Array v, bool requires_grad) : value(std::move(v)), requires_grad(requires_grad) {}

    Array value;
    Array grad;
    std::vector<Var> parents;
    BackwardFn backward_fn;
    bool requires_grad = false;
    bool has_grad = false;
    const char* op = "leaf";

    /// Allocates a zero gradient on first use.
    Array& ensure_grad()
    {
        if (!has_grad) {
            grad = Array::zeros_like(value);
            has_grad = true;
        }
        return grad;
    }

    void zero_grad()
    {
        if (has_grad) grad.fill(0.0);
    }

    const Shape& shape() const noexcept { return value.shape(); }
};

inline Var constant(Array value) { return std::make_shared<Node>(std::move(value), false); }

inline Var parameter(Array value) { return std::make_shared<Node>(std::move(value), true); }

inline Var scalar_constant(double v) { return constant(Array::scalar(v)); }

/// Builds an interior node. Throws NonFiniteError naming the primitive when
/// the forward value is not finite. Constant subgraphs drop their parents.
inline Var make_op(const char* op, Array value, std::vector<Var> parents, Node::BackwardFn fn)
{
    if (!value.all_finite())
        throw NonFiniteError(std::string(op) + ": non-finite output, shape " + shape_str(value.shape()));
    bool rg = false;
    for (const auto& p : parents) rg = rg || p->requires_grad;
    auto node = std::make_shared<Node>(std::move(value), rg);
    node->op = op;
    if (rg) {
        node->parents = std::move(parents);
        node->backward_fn = std::move(fn);
    }
    return node;
}

/// Reverse-mode sweep from a scalar root. Gradients accumulate additively
/// into every reachable node that requires them.
inline void backward(const Var& root)
{
    if (!root->value.is_scalar())
        throw ShapeError("backward: root must be scalar, got shape " + shape_str(root->shape()));
    if (!root->requires_grad) return;

    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && n->has_grad) n->backward_fn(*n);
    }
}

} // namespace qaf
