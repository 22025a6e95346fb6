#include "omniclip/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <unordered_set>

namespace omniclip {

namespace {
std::atomic<std::uint64_t> g_next_id{1};
}

Var Var::leaf(Tensor value, bool trainable, std::string name) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->trainable = trainable;
    n->requires_grad = trainable;
    n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    n->name = std::move(name);
    return Var(std::move(n));
}

Tensor Var::grad_or_zero() const {
    if (n_->grad.defined()) return n_->grad;
    return Tensor(n_->value.shape);
}

Var make_node(const char* op, Tensor out, std::vector<NodePtr> parents, std::function<void(Node&)> bw) {
    check_finite(out, op);
    auto n = std::make_shared<Node>();
    n->value = std::move(out);
    for (const auto& p : parents)
        if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) {
        n->parents = std::move(parents);
        n->backward = std::move(bw);
    }
    n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    return Var(std::move(n));
}

Tensor& ensure_grad(Node& n) {
    if (!n.grad.defined()) n.grad = Tensor(n.value.shape);
    return n.grad;
}

void backward(const Var& root) {
    if (!root.defined()) throw ShapeError("backward: undefined root");
    Node* r = root.node();
    if (!r->requires_grad) return; // nothing trainable reachable
    check_finite(r->value, "backward root");

    // Collect reachable grad-requiring nodes; creation ids give topo order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{r};
    seen.insert(r);
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (const auto& p : n->parents) {
            if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
        }
    }
    std::sort(order.begin(), order.end(), [](const Node* a, const Node* b) { return a->id > b->id; });

    ensure_grad(*r).fill(1.0);
    for (Node* n : order) {
        if (!n->backward) continue;
        if (!n->grad.defined()) continue; // no gradient flowed here
        n->backward(*n);
    }
}

} // namespace omniclip
