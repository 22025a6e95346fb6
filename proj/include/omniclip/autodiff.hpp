#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "omniclip/tensor.hpp"

namespace omniclip {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One entry of the autodiff tape. Creation order is a topological order of
// the expression graph, so the reverse sweep just walks ids downward.
struct Node {
    Tensor value;
    Tensor grad; // undefined until first accumulation; treated as zeros
    bool requires_grad = false;
    bool trainable = false; // leaf parameter flag
    std::uint64_t id = 0;
    std::string name; // non-empty for named leaves (parameters)
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backward; // pulls this->grad into parents
};

// Handle to a tape node; cheap to copy. Graph interior nodes are created by
// the ops in ops.hpp, leaves by the factories below.
class Var {
public:
    Var() = default;
    explicit Var(NodePtr n) : n_(std::move(n)) {}

    static Var leaf(Tensor value, bool trainable, std::string name = {});
    static Var constant(Tensor value) { return leaf(std::move(value), false); }

    bool defined() const { return n_ != nullptr; }
    const Tensor& value() const { return n_->value; }
    Tensor& value() { return n_->value; } // leaf mutation (optimizer)
    const Shape& shape() const { return n_->value.shape; }
    std::size_t size() const { return n_->value.size(); }
    bool trainable() const { return n_->trainable; }
    const std::string& name() const { return n_->name; }

    // Gradient as accumulated by the last backward(); zeros if untouched.
    Tensor grad_or_zero() const;
    bool has_grad() const { return n_->grad.defined(); }
    void clear_grad() { n_->grad = Tensor(); }

    Node* node() const { return n_.get(); }
    const NodePtr& ptr() const { return n_; }

private:
    NodePtr n_;
};

// Creates an interior node: finite-checks the output, wires parents, and
// derives requires_grad. `bw` may be empty for pure data movement of
// constant inputs.
Var make_node(const char* op, Tensor out, std::vector<NodePtr> parents, std::function<void(Node&)> bw);

// Reverse accumulation from `root` (seeded with ones). Gradients accumulate
// into every reachable node with requires_grad; frozen leaves are skipped.
void backward(const Var& root);

// Zero-allocates n.grad if needed; used by op backward closures.
Tensor& ensure_grad(Node& n);

} // namespace omniclip
