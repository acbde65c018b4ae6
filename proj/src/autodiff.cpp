#include "gradleak/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <optional>
#include <unordered_map>
#include <unordered_set>

#include "gradleak/ops.hpp"

namespace gradleak {
namespace autodiff {

namespace {
thread_local GradTape* g_active_tape = nullptr;
std::atomic<uint64_t> g_next_node_id{1};
}  // namespace

GradTape::GradTape() : previous_(g_active_tape) { g_active_tape = this; }

GradTape::~GradTape() {
    // Severing inputs/closures here keeps teardown independent of the order
    // in which user tensors referencing these nodes die.
    for (auto& n : nodes_) {
        n->backward = {};
        n->inputs.clear();
    }
    g_active_tape = previous_;
}

GradTape* GradTape::active() { return g_active_tape; }

std::shared_ptr<Node> GradTape::emplace(const char* op, std::vector<std::shared_ptr<Node>> inputs,
                                        BackwardFn backward) {
    auto node = std::make_shared<Node>();
    node->id = g_next_node_id.fetch_add(1, std::memory_order_relaxed);
    node->op = op;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
    nodes_.push_back(node);
    return node;
}

std::shared_ptr<Node> GradTape::emplace_leaf() { return emplace("leaf", {}, {}); }

NoRecordGuard::NoRecordGuard() : tape_(GradTape::active()) {
    if (tape_) ++tape_->suspend_depth_;
}

NoRecordGuard::~NoRecordGuard() {
    if (tape_) --tape_->suspend_depth_;
}

}  // namespace autodiff

namespace {

using autodiff::Node;

std::unordered_set<Node*> reachable_from(Node* root) {
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{root};
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        if (!seen.insert(n).second) continue;
        for (auto& in : n->inputs)
            if (in) stack.push_back(in.get());
    }
    return seen;
}

}  // namespace

std::vector<Tensor> grad(const Tensor& output, const std::vector<Tensor>& wrt, bool create_graph) {
    if (output.numel() != 1)
        throw AutodiffError("grad: output has " + std::to_string(output.numel()) +
                            " elements, expected a scalar");
    if (!output.node()) throw AutodiffError("grad: output does not participate in any tape");

    auto reachable = reachable_from(output.node().get());
    for (size_t i = 0; i < wrt.size(); ++i) {
        const Tensor& w = wrt[i];
        if (!w.requires_grad() || !w.node())
            throw AutodiffError("grad: wrt tensor #" + std::to_string(i) +
                                " does not require grad");
        if (!reachable.count(w.node().get()))
            throw AutodiffError("grad: wrt tensor #" + std::to_string(i) +
                                " is not reachable from the output");
    }

    // Reverse sweep in descending creation order over the frozen reachable
    // set; nodes appended by a create_graph backward are descendants of the
    // seed and never ancestors of the output, so they need no visit.
    std::vector<Node*> order(reachable.begin(), reachable.end());
    std::sort(order.begin(), order.end(), [](Node* a, Node* b) { return a->id > b->id; });

    std::optional<autodiff::NoRecordGuard> no_record;
    if (!create_graph) no_record.emplace();

    std::unordered_map<Node*, Tensor> grads;
    grads[output.node().get()] = Tensor::full(output.shape(), 1.0);

    for (Node* n : order) {
        auto it = grads.find(n);
        if (it == grads.end() || !n->backward) continue;
        std::vector<Tensor> input_grads = n->backward(it->second);
        for (size_t i = 0; i < n->inputs.size(); ++i) {
            Node* in = n->inputs[i].get();
            if (!in) continue;  // constant input
            auto slot = grads.find(in);
            if (slot == grads.end())
                grads.emplace(in, input_grads[i]);
            else
                slot->second = add(slot->second, input_grads[i]);
        }
    }

    std::vector<Tensor> out;
    out.reserve(wrt.size());
    for (const Tensor& w : wrt) {
        auto it = grads.find(w.node().get());
        if (it == grads.end())
            throw AutodiffError("grad: internal error, reachable wrt received no gradient");
        out.push_back(it->second);
    }
    return out;
}

}  // namespace gradleak
