#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "gradleak/tensor.hpp"

namespace gradleak {
namespace autodiff {

/// Produces the gradients w.r.t. each node input, given the gradient w.r.t.
/// the node output. Implemented in terms of recorded primitives so that a
/// backward pass run with create_graph is itself differentiable.
using BackwardFn = std::function<std::vector<Tensor>(const Tensor& grad_out)>;

struct Node {
    uint64_t id = 0;  // creation order; ids are globally increasing, so
                      // descending id is a valid reverse topological order
    const char* op = "";
    std::vector<std::shared_ptr<Node>> inputs;
    BackwardFn backward;  // empty for leaves
};

/// Append-only record of primitive applications for one differentiation
/// scope. Confined to a single thread; opening a tape makes it the active
/// recording target for that thread until it is destroyed (scopes nest).
class GradTape {
public:
    GradTape();
    ~GradTape();
    GradTape(const GradTape&) = delete;
    GradTape& operator=(const GradTape&) = delete;

    static GradTape* active();

    /// Recording is suspended inside backward passes that do not build a graph.
    bool recording() const { return suspend_depth_ == 0; }

    std::shared_ptr<Node> emplace(const char* op, std::vector<std::shared_ptr<Node>> inputs,
                                  BackwardFn backward);
    std::shared_ptr<Node> emplace_leaf();

    int64_t size() const { return static_cast<int64_t>(nodes_.size()); }

private:
    friend class NoRecordGuard;
    std::vector<std::shared_ptr<Node>> nodes_;
    GradTape* previous_ = nullptr;
    int suspend_depth_ = 0;
};

/// Suspends recording on the active tape for the guard's lifetime.
class NoRecordGuard {
public:
    NoRecordGuard();
    ~NoRecordGuard();
    NoRecordGuard(const NoRecordGuard&) = delete;
    NoRecordGuard& operator=(const NoRecordGuard&) = delete;

private:
    GradTape* tape_;
};

}  // namespace autodiff

class AutodiffError : public Error {
public:
    using Error::Error;
};

/// d(scalar_output)/d(wrt_i), same shape as wrt_i. With create_graph the
/// returned tensors are recorded and can be differentiated again.
/// Throws AutodiffError if scalar_output is not one element or a wrt tensor
/// is not a requires_grad tensor reachable from it.
std::vector<Tensor> grad(const Tensor& scalar_output, const std::vector<Tensor>& wrt,
                         bool create_graph);

}  // namespace gradleak
