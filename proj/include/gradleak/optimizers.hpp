#pragma once

#include <deque>
#include <functional>
#include <vector>

#include "gradleak/tensor.hpp"

namespace gradleak {

/// Evaluates the objective at the given parameter values; fills `grads`
/// (same shapes as params) when non-null. Value-only calls are cheaper and
/// used by the line search.
using LossClosure =
    std::function<double(const std::vector<Tensor>& params, std::vector<Tensor>* grads)>;

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // decoupled; 0 makes this plain Adam
};

class AdamW {
public:
    explicit AdamW(AdamConfig cfg) : cfg_(cfg) {}

    void step(std::vector<Tensor>& params, const std::vector<Tensor>& grads);

private:
    AdamConfig cfg_;
    int64_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

/// Bounded-history L-BFGS with Armijo backtracking (step halved at most
/// max_halvings times). Curvature pairs are taken between consecutive step()
/// entry points, so externally projected (clamped) iterates feed the history.
class LbfgsLite {
public:
    struct Config {
        double lr = 1.0;
        int history = 20;
        int max_halvings = 20;
        double armijo_c = 1e-4;
    };

    struct StepResult {
        double accepted_loss = 0.0;
        bool line_search_failed = false;
        int evals = 0;
    };

    explicit LbfgsLite(Config cfg) : cfg_(cfg) {}

    /// Advances params by one iteration. f0/g0 must be the objective value
    /// and gradient at the current params (the engine evaluates them once
    /// per iteration). On line-search failure a small gradient-descent
    /// fallback step is taken and the history is reset.
    StepResult step(std::vector<Tensor>& params, const LossClosure& closure, double f0,
                    const std::vector<Tensor>& g0);

private:
    Config cfg_;
    std::deque<std::vector<double>> s_hist_, y_hist_;
    std::vector<double> prev_x_, prev_g_;
    bool has_prev_ = false;

    std::vector<double> search_direction(const std::vector<double>& g) const;
};

std::vector<double> flatten_tensors(const std::vector<Tensor>& ts);
std::vector<Tensor> unflatten_like(const std::vector<double>& flat,
                                   const std::vector<Tensor>& like);

}  // namespace gradleak
