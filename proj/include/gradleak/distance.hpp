#pragma once

#include <vector>

#include "gradleak/tensor.hpp"
#include "gradleak/victim.hpp"

namespace gradleak {

enum class DistanceKind { sapag, euclidean };

enum class SigmaMode {
    per_layer,         // sigma2_l = popVar(grad_l), Eq.-literal
    global,            // one popVar over all entries, repeated per layer
    per_layer_scaled,  // sigma2_l = numel_l * popVar(grad_l); keeps the kernel
                       // argument O(1) for large layers (attack default)
};

enum class QSchedule { constant, harmonic, geometric };

struct DistanceSpec {
    DistanceKind kind = DistanceKind::sapag;
    std::vector<double> sigma2;     // per layer, sapag only
    std::vector<double> q_weights;  // per layer, non-increasing
    double sigma_floor = 1e-8;
};

/// Kernel bandwidths from the snapshot only; computed once per attack.
std::vector<double> estimate_sigma2(const GradientSnapshot& snapshot, SigmaMode mode,
                                    double sigma_floor = 1e-8);

/// constant -> 1; harmonic -> 1/l (1-indexed); geometric -> gamma^(l-1).
std::vector<double> make_q_weights(int64_t num_layers, QSchedule schedule, double gamma = 0.5);

/// Differentiable scalar distance between dummy gradients and the snapshot.
/// sapag: sum_l Q_l * (1 - exp(-||d_l||^2 / sigma2_l)); euclidean: sum_l ||d_l||^2.
Tensor distance(const std::vector<Tensor>& dummy_grads, const GradientSnapshot& snapshot,
                const DistanceSpec& spec);

/// Eq.-level oracles for the sapag kernel on a single layer, used to
/// cross-check the autodiff route. delta = dummy_grad - true_grad.
Tensor analytic_first_derivative(const Tensor& delta, double q, double sigma2);
Tensor analytic_second_derivative(const Tensor& delta, double q, double sigma2);

const char* distance_kind_name(DistanceKind kind);
DistanceKind distance_kind_from_name(const std::string& name);  // accepts "sapag", "euclidean", "dlg"
const char* sigma_mode_name(SigmaMode mode);
SigmaMode sigma_mode_from_name(const std::string& name);
const char* q_schedule_name(QSchedule schedule);
QSchedule q_schedule_from_name(const std::string& name);

}  // namespace gradleak
