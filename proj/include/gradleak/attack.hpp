#pragma once

#include <optional>
#include <vector>

#include "gradleak/distance.hpp"
#include "gradleak/models.hpp"
#include "gradleak/victim.hpp"

namespace gradleak {

class ChecksumError : public Error {
public:
    using Error::Error;
};

enum class DummyInit { normal, constant };
enum class OptimizerKind { adamw, adam, lbfgs_lite };

struct AttackConfig {
    DummyInit dummy_init = DummyInit::normal;
    double constant_value = 0.5;

    OptimizerKind optimizer = OptimizerKind::lbfgs_lite;
    std::optional<double> lr;          // per-optimizer default when unset
    std::optional<int64_t> max_iters;  // 500 for lbfgs_lite, 20000 for adam family
    double weight_decay = 0.01;        // adamw only
    int history = 20;                  // lbfgs_lite only

    DistanceKind distance_kind = DistanceKind::sapag;
    SigmaMode sigma_mode = SigmaMode::per_layer_scaled;
    QSchedule q_schedule = QSchedule::harmonic;
    double gamma = 0.5;
    double sigma_floor = 1e-8;

    uint64_t seed = 0;
    int64_t log_every = 10;
    double stop_tol = 1e-10;
    bool clamp_x = true;  // image path; text embeddings run unconstrained

    // Explicit dummy seeding, mainly for fixed-point checks.
    std::optional<Tensor> x0, y0;

    double resolved_lr() const;
    int64_t resolved_max_iters() const;
};

struct TracePoint {
    int64_t iter = 0;
    double distance = 0.0;
    std::optional<double> mse_vs_truth;
};

struct ReconstructionResult {
    Tensor x_recon;  // best-loss iterate, inside the normalization range
    Tensor y_recon;  // raw soft-label scores (consumed through softmax)
    std::vector<int64_t> predicted_labels;
    std::vector<TracePoint> loss_trace;
    int64_t iters_run = 0;
    double wall_seconds = 0.0;
    double best_distance = 0.0;
    int64_t best_iter = 0;
    bool aborted = false;
    std::string abort_reason;
};

/// normal: N(0,1), clamped to [0,1] when clamp01 (image dummies);
/// constant: every entry = constant_value.
Tensor init_dummy(const Shape& shape, DummyInit mode, double constant_value, uint64_t seed,
                  bool clamp01);

/// The optimization loop: repeatedly differentiate the gradient-matching
/// distance through the dummy gradients and step (X', Y'). Reads only the
/// snapshot; `eval_truth` is metric annotation for the trace and never
/// influences the optimization.
ReconstructionResult run_attack(const ModelSpec& spec, const std::vector<NamedTensor>& weights,
                                const GradientSnapshot& snapshot, const AttackConfig& cfg,
                                const Tensor* eval_truth = nullptr);

/// Batched reconstruction is the same joint optimization over the stacked
/// dummy batch; result ordering is arbitrary (match_batch aligns it).
ReconstructionResult run_attack_batched(const ModelSpec& spec,
                                        const std::vector<NamedTensor>& weights,
                                        const GradientSnapshot& snapshot, const AttackConfig& cfg,
                                        const Tensor* eval_truth = nullptr);

const char* optimizer_name(OptimizerKind kind);
OptimizerKind optimizer_from_name(const std::string& name);
const char* dummy_init_name(DummyInit mode);
DummyInit dummy_init_from_name(const std::string& name);

}  // namespace gradleak
