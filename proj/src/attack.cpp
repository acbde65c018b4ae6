#include "gradleak/attack.hpp"

#include <chrono>
#include <cmath>

#include "gradleak/autodiff.hpp"
#include "gradleak/ops.hpp"
#include "gradleak/optimizers.hpp"
#include "gradleak/rng.hpp"
#include "gradleak/serialize.hpp"

namespace gradleak {

double AttackConfig::resolved_lr() const {
    if (lr) return *lr;
    return optimizer == OptimizerKind::lbfgs_lite ? 1.0 : 0.001;
}

int64_t AttackConfig::resolved_max_iters() const {
    if (max_iters) return *max_iters;
    return optimizer == OptimizerKind::lbfgs_lite ? 500 : 20000;
}

Tensor init_dummy(const Shape& shape, DummyInit mode, double constant_value, uint64_t seed,
                  bool clamp01) {
    if (mode == DummyInit::constant) return Tensor::full(shape, constant_value);
    Rng rng(seed);
    Tensor t = rng.normal_tensor(shape);
    return clamp01 ? clamp(t, 0.0, 1.0) : t;
}

namespace {

double plain_mse(const Tensor& a, const Tensor& b) {
    auto pa = a.data();
    auto pb = b.data();
    double s = 0.0;
    for (size_t i = 0; i < pa.size(); ++i) s += (pa[i] - pb[i]) * (pa[i] - pb[i]);
    return s / static_cast<double>(pa.size());
}

/// One full evaluation of the attack objective at (x, y): forward, dummy
/// gradients w.r.t. the weights (with create_graph when outer gradients are
/// wanted), then the distance to the snapshot.
double evaluate_distance(const ModelSpec& spec, const std::vector<NamedTensor>& weights,
                         const GradientSnapshot& snapshot, const DistanceSpec& dspec,
                         const Tensor& x_vals, const Tensor& y_vals, std::vector<Tensor>* grads) {
    autodiff::GradTape tape;
    std::vector<NamedTensor> w = weights;
    std::vector<Tensor> wparams;
    wparams.reserve(w.size());
    for (auto& nt : w) {
        nt.tensor = nt.tensor.detached();
        nt.tensor.set_requires_grad(true);
        wparams.push_back(nt.tensor);
    }
    Tensor x = x_vals.detached();
    Tensor y = y_vals.detached();
    x.set_requires_grad(true);
    y.set_requires_grad(true);

    Tensor l = loss(forward(spec, w, x), y);
    std::vector<Tensor> dummy_grads = grad(l, wparams, /*create_graph=*/grads != nullptr);
    Tensor d = distance(dummy_grads, snapshot, dspec);
    double value = d.item();
    if (grads) {
        auto gs = grad(d, {x, y}, /*create_graph=*/false);
        *grads = {gs[0].detached(), gs[1].detached()};
    }
    return value;
}

std::vector<int64_t> argmax_rows(const Tensor& t) {
    int64_t cols = t.dim(t.ndim() - 1);
    int64_t rows = t.numel() / cols;
    auto p = t.data();
    std::vector<int64_t> out(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r) {
        int64_t best = 0;
        for (int64_t c = 1; c < cols; ++c)
            if (p[static_cast<size_t>(r * cols + c)] > p[static_cast<size_t>(r * cols + best)])
                best = c;
        out[static_cast<size_t>(r)] = best;
    }
    return out;
}

}  // namespace

ReconstructionResult run_attack(const ModelSpec& spec, const std::vector<NamedTensor>& weights,
                                const GradientSnapshot& snapshot, const AttackConfig& cfg,
                                const Tensor* eval_truth) {
    auto t_start = std::chrono::steady_clock::now();
    spec.validate();

    if (tensor_bytes_checksum(weights) != snapshot.weight_checksum)
        throw ChecksumError("attack: weight checksum does not match the snapshot's model state");
    if (weights.size() != snapshot.layer_grads.size())
        throw ChecksumError("attack: weight/snapshot layer count mismatch");
    for (size_t i = 0; i < weights.size(); ++i)
        if (weights[i].name != snapshot.layer_grads[i].name)
            throw ChecksumError("attack: layer ordering mismatch at '" + weights[i].name + "'");

    bool text_model = std::holds_alternative<TransformerLiteSpec>(spec.arch);
    Shape x_shape = snapshot.meta.input_shape;
    int64_t label_rows = text_model ? 1 : x_shape.at(0);
    Shape y_shape{label_rows, spec.num_classes};

    Tensor x_vals = cfg.x0 ? *cfg.x0
                           : init_dummy(x_shape, cfg.dummy_init, cfg.constant_value,
                                        derive_seed(cfg.seed, "dummy_x", 0), cfg.clamp_x);
    Tensor y_vals = cfg.y0 ? *cfg.y0
                           : init_dummy(y_shape, DummyInit::normal, 0.0,
                                        derive_seed(cfg.seed, "dummy_y", 0), false);
    if (x_vals.shape() != x_shape)
        throw ShapeError("attack: dummy x " + shape_str(x_vals.shape()) +
                         " does not match snapshot input " + shape_str(x_shape));
    if (y_vals.shape() != y_shape)
        throw ShapeError("attack: dummy y " + shape_str(y_vals.shape()) + " must be " +
                         shape_str(y_shape));
    if (cfg.clamp_x) x_vals = clamp(x_vals, 0.0, 1.0);

    DistanceSpec dspec;
    dspec.kind = cfg.distance_kind;
    dspec.sigma_floor = cfg.sigma_floor;
    if (cfg.distance_kind == DistanceKind::sapag) {
        dspec.sigma2 = estimate_sigma2(snapshot, cfg.sigma_mode, cfg.sigma_floor);
        dspec.q_weights = make_q_weights(static_cast<int64_t>(snapshot.layer_grads.size()),
                                         cfg.q_schedule, cfg.gamma);
    }

    AdamConfig adam_cfg;
    adam_cfg.lr = cfg.resolved_lr();
    adam_cfg.weight_decay = cfg.optimizer == OptimizerKind::adamw ? cfg.weight_decay : 0.0;
    AdamW adam(adam_cfg);
    LbfgsLite::Config lcfg;
    lcfg.lr = cfg.resolved_lr();
    lcfg.history = cfg.history;
    LbfgsLite lbfgs(lcfg);

    LossClosure closure = [&](const std::vector<Tensor>& ps, std::vector<Tensor>* grads) {
        return evaluate_distance(spec, weights, snapshot, dspec, ps[0], ps[1], grads);
    };

    ReconstructionResult result;
    result.best_distance = std::numeric_limits<double>::infinity();
    std::vector<Tensor> params{x_vals, y_vals};

    auto log_point = [&](int64_t iter, double d) {
        TracePoint tp;
        tp.iter = iter;
        tp.distance = d;
        if (eval_truth) tp.mse_vs_truth = plain_mse(params[0], *eval_truth);
        result.loss_trace.push_back(tp);
    };
    auto note_best = [&](int64_t iter, double d) {
        if (d < result.best_distance) {
            result.best_distance = d;
            result.best_iter = iter;
            result.x_recon = params[0];
            result.y_recon = params[1];
            return true;
        }
        return false;
    };

    int64_t max_iters = cfg.resolved_max_iters();
    for (int64_t it = 0; it < max_iters; ++it) {
        double d;
        std::vector<Tensor> grads;
        try {
            d = closure(params, &grads);
        } catch (const NonFiniteError& e) {
            result.aborted = true;
            result.abort_reason =
                "non-finite loss at iteration " + std::to_string(it) + ": " + e.what();
            break;
        }
        bool improved = note_best(it, d);
        if (improved || it % cfg.log_every == 0) log_point(it, d);
        if (d < cfg.stop_tol) break;

        try {
            if (cfg.optimizer == OptimizerKind::lbfgs_lite)
                lbfgs.step(params, closure, d, grads);
            else
                adam.step(params, grads);
        } catch (const NonFiniteError& e) {
            result.aborted = true;
            result.abort_reason =
                "non-finite loss in optimizer step at iteration " + std::to_string(it) + ": " +
                e.what();
            break;
        }
        if (cfg.clamp_x) params[0] = clamp(params[0], 0.0, 1.0);
        result.iters_run = it + 1;
    }

    if (!result.aborted && result.iters_run == max_iters) {
        // final iterate, value only
        try {
            double d = closure(params, nullptr);
            bool improved = note_best(result.iters_run, d);
            if (improved || result.loss_trace.empty() ||
                result.loss_trace.back().iter != result.iters_run)
                log_point(result.iters_run, d);
        } catch (const NonFiniteError&) {
            // keep best-so-far
        }
    }
    if (!result.x_recon.defined()) {  // aborted before any finite evaluation
        result.x_recon = params[0];
        result.y_recon = params[1];
        result.best_distance = std::numeric_limits<double>::quiet_NaN();
    }

    result.predicted_labels = argmax_rows(result.y_recon);
    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return result;
}

ReconstructionResult run_attack_batched(const ModelSpec& spec,
                                        const std::vector<NamedTensor>& weights,
                                        const GradientSnapshot& snapshot, const AttackConfig& cfg,
                                        const Tensor* eval_truth) {
    return run_attack(spec, weights, snapshot, cfg, eval_truth);
}

const char* optimizer_name(OptimizerKind kind) {
    switch (kind) {
        case OptimizerKind::adamw: return "adamw";
        case OptimizerKind::adam: return "adam";
        default: return "lbfgs_lite";
    }
}

OptimizerKind optimizer_from_name(const std::string& name) {
    if (name == "adamw") return OptimizerKind::adamw;
    if (name == "adam") return OptimizerKind::adam;
    if (name == "lbfgs_lite" || name == "lbfgs") return OptimizerKind::lbfgs_lite;
    throw ConfigError("optimizer: unknown value '" + name + "'");
}

const char* dummy_init_name(DummyInit mode) {
    return mode == DummyInit::normal ? "normal" : "constant";
}

DummyInit dummy_init_from_name(const std::string& name) {
    if (name == "normal") return DummyInit::normal;
    if (name == "constant") return DummyInit::constant;
    throw ConfigError("dummy_init: unknown value '" + name + "'");
}

}  // namespace gradleak
