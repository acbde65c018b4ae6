#include "gradleak/distance.hpp"

#include <cmath>

#include "gradleak/ops.hpp"

namespace gradleak {

std::vector<double> estimate_sigma2(const GradientSnapshot& snapshot, SigmaMode mode,
                                    double sigma_floor) {
    if (!(sigma_floor > 0.0)) throw ConfigError("estimate_sigma2: sigma_floor must be > 0");
    const auto& layers = snapshot.layer_grads;
    std::vector<double> out(layers.size());

    auto pop_var = [](std::span<const double> d) {
        double n = static_cast<double>(d.size());
        double mean = 0.0;
        for (double v : d) mean += v;
        mean /= n;
        double ss = 0.0;
        for (double v : d) ss += (v - mean) * (v - mean);
        return ss / n;
    };

    if (mode == SigmaMode::global) {
        std::vector<double> all;
        for (const auto& lg : layers) {
            auto d = lg.tensor.data();
            all.insert(all.end(), d.begin(), d.end());
        }
        double v = std::max(pop_var(all), sigma_floor);
        std::fill(out.begin(), out.end(), v);
        return out;
    }
    for (size_t l = 0; l < layers.size(); ++l) {
        double v = pop_var(layers[l].tensor.data());
        if (mode == SigmaMode::per_layer_scaled)
            v *= static_cast<double>(layers[l].tensor.numel());
        out[l] = std::max(v, sigma_floor);
    }
    return out;
}

std::vector<double> make_q_weights(int64_t num_layers, QSchedule schedule, double gamma) {
    if (num_layers < 1) throw ConfigError("make_q_weights: num_layers must be >= 1");
    if (schedule == QSchedule::geometric && !(gamma > 0.0 && gamma < 1.0))
        throw ConfigError("make_q_weights: geometric gamma must be in (0, 1)");
    std::vector<double> q(static_cast<size_t>(num_layers));
    for (int64_t l = 0; l < num_layers; ++l) {
        switch (schedule) {
            case QSchedule::constant: q[static_cast<size_t>(l)] = 1.0; break;
            case QSchedule::harmonic: q[static_cast<size_t>(l)] = 1.0 / static_cast<double>(l + 1); break;
            case QSchedule::geometric: q[static_cast<size_t>(l)] = std::pow(gamma, static_cast<double>(l)); break;
        }
    }
    return q;
}

Tensor distance(const std::vector<Tensor>& dummy_grads, const GradientSnapshot& snapshot,
                const DistanceSpec& spec) {
    const auto& target = snapshot.layer_grads;
    if (dummy_grads.size() != target.size())
        throw ShapeError("distance: " + std::to_string(dummy_grads.size()) +
                         " dummy layers vs " + std::to_string(target.size()) + " target layers");
    if (spec.kind == DistanceKind::sapag) {
        if (spec.sigma2.size() != target.size() || spec.q_weights.size() != target.size())
            throw ConfigError("distance: sapag spec sigma2/q_weights must cover every layer");
    }

    Tensor total = Tensor::scalar(0.0);
    for (size_t l = 0; l < target.size(); ++l) {
        if (!dummy_grads[l].same_shape(target[l].tensor))
            throw ShapeError("distance: layer '" + target[l].name + "' shape " +
                             shape_str(dummy_grads[l].shape()) + " vs snapshot " +
                             shape_str(target[l].tensor.shape()));
        Tensor delta = sub(dummy_grads[l], target[l].tensor);
        Tensor sq_norm = sum(mul(delta, delta));
        if (spec.kind == DistanceKind::euclidean) {
            total = add(total, sq_norm);
        } else {
            double s2 = std::max(spec.sigma2[l], spec.sigma_floor);
            Tensor kernel = exp(mul(sq_norm, -1.0 / s2));
            total = add(total, mul(sub(1.0, kernel), spec.q_weights[l]));
        }
    }
    return total;
}

Tensor analytic_first_derivative(const Tensor& delta, double q, double sigma2) {
    if (!(sigma2 > 0.0)) throw ConfigError("analytic_first_derivative: sigma2 must be > 0");
    auto d = delta.data();
    double sq_norm = 0.0;
    for (double v : d) sq_norm += v * v;
    double factor = 2.0 * q / sigma2 * std::exp(-sq_norm / sigma2);
    std::vector<double> out(d.size());
    for (size_t i = 0; i < d.size(); ++i) out[i] = factor * d[i];
    return Tensor::from_data(delta.shape(), std::move(out));
}

Tensor analytic_second_derivative(const Tensor& delta, double q, double sigma2) {
    if (!(sigma2 > 0.0)) throw ConfigError("analytic_second_derivative: sigma2 must be > 0");
    auto d = delta.data();
    double sq_norm = 0.0;
    for (double v : d) sq_norm += v * v;
    double e = std::exp(-sq_norm / sigma2);
    std::vector<double> out(d.size());
    for (size_t i = 0; i < d.size(); ++i)
        out[i] = 4.0 * q * (d[i] * d[i] - sigma2) / (sigma2 * sigma2) * e;
    return Tensor::from_data(delta.shape(), std::move(out));
}

const char* distance_kind_name(DistanceKind kind) {
    return kind == DistanceKind::sapag ? "sapag" : "dlg";
}

DistanceKind distance_kind_from_name(const std::string& name) {
    if (name == "sapag") return DistanceKind::sapag;
    if (name == "dlg" || name == "euclidean") return DistanceKind::euclidean;
    throw ConfigError("distance: unknown kind '" + name + "'");
}

const char* sigma_mode_name(SigmaMode mode) {
    switch (mode) {
        case SigmaMode::per_layer: return "per_layer";
        case SigmaMode::global: return "global";
        default: return "per_layer_scaled";
    }
}

SigmaMode sigma_mode_from_name(const std::string& name) {
    if (name == "per_layer") return SigmaMode::per_layer;
    if (name == "global") return SigmaMode::global;
    if (name == "per_layer_scaled") return SigmaMode::per_layer_scaled;
    throw ConfigError("sigma_mode: unknown value '" + name + "'");
}

const char* q_schedule_name(QSchedule schedule) {
    switch (schedule) {
        case QSchedule::constant: return "constant";
        case QSchedule::harmonic: return "harmonic";
        default: return "geometric";
    }
}

QSchedule q_schedule_from_name(const std::string& name) {
    if (name == "constant") return QSchedule::constant;
    if (name == "harmonic") return QSchedule::harmonic;
    if (name == "geometric") return QSchedule::geometric;
    throw ConfigError("q_schedule: unknown value '" + name + "'");
}

}  // namespace gradleak
