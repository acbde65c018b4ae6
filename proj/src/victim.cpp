#include "gradleak/victim.hpp"

#include <cmath>

#include "gradleak/autodiff.hpp"
#include "gradleak/ops.hpp"
#include "gradleak/serialize.hpp"

namespace gradleak {

namespace {

Tensor model_forward(const ModelSpec& spec, const std::vector<NamedTensor>& weights,
                     const Tensor& x) {
    return forward(spec, weights, x);
}

std::vector<Tensor> weight_gradients(const ModelSpec& spec, std::vector<NamedTensor> weights,
                                     const Tensor& x, const Tensor& y) {
    autodiff::GradTape tape;
    std::vector<Tensor> params;
    params.reserve(weights.size());
    for (auto& w : weights) {
        w.tensor.set_requires_grad(true);
        params.push_back(w.tensor);
    }
    Tensor l = loss(model_forward(spec, weights, x), y);
    return grad(l, params, /*create_graph=*/false);
}

}  // namespace

GradientSnapshot capture(const ModelSpec& spec, const std::vector<NamedTensor>& weights,
                         const Tensor& x, const Tensor& y, uint64_t seed, int64_t epochs) {
    GradientSnapshot snap;
    snap.model = spec;
    snap.weight_checksum = tensor_bytes_checksum(weights);
    snap.meta.input_shape = x.shape();
    snap.meta.batch_size =
        std::holds_alternative<TransformerLiteSpec>(spec.arch) ? 1 : x.dim(0);
    snap.meta.epochs = epochs;
    snap.meta.seed = seed;

    std::vector<Tensor> grads = weight_gradients(spec, weights, x, y);
    snap.layer_grads.reserve(weights.size());
    for (size_t i = 0; i < weights.size(); ++i)
        snap.layer_grads.push_back({weights[i].name, grads[i].detached()});
    return snap;
}

TrainResult train(const ModelSpec& spec, std::vector<NamedTensor> weights, const LabeledData& data,
                  int64_t epochs, double lr) {
    if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
    TrainResult result;
    for (int64_t e = 0; e < epochs; ++e) {
        double epoch_loss;
        std::vector<Tensor> grads;
        {
            autodiff::GradTape tape;
            std::vector<Tensor> params;
            for (auto& w : weights) {
                w.tensor.set_requires_grad(true);
                params.push_back(w.tensor);
            }
            Tensor l = loss(forward(spec, weights, data.inputs), data.labels);
            epoch_loss = l.item();
            grads = grad(l, params, false);
        }
        for (size_t i = 0; i < weights.size(); ++i) {
            auto w = weights[i].tensor.data();
            auto g = grads[i].data();
            std::vector<double> updated(w.size());
            for (size_t j = 0; j < w.size(); ++j) updated[j] = w[j] - lr * g[j];
            weights[i].tensor = Tensor::from_data(weights[i].tensor.shape(), std::move(updated));
        }
        result.loss_history.push_back(epoch_loss);
    }
    result.weights = std::move(weights);
    return result;
}

std::vector<LayerStats> gradient_stats(const GradientSnapshot& snapshot) {
    std::vector<LayerStats> out;
    out.reserve(snapshot.layer_grads.size());
    for (const auto& lg : snapshot.layer_grads) {
        LayerStats s;
        s.name = lg.name;
        auto d = lg.tensor.data();
        double n = static_cast<double>(d.size());
        double sum = 0.0;
        for (double v : d) {
            sum += v;
            s.max_abs = std::max(s.max_abs, std::fabs(v));
        }
        s.mean = sum / n;
        double ss = 0.0;
        for (double v : d) ss += (v - s.mean) * (v - s.mean);
        s.variance = ss / n;
        out.push_back(std::move(s));
    }
    return out;
}

void save_snapshot(const std::filesystem::path& path, const GradientSnapshot& snapshot) {
    Container c;
    c.entries = snapshot.layer_grads;
    c.meta["kind"] = "gradient_snapshot";
    c.meta["model"] = model_spec_to_json(snapshot.model);
    c.meta["weight_checksum"] = snapshot.weight_checksum;
    c.meta["input_shape"] = snapshot.meta.input_shape;
    c.meta["batch_size"] = snapshot.meta.batch_size;
    c.meta["epochs"] = snapshot.meta.epochs;
    c.meta["seed"] = snapshot.meta.seed;
    save_container(path, c);
}

GradientSnapshot load_snapshot(const std::filesystem::path& path) {
    Container c = load_container(path);
    if (c.meta.value("kind", "") != "gradient_snapshot")
        throw IoError(path.string() + " is not a gradient snapshot");
    GradientSnapshot snap;
    snap.layer_grads = std::move(c.entries);
    snap.model = model_spec_from_json(c.meta.at("model"));
    snap.weight_checksum = c.meta.at("weight_checksum").get<uint64_t>();
    snap.meta.input_shape = c.meta.at("input_shape").get<Shape>();
    snap.meta.batch_size = c.meta.at("batch_size").get<int64_t>();
    snap.meta.epochs = c.meta.at("epochs").get<int64_t>();
    snap.meta.seed = c.meta.at("seed").get<uint64_t>();
    return snap;
}

void save_weights(const std::filesystem::path& path, const ModelSpec& spec,
                  const std::vector<NamedTensor>& weights) {
    Container c;
    c.entries = weights;
    c.meta["kind"] = "weights";
    c.meta["model"] = model_spec_to_json(spec);
    save_container(path, c);
}

std::pair<ModelSpec, std::vector<NamedTensor>> load_weights(const std::filesystem::path& path) {
    Container c = load_container(path);
    if (c.meta.value("kind", "") != "weights")
        throw IoError(path.string() + " is not a weight checkpoint");
    return {model_spec_from_json(c.meta.at("model")), std::move(c.entries)};
}

}  // namespace gradleak
