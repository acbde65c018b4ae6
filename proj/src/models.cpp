#include "gradleak/models.hpp"

#include <cmath>

#include "gradleak/ops.hpp"
#include "gradleak/rng.hpp"

namespace gradleak {

namespace {

Tensor activate(Activation act, const Tensor& x) {
    return act == Activation::sigmoid ? sigmoid(x) : gelu(x);
}

Tensor init_one(Rng& rng, Shape shape, const WeightInit& init, int64_t fan_in, int64_t fan_out) {
    if (init.scheme == WeightInit::Scheme::uniform) return rng.uniform_tensor(shape, init.lo, init.hi);
    double std = init.gain * std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
    return rng.normal_tensor(shape, 0.0, std);
}

Tensor get(const std::vector<NamedTensor>& weights, size_t i, const char* expected) {
    if (i >= weights.size() || weights[i].name != expected)
        throw ConfigError("weights do not match model spec: expected '" + std::string(expected) +
                          "' at position " + std::to_string(i));
    return weights[i].tensor;
}

}  // namespace

void ModelSpec::validate() const {
    if (num_classes < 2) throw ConfigError("model: num_classes must be >= 2");
    if (const auto* m = std::get_if<MlpSpec>(&arch)) {
        if (m->widths.size() < 2) throw ConfigError("mlp: widths must list input and output");
        for (int64_t w : m->widths)
            if (w < 1) throw ConfigError("mlp: all widths must be >= 1");
        if (m->widths.back() != num_classes)
            throw ConfigError("mlp: last width must equal num_classes");
    } else if (const auto* l = std::get_if<LenetLiteSpec>(&arch)) {
        if (l->in_channels < 1 || l->channels < 1 || l->image_hw < 1)
            throw ConfigError("lenet_lite: channels and image size must be >= 1");
    } else {
        const auto& t = std::get<TransformerLiteSpec>(arch);
        if (t.embed_dim < 1 || t.heads < 1 || t.embed_dim % t.heads != 0)
            throw ConfigError("transformer_lite: embed_dim must be divisible by heads");
        if (t.seq_len < 1 || t.ff_dim < 1 || t.vocab_size < 1)
            throw ConfigError("transformer_lite: vocab, seq_len and ff_dim must be >= 1");
        if (t.blocks != 0 && t.blocks != 1)
            throw ConfigError("transformer_lite: blocks must be 0 or 1");
    }
}

Shape ModelSpec::input_shape(int64_t batch) const {
    if (const auto* m = std::get_if<MlpSpec>(&arch)) return {batch, m->widths.front()};
    if (const auto* l = std::get_if<LenetLiteSpec>(&arch))
        return {batch, l->in_channels, l->image_hw, l->image_hw};
    const auto& t = std::get<TransformerLiteSpec>(arch);
    return {t.seq_len, t.embed_dim};  // text path is single-sequence
}

std::string ModelSpec::arch_name() const {
    if (std::holds_alternative<MlpSpec>(arch)) return "mlp";
    if (std::holds_alternative<LenetLiteSpec>(arch)) return "lenet_lite";
    return "transformer_lite";
}

void WeightInit::validate() const {
    if (scheme == Scheme::uniform && !(lo < hi)) throw ConfigError("init: uniform needs lo < hi");
    if (scheme == Scheme::xavier_normal && !(gain > 0.0))
        throw ConfigError("init: xavier gain must be > 0");
}

std::string WeightInit::scheme_name() const {
    return scheme == Scheme::uniform ? "uniform" : "xavier_normal";
}

std::vector<NamedTensor> init_weights(const ModelSpec& spec, const WeightInit& init) {
    spec.validate();
    init.validate();
    Rng rng(init.seed);
    std::vector<NamedTensor> ws;

    if (const auto* m = std::get_if<MlpSpec>(&spec.arch)) {
        for (size_t i = 0; i + 1 < m->widths.size(); ++i) {
            int64_t in = m->widths[i], out = m->widths[i + 1];
            std::string base = "fc" + std::to_string(i + 1);
            ws.push_back({base + ".weight", init_one(rng, {in, out}, init, in, out)});
            ws.push_back({base + ".bias", Tensor::zeros({out})});
        }
    } else if (const auto* l = std::get_if<LenetLiteSpec>(&spec.arch)) {
        int64_t k = LenetLiteSpec::kernel;
        ws.push_back({"conv1.weight", init_one(rng, {l->channels, l->in_channels, k, k}, init,
                                               l->in_channels * k * k, l->channels * k * k)});
        ws.push_back({"conv1.bias", Tensor::zeros({l->channels})});
        ws.push_back({"conv2.weight", init_one(rng, {l->channels, l->channels, k, k}, init,
                                               l->channels * k * k, l->channels * k * k)});
        ws.push_back({"conv2.bias", Tensor::zeros({l->channels})});
        int64_t feat = l->channels * l->image_hw * l->image_hw;
        ws.push_back({"fc.weight", init_one(rng, {feat, spec.num_classes}, init, feat,
                                            spec.num_classes)});
        ws.push_back({"fc.bias", Tensor::zeros({spec.num_classes})});
    } else {
        const auto& t = std::get<TransformerLiteSpec>(spec.arch);
        if (t.blocks == 1) {
            int64_t d = t.embed_dim;
            for (const char* name : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"})
                ws.push_back({name, init_one(rng, {d, d}, init, d, d)});
            ws.push_back({"ff1.weight", init_one(rng, {d, t.ff_dim}, init, d, t.ff_dim)});
            ws.push_back({"ff1.bias", Tensor::zeros({t.ff_dim})});
            ws.push_back({"ff2.weight", init_one(rng, {t.ff_dim, d}, init, t.ff_dim, d)});
            ws.push_back({"ff2.bias", Tensor::zeros({d})});
            ws.push_back({"head.weight",
                          init_one(rng, {d, spec.num_classes}, init, d, spec.num_classes)});
        } else {
            int64_t in = t.seq_len * t.embed_dim;
            ws.push_back({"head.weight",
                          init_one(rng, {in, spec.num_classes}, init, in, spec.num_classes)});
        }
        ws.push_back({"head.bias", Tensor::zeros({spec.num_classes})});
    }
    return ws;
}

Tensor loss(const Tensor& logits, const Tensor& y_soft) {
    if (!logits.same_shape(y_soft))
        throw ShapeError("loss: logits " + shape_str(logits.shape()) + " vs labels " +
                         shape_str(y_soft.shape()));
    Tensor target = softmax_lastdim(y_soft);
    Tensor lp = log_softmax_lastdim(logits);
    Tensor per_item = neg(sum_lastdim(mul(target, lp)));
    return mean(per_item);
}

Tensor sinusoidal_position_encoding(int64_t seq_len, int64_t dim) {
    std::vector<double> data(static_cast<size_t>(seq_len * dim));
    for (int64_t p = 0; p < seq_len; ++p)
        for (int64_t i = 0; i < dim; ++i) {
            double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
            double v = static_cast<double>(p) * freq;
            data[static_cast<size_t>(p * dim + i)] = (i % 2 == 0) ? std::sin(v) : std::cos(v);
        }
    return Tensor::from_data({seq_len, dim}, std::move(data));
}

Tensor multi_head_attention(const Tensor& x, const Tensor& wq, const Tensor& wk, const Tensor& wv,
                            const Tensor& wo, int64_t heads) {
    int64_t d = x.dim(1);
    if (d % heads != 0) throw ShapeError("attention: dim not divisible by heads");
    int64_t dh = d / heads;
    Tensor q = matmul(x, wq), k = matmul(x, wk), v = matmul(x, wv);
    std::vector<Tensor> outs;
    outs.reserve(static_cast<size_t>(heads));
    for (int64_t h = 0; h < heads; ++h) {
        Tensor qs = slice(q, 1, h * dh, dh);
        Tensor ks = slice(k, 1, h * dh, dh);
        Tensor vs = slice(v, 1, h * dh, dh);
        Tensor scores = mul(matmul(qs, transpose(ks)), 1.0 / std::sqrt(static_cast<double>(dh)));
        outs.push_back(matmul(softmax_lastdim(scores), vs));
    }
    return matmul(concat(outs, 1), wo);
}

Tensor transformer_lite_forward(const ModelSpec& spec, const std::vector<NamedTensor>& weights,
                                const Tensor& token_embeddings) {
    const auto& t = std::get<TransformerLiteSpec>(spec.arch);
    if (token_embeddings.ndim() != 2 || token_embeddings.dim(1) != t.embed_dim)
        throw ShapeError("transformer_lite: expected seq_len x " + std::to_string(t.embed_dim) +
                         " embeddings, got " + shape_str(token_embeddings.shape()));
    int64_t seq = token_embeddings.dim(0);

    Tensor h = token_embeddings;
    if (t.positional_encoding)
        h = add(h, sinusoidal_position_encoding(seq, t.embed_dim));

    if (t.blocks == 1) {
        Tensor attn = multi_head_attention(h, get(weights, 0, "attn.wq"), get(weights, 1, "attn.wk"),
                                           get(weights, 2, "attn.wv"), get(weights, 3, "attn.wo"),
                                           t.heads);
        h = add(h, attn);
        Tensor ff = add(matmul(h, get(weights, 4, "ff1.weight")), get(weights, 5, "ff1.bias"));
        ff = add(matmul(gelu(ff), get(weights, 6, "ff2.weight")), get(weights, 7, "ff2.bias"));
        h = add(h, ff);
        Tensor pooled = mul(sum_to(h, {1, t.embed_dim}), 1.0 / static_cast<double>(seq));
        return add(matmul(pooled, get(weights, 8, "head.weight")), get(weights, 9, "head.bias"));
    }
    Tensor flat = reshape(h, {1, seq * t.embed_dim});
    return add(matmul(flat, get(weights, 0, "head.weight")), get(weights, 1, "head.bias"));
}

Tensor forward(const ModelSpec& spec, const std::vector<NamedTensor>& weights, const Tensor& x) {
    if (const auto* m = std::get_if<MlpSpec>(&spec.arch)) {
        Tensor h = x;
        if (h.ndim() != 2) {
            if (h.ndim() < 1) throw ShapeError("mlp: scalar input");
            h = reshape(h, {h.dim(0), h.numel() / h.dim(0)});
        }
        if (h.dim(1) != m->widths.front())
            throw ShapeError("mlp: input " + shape_str(x.shape()) + " does not flatten to width " +
                             std::to_string(m->widths.front()));
        size_t layers = m->widths.size() - 1;
        for (size_t i = 0; i < layers; ++i) {
            std::string base = "fc" + std::to_string(i + 1);
            h = add(matmul(h, get(weights, 2 * i, (base + ".weight").c_str())),
                    get(weights, 2 * i + 1, (base + ".bias").c_str()));
            if (i + 1 < layers) h = activate(spec.activation, h);
        }
        return h;
    }
    if (const auto* l = std::get_if<LenetLiteSpec>(&spec.arch)) {
        if (x.ndim() != 4 || x.dim(1) != l->in_channels || x.dim(2) != l->image_hw ||
            x.dim(3) != l->image_hw)
            throw ShapeError("lenet_lite: expected Bx" + std::to_string(l->in_channels) + "x" +
                             std::to_string(l->image_hw) + "x" + std::to_string(l->image_hw) +
                             ", got " + shape_str(x.shape()));
        Tensor h = activate(spec.activation,
                            conv2d(x, get(weights, 0, "conv1.weight"), get(weights, 1, "conv1.bias"),
                                   LenetLiteSpec::stride, LenetLiteSpec::padding));
        h = activate(spec.activation,
                     conv2d(h, get(weights, 2, "conv2.weight"), get(weights, 3, "conv2.bias"),
                            LenetLiteSpec::stride, LenetLiteSpec::padding));
        h = reshape(h, {x.dim(0), l->channels * l->image_hw * l->image_hw});
        return add(matmul(h, get(weights, 4, "fc.weight")), get(weights, 5, "fc.bias"));
    }
    return transformer_lite_forward(spec, weights, x);
}

// ---------- json ----------

nlohmann::json model_spec_to_json(const ModelSpec& spec) {
    nlohmann::json j;
    j["architecture"] = spec.arch_name();
    j["activation"] = spec.activation == Activation::sigmoid ? "sigmoid" : "gelu";
    j["num_classes"] = spec.num_classes;
    if (const auto* m = std::get_if<MlpSpec>(&spec.arch)) {
        j["widths"] = m->widths;
    } else if (const auto* l = std::get_if<LenetLiteSpec>(&spec.arch)) {
        j["in_channels"] = l->in_channels;
        j["channels"] = l->channels;
        j["image_hw"] = l->image_hw;
    } else {
        const auto& t = std::get<TransformerLiteSpec>(spec.arch);
        j["vocab_size"] = t.vocab_size;
        j["embed_dim"] = t.embed_dim;
        j["heads"] = t.heads;
        j["ff_dim"] = t.ff_dim;
        j["seq_len"] = t.seq_len;
        j["blocks"] = t.blocks;
        j["positional_encoding"] = t.positional_encoding;
    }
    return j;
}

ModelSpec model_spec_from_json(const nlohmann::json& j) {
    ModelSpec spec;
    std::string arch = j.at("architecture").get<std::string>();
    std::string act = j.value("activation", "sigmoid");
    if (act == "sigmoid")
        spec.activation = Activation::sigmoid;
    else if (act == "gelu")
        spec.activation = Activation::gelu;
    else
        throw ConfigError("model.activation: unknown value '" + act + "'");
    spec.num_classes = j.at("num_classes").get<int64_t>();
    if (arch == "mlp") {
        MlpSpec m;
        m.widths = j.at("widths").get<std::vector<int64_t>>();
        spec.arch = m;
    } else if (arch == "lenet_lite") {
        LenetLiteSpec l;
        l.in_channels = j.value("in_channels", int64_t{1});
        l.channels = j.value("channels", int64_t{12});
        l.image_hw = j.value("image_hw", int64_t{8});
        spec.arch = l;
    } else if (arch == "transformer_lite") {
        TransformerLiteSpec t;
        t.vocab_size = j.value("vocab_size", int64_t{100});
        t.embed_dim = j.value("embed_dim", int64_t{16});
        t.heads = j.value("heads", int64_t{4});
        t.ff_dim = j.value("ff_dim", int64_t{32});
        t.seq_len = j.value("seq_len", int64_t{8});
        t.blocks = j.value("blocks", int64_t{1});
        t.positional_encoding = j.value("positional_encoding", true);
        spec.arch = t;
    } else {
        throw ConfigError("model.architecture: unknown value '" + arch + "'");
    }
    spec.validate();
    return spec;
}

nlohmann::json weight_init_to_json(const WeightInit& init) {
    nlohmann::json j;
    j["scheme"] = init.scheme_name();
    if (init.scheme == WeightInit::Scheme::uniform) {
        j["lo"] = init.lo;
        j["hi"] = init.hi;
    } else {
        j["gain"] = init.gain;
    }
    j["seed"] = init.seed;
    return j;
}

WeightInit weight_init_from_json(const nlohmann::json& j) {
    WeightInit init;
    std::string scheme = j.at("scheme").get<std::string>();
    if (scheme == "uniform")
        init.scheme = WeightInit::Scheme::uniform;
    else if (scheme == "xavier_normal")
        init.scheme = WeightInit::Scheme::xavier_normal;
    else
        throw ConfigError("init.scheme: unknown value '" + scheme + "'");
    init.lo = j.value("lo", -0.5);
    init.hi = j.value("hi", 0.5);
    init.gain = j.value("gain", 1.0);
    init.seed = j.value("seed", uint64_t{0});
    init.validate();
    return init;
}

}  // namespace gradleak
