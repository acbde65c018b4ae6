#pragma once

#include <variant>
#include <vector>

#include <json.hpp>

#include "gradleak/tensor.hpp"

namespace gradleak {

class ConfigError : public Error {
public:
    using Error::Error;
};

enum class Activation { sigmoid, gelu };

/// Fully connected net; widths lists every layer size including input and
/// output, so {16, 24, 4} is a 2-affine-layer net and {16, 4} is linear.
struct MlpSpec {
    std::vector<int64_t> widths;
};

/// Two 5x5 stride-1 same-padded conv layers plus one fully connected layer.
struct LenetLiteSpec {
    int64_t in_channels = 1;
    int64_t channels = 12;
    int64_t image_hw = 8;
    static constexpr int64_t kernel = 5;
    static constexpr int64_t stride = 1;
    static constexpr int64_t padding = 2;
};

/// Single-encoder text classifier operating on seq_len x embed_dim
/// embeddings. blocks=0 drops the encoder and puts the linear head directly
/// on the flattened embedding (the near-linear inversion target).
struct TransformerLiteSpec {
    int64_t vocab_size = 100;
    int64_t embed_dim = 16;
    int64_t heads = 4;
    int64_t ff_dim = 32;
    int64_t seq_len = 8;
    int64_t blocks = 1;
    bool positional_encoding = true;
};

struct ModelSpec {
    std::variant<MlpSpec, LenetLiteSpec, TransformerLiteSpec> arch;
    Activation activation = Activation::sigmoid;
    int64_t num_classes = 0;

    void validate() const;
    /// Victim input shape for a given batch (text models take seq_len x d).
    Shape input_shape(int64_t batch) const;
    std::string arch_name() const;
};

struct WeightInit {
    enum class Scheme { uniform, xavier_normal };
    Scheme scheme = Scheme::uniform;
    double lo = -0.5;
    double hi = 0.5;
    double gain = 1.0;
    uint64_t seed = 0;

    void validate() const;
    std::string scheme_name() const;
};

/// One tensor per trainable parameter, deterministic in the seed. Ordering
/// is front-to-back and defines the layer index used by the Q schedule.
std::vector<NamedTensor> init_weights(const ModelSpec& spec, const WeightInit& init);

Tensor forward(const ModelSpec& spec, const std::vector<NamedTensor>& weights, const Tensor& x);

/// Soft-label cross entropy: mean over the batch of
/// -sum_c softmax(y)_c * log softmax(logits)_c.
Tensor loss(const Tensor& logits, const Tensor& y_soft);

Tensor transformer_lite_forward(const ModelSpec& spec, const std::vector<NamedTensor>& weights,
                                const Tensor& token_embeddings);

Tensor multi_head_attention(const Tensor& x, const Tensor& wq, const Tensor& wk, const Tensor& wv,
                            const Tensor& wo, int64_t heads);

Tensor sinusoidal_position_encoding(int64_t seq_len, int64_t dim);

nlohmann::json model_spec_to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);
nlohmann::json weight_init_to_json(const WeightInit& init);
WeightInit weight_init_from_json(const nlohmann::json& j);

}  // namespace gradleak
