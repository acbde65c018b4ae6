#pragma once

#include <filesystem>
#include <vector>

#include "gradleak/models.hpp"
#include "gradleak/tensor.hpp"

namespace gradleak {

struct SnapshotMeta {
    Shape input_shape;
    int64_t batch_size = 1;
    int64_t epochs = 0;
    uint64_t seed = 0;
};

/// Per-layer ground-truth gradients as observed by the adversary, plus just
/// enough model metadata to verify the attack is aimed at the right weights.
struct GradientSnapshot {
    std::vector<NamedTensor> layer_grads;  // ordering == init_weights ordering
    ModelSpec model;
    uint64_t weight_checksum = 0;
    SnapshotMeta meta;
};

/// Gradient of the victim loss w.r.t. the weights at (X, Y); weights are
/// untouched. Y rows are one-hot (consumed through softmax by the loss).
GradientSnapshot capture(const ModelSpec& spec, const std::vector<NamedTensor>& weights,
                         const Tensor& x, const Tensor& y, uint64_t seed = 0, int64_t epochs = 0);

struct LabeledData {
    Tensor inputs;  // batch-major
    Tensor labels;  // batch x num_classes one-hot
};

struct TrainResult {
    std::vector<NamedTensor> weights;
    std::vector<double> loss_history;  // one entry per epoch
};

/// Plain full-batch gradient descent, one update per epoch.
TrainResult train(const ModelSpec& spec, std::vector<NamedTensor> weights, const LabeledData& data,
                  int64_t epochs, double lr);

struct LayerStats {
    std::string name;
    double mean = 0.0;
    double variance = 0.0;  // population
    double max_abs = 0.0;
};

std::vector<LayerStats> gradient_stats(const GradientSnapshot& snapshot);

void save_snapshot(const std::filesystem::path& path, const GradientSnapshot& snapshot);
GradientSnapshot load_snapshot(const std::filesystem::path& path);

void save_weights(const std::filesystem::path& path, const ModelSpec& spec,
                  const std::vector<NamedTensor>& weights);
std::pair<ModelSpec, std::vector<NamedTensor>> load_weights(const std::filesystem::path& path);

}  // namespace gradleak
