#pragma once

#include <cstdint>
#include <string>

#include "gradleak/tensor.hpp"
#include "gradleak/victim.hpp"

namespace gradleak {

/// Desk-scale synthetic image classes standing in for the photo datasets.
/// `mixed` draws from all four structural classes with balanced labels.
enum class PatternKind { stripes, checkerboard, disks, gradients, mixed };

struct PatternDataset {
    Tensor images;  // N x 1 x size x size, values in [0, 1]
    Tensor labels;  // N x num_classes one-hot
    int64_t num_classes = 0;

    LabeledData data() const { return {images, labels}; }
    Tensor image(int64_t i) const;         // 1 x size x size
    Tensor image_batch(int64_t start, int64_t count) const;
    Tensor label_batch(int64_t start, int64_t count) const;
};

/// Deterministic in (kind, size, per_class, seed). Sample 0 of each class is
/// the unmodified base pattern; later samples vary phase/orientation/radius
/// and intensity, always staying in [0, 1].
PatternDataset builtin_patterns(PatternKind kind, int64_t size, int64_t per_class, uint64_t seed);

PatternKind pattern_kind_from_name(const std::string& name);
const char* pattern_kind_name(PatternKind kind);

}  // namespace gradleak
