#include "gradleak/patterns.hpp"

#include <cmath>

#include "gradleak/rng.hpp"

namespace gradleak {

namespace {

constexpr int kClassCount = 4;  // stripes, checkerboard, disks, gradients

/// variant: small deterministic integer controlling phase/orientation etc.
/// intensity: peak value in (0, 1].
void render(PatternKind kind, int64_t size, int64_t variant, double intensity, double* out) {
    auto px = [&](int64_t y, int64_t x) -> double& { return out[y * size + x]; };
    switch (kind) {
        case PatternKind::stripes: {
            int64_t width = 1 + (variant / 4) % 2;
            bool vertical = (variant % 2) == 0;
            int64_t phase = (variant / 2) % 2;
            for (int64_t y = 0; y < size; ++y)
                for (int64_t x = 0; x < size; ++x) {
                    int64_t c = vertical ? x : y;
                    px(y, x) = ((c / width + phase) % 2) ? intensity : 0.0;
                }
            break;
        }
        case PatternKind::checkerboard: {
            int64_t phase = variant % 2;
            int64_t cell = 1 + (variant / 2) % 2;
            for (int64_t y = 0; y < size; ++y)
                for (int64_t x = 0; x < size; ++x)
                    px(y, x) = ((x / cell + y / cell + phase) % 2) ? intensity : 0.0;
            break;
        }
        case PatternKind::disks: {
            double c = (static_cast<double>(size) - 1.0) / 2.0;
            double cx = c + ((variant % 3) - 1) * 0.5;
            double cy = c + (((variant / 3) % 3) - 1) * 0.5;
            double r = static_cast<double>(size) / 3.0 + ((variant / 9) % 2) * 0.5;
            for (int64_t y = 0; y < size; ++y)
                for (int64_t x = 0; x < size; ++x) {
                    double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
                    px(y, x) = (dx * dx + dy * dy <= r * r) ? intensity : 0.0;
                }
            break;
        }
        case PatternKind::gradients: {
            int dir = static_cast<int>(variant % 4);
            double denom = static_cast<double>(size - 1 > 0 ? size - 1 : 1);
            for (int64_t y = 0; y < size; ++y)
                for (int64_t x = 0; x < size; ++x) {
                    double t;
                    switch (dir) {
                        case 0: t = static_cast<double>(x) / denom; break;
                        case 1: t = static_cast<double>(y) / denom; break;
                        case 2: t = 1.0 - static_cast<double>(x) / denom; break;
                        default: t = 1.0 - static_cast<double>(y) / denom; break;
                    }
                    px(y, x) = t * intensity;
                }
            break;
        }
        case PatternKind::mixed: break;  // handled by the caller
    }
}

PatternKind class_kind(int64_t cls) {
    switch (cls) {
        case 0: return PatternKind::stripes;
        case 1: return PatternKind::checkerboard;
        case 2: return PatternKind::disks;
        default: return PatternKind::gradients;
    }
}

}  // namespace

Tensor PatternDataset::image(int64_t i) const { return image_batch(i, 1); }

Tensor PatternDataset::image_batch(int64_t start, int64_t count) const {
    int64_t per = images.numel() / images.dim(0);
    Shape shape = images.shape();
    shape[0] = count;
    auto p = images.data();
    std::vector<double> out(p.begin() + static_cast<ptrdiff_t>(start * per),
                            p.begin() + static_cast<ptrdiff_t>((start + count) * per));
    return Tensor::from_data(std::move(shape), std::move(out));
}

Tensor PatternDataset::label_batch(int64_t start, int64_t count) const {
    auto p = labels.data();
    std::vector<double> out(p.begin() + static_cast<ptrdiff_t>(start * num_classes),
                            p.begin() + static_cast<ptrdiff_t>((start + count) * num_classes));
    return Tensor::from_data({count, num_classes}, std::move(out));
}

PatternDataset builtin_patterns(PatternKind kind, int64_t size, int64_t per_class, uint64_t seed) {
    if (size != 4 && size != 8 && size != 16)
        throw ConfigError("builtin_patterns: size must be 4, 8 or 16");
    if (per_class < 1) throw ConfigError("builtin_patterns: per_class must be >= 1");

    int64_t classes = kind == PatternKind::mixed ? kClassCount : 1;
    int64_t n = classes * per_class;
    PatternDataset ds;
    ds.num_classes = std::max<int64_t>(classes, 2);

    Rng rng(seed);
    std::vector<double> images(static_cast<size_t>(n * size * size), 0.0);
    std::vector<double> labels(static_cast<size_t>(n * ds.num_classes), 0.0);

    int64_t i = 0;
    for (int64_t cls = 0; cls < classes; ++cls) {
        PatternKind k = kind == PatternKind::mixed ? class_kind(cls) : kind;
        for (int64_t s = 0; s < per_class; ++s, ++i) {
            // sample 0 is the exact base pattern; later samples vary
            double intensity = s == 0 ? 1.0 : 0.55 + 0.45 * rng.uniform();
            int64_t variant = s;
            render(k, size, variant, intensity, &images[static_cast<size_t>(i * size * size)]);
            labels[static_cast<size_t>(i * ds.num_classes + cls)] = 1.0;
        }
    }
    ds.images = Tensor::from_data({n, 1, size, size}, std::move(images));
    ds.labels = Tensor::from_data({n, ds.num_classes}, std::move(labels));
    return ds;
}

PatternKind pattern_kind_from_name(const std::string& name) {
    if (name == "stripes") return PatternKind::stripes;
    if (name == "checkerboard") return PatternKind::checkerboard;
    if (name == "disks") return PatternKind::disks;
    if (name == "gradients") return PatternKind::gradients;
    if (name == "mixed") return PatternKind::mixed;
    throw ConfigError("patterns: unknown kind '" + name + "'");
}

const char* pattern_kind_name(PatternKind kind) {
    switch (kind) {
        case PatternKind::stripes: return "stripes";
        case PatternKind::checkerboard: return "checkerboard";
        case PatternKind::disks: return "disks";
        case PatternKind::gradients: return "gradients";
        default: return "mixed";
    }
}

}  // namespace gradleak
