#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "gradleak/tensor.hpp"

namespace gradleak {

/// Deterministic RNG: mt19937_64 engine with hand-rolled uniform/normal
/// transforms, so streams are identical across standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller; consumes two uniforms per pair.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586477 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    Tensor normal_tensor(Shape shape, double mean = 0.0, double stddev = 1.0) {
        std::vector<double> data(static_cast<size_t>(shape_numel(shape)));
        for (double& v : data) v = mean + stddev * normal();
        return Tensor::from_data(std::move(shape), std::move(data));
    }

    Tensor uniform_tensor(Shape shape, double lo, double hi) {
        std::vector<double> data(static_cast<size_t>(shape_numel(shape)));
        for (double& v : data) v = uniform(lo, hi);
        return Tensor::from_data(std::move(shape), std::move(data));
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

uint64_t splitmix64(uint64_t x);

/// Independent per-run stream keyed by a label (e.g. grid cell id) and an
/// index (e.g. repeat number) under one master seed.
uint64_t derive_seed(uint64_t master, std::string_view label, uint64_t index);

uint64_t fnv1a64(const void* data, size_t size);

}  // namespace gradleak
