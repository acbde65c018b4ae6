#pragma once

#include <functional>

#include "gradleak/tensor.hpp"

namespace gradleak {

/// Central-difference gradient estimate of a scalar function, same shape as
/// `point`. The implementation only evaluates `fn`, so it stays independent
/// of the backward pass it is used to check.
inline Tensor finite_difference(const std::function<double(const Tensor&)>& fn,
                                const Tensor& point, double step) {
    if (!(step > 0.0)) throw Error("finite_difference: step must be > 0");
    std::vector<double> base(point.data().begin(), point.data().end());
    std::vector<double> out(base.size());
    for (size_t i = 0; i < base.size(); ++i) {
        std::vector<double> lo = base, hi = base;
        hi[i] += step;
        lo[i] -= step;
        double f_hi = fn(Tensor::from_data(point.shape(), std::move(hi)));
        double f_lo = fn(Tensor::from_data(point.shape(), std::move(lo)));
        out[i] = (f_hi - f_lo) / (2.0 * step);
    }
    return Tensor::from_data(point.shape(), std::move(out));
}

}  // namespace gradleak
