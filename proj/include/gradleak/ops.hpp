#pragma once

#include <vector>

#include "gradleak/tensor.hpp"

namespace gradleak {

// Elementwise binary ops with numpy-style broadcasting. Broadcast inputs are
// expanded through a recorded broadcast_to, so gradients reduce back
// automatically.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, double b);
Tensor sub(double a, const Tensor& b);
Tensor mul(const Tensor& a, double b);
Tensor neg(const Tensor& a);

// Elementwise unary.
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor erf(const Tensor& x);
Tensor pow(const Tensor& x, double exponent);
Tensor sigmoid(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor clamp(const Tensor& x, double lo, double hi);

// Structure. All are data movements with linear adjoints.
Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x);                            // 2-D
Tensor permute(const Tensor& x, const std::vector<int64_t>& axes);
Tensor slice(const Tensor& x, int64_t axis, int64_t start, int64_t len);
Tensor concat(const std::vector<Tensor>& parts, int64_t axis);
Tensor broadcast_to(const Tensor& x, const Shape& shape);
/// Reduce-add x down to `shape` (numpy broadcast rules in reverse).
Tensor sum_to(const Tensor& x, const Shape& shape);
/// out[i] = flat_idx[i] < 0 ? 0 : x[flat_idx[i]]. The index map is shared,
/// not copied, into the recorded node.
Tensor gather_flat(const Tensor& x, std::shared_ptr<const std::vector<int64_t>> flat_idx,
                   Shape out_shape);

// Reductions (population statistics, full tensor -> rank-0 scalar).
Tensor sum(const Tensor& x);
Tensor sum_lastdim(const Tensor& x);  // keeps the reduced axis as size 1
Tensor mean(const Tensor& x);
Tensor variance(const Tensor& x);

// Contractions / NN blocks.
Tensor matmul(const Tensor& a, const Tensor& b);  // {m,k} x {k,n}
/// 2-D cross-correlation, NCHW x {out_c, in_c, k, k}, zero padding.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int64_t stride,
              int64_t padding);
Tensor softmax_lastdim(const Tensor& x);
Tensor log_softmax_lastdim(const Tensor& x);

Shape broadcast_shapes(const Shape& a, const Shape& b, const char* op);

}  // namespace gradleak
