#pragma once

#include <vector>

#include "gradleak/tensor.hpp"

namespace gradleak {

/// Mean squared per-pixel difference over the whole tensor.
double mse(const Tensor& recon, const Tensor& truth);

/// 20 log10(max_value) - 10 log10(mse); +infinity for a perfect
/// reconstruction (serialized as the string "inf").
double psnr(const Tensor& recon, const Tensor& truth, double max_value = 1.0);

/// Global single-window SSIM with population moments, k1=0.01, k2=0.03,
/// L=1.0. Multi-channel inputs (CxHxW with C>1) average per-channel values.
double ssim(const Tensor& recon, const Tensor& truth);

struct ItemMetrics {
    double mse = 0.0;
    double psnr = 0.0;
    double ssim = 0.0;
};

struct MetricReport {
    double mse = 0.0;   // mean of per-item mse, post-assignment
    double psnr = 0.0;  // from the pooled mse
    double ssim = 0.0;  // mean of per-item ssim
    std::vector<ItemMetrics> per_item;
    std::vector<int64_t> assignment;  // recon index -> truth index, a bijection
};

MetricReport evaluate_single(const Tensor& recon, const Tensor& truth);

/// Aligns a reconstructed batch with the ground truth before scoring:
/// exhaustive minimum-total-MSE assignment for B <= 8, greedy
/// nearest-unmatched beyond that.
MetricReport match_batch(const Tensor& recon_batch, const Tensor& truth_batch);

}  // namespace gradleak
