#include "gradleak/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace gradleak {

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

double ssim_flat(std::span<const double> a, std::span<const double> b) {
    double n = static_cast<double>(a.size());
    double mu_a = 0.0, mu_b = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        mu_a += a[i];
        mu_b += b[i];
    }
    mu_a /= n;
    mu_b /= n;
    double var_a = 0.0, var_b = 0.0, cov = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double da = a[i] - mu_a;
        double db = b[i] - mu_b;
        var_a += da * da;
        var_b += db * db;
        cov += da * db;
    }
    var_a /= n;
    var_b /= n;
    cov /= n;
    constexpr double kL = 1.0;
    constexpr double c1 = (0.01 * kL) * (0.01 * kL);
    constexpr double c2 = (0.03 * kL) * (0.03 * kL);
    return ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
           ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
}

}  // namespace

double mse(const Tensor& recon, const Tensor& truth) {
    require_same_shape("mse", recon, truth);
    auto a = recon.data();
    auto b = truth.data();
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

double psnr(const Tensor& recon, const Tensor& truth, double max_value) {
    double m = mse(recon, truth);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 20.0 * std::log10(max_value) - 10.0 * std::log10(m);
}

double ssim(const Tensor& recon, const Tensor& truth) {
    require_same_shape("ssim", recon, truth);
    // treat a leading channel axis of a CxHxW image as channels
    if (recon.ndim() == 3 && recon.dim(0) > 1) {
        int64_t channels = recon.dim(0);
        int64_t per = recon.numel() / channels;
        double total = 0.0;
        auto a = recon.data();
        auto b = truth.data();
        for (int64_t c = 0; c < channels; ++c)
            total += ssim_flat(a.subspan(static_cast<size_t>(c * per), static_cast<size_t>(per)),
                               b.subspan(static_cast<size_t>(c * per), static_cast<size_t>(per)));
        return total / static_cast<double>(channels);
    }
    return ssim_flat(recon.data(), truth.data());
}

MetricReport evaluate_single(const Tensor& recon, const Tensor& truth) {
    MetricReport r;
    r.mse = mse(recon, truth);
    r.psnr = psnr(recon, truth);
    r.ssim = ssim(recon, truth);
    r.per_item = {{r.mse, r.psnr, r.ssim}};
    r.assignment = {0};
    return r;
}

MetricReport match_batch(const Tensor& recon_batch, const Tensor& truth_batch) {
    require_same_shape("match_batch", recon_batch, truth_batch);
    if (recon_batch.ndim() < 2) throw ShapeError("match_batch: expected a batch axis");
    int64_t b = recon_batch.dim(0);
    int64_t per = recon_batch.numel() / b;
    auto pr = recon_batch.data();
    auto pt = truth_batch.data();

    auto pair_mse = [&](int64_t i, int64_t j) {
        double s = 0.0;
        for (int64_t k = 0; k < per; ++k) {
            double d = pr[static_cast<size_t>(i * per + k)] - pt[static_cast<size_t>(j * per + k)];
            s += d * d;
        }
        return s / static_cast<double>(per);
    };
    std::vector<std::vector<double>> cost(static_cast<size_t>(b),
                                          std::vector<double>(static_cast<size_t>(b)));
    for (int64_t i = 0; i < b; ++i)
        for (int64_t j = 0; j < b; ++j) cost[static_cast<size_t>(i)][static_cast<size_t>(j)] = pair_mse(i, j);

    std::vector<int64_t> assignment(static_cast<size_t>(b));
    if (b <= 8) {
        std::vector<int64_t> perm(static_cast<size_t>(b));
        std::iota(perm.begin(), perm.end(), 0);
        double best = std::numeric_limits<double>::infinity();
        std::vector<int64_t> p = perm;
        do {
            double total = 0.0;
            for (int64_t i = 0; i < b; ++i)
                total += cost[static_cast<size_t>(i)][static_cast<size_t>(p[static_cast<size_t>(i)])];
            if (total < best) {
                best = total;
                assignment = p;
            }
        } while (std::next_permutation(p.begin(), p.end()));
    } else {
        std::vector<bool> used(static_cast<size_t>(b), false);
        for (int64_t i = 0; i < b; ++i) {
            int64_t pick = -1;
            for (int64_t j = 0; j < b; ++j)
                if (!used[static_cast<size_t>(j)] &&
                    (pick < 0 || cost[static_cast<size_t>(i)][static_cast<size_t>(j)] <
                                     cost[static_cast<size_t>(i)][static_cast<size_t>(pick)]))
                    pick = j;
            used[static_cast<size_t>(pick)] = true;
            assignment[static_cast<size_t>(i)] = pick;
        }
    }

    MetricReport r;
    r.assignment = assignment;
    Shape item_shape(recon_batch.shape().begin() + 1, recon_batch.shape().end());
    for (int64_t i = 0; i < b; ++i) {
        int64_t j = assignment[static_cast<size_t>(i)];
        auto ri = std::vector<double>(pr.begin() + static_cast<ptrdiff_t>(i * per),
                                      pr.begin() + static_cast<ptrdiff_t>((i + 1) * per));
        auto tj = std::vector<double>(pt.begin() + static_cast<ptrdiff_t>(j * per),
                                      pt.begin() + static_cast<ptrdiff_t>((j + 1) * per));
        Tensor rt = Tensor::from_data(item_shape, std::move(ri));
        Tensor tt = Tensor::from_data(item_shape, std::move(tj));
        ItemMetrics m{mse(rt, tt), psnr(rt, tt), ssim(rt, tt)};
        r.per_item.push_back(m);
        r.mse += m.mse;
        r.ssim += m.ssim;
    }
    r.mse /= static_cast<double>(b);
    r.ssim /= static_cast<double>(b);
    r.psnr = r.mse == 0.0 ? std::numeric_limits<double>::infinity()
                          : -10.0 * std::log10(r.mse);
    return r;
}

}  // namespace gradleak
