#include <doctest.h>

#include <cmath>

#include "gradleak/autodiff.hpp"
#include "gradleak/distance.hpp"
#include "gradleak/finite_diff.hpp"
#include "gradleak/ops.hpp"
#include "gradleak/rng.hpp"
#include "test_helpers.hpp"

using namespace gradleak;
using gradleak::testing::max_rel_error;

namespace {

GradientSnapshot snapshot_of(std::vector<Tensor> layers) {
    GradientSnapshot s;
    for (size_t i = 0; i < layers.size(); ++i)
        s.layer_grads.push_back({"l" + std::to_string(i), std::move(layers[i])});
    return s;
}

/// Autodiff gradient of the sapag distance w.r.t. a dummy layer.
Tensor sapag_autodiff_grad(const Tensor& dummy, const GradientSnapshot& snap,
                           const DistanceSpec& spec) {
    autodiff::GradTape tape;
    Tensor g = dummy.detached();
    g.set_requires_grad(true);
    Tensor d = distance({g}, snap, spec);
    return grad(d, {g}, false)[0].detached();
}

}  // namespace

TEST_SUITE_BEGIN("distance");

TEST_CASE("estimate_sigma2 per-layer examples") {
    GradientSnapshot snap = snapshot_of({Tensor::zeros({4}), Tensor::from_data({2}, {1.0, -1.0})});
    auto s2 = estimate_sigma2(snap, SigmaMode::per_layer);
    CHECK(s2[0] == 1e-8);  // clamped degenerate layer
    CHECK(s2[1] == doctest::Approx(1.0).epsilon(1e-15));

    auto scaled = estimate_sigma2(snap, SigmaMode::per_layer_scaled);
    CHECK(scaled[1] == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("estimate_sigma2 matches an independent streaming re-computation") {
    Rng rng(60);
    GradientSnapshot snap =
        snapshot_of({rng.normal_tensor({31}), rng.normal_tensor({57}), rng.normal_tensor({9})});
    auto s2 = estimate_sigma2(snap, SigmaMode::per_layer);
    for (size_t l = 0; l < snap.layer_grads.size(); ++l) {
        // Welford's streaming variance
        double mean = 0.0, m2 = 0.0;
        int64_t n = 0;
        for (double v : snap.layer_grads[l].tensor.data()) {
            ++n;
            double d1 = v - mean;
            mean += d1 / static_cast<double>(n);
            m2 += d1 * (v - mean);
        }
        CHECK(s2[l] == doctest::Approx(m2 / static_cast<double>(n)).epsilon(1e-12));
    }

    auto global = estimate_sigma2(snap, SigmaMode::global);
    CHECK(global[0] == global[1]);
    CHECK(global[1] == global[2]);
}

TEST_CASE("make_q_weights schedules") {
    auto h = make_q_weights(3, QSchedule::harmonic);
    CHECK(h[0] == 1.0);
    CHECK(h[1] == 0.5);
    CHECK(h[2] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    auto g = make_q_weights(3, QSchedule::geometric, 0.5);
    CHECK(g[0] == 1.0);
    CHECK(g[1] == 0.5);
    CHECK(g[2] == 0.25);
    auto c = make_q_weights(5, QSchedule::constant);
    for (double v : c) CHECK(v == 1.0);
    CHECK_THROWS_AS(make_q_weights(3, QSchedule::geometric, 1.5), ConfigError);
    // front layer always carries the max weight
    for (auto sched : {QSchedule::constant, QSchedule::harmonic, QSchedule::geometric}) {
        auto q = make_q_weights(6, sched, 0.7);
        for (double v : q) CHECK(q[0] >= v);
    }
}

TEST_CASE("distance examples") {
    Rng rng(61);
    Tensor g = rng.normal_tensor({3, 3});
    GradientSnapshot snap = snapshot_of({g});
    DistanceSpec sapag;
    sapag.kind = DistanceKind::sapag;
    sapag.sigma2 = {1.0};
    sapag.q_weights = {1.0};
    DistanceSpec euclid;
    euclid.kind = DistanceKind::euclidean;

    // exact match -> 0 for both kinds
    CHECK(distance({g}, snap, sapag).item() == 0.0);
    CHECK(distance({g}, snap, euclid).item() == 0.0);

    // single layer, Q=1, sigma2=1, ||delta||^2 = 1 -> 1 - e^-1
    GradientSnapshot zero_snap = snapshot_of({Tensor::zeros({1})});
    CHECK(distance({Tensor::scalar(1.0)}, zero_snap, sapag).item() ==
          doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-14));

    // saturation: huge delta -> Q for sapag, unbounded for euclidean
    CHECK(distance({Tensor::scalar(1e6)}, zero_snap, sapag).item() == doctest::Approx(1.0));
    CHECK(distance({Tensor::scalar(1e6)}, zero_snap, euclid).item() == doctest::Approx(1e12));

    CHECK_THROWS_AS(distance({g, g}, snap, euclid), ShapeError);
}

TEST_CASE("sapag distance stays in [0, sum Q] and vanishes only at equality") {
    Rng rng(62);
    std::vector<Tensor> layers = {rng.normal_tensor({7}), rng.normal_tensor({4, 4})};
    GradientSnapshot snap = snapshot_of(layers);
    DistanceSpec spec;
    spec.kind = DistanceKind::sapag;
    spec.sigma2 = estimate_sigma2(snap, SigmaMode::per_layer_scaled);
    spec.q_weights = make_q_weights(2, QSchedule::harmonic);
    double q_total = spec.q_weights[0] + spec.q_weights[1];
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<Tensor> dummy = {rng.normal_tensor({7}), rng.normal_tensor({4, 4})};
        double d = distance(dummy, snap, spec).item();
        CHECK(d >= 0.0);
        CHECK(d <= q_total);
    }
    CHECK(distance(layers, snap, spec).item() == 0.0);
}

TEST_CASE("analytic first derivative: zero at delta=0 and paper maximum 2Q/(e sigma)") {
    CHECK(analytic_first_derivative(Tensor::scalar(0.0), 0.7, 0.9).item() == 0.0);

    // scalar delta with delta^2 = sigma^2 attains magnitude 2Q/(e*sigma)
    double q = 0.8, sigma2 = 1.7, sigma = std::sqrt(sigma2);
    double got = analytic_first_derivative(Tensor::scalar(sigma), q, sigma2).item();
    CHECK(got == doctest::Approx(2.0 * q / (std::exp(1.0) * sigma)).epsilon(1e-14));
}

TEST_CASE("autodiff gradient of the sapag distance equals the analytic form to 1e-10") {
    Rng rng(63);
    for (int rep = 0; rep < 25; ++rep) {
        double q = rng.uniform(0.1, 2.0);
        double sigma2 = rng.uniform(0.2, 3.0);
        Tensor target = rng.normal_tensor({5});
        Tensor dummy = rng.normal_tensor({5});
        GradientSnapshot snap = snapshot_of({target});
        DistanceSpec spec;
        spec.kind = DistanceKind::sapag;
        spec.sigma2 = {sigma2};
        spec.q_weights = {q};

        Tensor got = sapag_autodiff_grad(dummy, snap, spec);
        Tensor want = analytic_first_derivative(sub(dummy, target), q, sigma2);
        CHECK(max_rel_error(got, want, 1e-12) < 1e-10);
    }
}

TEST_CASE("euclidean gradient equals 2 delta exactly") {
    Rng rng(64);
    Tensor target = rng.normal_tensor({6});
    Tensor dummy = rng.normal_tensor({6});
    GradientSnapshot snap = snapshot_of({target});
    DistanceSpec spec;
    spec.kind = DistanceKind::euclidean;

    autodiff::GradTape tape;
    Tensor g = dummy.detached();
    g.set_requires_grad(true);
    auto gr = grad(distance({g}, snap, spec), {g}, false);
    Tensor want = mul(sub(dummy, target), 2.0);
    CHECK(max_rel_error(gr[0], want, 1e-15) < 1e-14);
}

TEST_CASE("derivative magnitude rises then falls with the maximum at |delta| = sigma") {
    double q = 1.3, sigma2 = 0.49, sigma = 0.7;
    auto mag = [&](double d) {
        return std::fabs(analytic_first_derivative(Tensor::scalar(d), q, sigma2).item());
    };
    // golden-section search for the maximum on (0, 4 sigma)
    double lo = 1e-6, hi = 4.0 * sigma;
    const double phi = 0.6180339887498949;
    double a = hi - phi * (hi - lo), b = lo + phi * (hi - lo);
    for (int i = 0; i < 200; ++i) {
        if (mag(a) < mag(b))
            lo = a, a = b, b = lo + phi * (hi - lo);
        else
            hi = b, b = a, a = hi - phi * (hi - lo);
    }
    double argmax = 0.5 * (lo + hi);
    CHECK(std::fabs(argmax - sigma) / sigma < 0.01);
    CHECK(mag(argmax) == doctest::Approx(2.0 * q / (std::exp(1.0) * sigma)).epsilon(1e-9));
    // rises before, falls after
    CHECK(mag(0.2 * sigma) < mag(sigma));
    CHECK(mag(3.0 * sigma) < mag(sigma));
}

TEST_CASE("analytic second derivative: sign structure and finite-difference check") {
    double q = 0.9, sigma2 = 1.21;
    // root at delta^2 = sigma^2
    CHECK(analytic_second_derivative(Tensor::scalar(std::sqrt(sigma2)), q, sigma2).item() ==
          doctest::Approx(0.0));
    // value -4Q/sigma^2 at delta = 0
    CHECK(analytic_second_derivative(Tensor::scalar(0.0), q, sigma2).item() ==
          doctest::Approx(-4.0 * q / sigma2).epsilon(1e-14));

    // finite differences of the first derivative (scalar layer)
    Rng rng(65);
    for (int rep = 0; rep < 10; ++rep) {
        double d0 = rng.uniform(-2.0, 2.0);
        Tensor fd = finite_difference(
            [&](const Tensor& t) { return analytic_first_derivative(t, q, sigma2).item(); },
            Tensor::scalar(d0), 1e-6);
        double want = analytic_second_derivative(Tensor::scalar(d0), q, sigma2).item();
        CHECK(fd.item() == doctest::Approx(want).epsilon(1e-6));
    }
}

TEST_CASE("kernel scale equivariance: scaling sigma by c^2 and delta by c is invariant") {
    Rng rng(66);
    Tensor target = rng.normal_tensor({8});
    Tensor delta = rng.normal_tensor({8});
    double c = 3.7;
    DistanceSpec spec;
    spec.kind = DistanceKind::sapag;
    spec.sigma2 = {2.0};
    spec.q_weights = {1.0};

    GradientSnapshot snap = snapshot_of({target});
    double d1 = distance({add(target, delta)}, snap, spec).item();

    DistanceSpec scaled = spec;
    scaled.sigma2 = {2.0 * c * c};
    GradientSnapshot snap2 = snapshot_of({mul(target, 1.0)});
    double d2 = distance({add(target, mul(delta, c))}, snap2, scaled).item();
    CHECK(d1 == doctest::Approx(d2).epsilon(1e-12));
}

TEST_SUITE_END();
