#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "gradleak/finite_diff.hpp"
#include "gradleak/ops.hpp"
#include "gradleak/patterns.hpp"
#include "gradleak/rng.hpp"
#include "gradleak/victim.hpp"
#include "test_helpers.hpp"

using namespace gradleak;
using gradleak::testing::bitwise_equal;
using gradleak::testing::max_rel_error;

namespace {

ModelSpec small_mlp() {
    ModelSpec s;
    s.arch = MlpSpec{{6, 5, 3}};
    s.num_classes = 3;
    return s;
}

std::vector<NamedTensor> zero_weights(const ModelSpec& spec) {
    auto ws = init_weights(spec, WeightInit{});
    for (auto& nt : ws) nt.tensor = Tensor::zeros(nt.tensor.shape());
    return ws;
}

Tensor one_hot(std::vector<int64_t> classes, int64_t num_classes) {
    std::vector<double> d(classes.size() * static_cast<size_t>(num_classes), 0.0);
    for (size_t i = 0; i < classes.size(); ++i)
        d[i * static_cast<size_t>(num_classes) + static_cast<size_t>(classes[i])] = 1.0;
    return Tensor::from_data({static_cast<int64_t>(classes.size()), num_classes}, std::move(d));
}

}  // namespace

TEST_SUITE_BEGIN("victim");

TEST_CASE("zero-weight capture: last-layer bias gradient is softmax(logits) - softmax(Y)") {
    ModelSpec spec = small_mlp();
    auto ws = zero_weights(spec);
    Rng rng(10);
    Tensor x = rng.uniform_tensor({2, 6}, 0.0, 1.0);
    Tensor y = one_hot({0, 2}, 3);
    GradientSnapshot snap = capture(spec, ws, x, y);

    // zero weights -> logits all zero -> softmax(logits) = 1/3 each row;
    // averaged over the batch of 2.
    Tensor sy = softmax_lastdim(y);
    auto psy = sy.data();
    const Tensor& bias_grad = snap.layer_grads.back().tensor;
    REQUIRE(snap.layer_grads.back().name == "fc2.bias");
    for (int c = 0; c < 3; ++c) {
        double want = ((1.0 / 3.0 - psy[c]) + (1.0 / 3.0 - psy[3 + c])) / 2.0;
        CHECK(bias_grad[c] == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("capture twice gives bit-identical snapshots") {
    ModelSpec spec = small_mlp();
    WeightInit init;
    init.seed = 77;
    auto ws = init_weights(spec, init);
    Rng rng(12);
    Tensor x = rng.uniform_tensor({2, 6}, 0.0, 1.0);
    Tensor y = one_hot({1, 2}, 3);
    GradientSnapshot a = capture(spec, ws, x, y);
    GradientSnapshot b = capture(spec, ws, x, y);
    REQUIRE(a.layer_grads.size() == b.layer_grads.size());
    for (size_t i = 0; i < a.layer_grads.size(); ++i)
        CHECK(bitwise_equal(a.layer_grads[i].tensor, b.layer_grads[i].tensor));
    CHECK(a.weight_checksum == b.weight_checksum);
    for (const auto& lg : a.layer_grads)
        for (double v : lg.tensor.data()) CHECK(std::isfinite(v));
}

TEST_CASE("snapshot gradients match finite differences of the victim loss") {
    ModelSpec spec = small_mlp();
    WeightInit init;
    init.scheme = WeightInit::Scheme::xavier_normal;
    init.seed = 5;
    auto ws = init_weights(spec, init);
    Rng rng(13);
    Tensor x = rng.uniform_tensor({2, 6}, 0.0, 1.0);
    Tensor y = one_hot({0, 1}, 3);
    GradientSnapshot snap = capture(spec, ws, x, y);

    for (size_t wi = 0; wi < ws.size(); ++wi) {
        Tensor fd = finite_difference(
            [&](const Tensor& wt) {
                auto ws2 = ws;
                ws2[wi].tensor = wt;
                return loss(forward(spec, ws2, x), y).item();
            },
            ws[wi].tensor, 1e-5);
        CHECK(max_rel_error(snap.layer_grads[wi].tensor, fd) < 1e-4);
    }
}

TEST_CASE("train: epochs=0 and lr=0 leave weights unchanged") {
    ModelSpec spec = small_mlp();
    WeightInit init;
    init.seed = 20;
    auto ws = init_weights(spec, init);
    Rng rng(21);
    LabeledData data{rng.uniform_tensor({4, 6}, 0.0, 1.0), one_hot({0, 1, 2, 0}, 3)};

    TrainResult r0 = train(spec, ws, data, 0, 0.1);
    CHECK(r0.loss_history.empty());
    for (size_t i = 0; i < ws.size(); ++i) CHECK(bitwise_equal(r0.weights[i].tensor, ws[i].tensor));

    TrainResult rl = train(spec, ws, data, 3, 0.0);
    CHECK(rl.loss_history.size() == 3);
    CHECK(rl.loss_history[0] == rl.loss_history[2]);
    for (size_t i = 0; i < ws.size(); ++i) CHECK(bitwise_equal(rl.weights[i].tensor, ws[i].tensor));
}

TEST_CASE("train: loss strictly decreases on a separable 2-point set (linear model)") {
    ModelSpec spec;
    spec.arch = MlpSpec{{2, 2}};
    spec.num_classes = 2;
    WeightInit init;
    init.seed = 30;
    auto ws = init_weights(spec, init);
    LabeledData data{Tensor::from_data({2, 2}, {1.0, 0.0, 0.0, 1.0}), one_hot({0, 1}, 2)};
    TrainResult r = train(spec, ws, data, 25, 0.5);
    REQUIRE(r.loss_history.size() == 25);
    for (size_t e = 1; e < r.loss_history.size(); ++e)
        CHECK(r.loss_history[e] < r.loss_history[e - 1]);
}

TEST_CASE("gradient_stats") {
    GradientSnapshot snap;
    snap.layer_grads.push_back({"zeros", Tensor::zeros({5})});
    snap.layer_grads.push_back({"pm1", Tensor::from_data({2}, {1.0, -1.0})});
    Rng rng(31);
    Tensor random = rng.normal_tensor({64});
    snap.layer_grads.push_back({"rand", random});

    auto stats = gradient_stats(snap);
    CHECK(stats[0].mean == 0.0);
    CHECK(stats[0].variance == 0.0);
    CHECK(stats[0].max_abs == 0.0);
    CHECK(stats[1].mean == 0.0);
    CHECK(stats[1].variance == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(stats[1].max_abs == 1.0);

    // straightforward two-pass oracle
    auto d = random.data();
    double mean = 0.0, maxabs = 0.0;
    for (double v : d) {
        mean += v;
        maxabs = std::max(maxabs, std::fabs(v));
    }
    mean /= static_cast<double>(d.size());
    double var = 0.0;
    for (double v : d) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d.size());
    CHECK(stats[2].mean == doctest::Approx(mean).epsilon(1e-12));
    CHECK(stats[2].variance == doctest::Approx(var).epsilon(1e-12));
    CHECK(stats[2].max_abs == maxabs);
}

TEST_CASE("training shrinks gradients in most trials") {
    // statistical form: max-abs after 10 epochs <= before, in >= 80% of trials
    ModelSpec spec;
    spec.arch = MlpSpec{{16, 10, 4}};
    spec.num_classes = 4;
    int shrunk = 0;
    const int trials = 10;
    for (int trial = 0; trial < trials; ++trial) {
        WeightInit init;
        init.scheme = WeightInit::Scheme::xavier_normal;
        init.seed = 400 + static_cast<uint64_t>(trial);
        auto ws = init_weights(spec, init);
        PatternDataset ds = builtin_patterns(PatternKind::mixed, 4, 4, 500 + trial);
        Tensor x = ds.image_batch(trial % 16, 1);
        Tensor y = ds.label_batch(trial % 16, 1);

        auto max_abs_of = [&](const std::vector<NamedTensor>& w) {
            GradientSnapshot s = capture(spec, w, x, y);
            double m = 0.0;
            for (const auto& st : gradient_stats(s)) m = std::max(m, st.max_abs);
            return m;
        };
        double before = max_abs_of(ws);
        TrainResult tr = train(spec, ws, ds.data(), 10, 0.2);
        double after = max_abs_of(tr.weights);
        if (after <= before) ++shrunk;
    }
    CHECK(shrunk >= static_cast<int>(0.8 * trials));
}

TEST_CASE("snapshot and weights round-trip through the container bit-exactly") {
    ModelSpec spec = small_mlp();
    WeightInit init;
    init.scheme = WeightInit::Scheme::xavier_normal;
    init.seed = 50;
    auto ws = init_weights(spec, init);
    Rng rng(51);
    Tensor x = rng.uniform_tensor({1, 6}, 0.0, 1.0);
    GradientSnapshot snap = capture(spec, ws, x, one_hot({2}, 3), 99, 7);

    auto dir = std::filesystem::temp_directory_path() / "gradleak_test_victim";
    std::filesystem::create_directories(dir);
    save_snapshot(dir / "snap.bin", snap);
    GradientSnapshot back = load_snapshot(dir / "snap.bin");
    CHECK(back.weight_checksum == snap.weight_checksum);
    CHECK(back.meta.epochs == 7);
    CHECK(back.meta.seed == 99);
    CHECK(back.meta.input_shape == snap.meta.input_shape);
    REQUIRE(back.layer_grads.size() == snap.layer_grads.size());
    for (size_t i = 0; i < snap.layer_grads.size(); ++i) {
        CHECK(back.layer_grads[i].name == snap.layer_grads[i].name);
        CHECK(bitwise_equal(back.layer_grads[i].tensor, snap.layer_grads[i].tensor));
    }

    save_weights(dir / "w.bin", spec, ws);
    auto [spec2, ws2] = load_weights(dir / "w.bin");
    CHECK(spec2.arch_name() == "mlp");
    for (size_t i = 0; i < ws.size(); ++i) CHECK(bitwise_equal(ws2[i].tensor, ws[i].tensor));
    std::filesystem::remove_all(dir);
}

TEST_SUITE_END();
