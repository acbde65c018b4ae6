#include <doctest.h>

#include <cmath>

#include "gradleak/ops.hpp"
#include "gradleak/rng.hpp"
#include "gradleak/text.hpp"
#include "test_helpers.hpp"

using namespace gradleak;
using gradleak::testing::max_rel_error;

namespace {

Tensor matmul_plain(const Tensor& a, const Tensor& b) { return matmul(a, b); }

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

ModelSpec head_model(int64_t vocab, int64_t d, int64_t seq, int64_t classes) {
    ModelSpec spec;
    TransformerLiteSpec t;
    t.vocab_size = vocab;
    t.embed_dim = d;
    t.seq_len = seq;
    t.blocks = 0;
    spec.arch = t;
    spec.activation = Activation::gelu;
    spec.num_classes = classes;
    return spec;
}

Tensor class_one_hot(int64_t cls, int64_t classes) {
    std::vector<double> d(static_cast<size_t>(classes), 0.0);
    d[static_cast<size_t>(cls)] = 1.0;
    return Tensor::from_data({1, classes}, std::move(d));
}

}  // namespace

TEST_SUITE_BEGIN("text");

TEST_CASE("pseudoinverse of the identity is the identity") {
    Tensor eye = Tensor::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tensor p = pseudoinverse(eye);
    CHECK(max_abs_diff(p, eye) < 1e-9);
}

TEST_CASE("orthonormal columns give W+ = W^T") {
    // a tall matrix with orthonormal columns
    double s = 1.0 / std::sqrt(2.0);
    Tensor w = Tensor::from_data({4, 2}, {s, 0, s, 0, 0, s, 0, s});
    Tensor p = pseudoinverse(w);
    Tensor wt = transpose(w);
    CHECK(max_abs_diff(p, wt) < 1e-8);
}

TEST_CASE("Moore-Penrose identities on random tall matrices") {
    Rng rng(80);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor w = rng.uniform_tensor({50, 8}, -1.0, 1.0);
        Tensor p = pseudoinverse(w);
        Tensor wpw = matmul_plain(matmul_plain(w, p), w);
        CHECK(max_abs_diff(wpw, w) < 1e-6);
        // W+ W = I_d
        Tensor pw = matmul_plain(p, w);
        Tensor eye = Tensor::zeros({8, 8});
        {
            std::vector<double> e(64, 0.0);
            for (int i = 0; i < 8; ++i) e[static_cast<size_t>(i * 8 + i)] = 1.0;
            eye = Tensor::from_data({8, 8}, std::move(e));
        }
        CHECK(max_abs_diff(pw, eye) < 1e-6);
        // the remaining two identities: (W W+)^T = W W+ and (W+ W)^T = W+ W
        Tensor wp = matmul_plain(w, p);
        CHECK(max_abs_diff(wp, transpose(wp)) < 1e-6);
        CHECK(max_abs_diff(pw, transpose(pw)) < 1e-6);
    }
}

TEST_CASE("recover_tokens: exact embedding rows decode to their indices") {
    Vocabulary vocab = synthetic_vocabulary(40, 8, 81);
    Tensor e = vocab.embed_sequence({3, 7, 7});
    TextReconstruction r = recover_tokens(e, vocab);
    CHECK(r.recovered_indices == std::vector<int64_t>{3, 7, 7});
    CHECK(r.recovered_tokens[0] == vocab.tokens[3]);
    CHECK(r.token_scores.shape() == Shape{3, 40});
}

TEST_CASE("recovery is the identity for any full-rank vocabulary (20 random tables)") {
    for (int trial = 0; trial < 20; ++trial) {
        Vocabulary vocab = synthetic_vocabulary(100, 16, 200 + static_cast<uint64_t>(trial));
        std::vector<int64_t> all(100);
        for (int64_t i = 0; i < 100; ++i) all[static_cast<size_t>(i)] = i;
        TextReconstruction r = recover_tokens(vocab.embed_sequence(all), vocab);
        CHECK(r.recovered_indices == all);
    }
}

TEST_CASE("recovery survives small perturbations of the embedding") {
    Vocabulary vocab = synthetic_vocabulary(60, 12, 82);
    std::vector<int64_t> tokens{5, 17, 42, 0};
    Tensor e = vocab.embed_sequence(tokens);
    Rng rng(83);
    Tensor noise = rng.normal_tensor(e.shape());
    double nn = 0.0;
    for (int64_t i = 0; i < noise.numel(); ++i) nn += noise[i] * noise[i];
    Tensor perturbed = add(e, mul(noise, 1e-6 / std::sqrt(nn)));
    TextReconstruction r = recover_tokens(perturbed, vocab);
    CHECK(r.recovered_indices == tokens);
}

TEST_CASE("degenerate scores tie-break to the lowest index") {
    // two tokens mirrored through the origin: a zero embedding row is exactly
    // equidistant, so the documented rule picks the lower index
    Vocabulary vocab;
    vocab.tokens = {"plus", "minus", "other"};
    vocab.embed = Tensor::from_data({3, 2}, {1, 0, -1, 0, 0, 1});
    TextReconstruction r = recover_tokens(Tensor::zeros({1, 2}), vocab);
    CHECK(r.recovered_indices == std::vector<int64_t>{0});
}

TEST_CASE("embedding-head text attack recovers all tokens") {
    ModelSpec spec = head_model(50, 12, 6, 4);
    WeightInit init;
    init.seed = 84;
    auto weights = init_weights(spec, init);
    Vocabulary vocab = synthetic_vocabulary(50, 12, 85);
    std::vector<int64_t> tokens{4, 9, 31, 7, 44, 18};
    int64_t cls = 0;
    for (int64_t t : tokens) cls += t;
    Tensor e = vocab.embed_sequence(tokens);
    GradientSnapshot snap = capture(spec, weights, e, class_one_hot(cls % 4, 4));

    AttackConfig cfg;
    cfg.optimizer = OptimizerKind::adamw;
    cfg.lr = 0.01;
    cfg.max_iters = 3000;
    cfg.seed = 6;
    TextReconstruction r = run_text_attack(spec, weights, vocab, snap, cfg, &tokens);
    CHECK(r.recovered_indices == tokens);
    REQUIRE(r.match_mask.has_value());
    for (bool b : *r.match_mask) CHECK(b);

    // range contract: the dummy embedding is never clamped to [0,1]
    bool outside = false;
    for (int64_t i = 0; i < r.attack.x_recon.numel(); ++i)
        outside = outside || r.attack.x_recon[i] < 0.0 || r.attack.x_recon[i] > 1.0;
    CHECK(outside);
}

TEST_CASE("seq_len = 1 degenerate attack runs and returns one token") {
    ModelSpec spec = head_model(30, 8, 1, 2);
    WeightInit init;
    init.seed = 86;
    auto weights = init_weights(spec, init);
    Vocabulary vocab = synthetic_vocabulary(30, 8, 87);
    std::vector<int64_t> tokens{11};
    GradientSnapshot snap = capture(spec, weights, vocab.embed_sequence(tokens),
                                    class_one_hot(1, 2));
    AttackConfig cfg;
    cfg.optimizer = OptimizerKind::adamw;
    cfg.lr = 0.01;
    cfg.max_iters = 1500;
    cfg.seed = 3;
    TextReconstruction r = run_text_attack(spec, weights, vocab, snap, cfg);
    CHECK(r.recovered_indices.size() == 1);
    CHECK(r.recovered_indices[0] == 11);
}

TEST_CASE("sapag recovers at least as many tokens as euclidean on most trials") {
    int sapag_wins_or_ties = 0;
    const int trials = 20;
    for (int trial = 0; trial < trials; ++trial) {
        ModelSpec spec = head_model(40, 8, 5, 4);
        WeightInit init;
        init.seed = 300 + static_cast<uint64_t>(trial);
        auto weights = init_weights(spec, init);
        Vocabulary vocab = synthetic_vocabulary(40, 8, 400 + static_cast<uint64_t>(trial));
        Rng rng(500 + static_cast<uint64_t>(trial));
        std::vector<int64_t> tokens;
        for (int i = 0; i < 5; ++i) tokens.push_back(static_cast<int64_t>(rng.next_u64() % 40));
        int64_t cls = 0;
        for (int64_t t : tokens) cls += t;
        GradientSnapshot snap = capture(spec, weights, vocab.embed_sequence(tokens),
                                        class_one_hot(cls % 4, 4));
        auto run_with = [&](DistanceKind kind) {
            AttackConfig cfg;
            cfg.optimizer = OptimizerKind::adamw;
            cfg.lr = 0.01;
            cfg.max_iters = 400;  // tight budget keeps the comparison informative
            cfg.seed = 600 + static_cast<uint64_t>(trial);
            cfg.distance_kind = kind;
            TextReconstruction r = run_text_attack(spec, weights, vocab, snap, cfg, &tokens);
            int matches = 0;
            for (bool b : *r.match_mask) matches += b;
            return matches;
        };
        if (run_with(DistanceKind::euclidean) <= run_with(DistanceKind::sapag))
            ++sapag_wins_or_ties;
    }
    CHECK(sapag_wins_or_ties >= static_cast<int>(0.6 * trials));
}

TEST_SUITE_END();
