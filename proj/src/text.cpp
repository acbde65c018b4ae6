#include "gradleak/text.hpp"

#include <cmath>
#include <fstream>

#include "gradleak/rng.hpp"
#include "gradleak/serialize.hpp"

namespace gradleak {

Tensor Vocabulary::embed_sequence(const std::vector<int64_t>& token_indices) const {
    int64_t d = dim();
    std::vector<double> out;
    out.reserve(token_indices.size() * static_cast<size_t>(d));
    auto p = embed.data();
    for (int64_t t : token_indices) {
        if (t < 0 || t >= size())
            throw ConfigError("embed_sequence: token index " + std::to_string(t) + " out of range");
        out.insert(out.end(), p.begin() + static_cast<ptrdiff_t>(t * d),
                   p.begin() + static_cast<ptrdiff_t>((t + 1) * d));
    }
    return Tensor::from_data({static_cast<int64_t>(token_indices.size()), d}, std::move(out));
}

Vocabulary make_vocabulary(std::vector<std::string> tokens, int64_t dim, uint64_t seed, double lo,
                           double hi) {
    if (tokens.empty()) throw ConfigError("vocabulary: no tokens");
    for (size_t i = 0; i + 1 < tokens.size(); ++i)
        for (size_t j = i + 1; j < tokens.size(); ++j)
            if (tokens[i] == tokens[j])
                throw ConfigError("vocabulary: duplicate token '" + tokens[i] + "'");
    Rng rng(seed);
    Vocabulary v;
    v.embed = rng.uniform_tensor({static_cast<int64_t>(tokens.size()), dim}, lo, hi);
    v.tokens = std::move(tokens);
    return v;
}

Vocabulary load_vocabulary(const std::filesystem::path& path, int64_t dim, uint64_t seed) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open vocabulary: " + path.string());
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) tokens.push_back(line);
    }
    return make_vocabulary(std::move(tokens), dim, seed);
}

Vocabulary synthetic_vocabulary(int64_t size, int64_t dim, uint64_t seed) {
    std::vector<std::string> tokens;
    tokens.reserve(static_cast<size_t>(size));
    for (int64_t i = 0; i < size; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "tok%03d", static_cast<int>(i));
        tokens.emplace_back(buf);
    }
    return make_vocabulary(std::move(tokens), dim, seed);
}

namespace {

/// Cholesky factorization in place; returns false on a non-positive pivot.
bool cholesky(std::vector<double>& a, int64_t n) {
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j <= i; ++j) {
            double s = a[static_cast<size_t>(i * n + j)];
            for (int64_t k = 0; k < j; ++k)
                s -= a[static_cast<size_t>(i * n + k)] * a[static_cast<size_t>(j * n + k)];
            if (i == j) {
                if (s <= 0.0) return false;
                a[static_cast<size_t>(i * n + j)] = std::sqrt(s);
            } else {
                a[static_cast<size_t>(i * n + j)] = s / a[static_cast<size_t>(j * n + j)];
            }
        }
    }
    return true;
}

void cholesky_solve(const std::vector<double>& l, int64_t n, std::vector<double>& b) {
    for (int64_t i = 0; i < n; ++i) {
        double s = b[static_cast<size_t>(i)];
        for (int64_t k = 0; k < i; ++k) s -= l[static_cast<size_t>(i * n + k)] * b[static_cast<size_t>(k)];
        b[static_cast<size_t>(i)] = s / l[static_cast<size_t>(i * n + i)];
    }
    for (int64_t i = n; i-- > 0;) {
        double s = b[static_cast<size_t>(i)];
        for (int64_t k = i + 1; k < n; ++k)
            s -= l[static_cast<size_t>(k * n + i)] * b[static_cast<size_t>(k)];
        b[static_cast<size_t>(i)] = s / l[static_cast<size_t>(i * n + i)];
    }
}

}  // namespace

Tensor pseudoinverse(const Tensor& w, double ridge) {
    if (w.ndim() != 2) throw ShapeError("pseudoinverse: expected a matrix");
    int64_t rows = w.dim(0), d = w.dim(1);
    auto pw = w.data();

    std::vector<double> normal(static_cast<size_t>(d * d), 0.0);
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t i = 0; i < d; ++i) {
            double wi = pw[static_cast<size_t>(r * d + i)];
            if (wi == 0.0) continue;
            for (int64_t j = 0; j < d; ++j)
                normal[static_cast<size_t>(i * d + j)] += wi * pw[static_cast<size_t>(r * d + j)];
        }

    double diag_max = 0.0, diag_min = std::numeric_limits<double>::infinity();
    for (int64_t i = 0; i < d; ++i) {
        double v = normal[static_cast<size_t>(i * d + i)];
        diag_max = std::max(diag_max, v);
        diag_min = std::min(diag_min, v);
    }

    std::vector<double> factor;
    bool ok = false;
    for (double lambda : {ridge, ridge * 1e8}) {
        factor = normal;
        for (int64_t i = 0; i < d; ++i) factor[static_cast<size_t>(i * d + i)] += lambda;
        if (cholesky(factor, d)) {
            ok = true;
            break;
        }
    }
    if (!ok)
        throw LinAlgError("pseudoinverse: normal matrix singular beyond ridge rescue "
                          "(diag condition estimate " +
                          std::to_string(diag_max / std::max(diag_min, 1e-300)) + ")");

    // columns of the result solve (W^T W + ridge I) z = W^T e_col
    std::vector<double> out(static_cast<size_t>(d * rows));
    std::vector<double> col(static_cast<size_t>(d));
    for (int64_t c = 0; c < rows; ++c) {
        for (int64_t i = 0; i < d; ++i) col[static_cast<size_t>(i)] = pw[static_cast<size_t>(c * d + i)];
        cholesky_solve(factor, d, col);
        for (int64_t i = 0; i < d; ++i) out[static_cast<size_t>(i * rows + c)] = col[static_cast<size_t>(i)];
    }
    return Tensor::from_data({d, rows}, std::move(out));
}

TextReconstruction recover_tokens(const Tensor& e_recon, const Vocabulary& vocab) {
    if (e_recon.ndim() != 2 || e_recon.dim(1) != vocab.dim())
        throw ShapeError("recover_tokens: embedding " + shape_str(e_recon.shape()) +
                         " does not match vocabulary dim " + std::to_string(vocab.dim()));
    int64_t seq = e_recon.dim(0), v = vocab.size(), d = vocab.dim();
    Tensor pinv = pseudoinverse(vocab.embed);  // d x V
    auto pp = pinv.data();
    auto pe = e_recon.data();
    auto pw = vocab.embed.data();

    // row norms in the pseudoinverse metric: n_j = w_j . (M w_j) = (W M W^T)_jj
    std::vector<double> norm(static_cast<size_t>(v), 0.0);
    for (int64_t j = 0; j < v; ++j)
        for (int64_t k = 0; k < d; ++k)
            norm[static_cast<size_t>(j)] +=
                pw[static_cast<size_t>(j * d + k)] * pp[static_cast<size_t>(k * v + j)];

    TextReconstruction out;
    std::vector<double> scores(static_cast<size_t>(seq * v), 0.0);
    for (int64_t p = 0; p < seq; ++p) {
        for (int64_t k = 0; k < d; ++k) {
            double e = pe[static_cast<size_t>(p * d + k)];
            if (e == 0.0) continue;
            for (int64_t j = 0; j < v; ++j)
                scores[static_cast<size_t>(p * v + j)] += e * pp[static_cast<size_t>(k * v + j)];
        }
        int64_t best = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (int64_t j = 0; j < v; ++j) {
            double s = scores[static_cast<size_t>(p * v + j)] - 0.5 * norm[static_cast<size_t>(j)];
            scores[static_cast<size_t>(p * v + j)] = s;
            if (s > best_score) {  // strict: ties keep the lowest index
                best_score = s;
                best = j;
            }
        }
        out.recovered_indices.push_back(best);
        out.recovered_tokens.push_back(vocab.tokens[static_cast<size_t>(best)]);
    }
    out.token_scores = Tensor::from_data({seq, v}, std::move(scores));
    return out;
}

TextReconstruction run_text_attack(const ModelSpec& spec, const std::vector<NamedTensor>& weights,
                                   const Vocabulary& vocab, const GradientSnapshot& snapshot,
                                   const AttackConfig& cfg,
                                   const std::vector<int64_t>* truth_tokens) {
    if (!std::holds_alternative<TransformerLiteSpec>(spec.arch))
        throw ConfigError("text attack: model must be transformer_lite");
    AttackConfig text_cfg = cfg;
    text_cfg.clamp_x = false;  // embeddings are unconstrained

    ReconstructionResult attack = run_attack(spec, weights, snapshot, text_cfg);
    TextReconstruction out = recover_tokens(attack.x_recon, vocab);
    out.attack = std::move(attack);
    if (truth_tokens) {
        std::vector<bool> mask;
        mask.reserve(out.recovered_indices.size());
        for (size_t i = 0; i < out.recovered_indices.size(); ++i)
            mask.push_back(i < truth_tokens->size() &&
                           out.recovered_indices[i] == (*truth_tokens)[i]);
        out.match_mask = std::move(mask);
    }
    return out;
}

}  // namespace gradleak
