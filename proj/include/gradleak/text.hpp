#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gradleak/attack.hpp"
#include "gradleak/tensor.hpp"

namespace gradleak {

class LinAlgError : public Error {
public:
    using Error::Error;
};

struct Vocabulary {
    std::vector<std::string> tokens;
    Tensor embed;  // vocab_size x dim, rows are token embeddings

    int64_t size() const { return embed.dim(0); }
    int64_t dim() const { return embed.dim(1); }
    Tensor embed_sequence(const std::vector<int64_t>& token_indices) const;
};

/// Uniform-initialized embedding table over the given token strings.
Vocabulary make_vocabulary(std::vector<std::string> tokens, int64_t dim, uint64_t seed,
                           double lo = -1.0, double hi = 1.0);
/// One token per line; index = line number.
Vocabulary load_vocabulary(const std::filesystem::path& path, int64_t dim, uint64_t seed);
/// Deterministic synthetic token list ("tok000"...) when no file is given.
Vocabulary synthetic_vocabulary(int64_t size, int64_t dim, uint64_t seed);

/// Ridge-regularized Moore-Penrose pseudoinverse of a tall full-column-rank
/// matrix: (W^T W + ridge I)^{-1} W^T, dim x vocab. Throws LinAlgError with a
/// condition estimate if the normal matrix stays singular beyond the ridge.
Tensor pseudoinverse(const Tensor& w, double ridge = 1e-10);

struct TextReconstruction {
    std::vector<int64_t> recovered_indices;
    std::vector<std::string> recovered_tokens;
    Tensor token_scores;  // seq_len x vocab; nearest-row scores in the
                          // pseudoinverse metric (argmax-exact for perfect rows)
    std::optional<std::vector<bool>> match_mask;
    ReconstructionResult attack;  // populated by run_text_attack
};

/// Maps a reconstructed seq_len x dim embedding back to tokens through the
/// pseudoinverse of the embedding table. Ties break to the lowest index.
TextReconstruction recover_tokens(const Tensor& e_recon, const Vocabulary& vocab);

/// Embedding-space attack (no [0,1] clamp) followed by token recovery.
TextReconstruction run_text_attack(const ModelSpec& spec, const std::vector<NamedTensor>& weights,
                                   const Vocabulary& vocab, const GradientSnapshot& snapshot,
                                   const AttackConfig& cfg,
                                   const std::vector<int64_t>* truth_tokens = nullptr);

}  // namespace gradleak
