#pragma once

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "treecnn/numkernel.hpp"

namespace treecnn {

struct Vocabulary {
    std::unordered_map<std::string, std::size_t> index_of;
    std::vector<std::string> words;  // index -> word, dense from 0

    std::size_t size() const { return words.size(); }
    std::optional<std::size_t> find(const std::string& word) const;
    // Returns the existing index or appends the word.
    std::size_t add(const std::string& word);
};

// One input channel: a vocabulary-indexed dense vector table.
// Lookup policy: exact match, then lowercase match, then an out-of-vocabulary
// row allocated on first sight with a seeded uniform init in [-0.05, 0.05].
struct EmbeddingChannel {
    Vocabulary vocab;
    std::size_t dim = 0;
    Matrix table;  // |V| x dim
    bool trainable = true;
    double learning_rate = 0.1;
    std::size_t frozen_update_attempts = 0;
    std::uint64_t oov_seed = 0;  // recorded so checkpoints can reproduce OOV draws

    EmbeddingChannel() = default;
    EmbeddingChannel(std::size_t dim, std::uint64_t oov_seed);

    void set_oov_seed(std::uint64_t seed) {
        oov_seed = seed;
        oov_rng_ = SeededRng(seed);
    }

    // Grows the table on unseen tokens; read-only once the vocabulary is
    // closed over the data.
    std::size_t lookup(const std::string& token);

  private:
    SeededRng oov_rng_{0};
};

struct MultiChannelEmbedder {
    std::vector<EmbeddingChannel> channels;

    std::size_t total_dim() const;
};

// Row indices used per channel for one sentence; drives the gradient scatter.
struct EmbedCache {
    std::vector<std::vector<std::size_t>> rows;  // [channel][token]
};

// d x n matrix whose column i is the channel-major concatenation of the
// per-channel vectors of token i.
Matrix embed_sentence(MultiChannelEmbedder& emb, const std::vector<std::string>& tokens,
                      EmbedCache* cache = nullptr);

// Sparse per-row gradients for one channel, keyed by row index.
struct SparseRowGrads {
    std::map<std::size_t, Vector> rows;

    void accumulate(std::size_t row, const Vector& grad);
    void merge(const SparseRowGrads& other);
    void scale(double factor);
};

// AdaGrad over exactly the touched rows with the channel's own rate.
// Frozen channels are left unchanged and the attempt is counted.
void apply_embedding_gradient(EmbeddingChannel& channel, const SparseRowGrads& grads,
                              Matrix& accum, double epsilon);

// GloVe text format: one line per word, "word v1 ... v_d", d inferred from
// the first line.
EmbeddingChannel load_glove_text(const std::string& path);
void save_glove_text(const EmbeddingChannel& channel, const std::string& path);

}  // namespace treecnn
