#include "treecnn/embedding.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace treecnn {

namespace {

constexpr double kOovBound = 0.05;

std::string to_lower(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return out;
}

}  // namespace

std::optional<std::size_t> Vocabulary::find(const std::string& word) const {
    auto it = index_of.find(word);
    if (it == index_of.end()) return std::nullopt;
    return it->second;
}

std::size_t Vocabulary::add(const std::string& word) {
    auto it = index_of.find(word);
    if (it != index_of.end()) return it->second;
    std::size_t idx = words.size();
    words.push_back(word);
    index_of.emplace(word, idx);
    return idx;
}

EmbeddingChannel::EmbeddingChannel(std::size_t dim, std::uint64_t oov_seed)
    : dim(dim), table(0, dim), oov_seed(oov_seed), oov_rng_(oov_seed) {}

std::size_t EmbeddingChannel::lookup(const std::string& token) {
    if (auto idx = vocab.find(token)) return *idx;
    if (auto idx = vocab.find(to_lower(token))) return *idx;
    std::size_t idx = vocab.add(token);
    table.rows += 1;
    table.data.resize(table.rows * dim);
    for (std::size_t k = 0; k < dim; ++k)
        table.at(idx, k) = oov_rng_.uniform(-kOovBound, kOovBound);
    return idx;
}

std::size_t MultiChannelEmbedder::total_dim() const {
    std::size_t d = 0;
    for (const auto& ch : channels) d += ch.dim;
    return d;
}

Matrix embed_sentence(MultiChannelEmbedder& emb, const std::vector<std::string>& tokens,
                      EmbedCache* cache) {
    if (tokens.empty()) throw DataError("embed_sentence: empty token list");
    const std::size_t d = emb.total_dim();
    Matrix x(d, tokens.size());
    if (cache) cache->rows.assign(emb.channels.size(), {});
    std::size_t row_base = 0;
    for (std::size_t c = 0; c < emb.channels.size(); ++c) {
        auto& ch = emb.channels[c];
        for (std::size_t t = 0; t < tokens.size(); ++t) {
            std::size_t idx = ch.lookup(tokens[t]);
            if (cache) cache->rows[c].push_back(idx);
            for (std::size_t k = 0; k < ch.dim; ++k) x.at(row_base + k, t) = ch.table.at(idx, k);
        }
        row_base += ch.dim;
    }
    return x;
}

void SparseRowGrads::accumulate(std::size_t row, const Vector& grad) {
    auto it = rows.find(row);
    if (it == rows.end()) {
        rows.emplace(row, grad);
    } else {
        axpy(it->second, 1.0, grad);
    }
}

void SparseRowGrads::merge(const SparseRowGrads& other) {
    for (const auto& [row, grad] : other.rows) accumulate(row, grad);
}

void SparseRowGrads::scale(double factor) {
    for (auto& [row, grad] : rows)
        for (auto& g : grad.data) g *= factor;
}

void apply_embedding_gradient(EmbeddingChannel& channel, const SparseRowGrads& grads,
                              Matrix& accum, double epsilon) {
    if (!channel.trainable) {
        channel.frozen_update_attempts += 1;
        return;
    }
    if (accum.rows < channel.table.rows || accum.cols != channel.dim) {
        // Vocabulary may have grown through OOV allocation since the
        // accumulator was sized.
        Matrix grown(channel.table.rows, channel.dim);
        for (std::size_t i = 0; i < accum.rows; ++i)
            for (std::size_t j = 0; j < accum.cols; ++j) grown.at(i, j) = accum.at(i, j);
        accum = std::move(grown);
    }
    for (const auto& [row, grad] : grads.rows) {
        if (row >= channel.table.rows) throw ShapeError("embedding gradient row out of range");
        for (std::size_t k = 0; k < channel.dim; ++k) {
            const double g = grad[k];
            if (!std::isfinite(g)) throw NumericError("NaN gradient in embedding table");
            accum.at(row, k) += g * g;
            channel.table.at(row, k) -=
                channel.learning_rate * g / (std::sqrt(accum.at(row, k)) + epsilon);
        }
    }
}

EmbeddingChannel load_glove_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open embedding file: " + path);
    EmbeddingChannel ch;
    std::string line;
    std::size_t line_no = 0;
    std::vector<double> values;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string word;
        fields >> word;
        values.clear();
        double v;
        while (fields >> v) values.push_back(v);
        if (!fields.eof()) {
            std::ostringstream msg;
            msg << path << ":" << line_no << ": non-numeric field";
            throw DataError(msg.str());
        }
        if (line_no == 1) {
            if (values.empty()) {
                std::ostringstream msg;
                msg << path << ":" << line_no << ": no vector values";
                throw DataError(msg.str());
            }
            ch.dim = values.size();
            ch.table.cols = ch.dim;
        } else if (values.size() != ch.dim) {
            std::ostringstream msg;
            msg << path << ":" << line_no << ": dimension " << values.size()
                << " != " << ch.dim;
            throw DataError(msg.str());
        }
        if (ch.vocab.find(word)) {
            std::ostringstream msg;
            msg << path << ":" << line_no << ": duplicate word '" << word << "'";
            throw DataError(msg.str());
        }
        ch.vocab.add(word);
        ch.table.rows += 1;
        ch.table.data.insert(ch.table.data.end(), values.begin(), values.end());
    }
    if (ch.vocab.size() == 0) throw DataError("empty embedding file: " + path);
    return ch;
}

void save_glove_text(const EmbeddingChannel& channel, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write embedding file: " + path);
    char buf[64];
    for (std::size_t i = 0; i < channel.vocab.size(); ++i) {
        out << channel.vocab.words[i];
        for (std::size_t k = 0; k < channel.dim; ++k) {
            std::snprintf(buf, sizeof(buf), "%.6g", channel.table.at(i, k));
            out << ' ' << buf;
        }
        out << '\n';
    }
}

}  // namespace treecnn
