#include "treecnn/corpusprep.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace treecnn {

IngestResult ingest_reviews(std::istream& in) {
    IngestResult result;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        nlohmann::json parsed = nlohmann::json::parse(line, nullptr, false);
        if (parsed.is_discarded() || !parsed.is_object()) {
            ++result.skipped;
            continue;
        }
        const auto asin = parsed.find("asin");
        const auto overall = parsed.find("overall");
        const auto text = parsed.find("reviewText");
        if (asin == parsed.end() || !asin->is_string() || asin->get<std::string>().empty() ||
            overall == parsed.end() || !overall->is_number() || text == parsed.end() ||
            !text->is_string()) {
            ++result.skipped;
            continue;
        }
        const double rating = overall->get<double>();
        if (!(rating >= 1.0 && rating <= 5.0)) {
            ++result.skipped;
            continue;
        }
        result.records.push_back({asin->get<std::string>(), rating, text->get<std::string>()});
    }
    return result;
}

std::vector<std::string> group_sort_dump(const std::vector<ReviewRecord>& records) {
    // Group ids in first-seen order, then a stable ascending sort by rating
    // inside each group.
    std::vector<std::string> group_order;
    std::map<std::string, std::vector<const ReviewRecord*>> groups;
    for (const ReviewRecord& record : records) {
        auto [it, inserted] = groups.try_emplace(record.asin);
        if (inserted) group_order.push_back(record.asin);
        it->second.push_back(&record);
    }
    std::vector<std::string> lines;
    lines.reserve(records.size());
    for (const std::string& asin : group_order) {
        std::vector<const ReviewRecord*>& group = groups[asin];
        std::stable_sort(group.begin(), group.end(),
                         [](const ReviewRecord* a, const ReviewRecord* b) {
                             return a->overall < b->overall;
                         });
        for (const ReviewRecord* record : group) {
            std::string text = record->text;
            std::replace(text.begin(), text.end(), '\n', ' ');
            std::replace(text.begin(), text.end(), '\r', ' ');
            lines.push_back(std::move(text));
        }
    }
    return lines;
}

namespace {

bool peelable(char c) {
    return std::ispunct(static_cast<unsigned char>(c)) != 0 && c != '-';
}

// -LRB-/-RRB- stay uppercase through the lowercasing pass so the output
// re-tokenizes to itself.
std::string canonical_bracket(const std::string& word) {
    if (word == "(" || word == "-lrb-") return "-LRB-";
    if (word == ")" || word == "-rrb-") return "-RRB-";
    return word;
}

const char* const kClitics[] = {"n't", "'s", "'re", "'ve", "'ll", "'d", "'m"};

bool is_clitic(const std::string& word) {
    for (const char* clitic : kClitics) {
        if (word == clitic) return true;
    }
    return false;
}

void emit(std::vector<std::string>& out, const std::string& word) {
    if (!word.empty()) out.push_back(canonical_bracket(word));
}

void split_word(std::vector<std::string>& out, std::string word) {
    // Already-detached clitics pass through before any peeling so the
    // tokenizer is idempotent.
    if (is_clitic(word)) {
        out.push_back(word);
        return;
    }
    std::size_t begin = 0;
    std::size_t end = word.size();
    std::vector<std::string> leading;
    while (begin < end && peelable(word[begin])) {
        leading.push_back(std::string(1, word[begin]));
        ++begin;
    }
    std::vector<std::string> trailing;  // collected innermost-last
    while (end > begin && peelable(word[end - 1])) {
        trailing.push_back(std::string(1, word[end - 1]));
        --end;
    }
    for (const std::string& p : leading) emit(out, p);
    std::string core = word.substr(begin, end - begin);
    if (!core.empty()) {
        bool split = false;
        for (const char* clitic : kClitics) {
            const std::size_t len = std::string(clitic).size();
            if (core.size() > len && core.compare(core.size() - len, len, clitic) == 0) {
                emit(out, core.substr(0, core.size() - len));
                out.push_back(clitic);
                split = true;
                break;
            }
        }
        if (!split) emit(out, core);
    }
    for (auto it = trailing.rbegin(); it != trailing.rend(); ++it) emit(out, *it);
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string word;
    auto flush = [&] {
        if (!word.empty()) {
            split_word(out, word);
            word.clear();
        }
    };
    for (char raw : text) {
        const unsigned char c = static_cast<unsigned char>(raw);
        if (std::isspace(c)) {
            flush();
        } else {
            word.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    flush();
    return out;
}

void CooccurrenceTable::add(std::size_t a, std::size_t b, double weight) {
    const auto key = a <= b ? std::make_pair(a, b) : std::make_pair(b, a);
    weights[key] += weight;
}

double CooccurrenceTable::x(std::size_t a, std::size_t b) const {
    const auto key = a <= b ? std::make_pair(a, b) : std::make_pair(b, a);
    const auto it = weights.find(key);
    return it == weights.end() ? 0.0 : it->second;
}

void GloveConfig::validate() const {
    if (dim == 0) throw ConfigError("embedding dimension must be positive");
    if (window == 0) throw ConfigError("window size must be positive");
    if (!(x_max > 0.0)) throw ConfigError("x_max must be positive");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in (0, 1]");
    if (iterations == 0) throw ConfigError("iteration count must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
}

CooccurrenceResult build_cooccurrence(const std::vector<std::vector<std::string>>& documents,
                                      const GloveConfig& config) {
    config.validate();
    std::size_t total_tokens = 0;
    for (const auto& doc : documents) total_tokens += doc.size();
    if (total_tokens == 0) throw DataError("empty corpus: nothing to count");

    // First pass: occurrence counts; vocabulary keeps first-seen order of
    // the words that survive the min_count filter.
    std::map<std::string, std::size_t> occurrences;
    std::vector<std::string> first_seen;
    for (const auto& doc : documents) {
        for (const std::string& token : doc) {
            auto [it, inserted] = occurrences.try_emplace(token, 0);
            if (inserted) first_seen.push_back(token);
            ++it->second;
        }
    }
    CooccurrenceResult result;
    for (const std::string& word : first_seen) {
        if (occurrences[word] >= config.min_count) {
            result.vocab.add(word);
            result.counts.push_back(occurrences[word]);
        }
    }
    if (result.vocab.size() == 0) {
        std::ostringstream msg;
        msg << "co-occurrence vocabulary is empty: no word reaches min_count "
            << config.min_count;
        throw DataError(msg.str());
    }

    // Second pass: 1/distance pair weights over the in-vocabulary stream.
    // Each unordered pair occurrence lands once in its canonical cell.
    std::vector<std::size_t> stream;
    auto sweep = [&] {
        for (std::size_t j = 0; j < stream.size(); ++j) {
            const std::size_t lo = j > config.window ? j - config.window : 0;
            for (std::size_t i = lo; i < j; ++i) {
                result.table.add(stream[i], stream[j], 1.0 / static_cast<double>(j - i));
            }
        }
        stream.clear();
    };
    for (const auto& doc : documents) {
        for (const std::string& token : doc) {
            if (auto idx = result.vocab.find(token)) stream.push_back(*idx);
        }
        if (config.doc_boundaries) sweep();
    }
    if (!config.doc_boundaries) sweep();
    return result;
}

double glove_weight(double x, const GloveConfig& config) {
    if (x >= config.x_max) return 1.0;
    return std::pow(x / config.x_max, config.alpha);
}

GloveTrainResult glove_train(const CooccurrenceResult& data, const GloveConfig& config) {
    config.validate();
    if (data.table.weights.empty()) throw DataError("empty co-occurrence table");
    const std::size_t v = data.vocab.size();
    const std::size_t d = config.dim;

    // Directed training pairs: both directions for distinct words, the
    // diagonal once. Symmetric reads make both directions share one count.
    struct Pair {
        std::size_t i, j;
        double x;
    };
    std::vector<Pair> pairs;
    for (const auto& [key, weight] : data.table.weights) {
        pairs.push_back({key.first, key.second, weight});
        if (key.first != key.second) pairs.push_back({key.second, key.first, weight});
    }

    SeededRng rng(config.seed);
    const double bound = 0.5 / static_cast<double>(d);
    Matrix w(v, d), wc(v, d);        // word and context vectors
    Vector b(v), bc(v);              // word and context biases
    for (auto& value : w.data) value = rng.uniform(-bound, bound);
    for (auto& value : wc.data) value = rng.uniform(-bound, bound);
    for (auto& value : b.data) value = rng.uniform(-bound, bound);
    for (auto& value : bc.data) value = rng.uniform(-bound, bound);

    // AdaGrad accumulators start at one, so the first steps are already
    // scaled like plain SGD at the configured rate.
    Matrix gw(v, d, 1.0), gwc(v, d, 1.0);
    Vector gb(v, 1.0), gbc(v, 1.0);

    auto total_objective = [&] {
        double sum = 0.0;
        for (const Pair& p : pairs) {
            double dot = 0.0;
            for (std::size_t k = 0; k < d; ++k) dot += w.at(p.i, k) * wc.at(p.j, k);
            const double diff = dot + b[p.i] + bc[p.j] - std::log(p.x);
            sum += 0.5 * glove_weight(p.x, config) * diff * diff;
        }
        return sum;
    };

    GloveTrainResult result;
    result.objective.push_back(total_objective());  // pre-training baseline
    for (std::size_t iter = 0; iter < config.iterations; ++iter) {
        rng.shuffle(pairs);
        for (const Pair& p : pairs) {
            double dot = 0.0;
            for (std::size_t k = 0; k < d; ++k) dot += w.at(p.i, k) * wc.at(p.j, k);
            const double diff = dot + b[p.i] + bc[p.j] - std::log(p.x);
            const double fdiff = glove_weight(p.x, config) * diff;
            if (!std::isfinite(fdiff)) {
                std::ostringstream msg;
                msg << "glove training diverged at iteration " << iter + 1;
                throw NumericError(msg.str());
            }
            for (std::size_t k = 0; k < d; ++k) {
                const double grad_w = fdiff * wc.at(p.j, k);
                const double grad_c = fdiff * w.at(p.i, k);
                gw.at(p.i, k) += grad_w * grad_w;
                gwc.at(p.j, k) += grad_c * grad_c;
                w.at(p.i, k) -= config.learning_rate * grad_w / std::sqrt(gw.at(p.i, k));
                wc.at(p.j, k) -= config.learning_rate * grad_c / std::sqrt(gwc.at(p.j, k));
            }
            gb[p.i] += fdiff * fdiff;
            gbc[p.j] += fdiff * fdiff;
            b[p.i] -= config.learning_rate * fdiff / std::sqrt(gb[p.i]);
            bc[p.j] -= config.learning_rate * fdiff / std::sqrt(gbc[p.j]);
        }
        result.objective.push_back(total_objective());
    }

    EmbeddingChannel channel(d, config.seed);
    channel.vocab = data.vocab;
    channel.table = Matrix(v, d);
    for (std::size_t i = 0; i < v; ++i) {
        for (std::size_t k = 0; k < d; ++k) {
            channel.table.at(i, k) = w.at(i, k) + wc.at(i, k);
        }
    }
    result.channel = std::move(channel);
    return result;
}

}  // namespace treecnn
