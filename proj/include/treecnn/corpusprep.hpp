#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "treecnn/embedding.hpp"

namespace treecnn {

struct ReviewRecord {
    std::string asin;
    double overall = 0.0;
    std::string text;
};

struct IngestResult {
    std::vector<ReviewRecord> records;
    std::size_t skipped = 0;  // malformed lines
};

// One JSON object per line; asin (non-empty string), overall (number in
// [1,5]) and reviewText (string) are required, anything else is ignored.
// Malformed lines are counted, not fatal.
IngestResult ingest_reviews(std::istream& in);

// Groups by product id in first-seen order, sorts each group ascending by
// rating (stable), and returns the review texts one per output line.
// Embedded line breaks are flattened to spaces to keep the framing.
std::vector<std::string> group_sort_dump(const std::vector<ReviewRecord>& records);

// Lowercases, splits on whitespace, peels leading/trailing punctuation
// (except '-') into their own tokens, maps parentheses to -LRB-/-RRB-, and
// detaches clitics (don't -> do n't, it's -> it 's, ...). Deterministic and
// idempotent on its own space-joined output.
std::vector<std::string> tokenize(const std::string& text);

// Sparse symmetric co-occurrence weights. Each unordered pair is stored
// once under (min, max); reads look up the canonical cell, so
// x(a, b) == x(b, a) by construction.
struct CooccurrenceTable {
    std::map<std::pair<std::size_t, std::size_t>, double> weights;

    void add(std::size_t a, std::size_t b, double weight);
    double x(std::size_t a, std::size_t b) const;
};

struct GloveConfig {
    std::size_t dim = 300;
    std::size_t window = 20;
    std::size_t min_count = 5;
    double x_max = 100.0;
    double alpha = 0.75;
    std::size_t iterations = 25;
    double learning_rate = 0.05;
    bool doc_boundaries = false;  // reset the window at line breaks when set
    std::uint64_t seed = 1;

    void validate() const;
};

struct CooccurrenceResult {
    Vocabulary vocab;                 // filtered to count >= min_count
    std::vector<std::size_t> counts;  // per vocab index
    CooccurrenceTable table;
};

// Counts pairs within the window at weight 1/distance. Words below
// min_count are dropped from the stream before windowing. Lines run
// together as one stream unless config.doc_boundaries is set.
CooccurrenceResult build_cooccurrence(const std::vector<std::vector<std::string>>& documents,
                                      const GloveConfig& config);

struct GloveTrainResult {
    EmbeddingChannel channel;  // word + context vectors summed
    // Total weighted least squares: the pre-training value first, then one
    // entry per iteration.
    std::vector<double> objective;
};

// AdaGrad on the weighted least-squares objective over
// w_i . w~_j + b_i + b~_j - log X_ij with weight min(1, (X/x_max)^alpha).
GloveTrainResult glove_train(const CooccurrenceResult& data, const GloveConfig& config);

double glove_weight(double x, const GloveConfig& config);

}  // namespace treecnn
