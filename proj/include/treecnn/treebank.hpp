#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "treecnn/errors.hpp"

namespace treecnn {

// Binarized constituency parse tree with per-node sentiment labels.
// Raw trees carry labels 0..4 at every node; after the binary remap a node
// may be unlabeled, which excludes it from the loss but keeps the structure.
struct SentimentTree {
    std::optional<int> label;
    std::string token;  // leaves only
    std::unique_ptr<SentimentTree> left;
    std::unique_ptr<SentimentTree> right;

    bool is_leaf() const { return left == nullptr; }
    SentimentTree clone() const;
};

enum class TaskSetting { FineGrained, Binary };

inline std::size_t class_count(TaskSetting setting) {
    return setting == TaskSetting::FineGrained ? 5 : 2;
}

struct DatasetSplit {
    std::string name;  // train | dev | test
    std::vector<SentimentTree> trees;
};

struct Phrase {
    std::vector<std::string> tokens;
    int label;
};

// One s-expression, "(L child child)" or "(L token)", labels 0..4.
// Errors carry the byte offset of the offending input position.
SentimentTree parse_sexpr(std::string_view text);

// Canonical single-space form; parse(serialize(t)) == t.
std::string serialize_sexpr(const SentimentTree& tree);

// One s-expression per line, blank lines ignored.
DatasetSplit load_split(const std::string& path, const std::string& name);

std::vector<std::string> leaf_tokens(const SentimentTree& tree);
std::size_t count_nodes(const SentimentTree& tree);
std::size_t count_labeled_nodes(const SentimentTree& tree);
std::size_t count_labeled_nodes(const std::vector<DatasetSplit>& splits);

// Binary-setting remap: neutral root drops the sentence, {0,1} -> 0,
// {3,4} -> 1, and interior neutral nodes become unlabeled.
std::optional<SentimentTree> to_binary(const SentimentTree& tree);

// One sample per labeled node, pre-order, tokens being the node's leaf span.
std::vector<Phrase> extract_phrases(const SentimentTree& tree);

}  // namespace treecnn
