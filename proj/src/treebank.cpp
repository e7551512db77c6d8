#include "treecnn/treebank.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace treecnn {

namespace {

[[noreturn]] void parse_fail(std::size_t offset, const std::string& what) {
    std::ostringstream msg;
    msg << "parse error at byte " << offset << ": " << what;
    throw ParseError(msg.str());
}

struct Parser {
    std::string_view text;
    std::size_t pos = 0;

    void skip_space() {
        while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    }

    char peek() const { return pos < text.size() ? text[pos] : '\0'; }

    SentimentTree node() {
        skip_space();
        if (peek() != '(') parse_fail(pos, "expected '('");
        ++pos;
        skip_space();
        if (pos >= text.size() || (text[pos] != '_' && (text[pos] < '0' || text[pos] > '4'))) {
            parse_fail(pos, "expected label in 0..4");
        }
        SentimentTree t;
        if (text[pos] != '_') t.label = text[pos] - '0';  // '_' marks unlabeled
        ++pos;
        if (pos < text.size() && !std::isspace(static_cast<unsigned char>(text[pos]))) {
            parse_fail(pos, "label must be a single digit 0..4");
        }
        skip_space();
        if (peek() == '(') {
            t.left = std::make_unique<SentimentTree>(node());
            skip_space();
            if (peek() != '(') {
                parse_fail(pos, "internal node must have exactly two children");
            }
            t.right = std::make_unique<SentimentTree>(node());
            skip_space();
            if (peek() == '(') {
                parse_fail(pos, "internal node must have exactly two children");
            }
        } else {
            std::size_t start = pos;
            while (pos < text.size() && text[pos] != '(' && text[pos] != ')' &&
                   !std::isspace(static_cast<unsigned char>(text[pos]))) {
                ++pos;
            }
            if (pos == start) parse_fail(pos, "empty token");
            t.token = std::string(text.substr(start, pos - start));
            skip_space();
        }
        if (peek() != ')') parse_fail(pos, "expected ')'");
        ++pos;
        return t;
    }
};

void serialize_rec(const SentimentTree& t, std::ostringstream& out) {
    out << '(' << (t.label ? char('0' + *t.label) : '_') << ' ';
    if (t.is_leaf()) {
        out << t.token;
    } else {
        serialize_rec(*t.left, out);
        out << ' ';
        serialize_rec(*t.right, out);
    }
    out << ')';
}

void collect_leaves(const SentimentTree& t, std::vector<std::string>& out) {
    if (t.is_leaf()) {
        out.push_back(t.token);
    } else {
        collect_leaves(*t.left, out);
        collect_leaves(*t.right, out);
    }
}

SentimentTree remap_binary(const SentimentTree& t) {
    SentimentTree out;
    const int raw = *t.label;
    if (raw == 2) {
        out.label = std::nullopt;
    } else {
        out.label = raw < 2 ? 0 : 1;
    }
    if (t.is_leaf()) {
        out.token = t.token;
    } else {
        out.left = std::make_unique<SentimentTree>(remap_binary(*t.left));
        out.right = std::make_unique<SentimentTree>(remap_binary(*t.right));
    }
    return out;
}

void extract_rec(const SentimentTree& t, std::vector<Phrase>& out) {
    if (t.label) {
        Phrase p;
        p.label = *t.label;
        collect_leaves(t, p.tokens);
        out.push_back(std::move(p));
    }
    if (!t.is_leaf()) {
        extract_rec(*t.left, out);
        extract_rec(*t.right, out);
    }
}

}  // namespace

SentimentTree SentimentTree::clone() const {
    SentimentTree out;
    out.label = label;
    out.token = token;
    if (left) out.left = std::make_unique<SentimentTree>(left->clone());
    if (right) out.right = std::make_unique<SentimentTree>(right->clone());
    return out;
}

SentimentTree parse_sexpr(std::string_view text) {
    Parser p{text};
    SentimentTree t = p.node();
    p.skip_space();
    if (p.pos != text.size()) parse_fail(p.pos, "trailing input after tree");
    return t;
}

std::string serialize_sexpr(const SentimentTree& tree) {
    std::ostringstream out;
    serialize_rec(tree, out);
    return out.str();
}

DatasetSplit load_split(const std::string& path, const std::string& name) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open treebank file: " + path);
    DatasetSplit split;
    split.name = name;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        bool blank = line.find_first_not_of(" \t") == std::string::npos;
        if (blank) continue;
        try {
            split.trees.push_back(parse_sexpr(line));
        } catch (const ParseError& e) {
            std::ostringstream msg;
            msg << path << ":" << line_no << ": " << e.what();
            throw ParseError(msg.str());
        }
    }
    if (split.trees.empty()) throw DataError("treebank file has no trees: " + path);
    return split;
}

std::vector<std::string> leaf_tokens(const SentimentTree& tree) {
    std::vector<std::string> out;
    collect_leaves(tree, out);
    return out;
}

std::size_t count_nodes(const SentimentTree& tree) {
    if (tree.is_leaf()) return 1;
    return 1 + count_nodes(*tree.left) + count_nodes(*tree.right);
}

std::size_t count_labeled_nodes(const SentimentTree& tree) {
    std::size_t n = tree.label ? 1 : 0;
    if (!tree.is_leaf()) {
        n += count_labeled_nodes(*tree.left) + count_labeled_nodes(*tree.right);
    }
    return n;
}

std::size_t count_labeled_nodes(const std::vector<DatasetSplit>& splits) {
    std::size_t n = 0;
    for (const auto& split : splits)
        for (const auto& tree : split.trees) n += count_labeled_nodes(tree);
    return n;
}

std::optional<SentimentTree> to_binary(const SentimentTree& tree) {
    if (tree.label && *tree.label == 2) return std::nullopt;
    return remap_binary(tree);
}

std::vector<Phrase> extract_phrases(const SentimentTree& tree) {
    std::vector<Phrase> out;
    extract_rec(tree, out);
    return out;
}

}  // namespace treecnn
