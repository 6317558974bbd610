#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sdtm/common.hpp"
#include "sdtm/tree_index.hpp"

namespace sdtm {

// Token-labeled binary tree used for I/O, datasets, and as the correctness
// oracle for the sparse path. Dataset trees follow the CNF convention (a
// single child is the left child), but decoded trees may have right-only
// children, so both slots are independent.
class SymbolTree {
public:
    explicit SymbolTree(int label) : label_(label) {}
    SymbolTree(int label, SymbolTree left)
        : label_(label), left_(std::make_shared<SymbolTree>(std::move(left))) {}
    SymbolTree(int label, SymbolTree left, SymbolTree right)
        : label_(label),
          left_(std::make_shared<SymbolTree>(std::move(left))),
          right_(std::make_shared<SymbolTree>(std::move(right))) {}

    static SymbolTree with_children(int label, std::optional<SymbolTree> left,
                                    std::optional<SymbolTree> right);

    int label() const { return label_; }
    const SymbolTree* left() const { return left_.get(); }
    const SymbolTree* right() const { return right_.get(); }
    bool is_leaf() const { return !left_ && !right_; }

    int depth() const;
    size_t node_count() const;

    bool operator==(const SymbolTree& other) const;
    bool operator!=(const SymbolTree& other) const { return !(*this == other); }

    // Structural operations, used as the oracle for the bit-shift path.
    std::optional<SymbolTree> left_subtree() const {
        if (!left_) return std::nullopt;
        return *left_;
    }
    std::optional<SymbolTree> right_subtree() const {
        if (!right_) return std::nullopt;
        return *right_;
    }

    // (index, label) pairs for every node, sorted by index.
    std::vector<std::pair<TreeIndex, int>> indexed_labels() const;

    // Left-to-right frontier.
    std::vector<int> leaf_labels() const;

private:
    int label_;
    std::shared_ptr<SymbolTree> left_;
    std::shared_ptr<SymbolTree> right_;
};

// Arbitrary-arity tree as parsed from s-expressions; the data module
// binarizes these into SymbolTrees. `hole` marks the `()` placeholder used
// to render a missing left slot when only the right child exists.
struct RawTree {
    std::string label;
    std::vector<RawTree> children;
    bool hole = false;
};

// Token <-> id mapping. Id 0 is always the reserved null token.
class Vocabulary {
public:
    static constexpr int kNullId = 0;
    static constexpr const char* kNullToken = "<NULL>";

    Vocabulary();

    int add(const std::string& token);           // idempotent
    int id(const std::string& token) const;      // throws VocabularyError
    std::optional<int> find(const std::string& token) const;
    const std::string& token(int id) const;
    int size() const { return static_cast<int>(tokens_.size()); }
    const std::vector<std::string>& tokens() const { return tokens_; }

private:
    std::vector<std::string> tokens_;
};

// S-expression text format: `(a (b c) d)`; a bare atom is a leaf; one child
// means left child only; `(a () b)` is a right-only child.
RawTree parse_sexpr(const std::string& text);
std::string raw_to_sexpr(const RawTree& t);

// Strict binary parse; throws DataError if any node has more than two
// children. The mutable-vocabulary overloads add unseen tokens; the const
// overloads throw VocabularyError instead.
SymbolTree parse_sexpr_binary(const std::string& text, Vocabulary& vocab);
SymbolTree parse_sexpr_binary(const std::string& text, const Vocabulary& vocab);
SymbolTree raw_to_symbol(const RawTree& t, Vocabulary& vocab);
SymbolTree raw_to_symbol(const RawTree& t, const Vocabulary& vocab);

std::string to_sexpr(const SymbolTree& t, const Vocabulary& vocab);

}  // namespace sdtm
