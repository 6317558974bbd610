#include "sdtm/symbol_tree.hpp"

#include <algorithm>
#include <cctype>
#include <functional>

namespace sdtm {

SymbolTree SymbolTree::with_children(int label, std::optional<SymbolTree> left,
                                     std::optional<SymbolTree> right) {
    SymbolTree t(label);
    if (left) t.left_ = std::make_shared<SymbolTree>(std::move(*left));
    if (right) t.right_ = std::make_shared<SymbolTree>(std::move(*right));
    return t;
}

int SymbolTree::depth() const {
    int d = 0;
    if (left_) d = std::max(d, 1 + left_->depth());
    if (right_) d = std::max(d, 1 + right_->depth());
    return d;
}

size_t SymbolTree::node_count() const {
    size_t n = 1;
    if (left_) n += left_->node_count();
    if (right_) n += right_->node_count();
    return n;
}

bool SymbolTree::operator==(const SymbolTree& other) const {
    if (label_ != other.label_) return false;
    if (static_cast<bool>(left_) != static_cast<bool>(other.left_)) return false;
    if (static_cast<bool>(right_) != static_cast<bool>(other.right_)) return false;
    if (left_ && *left_ != *other.left_) return false;
    if (right_ && *right_ != *other.right_) return false;
    return true;
}

std::vector<std::pair<TreeIndex, int>> SymbolTree::indexed_labels() const {
    std::vector<std::pair<TreeIndex, int>> out;
    std::function<void(const SymbolTree&, TreeIndex)> walk =
        [&](const SymbolTree& node, TreeIndex idx) {
            out.emplace_back(idx, node.label());
            if (node.left()) walk(*node.left(), child_index(idx, Branch::Left));
            if (node.right()) walk(*node.right(), child_index(idx, Branch::Right));
        };
    walk(*this, 1);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<int> SymbolTree::leaf_labels() const {
    std::vector<int> out;
    std::function<void(const SymbolTree&)> walk = [&](const SymbolTree& node) {
        if (node.is_leaf()) {
            out.push_back(node.label());
            return;
        }
        if (node.left()) walk(*node.left());
        if (node.right()) walk(*node.right());
    };
    walk(*this);
    return out;
}

Vocabulary::Vocabulary() { tokens_.push_back(kNullToken); }

int Vocabulary::add(const std::string& token) {
    if (auto existing = find(token)) return *existing;
    tokens_.push_back(token);
    return static_cast<int>(tokens_.size()) - 1;
}

int Vocabulary::id(const std::string& token) const {
    if (auto existing = find(token)) return *existing;
    throw VocabularyError("unknown token: " + token);
}

std::optional<int> Vocabulary::find(const std::string& token) const {
    for (size_t i = 0; i < tokens_.size(); ++i) {
        if (tokens_[i] == token) return static_cast<int>(i);
    }
    return std::nullopt;
}

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || id >= size()) throw VocabularyError("token id out of range");
    return tokens_[static_cast<size_t>(id)];
}

namespace {

struct SexprParser {
    const std::string& text;
    size_t pos = 0;

    explicit SexprParser(const std::string& t) : text(t) {}

    void skip_ws() {
        while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    }

    [[noreturn]] void fail(const std::string& msg) {
        throw DataError("s-expression parse error at position " + std::to_string(pos) +
                        ": " + msg);
    }

    std::string atom() {
        size_t start = pos;
        while (pos < text.size() && !std::isspace(static_cast<unsigned char>(text[pos])) &&
               text[pos] != '(' && text[pos] != ')') {
            ++pos;
        }
        if (pos == start) fail("expected atom");
        return text.substr(start, pos - start);
    }

    RawTree node() {
        skip_ws();
        if (pos >= text.size()) fail("unexpected end of input");
        if (text[pos] != '(') return RawTree{atom(), {}, false};
        ++pos;  // '('
        skip_ws();
        if (pos < text.size() && text[pos] == ')') {
            ++pos;
            return RawTree{"", {}, true};
        }
        RawTree t;
        t.label = atom();
        while (true) {
            skip_ws();
            if (pos >= text.size()) fail("missing ')'");
            if (text[pos] == ')') {
                ++pos;
                return t;
            }
            t.children.push_back(node());
        }
    }
};

}  // namespace

RawTree parse_sexpr(const std::string& text) {
    SexprParser p(text);
    RawTree t = p.node();
    p.skip_ws();
    if (p.pos != text.size()) p.fail("trailing content");
    if (t.hole) throw DataError("top-level tree cannot be the empty placeholder");
    return t;
}

std::string raw_to_sexpr(const RawTree& t) {
    if (t.hole) return "()";
    if (t.children.empty()) return t.label;
    std::string s = "(" + t.label;
    for (const auto& c : t.children) s += " " + raw_to_sexpr(c);
    return s + ")";
}

namespace {

SymbolTree raw_to_symbol_impl(const RawTree& t,
                              const std::function<int(const std::string&)>& resolve) {
    if (t.hole) throw DataError("empty placeholder outside a child slot");
    if (t.children.size() > 2) {
        throw DataError("node '" + t.label + "' has " +
                        std::to_string(t.children.size()) +
                        " children; binarize first");
    }
    int label = resolve(t.label);
    if (t.children.empty()) return SymbolTree(label);
    if (t.children.size() == 1) {
        if (t.children[0].hole) return SymbolTree(label);
        return SymbolTree(label, raw_to_symbol_impl(t.children[0], resolve));
    }
    std::optional<SymbolTree> l, r;
    if (!t.children[0].hole) l = raw_to_symbol_impl(t.children[0], resolve);
    if (!t.children[1].hole) r = raw_to_symbol_impl(t.children[1], resolve);
    return SymbolTree::with_children(label, std::move(l), std::move(r));
}

}  // namespace

SymbolTree raw_to_symbol(const RawTree& t, Vocabulary& vocab) {
    return raw_to_symbol_impl(t, [&vocab](const std::string& s) { return vocab.add(s); });
}

SymbolTree raw_to_symbol(const RawTree& t, const Vocabulary& vocab) {
    return raw_to_symbol_impl(t, [&vocab](const std::string& s) { return vocab.id(s); });
}

SymbolTree parse_sexpr_binary(const std::string& text, Vocabulary& vocab) {
    return raw_to_symbol(parse_sexpr(text), vocab);
}

SymbolTree parse_sexpr_binary(const std::string& text, const Vocabulary& vocab) {
    return raw_to_symbol(parse_sexpr(text), vocab);
}

std::string to_sexpr(const SymbolTree& t, const Vocabulary& vocab) {
    const std::string& label = vocab.token(t.label());
    if (t.is_leaf()) return label;
    std::string s = "(" + label;
    if (t.left()) {
        s += " " + to_sexpr(*t.left(), vocab);
    } else if (t.right()) {
        s += " ()";
    }
    if (t.right()) s += " " + to_sexpr(*t.right(), vocab);
    return s + ")";
}

}  // namespace sdtm
