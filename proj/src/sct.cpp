#include "sdtm/sct.hpp"

#include <algorithm>
#include <functional>
#include <map>

namespace sdtm {

SparseTree from_symbol_tree(const SymbolTree& t, const EmbeddingTable& table,
                            int max_depth) {
    std::vector<std::pair<TreeIndex, std::vector<double>>> entries;
    std::function<void(const SymbolTree&, TreeIndex, int)> walk =
        [&](const SymbolTree& node, TreeIndex idx, int depth) {
            if (depth > max_depth) {
                throw DepthOverflowError(
                    "tree deeper than max depth " + std::to_string(max_depth), idx);
            }
            if (node.label() < 0 || node.label() >= table.vocab_size()) {
                throw VocabularyError("label id " + std::to_string(node.label()) +
                                      " outside embedding table");
            }
            entries.emplace_back(idx, table.embed(node.label()));
            if (node.left()) walk(*node.left(), child_index(idx, Branch::Left), depth + 1);
            if (node.right()) walk(*node.right(), child_index(idx, Branch::Right), depth + 1);
        };
    walk(t, 1, 0);
    return SparseTree::coalesce(table.dim(), std::move(entries));
}

SymbolTree to_symbol_tree(const SparseTree& s, const EmbeddingTable& table,
                          int null_id) {
    if (s.dim() != table.dim()) {
        throw DimMismatchError("tree dim " + std::to_string(s.dim()) +
                               " != embedding dim " + std::to_string(table.dim()));
    }
    std::map<TreeIndex, int> decoded;
    for (size_t k = 0; k < s.size(); ++k) {
        int token = table.nearest(s.row(k));
        if (token != null_id) decoded[s.indices()[k]] = token;
    }
    if (decoded.empty()) {
        throw MalformedTreeError("decoded tree is empty", {});
    }
    std::vector<TreeIndex> orphans;
    for (const auto& [idx, token] : decoded) {
        if (idx != 1 && decoded.find(parent_index(idx)) == decoded.end()) {
            orphans.push_back(idx);
        }
    }
    if (decoded.find(1) == decoded.end() || !orphans.empty()) {
        throw MalformedTreeError("decoded entries do not form a tree",
                                 std::move(orphans));
    }
    std::function<SymbolTree(TreeIndex)> build = [&](TreeIndex idx) -> SymbolTree {
        int label = decoded.at(idx);
        TreeIndex l = child_index(idx, Branch::Left);
        TreeIndex r = child_index(idx, Branch::Right);
        std::optional<SymbolTree> lt, rt;
        if (decoded.count(l)) lt = build(l);
        if (decoded.count(r)) rt = build(r);
        return SymbolTree::with_children(label, std::move(lt), std::move(rt));
    };
    return build(1);
}

}  // namespace sdtm
