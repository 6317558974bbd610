#pragma once

#include "sdtm/embedding.hpp"
#include "sdtm/sparse_tree.hpp"
#include "sdtm/symbol_tree.hpp"

namespace sdtm {

// One entry per node: index = Gorn address of the node, value = embedding of
// its label.
SparseTree from_symbol_tree(const SymbolTree& t, const EmbeddingTable& table,
                            int max_depth = kDefaultMaxDepth);

// Dot-product argmax readout against the full vocabulary. Entries decoding
// to `null_id` are dropped; the surviving indices must form a valid tree
// (every non-root's parent present), otherwise MalformedTreeError carries
// the orphan set. An empty result is also malformed (no root).
SymbolTree to_symbol_tree(const SparseTree& s, const EmbeddingTable& table,
                          int null_id = Vocabulary::kNullId);

}  // namespace sdtm
