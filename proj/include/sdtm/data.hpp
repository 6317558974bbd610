#pragma once

#include <string>
#include <vector>

#include "sdtm/common.hpp"
#include "sdtm/symbol_tree.hpp"

namespace sdtm {

inline constexpr const char* kNonTerminalToken = "<NT>";
inline constexpr const char* kEndOfBranchToken = "<EOB>";

// One dataset record. `input`/`output` hold an s-expression for tree kinds
// and space-joined tokens for sequence kinds.
struct Sample {
    std::string input;
    std::string output;
    bool tree_input = false;
    bool tree_output = false;
};

std::vector<std::string> tokenize(const std::string& text);

// Chomsky-normal-form binarization: surplus children are grouped to the
// right under inserted <NT> nodes; unary children stay as the left child.
// The left-to-right frontier is preserved.
RawTree binarize_cnf(const RawTree& t);

// Left-aligned uniform-depth embedding: tokens plus a trailing <EOB> become
// the leaves of a minimal-depth tree whose internal nodes are all <NT>.
// A single token becomes the left child of one <NT> root (no <EOB>).
SymbolTree laud_embed(const std::vector<int>& tokens, int nt_id, int eob_id);

// Addresses of the LAUD leaves in left-to-right order (token slots plus the
// <EOB> slot; single-token sequences have exactly one slot).
std::vector<TreeIndex> laud_leaf_addresses(size_t token_count);

// `IN: <tokens> OUT: <tokens>` lines; malformed lines are rejected with
// their line number. An empty file yields an empty dataset and a warning on
// stderr.
std::vector<Sample> read_scan_tsv(const std::string& path);
void write_scan_tsv(const std::string& path, const std::vector<Sample>& samples);

// Dataset JSON-lines: {"in": ..., "out": ..., "kind": "tree|seq"}.
std::vector<Sample> read_dataset_jsonl(const std::string& path);
void write_dataset_jsonl(const std::string& path, const std::vector<Sample>& samples);

enum class ZeroshotSide { Input, Output, Both };

// Replaces every occurrence of `old_token` with `new_token` on the given
// side(s). Intended for test splits; training data is left untouched by
// construction (the caller passes only the split to transform).
std::vector<Sample> make_zeroshot_split(const std::vector<Sample>& samples,
                                        const std::string& old_token,
                                        const std::string& new_token,
                                        ZeroshotSide side);

enum class ToyTask { Identity, SwapChildren, Mirror };
ToyTask toy_task_from_string(const std::string& s);

enum class ToyShape { Random, Perfect, Lopsided };
ToyShape toy_shape_from_string(const std::string& s);

struct ToyOptions {
    ToyTask task = ToyTask::SwapChildren;
    int vocab_size = 12;  // content tokens t0..t{V-1}; the last is held out
    int depth = 4;
    int n_train = 2000;
    int n_test = 200;
    int n_zeroshot = 200;
    ToyShape shape = ToyShape::Random;
    // Probability that a non-root node of a 0-shot sample carries the token
    // that will be substituted. Roots keep in-vocabulary labels: lexical
    // novelty rides the structural copy path, not the root emission head.
    double zeroshot_density = 0.35;
    // Class-structured labels: left subtrees draw from the first half of the
    // token pool, right subtrees from the second half, roots from anywhere.
    // Gives slot selection a content-class shortcut to latch onto.
    bool class_structured = false;
    uint64_t seed = 1;
};

struct ToyData {
    std::vector<Sample> train;
    std::vector<Sample> test;
    // Held-out-token split: fresh samples with t0 planted densely at
    // non-root positions, then replaced everywhere by the held-out token.
    std::vector<Sample> zeroshot;
    std::vector<std::string> tokens;
    std::string heldout_token;
};

ToyData gen_toy_transduction(const ToyOptions& opt);

// Structural task oracles.
SymbolTree toy_apply(ToyTask task, const SymbolTree& t);

struct ScanOptions {
    int max_samples = 128;
    int min_output_len = 1;
    int max_output_len = 3;
    // Map action tokens onto the input vocabulary (JUMP -> jump, LTURN ->
    // left, ...) so a word-level model can relate them.
    bool unified_vocab = true;
    uint64_t seed = 7;
};

// Samples from the SCAN command grammar with exact interpretation semantics,
// deduplicated, shuffled deterministically.
std::vector<Sample> generate_scan(const ScanOptions& opt);

void build_vocab(const std::vector<Sample>& samples, Vocabulary& vocab);

}  // namespace sdtm
