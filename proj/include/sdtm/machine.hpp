#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sdtm/agent.hpp"
#include "sdtm/diff_tree.hpp"
#include "sdtm/embedding.hpp"
#include "sdtm/sct.hpp"
#include "sdtm/sparse_tree.hpp"
#include "sdtm/symbol_tree.hpp"

namespace sdtm {

enum class Mode { Tree2Tree, Seq2Tree, Seq2SeqLaud, Seq2SeqParse };

Mode mode_from_string(const std::string& s);
std::string mode_to_string(Mode m);

struct MachineConfig {
    Mode mode = Mode::Tree2Tree;
    AgentConfig agent;
    int max_depth = kDefaultMaxDepth;
    size_t prune_k = 256;
    double noise_std = 1.0;
    // Layer-count heuristic input: doubled for sequence input, quadrupled
    // for tree input when num_layers is left at 0.
    int max_tree_depth = 0;
    // LAUD outputs need the terminator's content reachable from memory, so
    // the input sequence gets an <EOB> appended in that mode.
    bool append_eob_input = true;

    bool cons_only() const { return mode != Mode::Tree2Tree; }
    bool sequence_input() const { return mode != Mode::Tree2Tree; }
    bool hardcoded_root() const { return mode == Mode::Seq2SeqLaud; }

    // Resolves defaults (num_layers heuristic, bit width) and validates.
    void finalize();
};

// Additive gaussian noise on every node value; training-time lexical
// regularization for the initial memory only.
SparseTree add_lexical_noise(const SparseTree& t, double noise_std, Rng& rng);

struct MemoryState {
    std::vector<DiffTree> trees;
    std::vector<Value> encodings;  // [1 x model_dim] each
    int initial_count = 0;
};

class Machine {
public:
    // Fresh machine: reserves <NT>/<EOB> in sequence modes, then freezes the
    // embedding table (unit rows, seeded).
    Machine(MachineConfig cfg, Vocabulary vocab, uint64_t seed);
    // From loaded state (checkpoint path).
    Machine(MachineConfig cfg, Vocabulary vocab, EmbeddingTable embeddings,
            ParamStore params);

    const MachineConfig& config() const { return cfg_; }
    const Vocabulary& vocab() const { return vocab_; }
    const EmbeddingTable& embeddings() const { return embeddings_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    int nt_id() const { return nt_id_; }
    int eob_id() const { return eob_id_; }

    struct Input {
        std::optional<SymbolTree> tree;  // tree2tree
        std::vector<int> tokens;         // sequence modes
    };

    // Initial memory contents before encoding (noise applied when training).
    std::vector<SparseTree> initial_trees(const Input& input, bool training,
                                          Rng* noise_rng) const;

    MemoryState init_memory(Tape& tape, const AgentBinding& binding, const Input& input,
                            bool training, Rng* noise_rng) const;

    // Full forward pass; returns the final memory slot. `pos_rng` drives the
    // random sinusoidal positions in sequence modes.
    DiffTree run_on_tape(Tape& tape, const AgentBinding& binding, const Input& input,
                         Rng& pos_rng, bool training = false,
                         Rng* noise_rng = nullptr) const;

    // Agent/interpreter loop over an explicit starting memory; the
    // gradient-check harness presets multi-node memories this way.
    DiffTree run_from_trees(Tape& tape, const AgentBinding& binding,
                            const std::vector<SparseTree>& initial,
                            Rng& pos_rng) const;

    // Inference convenience: fresh tape, constant-bound parameters.
    SparseTree run(const Input& input, uint64_t pos_seed) const;

    // Mean cross-entropy over the union of target and predicted indices;
    // spurious prediction nodes are labeled <NULL>.
    Value loss_on_tape(Tape& tape, const DiffTree& pred, const SymbolTree& target) const;
    double loss_value(const SparseTree& pred, const SymbolTree& target) const;

    bool exact_match(const SparseTree& pred, const SymbolTree& target) const;
    // LAUD sequence readout: decoded tokens at the target's leaf addresses.
    bool exact_match_seq(const SparseTree& pred,
                         const std::vector<int>& target_tokens) const;

private:
    MachineConfig cfg_;
    Vocabulary vocab_;
    EmbeddingTable embeddings_;
    ParamStore params_;
    int nt_id_ = -1;
    int eob_id_ = -1;

    void resolve_special_tokens();
    DiffTree run_loop(Tape& tape, const AgentBinding& binding, MemoryState mem,
                      Rng& pos_rng) const;
    Value memory_tokens(Tape& tape, const AgentBinding& binding,
                        const MemoryState& mem, const Tensor& positions) const;
    Tensor position_rows(int n, Rng& pos_rng) const;
};

}  // namespace sdtm
