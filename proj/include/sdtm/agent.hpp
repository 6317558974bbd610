#pragma once

#include <string>
#include <vector>

#include "sdtm/diff_tree.hpp"
#include "sdtm/params.hpp"
#include "sdtm/tape.hpp"

namespace sdtm {

struct AgentConfig {
    int d = 32;          // tree value dimension
    int model_dim = 64;  // agent token dimension
    int num_heads = 4;
    int key_dim = 16;    // PMA key dim per head
    int value_dim = 16;  // PMA value dim per head; num_heads*value_dim == model_dim
    int ff_dim = 0;      // 0 -> 4 * model_dim
    int num_layers = -1;  // negative -> derived from the layer-count heuristic
    int bit_width = 17;  // B; position vector length, max_depth + 1
    int rpe_max_int = 18;

    int ff() const { return ff_dim > 0 ? ff_dim : 4 * model_dim; }
    void validate() const;
};

// ±1 binary position vector, MSB-first: zeros above the marker, +1 marker,
// then -1 for a left branch and +1 for a right branch.
std::vector<double> binary_position_vector(TreeIndex i, int bit_width);

// n distinct sorted integers uniform over subsets of [0, max_int).
std::vector<int> sample_random_positions(int n, int max_int, Rng& rng);

// Interleaved sin/cos table row for one integer position.
std::vector<double> sinusoidal_encoding(int position, int model_dim);

// Registers all agent parameters (PMA shared across layers, per-layer
// encoder + heads, <OP>/<ROOT>/empty-tree embeddings).
void init_agent_params(ParamStore& store, const AgentConfig& cfg, Rng& rng);

// Number of trainable scalars the PMA contributes; depends only on
// (d, bit_width, model_dim, heads, dims), never on max_depth.
size_t pma_param_count(const AgentConfig& cfg);
size_t agent_param_count(const AgentConfig& cfg);

// Parameter count a dense whole-tree pooling layer would need: one linear
// map from the full role space to the agent token, growing with 2^depth.
size_t dense_pooling_param_count(int d, int max_depth, int model_dim);

// Per-tape bound parameter handles.
class AgentBinding {
public:
    // grads == nullptr binds parameters as constants (inference).
    AgentBinding(Tape& tape, const ParamStore& store, const AgentConfig& cfg,
                 ParamStore::GradBuffer* grads);

    Value p(const std::string& name) const;

    // Fixed-width pooled encoding of one tree: [1 x model_dim].
    Value pma_encode(const DiffTree& t) const;

    struct StepOutput {
        Value op_weights;          // [1 x 3] simplex row
        Value root_filler;         // [1 x d]
        std::vector<Value> arg_dists;  // 4 entries, each [1 x M]
    };

    // tokens: [M+2 x model_dim] = [<OP>; <ROOT>; memory encodings].
    StepOutput agent_step(int layer, Value tokens, int memory_count) const;

    Value op_embedding() const { return p("agent/op_emb"); }
    Value root_embedding() const { return p("agent/root_emb"); }
    Value empty_tree_encoding() const { return p("agent/empty_emb"); }

private:
    Tape* tape_;
    const AgentConfig* cfg_;
    std::map<std::string, Value> bound_;
};

}  // namespace sdtm
