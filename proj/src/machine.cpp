#include "sdtm/machine.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "sdtm/data.hpp"

namespace sdtm {

Mode mode_from_string(const std::string& s) {
    if (s == "tree2tree") return Mode::Tree2Tree;
    if (s == "seq2tree") return Mode::Seq2Tree;
    if (s == "seq2seq-laud") return Mode::Seq2SeqLaud;
    if (s == "seq2seq-parse") return Mode::Seq2SeqParse;
    throw ConfigError("unknown mode: " + s);
}

std::string mode_to_string(Mode m) {
    switch (m) {
        case Mode::Tree2Tree: return "tree2tree";
        case Mode::Seq2Tree: return "seq2tree";
        case Mode::Seq2SeqLaud: return "seq2seq-laud";
        case Mode::Seq2SeqParse: return "seq2seq-parse";
    }
    throw ConfigError("bad mode value");
}

void MachineConfig::finalize() {
    if (agent.num_layers < 0) {
        if (max_tree_depth <= 0) {
            throw ConfigError("num_layers unset and no max_tree_depth to derive it from");
        }
        agent.num_layers = sequence_input() ? 2 * max_tree_depth : 4 * max_tree_depth;
    }
    if (agent.bit_width <= 0) agent.bit_width = max_depth + 1;
    if (max_depth < 1 || max_depth > kMaxAddressDepth) {
        throw ConfigError("max_depth out of range");
    }
    if (prune_k < 1) throw ConfigError("prune_k must be >= 1");
    agent.validate();
}

SparseTree add_lexical_noise(const SparseTree& t, double noise_std, Rng& rng) {
    if (noise_std == 0.0) return t;
    std::vector<double> values = t.values();
    for (double& v : values) v += rng.normal(0.0, noise_std);
    return SparseTree::from_sorted(t.dim(), t.indices(), std::move(values));
}

Machine::Machine(MachineConfig cfg, Vocabulary vocab, uint64_t seed)
    : cfg_(std::move(cfg)), vocab_(std::move(vocab)) {
    cfg_.finalize();
    if (cfg_.sequence_input()) {
        vocab_.add(kNonTerminalToken);
        vocab_.add(kEndOfBranchToken);
    }
    resolve_special_tokens();
    Rng emb_rng(seed);
    embeddings_ = EmbeddingTable(vocab_.size(), cfg_.agent.d, emb_rng);
    Rng param_rng(seed + 0x9e3779b97f4a7c15ull);
    init_agent_params(params_, cfg_.agent, param_rng);
}

Machine::Machine(MachineConfig cfg, Vocabulary vocab, EmbeddingTable embeddings,
                 ParamStore params)
    : cfg_(std::move(cfg)),
      vocab_(std::move(vocab)),
      embeddings_(std::move(embeddings)),
      params_(std::move(params)) {
    cfg_.finalize();
    resolve_special_tokens();
    if (embeddings_.vocab_size() != vocab_.size() ||
        embeddings_.dim() != cfg_.agent.d) {
        throw ConfigError("embedding table does not match vocabulary/config");
    }
}

void Machine::resolve_special_tokens() {
    if (auto nt = vocab_.find(kNonTerminalToken)) nt_id_ = *nt;
    if (auto eob = vocab_.find(kEndOfBranchToken)) eob_id_ = *eob;
    if (cfg_.sequence_input() && (nt_id_ < 0 || eob_id_ < 0)) {
        throw ConfigError("sequence modes need <NT> and <EOB> in the vocabulary");
    }
}

std::vector<SparseTree> Machine::initial_trees(const Input& input, bool training,
                                               Rng* noise_rng) const {
    std::vector<SparseTree> initial;
    if (cfg_.mode == Mode::Tree2Tree) {
        if (!input.tree) throw DataError("tree2tree input must be a tree");
        initial.push_back(from_symbol_tree(*input.tree, embeddings_, cfg_.max_depth));
    } else {
        if (input.tokens.empty()) throw DataError("sequence input is empty");
        std::vector<int> tokens = input.tokens;
        if (cfg_.mode == Mode::Seq2SeqLaud && cfg_.append_eob_input) {
            tokens.push_back(eob_id_);
        }
        for (int tok : tokens) {
            if (tok < 0 || tok >= vocab_.size()) {
                throw VocabularyError("token id " + std::to_string(tok) +
                                      " outside vocabulary");
            }
            initial.push_back(SparseTree::from_sorted(
                cfg_.agent.d, {TreeIndex{1}}, embeddings_.embed(tok)));
        }
    }
    if (training && cfg_.noise_std > 0.0) {
        if (!noise_rng) throw Error("training run needs a noise rng");
        for (auto& t : initial) t = add_lexical_noise(t, cfg_.noise_std, *noise_rng);
    }
    return initial;
}

MemoryState Machine::init_memory(Tape& tape, const AgentBinding& binding,
                                 const Input& input, bool training,
                                 Rng* noise_rng) const {
    MemoryState mem;
    for (const auto& t : initial_trees(input, training, noise_rng)) {
        DiffTree dt = dtree_from_sparse(tape, t);
        mem.encodings.push_back(binding.pma_encode(dt));
        mem.trees.push_back(std::move(dt));
    }
    mem.initial_count = static_cast<int>(mem.trees.size());
    return mem;
}

Tensor Machine::position_rows(int n, Rng& pos_rng) const {
    int max_int = cfg_.agent.rpe_max_int;
    if (max_int < n) max_int = 2 * n;  // keep the sampler feasible
    std::vector<int> positions = sample_random_positions(n, max_int, pos_rng);
    Tensor rows({static_cast<size_t>(n), static_cast<size_t>(cfg_.agent.model_dim)});
    for (int i = 0; i < n; ++i) {
        auto pe = sinusoidal_encoding(positions[i], cfg_.agent.model_dim);
        std::copy(pe.begin(), pe.end(), rows.v.begin() + static_cast<size_t>(i) * cfg_.agent.model_dim);
    }
    return rows;
}

Value Machine::memory_tokens(Tape& tape, const AgentBinding& binding,
                             const MemoryState& mem, const Tensor& positions) const {
    std::vector<Value> parts;
    parts.reserve(mem.trees.size() + 2);
    parts.push_back(binding.op_embedding());
    parts.push_back(binding.root_embedding());
    for (Value enc : mem.encodings) parts.push_back(enc);
    Value tokens = tape.concat_rows(parts);
    if (positions.numel() > 0) {
        size_t T = mem.trees.size() + 2;
        Tensor pos({T, static_cast<size_t>(cfg_.agent.model_dim)});
        // Random sinusoidal positions only for the first N initial-sequence
        // tokens; <OP>/<ROOT> and later memory writes carry none.
        std::copy(positions.v.begin(), positions.v.end(),
                  pos.v.begin() + 2 * static_cast<size_t>(cfg_.agent.model_dim));
        tokens = tape.add(tokens, tape.constant(std::move(pos)));
    }
    return tokens;
}

DiffTree Machine::run_from_trees(Tape& tape, const AgentBinding& binding,
                                 const std::vector<SparseTree>& initial,
                                 Rng& pos_rng) const {
    MemoryState mem;
    for (const auto& t : initial) {
        DiffTree dt = dtree_from_sparse(tape, t);
        mem.encodings.push_back(binding.pma_encode(dt));
        mem.trees.push_back(std::move(dt));
    }
    mem.initial_count = static_cast<int>(mem.trees.size());
    return run_loop(tape, binding, std::move(mem), pos_rng);
}

DiffTree Machine::run_on_tape(Tape& tape, const AgentBinding& binding, const Input& input,
                              Rng& pos_rng, bool training, Rng* noise_rng) const {
    MemoryState mem = init_memory(tape, binding, input, training, noise_rng);
    return run_loop(tape, binding, std::move(mem), pos_rng);
}

DiffTree Machine::run_loop(Tape& tape, const AgentBinding& binding, MemoryState mem,
                           Rng& pos_rng) const {
    Tensor positions;
    if (cfg_.sequence_input()) {
        positions = position_rows(mem.initial_count, pos_rng);
    }
    Value nt_root;
    if (cfg_.hardcoded_root()) {
        nt_root = tape.constant(Tensor::row(embeddings_.embed(nt_id_)));
    }
    for (int layer = 0; layer < cfg_.agent.num_layers; ++layer) {
        int M = static_cast<int>(mem.trees.size());
        Value tokens = memory_tokens(tape, binding, mem, positions);
        AgentBinding::StepOutput step = binding.agent_step(layer, tokens, M);

        auto arg_tree = [&](int j) {
            std::vector<Value> weights;
            weights.reserve(M);
            for (int m = 0; m < M; ++m) {
                weights.push_back(tape.slice_cols(step.arg_dists[j], m, 1));
            }
            return dtree_weighted_sum(tape, mem.trees, weights);
        };

        DiffInterpreterArgs args;
        if (!cfg_.cons_only()) {
            args.t_left = arg_tree(0);
            args.t_right = arg_tree(1);
        }
        args.t_cons_left = arg_tree(2);
        args.t_cons_right = arg_tree(3);
        args.root_filler = cfg_.hardcoded_root() ? nt_root : step.root_filler;

        DiffTree out = dtree_interpret(tape, step.op_weights, args, cfg_.max_depth,
                                       cfg_.cons_only());
        out = dtree_prune_topk(tape, out, cfg_.prune_k);
        mem.encodings.push_back(binding.pma_encode(out));
        mem.trees.push_back(std::move(out));
    }
    return mem.trees.back();
}

SparseTree Machine::run(const Input& input, uint64_t pos_seed) const {
    Tape tape;
    AgentBinding binding(tape, params_, cfg_.agent, nullptr);
    Rng pos_rng(pos_seed);
    DiffTree out = run_on_tape(tape, binding, input, pos_rng, false, nullptr);
    return dtree_to_sparse(tape, out);
}

Value Machine::loss_on_tape(Tape& tape, const DiffTree& pred,
                            const SymbolTree& target) const {
    auto target_labels = target.indexed_labels();
    std::vector<TreeIndex> uni;
    uni.reserve(target_labels.size() + pred.size());
    for (const auto& [idx, label] : target_labels) uni.push_back(idx);
    uni.insert(uni.end(), pred.indices.begin(), pred.indices.end());
    std::sort(uni.begin(), uni.end());
    uni.erase(std::unique(uni.begin(), uni.end()), uni.end());

    std::vector<int> labels(uni.size(), Vocabulary::kNullId);
    for (const auto& [idx, label] : target_labels) {
        size_t at = static_cast<size_t>(
            std::lower_bound(uni.begin(), uni.end(), idx) - uni.begin());
        labels[at] = label;
    }
    Value pred_rows = dtree_gather(tape, pred, uni);
    Value emb = tape.constant(Tensor({static_cast<size_t>(embeddings_.vocab_size()),
                                      static_cast<size_t>(embeddings_.dim())},
                                     embeddings_.rows()));
    Value logits = tape.matmul(pred_rows, emb, false, true);
    return tape.cross_entropy_mean(logits, std::move(labels));
}

double Machine::loss_value(const SparseTree& pred, const SymbolTree& target) const {
    Tape tape;
    DiffTree dt = dtree_from_sparse(tape, pred);
    Value l = loss_on_tape(tape, dt, target);
    return tape.data(l).v[0];
}

bool Machine::exact_match(const SparseTree& pred, const SymbolTree& target) const {
    try {
        return to_symbol_tree(pred, embeddings_) == target;
    } catch (const MalformedTreeError&) {
        return false;
    }
}

bool Machine::exact_match_seq(const SparseTree& pred,
                              const std::vector<int>& target_tokens) const {
    std::vector<TreeIndex> addresses = laud_leaf_addresses(target_tokens.size());
    std::vector<int> expected = target_tokens;
    if (target_tokens.size() > 1) expected.push_back(eob_id_);
    for (size_t i = 0; i < addresses.size(); ++i) {
        std::vector<double> v = pred.value_at(addresses[i]);
        if (embeddings_.nearest(v.data()) != expected[i]) return false;
    }
    return true;
}

}  // namespace sdtm
