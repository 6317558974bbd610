#include "sdtm/agent.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

namespace sdtm {

void AgentConfig::validate() const {
    if (d <= 0 || model_dim <= 0 || num_heads <= 0 || key_dim <= 0 || value_dim <= 0 ||
        num_layers < 0 || bit_width <= 0) {
        throw ConfigError("agent dimensions must be positive");
    }
    if (num_heads * value_dim != model_dim) {
        throw ConfigError("num_heads * value_dim must equal model_dim (" +
                          std::to_string(num_heads) + " * " + std::to_string(value_dim) +
                          " != " + std::to_string(model_dim) + ")");
    }
    if (model_dim % num_heads != 0) {
        throw ConfigError("model_dim must be divisible by num_heads");
    }
    if (model_dim % 2 != 0) {
        throw ConfigError("model_dim must be even for sinusoidal encodings");
    }
}

std::vector<double> binary_position_vector(TreeIndex i, int bit_width) {
    if (i == 0) throw InvalidAddressError("tree index 0 is not addressable");
    int bits = std::bit_width(i);
    if (bits > bit_width) {
        throw DepthOverflowError("index " + std::to_string(i) + " needs " +
                                     std::to_string(bits) + " bits, position width is " +
                                     std::to_string(bit_width),
                                 i);
    }
    std::vector<double> b(static_cast<size_t>(bit_width), 0.0);
    // MSB-first layout: slot (bit_width-1-k) holds bit k.
    for (int k = 0; k < bits; ++k) {
        bool set = (i >> k) & 1;
        double val;
        if (k == bits - 1) {
            val = 1.0;  // marker
        } else {
            val = set ? 1.0 : -1.0;
        }
        b[static_cast<size_t>(bit_width - 1 - k)] = val;
    }
    return b;
}

std::vector<int> sample_random_positions(int n, int max_int, Rng& rng) {
    if (n > max_int) {
        throw ConfigError("cannot sample " + std::to_string(n) +
                          " distinct positions from [0, " + std::to_string(max_int) + ")");
    }
    std::vector<int> pool(static_cast<size_t>(max_int));
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < n; ++i) {
        size_t j = i + static_cast<size_t>(rng.uniform_int(max_int - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(static_cast<size_t>(n));
    std::sort(pool.begin(), pool.end());
    return pool;
}

std::vector<double> sinusoidal_encoding(int position, int model_dim) {
    std::vector<double> pe(static_cast<size_t>(model_dim));
    for (int j = 0; j < model_dim / 2; ++j) {
        double rate = std::pow(10000.0, -2.0 * j / model_dim);
        pe[2 * j] = std::sin(position * rate);
        pe[2 * j + 1] = std::cos(position * rate);
    }
    return pe;
}

namespace {

Tensor random_matrix(size_t rows, size_t cols, Rng& rng) {
    Tensor t({rows, cols});
    double std = 1.0 / std::sqrt(static_cast<double>(rows));
    for (double& v : t.v) v = rng.normal(0.0, std);
    return t;
}

Tensor random_row(size_t cols, Rng& rng, double std) {
    Tensor t({1, cols});
    for (double& v : t.v) v = rng.normal(0.0, std);
    return t;
}

std::string layer_prefix(int layer) { return "agent/layer" + std::to_string(layer); }

}  // namespace

void init_agent_params(ParamStore& store, const AgentConfig& cfg, Rng& rng) {
    cfg.validate();
    const size_t dm = cfg.model_dim;
    const size_t d = cfg.d;
    const size_t hk = static_cast<size_t>(cfg.num_heads) * cfg.key_dim;
    const size_t hv = static_cast<size_t>(cfg.num_heads) * cfg.value_dim;
    const size_t ff = cfg.ff();

    store.add("agent/pma/w_in", random_matrix(d + cfg.bit_width, dm, rng));
    store.add("agent/pma/b_in", Tensor({1, dm}));
    store.add("agent/pma/w_k", random_matrix(dm, hk, rng));
    store.add("agent/pma/w_v", random_matrix(dm, hv, rng));
    store.add("agent/pma/q", random_matrix(cfg.num_heads, cfg.key_dim, rng));
    store.add("agent/pma/w_o", random_matrix(hv, dm, rng));
    store.add("agent/pma/ln_g", Tensor({1, dm}, std::vector<double>(dm, 1.0)));
    store.add("agent/pma/ln_b", Tensor({1, dm}));
    store.add("agent/pma/ff_w1", random_matrix(dm, ff, rng));
    store.add("agent/pma/ff_b1", Tensor({1, ff}));
    store.add("agent/pma/ff_w2", random_matrix(ff, dm, rng));
    store.add("agent/pma/ff_b2", Tensor({1, dm}));

    store.add("agent/op_emb", random_row(dm, rng, 1.0 / std::sqrt(static_cast<double>(dm))));
    store.add("agent/root_emb",
              random_row(dm, rng, 1.0 / std::sqrt(static_cast<double>(dm))));
    store.add("agent/empty_emb",
              random_row(dm, rng, 1.0 / std::sqrt(static_cast<double>(dm))));

    for (int l = 0; l < cfg.num_layers; ++l) {
        const std::string pre = layer_prefix(l);
        store.add(pre + "/attn/w_q", random_matrix(dm, dm, rng));
        store.add(pre + "/attn/b_q", Tensor({1, dm}));
        store.add(pre + "/attn/w_k", random_matrix(dm, dm, rng));
        store.add(pre + "/attn/b_k", Tensor({1, dm}));
        store.add(pre + "/attn/w_v", random_matrix(dm, dm, rng));
        store.add(pre + "/attn/b_v", Tensor({1, dm}));
        store.add(pre + "/attn/w_o", random_matrix(dm, dm, rng));
        store.add(pre + "/attn/b_o", Tensor({1, dm}));
        store.add(pre + "/ln1_g", Tensor({1, dm}, std::vector<double>(dm, 1.0)));
        store.add(pre + "/ln1_b", Tensor({1, dm}));
        store.add(pre + "/ln2_g", Tensor({1, dm}, std::vector<double>(dm, 1.0)));
        store.add(pre + "/ln2_b", Tensor({1, dm}));
        store.add(pre + "/ff_w1", random_matrix(dm, ff, rng));
        store.add(pre + "/ff_b1", Tensor({1, ff}));
        store.add(pre + "/ff_w2", random_matrix(ff, dm, rng));
        store.add(pre + "/ff_b2", Tensor({1, dm}));
        store.add(pre + "/head/op_w", random_matrix(dm, 3, rng));
        store.add(pre + "/head/op_b", Tensor({1, 3}));
        store.add(pre + "/head/root_w", random_matrix(dm, d, rng));
        store.add(pre + "/head/root_b", Tensor({1, d}));
        store.add(pre + "/head/arg_w", random_matrix(dm, 4, rng));
        store.add(pre + "/head/arg_b", Tensor({1, 4}));
    }
}

size_t pma_param_count(const AgentConfig& cfg) {
    const size_t dm = cfg.model_dim;
    const size_t d = cfg.d;
    const size_t hk = static_cast<size_t>(cfg.num_heads) * cfg.key_dim;
    const size_t hv = static_cast<size_t>(cfg.num_heads) * cfg.value_dim;
    const size_t ff = cfg.ff();
    return (d + cfg.bit_width) * dm + dm   // input mixer
           + dm * hk + dm * hv             // key/value projections
           + static_cast<size_t>(cfg.num_heads) * cfg.key_dim  // query
           + hv * dm                       // output projection
           + 2 * dm                        // layer norm
           + dm * ff + ff + ff * dm + dm;  // feed-forward
}

size_t agent_param_count(const AgentConfig& cfg) {
    ParamStore store;
    Rng rng(0);
    init_agent_params(store, cfg, rng);
    return store.total_elements();
}

size_t dense_pooling_param_count(int d, int max_depth, int model_dim) {
    size_t roles = size_t{1} << (max_depth + 1);
    return static_cast<size_t>(d) * roles * model_dim;
}

AgentBinding::AgentBinding(Tape& tape, const ParamStore& store, const AgentConfig& cfg,
                           ParamStore::GradBuffer* grads)
    : tape_(&tape), cfg_(&cfg) {
    for (const std::string& name : store.order()) {
        const Tensor& t = store.at(name);
        if (grads) {
            bound_[name] = tape.leaf(t, &grads->at(name));
        } else {
            bound_[name] = tape.constant(t);
        }
    }
}

Value AgentBinding::p(const std::string& name) const {
    auto it = bound_.find(name);
    if (it == bound_.end()) throw Error("unbound parameter: " + name);
    return it->second;
}

Value AgentBinding::pma_encode(const DiffTree& t) const {
    Tape& tape = *tape_;
    const AgentConfig& cfg = *cfg_;
    if (t.empty()) return empty_tree_encoding();

    // Node features: [value ; ±1 position vector].
    size_t n = t.size();
    Tensor b({n, static_cast<size_t>(cfg.bit_width)});
    for (size_t k = 0; k < n; ++k) {
        auto pb = binary_position_vector(t.indices[k], cfg.bit_width);
        std::copy(pb.begin(), pb.end(), b.v.begin() + k * cfg.bit_width);
    }
    Value x = tape.concat_cols(t.values, tape.constant(std::move(b)));
    Value mixed = tape.add_rowvec(tape.matmul(x, p("agent/pma/w_in")), p("agent/pma/b_in"));
    Value keys = tape.matmul(mixed, p("agent/pma/w_k"));    // [n, H*dk]
    Value vals = tape.matmul(mixed, p("agent/pma/w_v"));    // [n, H*dv]

    double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(cfg.key_dim));
    std::vector<Value> heads;
    heads.reserve(cfg.num_heads);
    for (int h = 0; h < cfg.num_heads; ++h) {
        Value kh = tape.slice_cols(keys, static_cast<size_t>(h) * cfg.key_dim, cfg.key_dim);
        Value vh =
            tape.slice_cols(vals, static_cast<size_t>(h) * cfg.value_dim, cfg.value_dim);
        Value qh = tape.slice_rows(p("agent/pma/q"), h, 1);  // [1, dk]
        Value scores = tape.scale_const(tape.matmul(qh, kh, false, true), inv_sqrt_dk);
        Value attn = tape.softmax_rows(scores);  // [1, n]
        heads.push_back(tape.matmul(attn, vh));  // [1, dv]
    }
    Value z = heads[0];
    for (size_t h = 1; h < heads.size(); ++h) z = tape.concat_cols(z, heads[h]);
    Value y = tape.matmul(z, p("agent/pma/w_o"));  // [1, dm]

    // Pre-layer-norm feed-forward residual block.
    Value normed = tape.layer_norm_rows(y, p("agent/pma/ln_g"), p("agent/pma/ln_b"));
    Value hidden =
        tape.gelu(tape.add_rowvec(tape.matmul(normed, p("agent/pma/ff_w1")),
                                  p("agent/pma/ff_b1")));
    Value ffout =
        tape.add_rowvec(tape.matmul(hidden, p("agent/pma/ff_w2")), p("agent/pma/ff_b2"));
    return tape.add(y, ffout);
}

AgentBinding::StepOutput AgentBinding::agent_step(int layer, Value tokens,
                                                  int memory_count) const {
    Tape& tape = *tape_;
    const AgentConfig& cfg = *cfg_;
    if (memory_count < 1) throw Error("agent_step requires at least one memory slot");
    const std::string pre = layer_prefix(layer);
    const Tensor& tok = tape.data(tokens);
    size_t T = tok.rows();
    if (T != static_cast<size_t>(memory_count) + 2) {
        throw ShapeError("agent_step: token count " + std::to_string(T) +
                         " != memory count " + std::to_string(memory_count) + " + 2");
    }

    // Pre-LN encoder layer.
    Value x1 = tape.layer_norm_rows(tokens, p(pre + "/ln1_g"), p(pre + "/ln1_b"));
    Value q = tape.add_rowvec(tape.matmul(x1, p(pre + "/attn/w_q")), p(pre + "/attn/b_q"));
    Value k = tape.add_rowvec(tape.matmul(x1, p(pre + "/attn/w_k")), p(pre + "/attn/b_k"));
    Value v = tape.add_rowvec(tape.matmul(x1, p(pre + "/attn/w_v")), p(pre + "/attn/b_v"));
    int head_dim = cfg.model_dim / cfg.num_heads;
    double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(head_dim));
    std::vector<Value> heads;
    heads.reserve(cfg.num_heads);
    for (int h = 0; h < cfg.num_heads; ++h) {
        size_t off = static_cast<size_t>(h) * head_dim;
        Value qh = tape.slice_cols(q, off, head_dim);
        Value kh = tape.slice_cols(k, off, head_dim);
        Value vh = tape.slice_cols(v, off, head_dim);
        Value scores = tape.scale_const(tape.matmul(qh, kh, false, true), inv_sqrt_hd);
        Value attn = tape.softmax_rows(scores);  // [T, T]
        heads.push_back(tape.matmul(attn, vh));
    }
    Value ctx = heads[0];
    for (size_t h = 1; h < heads.size(); ++h) ctx = tape.concat_cols(ctx, heads[h]);
    Value attn_out =
        tape.add_rowvec(tape.matmul(ctx, p(pre + "/attn/w_o")), p(pre + "/attn/b_o"));
    Value x2 = tape.add(tokens, attn_out);

    Value normed = tape.layer_norm_rows(x2, p(pre + "/ln2_g"), p(pre + "/ln2_b"));
    Value hidden = tape.gelu(
        tape.add_rowvec(tape.matmul(normed, p(pre + "/ff_w1")), p(pre + "/ff_b1")));
    Value ffout =
        tape.add_rowvec(tape.matmul(hidden, p(pre + "/ff_w2")), p(pre + "/ff_b2"));
    Value x3 = tape.add(x2, ffout);

    Value h_op = tape.slice_rows(x3, 0, 1);
    Value h_root = tape.slice_rows(x3, 1, 1);
    Value h_mem = tape.slice_rows(x3, 2, static_cast<size_t>(memory_count));

    StepOutput out;
    out.op_weights = tape.softmax_rows(tape.add_rowvec(
        tape.matmul(h_op, p(pre + "/head/op_w")), p(pre + "/head/op_b")));
    out.root_filler = tape.add_rowvec(tape.matmul(h_root, p(pre + "/head/root_w")),
                                      p(pre + "/head/root_b"));
    Value scores = tape.add_rowvec(tape.matmul(h_mem, p(pre + "/head/arg_w")),
                                   p(pre + "/head/arg_b"));  // [M, 4]
    for (int j = 0; j < 4; ++j) {
        Value col = tape.slice_cols(scores, static_cast<size_t>(j), 1);  // [M, 1]
        out.arg_dists.push_back(tape.softmax_rows(tape.transpose(col)));  // [1, M]
    }
    return out;
}

}  // namespace sdtm
