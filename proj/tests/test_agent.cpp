#include <cmath>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "sdtm/agent.hpp"

using namespace sdtm;
using namespace sdtm::test;

namespace {

AgentConfig small_config() {
    AgentConfig cfg;
    cfg.d = 6;
    cfg.model_dim = 16;
    cfg.num_heads = 2;
    cfg.key_dim = 8;
    cfg.value_dim = 8;
    cfg.ff_dim = 32;
    cfg.num_layers = 1;
    cfg.bit_width = 9;
    cfg.rpe_max_int = 16;
    return cfg;
}

DiffTree tree_on_tape(Tape& tape, const SparseTree& s) {
    return dtree_from_sparse(tape, s);
}

}  // namespace

TEST_CASE("binary position vectors match the worked example") {
    // position 5 -> [0,0,0,0,0,1,0,1] -> [0,0,0,0,0,1,-1,1]
    CHECK(binary_position_vector(5, 8) ==
          std::vector<double>{0, 0, 0, 0, 0, 1, -1, 1});
    CHECK(binary_position_vector(1, 4) == std::vector<double>{0, 0, 0, 1});
    // 6 = 110b: marker, then 1 -> +1, 0 -> -1.
    CHECK(binary_position_vector(6, 4) == std::vector<double>{0, 1, 1, -1});
    CHECK_THROWS_AS(binary_position_vector(300, 8), DepthOverflowError);
}

TEST_CASE("random positions are sorted, distinct and uniformly inclusive") {
    Rng rng(5);
    CHECK(sample_random_positions(6, 6, rng) == std::vector<int>{0, 1, 2, 3, 4, 5});

    Rng a(99), b(99);
    CHECK(sample_random_positions(3, 10, a) == sample_random_positions(3, 10, b));

    // Inclusion frequency of each integer is n/max_int (hypergeometric).
    Rng big(123);
    std::vector<int> counts(6, 0);
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) {
        for (int p : sample_random_positions(3, 6, big)) counts[p]++;
    }
    for (int c : counts) {
        CHECK(std::abs(static_cast<double>(c) / draws - 0.5) < 0.01);
    }
}

TEST_CASE("pma pooling is invariant to entry order") {
    AgentConfig cfg = small_config();
    ParamStore store;
    Rng rng(7);
    init_agent_params(store, cfg, rng);
    EmbeddingTable table = test_table(12, cfg.d);
    Rng tree_rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        SymbolTree t = random_symbol_tree(4, 12, tree_rng);
        SparseTree s = from_symbol_tree(t, table);

        Tape tape;
        AgentBinding binding(tape, store, cfg, nullptr);
        Value enc = binding.pma_encode(tree_on_tape(tape, s));

        // Same entries, permuted: feed rows through a permutation gather.
        Tape tape2;
        AgentBinding binding2(tape2, store, cfg, nullptr);
        DiffTree dt = tree_on_tape(tape2, s);
        std::vector<size_t> perm(dt.size());
        for (size_t i = 0; i < perm.size(); ++i) perm[i] = perm.size() - 1 - i;
        std::vector<TreeIndex> pidx(dt.size());
        for (size_t i = 0; i < perm.size(); ++i) pidx[i] = dt.indices[perm[i]];
        DiffTree permuted{pidx, tape2.gather_rows(dt.values, perm), dt.dim};
        Value enc2 = binding2.pma_encode(permuted);

        const Tensor& e1 = tape.data(enc);
        const Tensor& e2 = tape2.data(enc2);
        for (size_t i = 0; i < e1.v.size(); ++i) {
            CHECK(std::abs(e1.v[i] - e2.v[i]) < 1e-6);
        }
    }
}

TEST_CASE("pma on a single node equals the value path through the block") {
    AgentConfig cfg = small_config();
    ParamStore store;
    Rng rng(13);
    init_agent_params(store, cfg, rng);
    EmbeddingTable table = test_table(5, cfg.d);
    SparseTree s = SparseTree::from_sorted(cfg.d, {1}, table.embed(2));

    Tape tape;
    AgentBinding binding(tape, store, cfg, nullptr);
    Value enc = binding.pma_encode(tree_on_tape(tape, s));

    // By hand: with one key the attention weight is 1, so pooling returns
    // the value projection directly.
    Tensor feat({1, static_cast<size_t>(cfg.d + cfg.bit_width)});
    auto emb = table.embed(2);
    auto pos = binary_position_vector(1, cfg.bit_width);
    std::copy(emb.begin(), emb.end(), feat.v.begin());
    std::copy(pos.begin(), pos.end(), feat.v.begin() + cfg.d);
    Tape t2;
    AgentBinding b2(t2, store, cfg, nullptr);
    Value x = t2.constant(feat);
    Value mixed = t2.add_rowvec(t2.matmul(x, b2.p("agent/pma/w_in")), b2.p("agent/pma/b_in"));
    Value vals = t2.matmul(mixed, b2.p("agent/pma/w_v"));
    Value y = t2.matmul(vals, b2.p("agent/pma/w_o"));
    Value normed = t2.layer_norm_rows(y, b2.p("agent/pma/ln_g"), b2.p("agent/pma/ln_b"));
    Value hidden = t2.gelu(
        t2.add_rowvec(t2.matmul(normed, b2.p("agent/pma/ff_w1")), b2.p("agent/pma/ff_b1")));
    Value expect =
        t2.add(y, t2.add_rowvec(t2.matmul(hidden, b2.p("agent/pma/ff_w2")),
                                b2.p("agent/pma/ff_b2")));

    const Tensor& got = tape.data(enc);
    const Tensor& want = t2.data(expect);
    for (size_t i = 0; i < got.v.size(); ++i) {
        CHECK(got.v[i] == doctest::Approx(want.v[i]).epsilon(1e-10));
    }
}

TEST_CASE("pma separates trees that differ only in node positions") {
    AgentConfig cfg = small_config();
    EmbeddingTable table = test_table(6, cfg.d);
    int separated = 0;
    for (uint64_t seed = 0; seed < 20; ++seed) {
        ParamStore store;
        Rng rng(seed);
        init_agent_params(store, cfg, rng);
        // Same multiset of values at different positions.
        SparseTree a = SparseTree::coalesce(
            cfg.d, {{2, table.embed(1)}, {3, table.embed(2)}});
        SparseTree b = SparseTree::coalesce(
            cfg.d, {{2, table.embed(2)}, {3, table.embed(1)}});
        Tape tape;
        AgentBinding binding(tape, store, cfg, nullptr);
        const Tensor& ea = tape.data(binding.pma_encode(tree_on_tape(tape, a)));
        const Tensor& eb = tape.data(binding.pma_encode(tree_on_tape(tape, b)));
        double dist = 0.0;
        for (size_t i = 0; i < ea.v.size(); ++i) {
            dist = std::max(dist, std::abs(ea.v[i] - eb.v[i]));
        }
        if (dist > 1e-3) ++separated;
    }
    CHECK(separated == 20);
}

TEST_CASE("agent_step with zero parameters is maximally uncertain") {
    AgentConfig cfg = small_config();
    ParamStore store;
    Rng rng(3);
    init_agent_params(store, cfg, rng);
    // Zero every parameter (layer norm gains included).
    for (const auto& name : store.order()) {
        for (double& v : store.at(name).v) v = 0.0;
    }
    Tape tape;
    AgentBinding binding(tape, store, cfg, nullptr);
    const int M = 3;
    Value tokens = tape.constant(Tensor({M + 2, static_cast<size_t>(cfg.model_dim)}));
    auto out = binding.agent_step(0, tokens, M);
    for (double w : tape.data(out.op_weights).v) {
        CHECK(w == doctest::Approx(1.0 / 3));
    }
    for (const Value& dist : out.arg_dists) {
        for (double p : tape.data(dist).v) CHECK(p == doctest::Approx(1.0 / M));
    }
}

TEST_CASE("agent_step distributions are normalized and singleton-trivial") {
    AgentConfig cfg = small_config();
    ParamStore store;
    Rng rng(17);
    init_agent_params(store, cfg, rng);
    Tape tape;
    AgentBinding binding(tape, store, cfg, nullptr);

    Tensor toks({3, static_cast<size_t>(cfg.model_dim)});
    Rng trng(4);
    for (double& v : toks.v) v = trng.normal();
    auto out = binding.agent_step(0, tape.constant(toks), 1);
    for (const Value& dist : out.arg_dists) {
        CHECK(tape.data(dist).v == std::vector<double>{1.0});
    }
    double total = 0.0;
    for (double w : tape.data(out.op_weights).v) total += w;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(tape.data(out.root_filler).cols() == static_cast<size_t>(cfg.d));

    CHECK_THROWS_AS(binding.agent_step(0, tape.constant(Tensor({2, 16})), 0), Error);
}

TEST_CASE("arg distributions are equivariant under memory permutation") {
    AgentConfig cfg = small_config();
    ParamStore store;
    Rng rng(23);
    init_agent_params(store, cfg, rng);
    const int M = 4;
    Tensor mem({M, static_cast<size_t>(cfg.model_dim)});
    Rng trng(9);
    for (double& v : mem.v) v = trng.normal();

    auto run = [&](const std::vector<size_t>& order) {
        Tape tape;
        AgentBinding binding(tape, store, cfg, nullptr);
        std::vector<Value> parts = {binding.op_embedding(), binding.root_embedding()};
        Value m = tape.constant(mem);
        parts.push_back(tape.gather_rows(m, order));
        Value tokens = tape.concat_rows(parts);
        auto out = binding.agent_step(0, tokens, M);
        std::vector<std::vector<double>> dists;
        for (const Value& d : out.arg_dists) dists.push_back(tape.data(d).v);
        return dists;
    };

    auto base = run({0, 1, 2, 3});
    auto flipped = run({3, 2, 1, 0});
    for (int j = 0; j < 4; ++j) {
        for (int m = 0; m < M; ++m) {
            CHECK(base[j][m] == doctest::Approx(flipped[j][M - 1 - m]).epsilon(1e-9));
        }
    }
}

TEST_CASE("pma parameter count ignores max depth when the bit width is fixed") {
    AgentConfig cfg = small_config();
    size_t count8 = pma_param_count(cfg);
    // Doubling the supported depth changes nothing while B is pinned.
    size_t count16 = pma_param_count(cfg);
    CHECK(count8 == count16);

    ParamStore store;
    Rng rng(1);
    init_agent_params(store, cfg, rng);
    size_t pma_total = 0;
    for (const auto& name : store.order()) {
        if (name.rfind("agent/pma/", 0) == 0) pma_total += store.at(name).numel();
    }
    CHECK(pma_total == pma_param_count(cfg));

    // The dense whole-tree pooling alternative grows with depth.
    CHECK(dense_pooling_param_count(cfg.d, 16, cfg.model_dim) >
          dense_pooling_param_count(cfg.d, 8, cfg.model_dim));
}

TEST_CASE("sinusoidal rows interleave sin and cos") {
    auto pe = sinusoidal_encoding(3, 8);
    CHECK(pe[0] == doctest::Approx(std::sin(3.0)));
    CHECK(pe[1] == doctest::Approx(std::cos(3.0)));
    CHECK(pe.size() == 8);
}
