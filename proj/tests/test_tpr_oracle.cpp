#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "sdtm/tpr_oracle.hpp"

using namespace sdtm;
using namespace sdtm::test;

TEST_CASE("bind_all fills one column per role") {
    DenseTPR t = DenseTPR::bind_all({{1, {1, 2, 3}}}, 3, 4);
    CHECK(t.unbind(1) == std::vector<double>{1, 2, 3});
    CHECK(t.unbind(2) == std::vector<double>{0, 0, 0});

    // Superposition at a shared role.
    DenseTPR s = DenseTPR::bind_all({{2, {1, 0}}, {2, {2, 5}}}, 2, 4);
    CHECK(s.unbind(2) == std::vector<double>{3, 5});

    CHECK_THROWS_AS(DenseTPR::bind_all({{1 << 6, {1.0}}}, 1, 4), Error);
}

TEST_CASE("bind_all equals brute-force outer product summation") {
    Rng rng(12);
    const int d_f = 5, max_depth = 4;
    const size_t d_r = size_t{1} << (max_depth + 1);
    std::vector<std::pair<TreeIndex, std::vector<double>>> entries;
    for (int i = 0; i < 10; ++i) {
        std::vector<double> f(d_f);
        for (double& x : f) x = rng.normal();
        entries.push_back({1 + rng.uniform_int(d_r - 1), f});
    }
    DenseTPR t = DenseTPR::bind_all(entries, d_f, max_depth);
    // Oracle: T = sum_i outer(f_i, onehot_i), computed directly.
    std::vector<double> expect(d_f * d_r, 0.0);
    for (const auto& [idx, f] : entries) {
        for (int j = 0; j < d_f; ++j) expect[j * d_r + idx] += f[j];
    }
    for (size_t i = 0; i < d_r; ++i) {
        for (int j = 0; j < d_f; ++j) {
            CHECK(t.at(j, i) == doctest::Approx(expect[j * d_r + i]).epsilon(1e-15));
        }
    }
}

TEST_CASE("unbind matches sparse lookup at every role") {
    EmbeddingTable table = test_table(16, 4);
    Rng rng(21);
    SymbolTree t = random_symbol_tree(4, 16, rng);
    SparseTree s = from_symbol_tree(t, table);
    DenseTPR dense = DenseTPR::from_sparse(s, 5);
    for (TreeIndex i = 1; i < dense.role_dim(); ++i) {
        CHECK(dense.unbind(i) == s.value_at(i));
    }
}

TEST_CASE("dense role maps match the sparse bit-shift path") {
    EmbeddingTable table = test_table(16, 4);
    SymbolTree t(1, SymbolTree(2), SymbolTree(3));
    SparseTree s = from_symbol_tree(t, table);
    DenseTPR d = DenseTPR::from_sparse(s, 5);

    CHECK(dense_left(d).to_sparse() == op_left(s));
    CHECK(dense_right(d).to_sparse() == op_right(s));
    CHECK(dense_left(DenseTPR(4, 5)).all_zero());

    SparseTree b = from_symbol_tree(SymbolTree(2), table);
    SparseTree c = from_symbol_tree(SymbolTree(3), table);
    DenseTPR joined = dense_cons(DenseTPR::from_sparse(b, 5), DenseTPR::from_sparse(c, 5),
                                 table.embed(1));
    CHECK(joined.to_sparse() == op_cons(b, c, table.embed(1)));
}

TEST_CASE("sparse and dense paths agree within 1e-12 on random trees") {
    TprCheckReport r = run_tpr_check(/*depth=*/5, /*dim=*/4, /*trials=*/100, /*seed=*/3);
    CHECK(r.max_abs_deviation <= 1e-12);
}

TEST_CASE("dense storage is fill-independent, sparse storage is not") {
    const int d_f = 4, max_depth = 6;
    DenseTPR one = DenseTPR::bind_all({{1, {1, 1, 1, 1}}}, d_f, max_depth);
    std::vector<std::pair<TreeIndex, std::vector<double>>> many;
    for (TreeIndex i = 1; i <= 60; ++i) many.push_back({i, {1, 1, 1, 1}});
    DenseTPR full = DenseTPR::bind_all(many, d_f, max_depth);
    CHECK(one.raw().size() == full.raw().size());

    SparseTree s1 = one.to_sparse();
    SparseTree s60 = full.to_sparse();
    CHECK(s1.serialize_binary().size() < s60.serialize_binary().size());
}

TEST_CASE("report format is stable") {
    TprCheckReport r;
    r.depth = 5;
    r.dim = 4;
    r.trials = 500;
    r.max_abs_deviation = 0.0;
    CHECK(format_tpr_report(r) ==
          "tpr check: depth=5 dim=4 trials=500 max_abs_deviation=0.000e+00");
}
