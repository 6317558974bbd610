#include <cmath>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "sdtm/sct.hpp"
#include "sdtm/sparse_tree.hpp"
#include "sdtm/tree_index.hpp"

using namespace sdtm;
using namespace sdtm::test;

TEST_CASE("decode_address follows LSB-first Gorn paths") {
    CHECK(decode_address(1).empty());
    CHECK(decode_address(2) == Path{Branch::Left});
    // Oracle: index of the node at path [R,L] by cons-map composition.
    Path rl{Branch::Right, Branch::Left};
    CHECK(cons_index_oracle(rl) == 5);
    CHECK(decode_address(5) == rl);
    CHECK_THROWS_AS(decode_address(0), InvalidAddressError);
}

TEST_CASE("encode_address inverts decode") {
    CHECK(encode_address({}) == 1);
    CHECK(encode_address({Branch::Left}) == 2);
    CHECK(encode_address({Branch::Right, Branch::Left}) == 5);
    CHECK_THROWS_AS(encode_address(Path(20, Branch::Left), 16), DepthOverflowError);
}

TEST_CASE("address round trips are exact") {
    for (TreeIndex i = 1; i < (TreeIndex{1} << 13); ++i) {
        CHECK(encode_address(decode_address(i)) == i);
    }
    // decode(encode(p)) = p for every path of length <= 12.
    Rng rng(3);
    for (int trial = 0; trial < 2000; ++trial) {
        size_t len = rng.uniform_int(13);
        Path p;
        for (size_t j = 0; j < len; ++j) {
            p.push_back(rng.uniform_int(2) ? Branch::Right : Branch::Left);
        }
        CHECK(decode_address(encode_address(p)) == p);
    }
}

TEST_CASE("child and parent index helpers agree with paths") {
    Rng rng(9);
    for (int trial = 0; trial < 500; ++trial) {
        size_t len = rng.uniform_int(10);
        Path p;
        for (size_t j = 0; j < len; ++j) {
            p.push_back(rng.uniform_int(2) ? Branch::Right : Branch::Left);
        }
        TreeIndex idx = encode_address(p);
        Path pl = p;
        pl.push_back(Branch::Left);
        CHECK(child_index(idx, Branch::Left) == encode_address(pl));
        pl.back() = Branch::Right;
        CHECK(child_index(idx, Branch::Right) == encode_address(pl));
        if (!p.empty()) {
            Path parent(p.begin(), p.end() - 1);
            CHECK(parent_index(idx) == encode_address(parent));
        }
    }
}

TEST_CASE("coalesce sums duplicates and ignores order") {
    SparseTree a = SparseTree::coalesce(2, {{1, {1, 0}}, {1, {0, 1}}});
    CHECK(a.size() == 1);
    CHECK(a.value_at(1) == std::vector<double>{1, 1});

    SparseTree b = SparseTree::coalesce(1, {{2, {3}}, {3, {4}}});
    CHECK(b.indices() == std::vector<TreeIndex>{2, 3});

    SparseTree c = SparseTree::coalesce(1, {{5, {1}}, {5, {-1}}, {2, {2}}});
    // Brute-force group-by-index summation.
    CHECK(c.indices() == std::vector<TreeIndex>{2, 5});
    CHECK(c.value_at(5) == std::vector<double>{0});
    CHECK(c.value_at(2) == std::vector<double>{2});

    CHECK_THROWS_AS(SparseTree::coalesce(2, {{1, {1.0}}}), DimMismatchError);
}

TEST_CASE("coalesce is idempotent and permutation-invariant") {
    Rng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::pair<TreeIndex, std::vector<double>>> entries;
        int n = 1 + static_cast<int>(rng.uniform_int(12));
        for (int i = 0; i < n; ++i) {
            TreeIndex idx = 1 + rng.uniform_int(30);
            entries.push_back({idx, {rng.normal(), rng.normal()}});
        }
        SparseTree once = SparseTree::coalesce(2, entries);
        std::vector<std::pair<TreeIndex, std::vector<double>>> again;
        for (size_t k = 0; k < once.size(); ++k) {
            again.push_back({once.indices()[k],
                             std::vector<double>(once.row(k), once.row(k) + 2)});
        }
        CHECK(SparseTree::coalesce(2, again) == once);

        // Shuffle the raw entries; the result must not change.
        for (size_t i = entries.size(); i > 1; --i) {
            std::swap(entries[i - 1], entries[rng.uniform_int(i)]);
        }
        CHECK(SparseTree::coalesce(2, entries) == once);
    }
}

TEST_CASE("from_symbol_tree places one entry per node") {
    EmbeddingTable table = test_table(8, 4);
    SymbolTree leaf(1);
    SparseTree s = from_symbol_tree(leaf, table);
    CHECK(s.size() == 1);
    CHECK(s.value_at(1) == table.embed(1));

    SymbolTree pair(1, SymbolTree(2), SymbolTree(3));
    SparseTree sp = from_symbol_tree(pair, table);
    CHECK(sp.indices() == std::vector<TreeIndex>{1, 2, 3});
    CHECK(sp.value_at(2) == table.embed(2));
    CHECK(sp.value_at(3) == table.embed(3));

    // Left spine a(b(c)): c sits at the left-left position, index 4.
    SymbolTree spine(1, SymbolTree(2, SymbolTree(3)));
    SparseTree ss = from_symbol_tree(spine, table);
    CHECK(ss.indices() == std::vector<TreeIndex>{1, 2, 4});

    // Vocab ids run 0..7; 8 is out of range.
    CHECK_THROWS_AS(from_symbol_tree(SymbolTree(8), table), VocabularyError);
}

TEST_CASE("to_symbol_tree decodes by nearest embedding and drops nulls") {
    EmbeddingTable table = test_table(8, 6);
    SymbolTree t(1, SymbolTree(2), SymbolTree(3));
    CHECK(to_symbol_tree(from_symbol_tree(t, table), table) == t);

    // Small perturbation on the root; null-valued child dropped.
    Rng rng(5);
    std::vector<double> root = table.embed(1);
    for (double& x : root) x += 0.01 * rng.normal();
    SparseTree noisy = SparseTree::coalesce(
        6, {{1, root}, {2, table.embed(Vocabulary::kNullId)}});
    SymbolTree decoded = to_symbol_tree(noisy, table);
    CHECK(decoded == SymbolTree(1));

    // Orphan after the null drop: index 4 loses its parent 2.
    SparseTree orphaned = SparseTree::coalesce(
        6, {{1, table.embed(1)}, {2, table.embed(Vocabulary::kNullId)}, {4, table.embed(3)}});
    CHECK_THROWS_AS(to_symbol_tree(orphaned, table), MalformedTreeError);
    try {
        to_symbol_tree(orphaned, table);
    } catch (const MalformedTreeError& e) {
        CHECK(e.orphan_indices == std::vector<TreeIndex>{4});
    }
}

TEST_CASE("symbol tree round trip over random trees") {
    EmbeddingTable table = test_table(50, 16);
    Rng rng(123);
    for (int trial = 0; trial < 1000; ++trial) {
        SymbolTree t = random_symbol_tree(8, 50, rng);
        CHECK(to_symbol_tree(from_symbol_tree(t, table), table) == t);
    }
}

TEST_CASE("zero-valued entries survive until an explicit drop pass") {
    SparseTree z = SparseTree::coalesce(2, {{1, {0, 0}}, {2, {1, 0}}});
    CHECK(z.size() == 2);
    SparseTree dropped = z.drop_exact_zeros();
    CHECK(dropped.size() == 1);
    CHECK(dropped.indices() == std::vector<TreeIndex>{2});
}

TEST_CASE("binary serialization is linear in entry count") {
    const int dim = 8;
    // bytes(n) must fit c1*n*(dim+1)*8 + c2 exactly; measure and fit.
    std::vector<size_t> sizes;
    Rng rng(7);
    for (size_t n : {1, 2, 4, 32, 128, 512}) {
        std::vector<std::pair<TreeIndex, std::vector<double>>> entries;
        for (size_t i = 0; i < n; ++i) {
            std::vector<double> v(dim);
            for (double& x : v) x = rng.normal();
            entries.push_back({i + 1, v});
        }
        SparseTree t = SparseTree::coalesce(dim, entries);
        auto buf = t.serialize_binary();
        CHECK(SparseTree::deserialize_binary(buf) == t);
        sizes.push_back(buf.size());
        CHECK(buf.size() <= 2 * n * (dim + 1) * 8 + 64);
    }
    // Equal per-entry increments.
    size_t per_entry = sizes[1] - sizes[0];
    CHECK(sizes[5] - sizes[4] == 384 * per_entry);
}

TEST_CASE("s-expression parse and print round trip") {
    Vocabulary vocab;
    for (const std::string text :
         {"a", "(a b)", "(a (b c) d)", "(a (b (c d) e) (f g))", "(a () b)"}) {
        SymbolTree t = parse_sexpr_binary(text, vocab);
        CHECK(to_sexpr(t, vocab) == text);
    }
    CHECK_THROWS_AS(parse_sexpr("(a b"), DataError);
    CHECK_THROWS_AS(parse_sexpr("(a b) c"), DataError);
    CHECK_THROWS_AS(parse_sexpr_binary("(a b c d)", vocab), DataError);
}
