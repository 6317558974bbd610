#include <fstream>
#include <map>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "sdtm/data.hpp"

using namespace sdtm;
using namespace sdtm::test;

namespace {

std::vector<std::string> frontier(const RawTree& t) {
    if (t.children.empty()) return {t.label};
    std::vector<std::string> out;
    for (const auto& c : t.children) {
        auto sub = frontier(c);
        out.insert(out.end(), sub.begin(), sub.end());
    }
    return out;
}

bool is_binary(const RawTree& t) {
    if (t.children.size() > 2) return false;
    for (const auto& c : t.children) {
        if (!is_binary(c)) return false;
    }
    return true;
}

RawTree random_raw(Rng& rng, int depth) {
    RawTree t;
    t.label = "n" + std::to_string(rng.uniform_int(20));
    if (depth == 0) return t;
    size_t arity = rng.uniform_int(5);  // 0..4 children
    for (size_t i = 0; i < arity; ++i) t.children.push_back(random_raw(rng, depth - 1));
    return t;
}

}  // namespace

TEST_CASE("cnf binarization groups surplus children to the right") {
    RawTree t = parse_sexpr("(a b c)");
    CHECK(raw_to_sexpr(binarize_cnf(t)) == "(a b c)");

    RawTree wide = parse_sexpr("(a b c d)");
    CHECK(raw_to_sexpr(binarize_cnf(wide)) == "(a b (<NT> c d))");

    RawTree unary = parse_sexpr("(a b)");
    CHECK(raw_to_sexpr(binarize_cnf(unary)) == "(a b)");

    RawTree wider = parse_sexpr("(a b c d e)");
    CHECK(raw_to_sexpr(binarize_cnf(wider)) == "(a b (<NT> c (<NT> d e)))");
}

TEST_CASE("cnf binarization is binary and frontier-preserving") {
    Rng rng(8);
    for (int trial = 0; trial < 300; ++trial) {
        RawTree t = random_raw(rng, 4);
        RawTree b = binarize_cnf(t);
        CHECK(is_binary(b));
        CHECK(frontier(b) == frontier(t));
    }
}

TEST_CASE("laud embedding matches the stated shapes") {
    Vocabulary vocab;
    int nt = vocab.add(kNonTerminalToken);
    int eob = vocab.add(kEndOfBranchToken);
    int x = vocab.add("x");
    int a = vocab.add("a");
    int b = vocab.add("b");
    int c = vocab.add("c");

    // Single token: left child of a new <NT> root, no <EOB>.
    SymbolTree single = laud_embed({x}, nt, eob);
    CHECK(single == SymbolTree(nt, SymbolTree(x)));

    // Three tokens: depth-2, left-aligned with the terminator last.
    SymbolTree three = laud_embed({a, b, c}, nt, eob);
    SymbolTree expect(nt, SymbolTree(nt, SymbolTree(a), SymbolTree(b)),
                      SymbolTree(nt, SymbolTree(c), SymbolTree(eob)));
    CHECK(three == expect);

    // Two tokens: three leaves at depth 2, last subtree left-only.
    SymbolTree two = laud_embed({a, b}, nt, eob);
    SymbolTree expect2(nt, SymbolTree(nt, SymbolTree(a), SymbolTree(b)),
                       SymbolTree(nt, SymbolTree(eob)));
    CHECK(two == expect2);
}

TEST_CASE("laud leaves sit at one uniform depth, left aligned") {
    Vocabulary vocab;
    int nt = vocab.add(kNonTerminalToken);
    int eob = vocab.add(kEndOfBranchToken);
    Rng rng(19);
    for (int trial = 0; trial < 200; ++trial) {
        size_t len = 1 + rng.uniform_int(20);
        std::vector<int> tokens;
        for (size_t i = 0; i < len; ++i) {
            tokens.push_back(3 + static_cast<int>(rng.uniform_int(5)));
        }
        SymbolTree t = laud_embed(tokens, nt, eob);

        // Read back: leaves in order, dropping <NT> and stopping at <EOB>.
        std::vector<int> leaves = t.leaf_labels();
        std::vector<int> read;
        for (int label : leaves) {
            if (label == eob) break;
            read.push_back(label);
        }
        CHECK(read == tokens);

        // All leaves at one depth, occupying a contiguous left-aligned
        // prefix of that level.
        auto addresses = laud_leaf_addresses(tokens.size());
        CHECK(addresses.size() == (len == 1 ? len : len + 1));
        std::set<TreeIndex> leaf_set(addresses.begin(), addresses.end());
        int depth = depth_of(addresses[0]);
        for (TreeIndex addr : addresses) CHECK(depth_of(addr) == depth);
        for (const auto& [idx, label] : t.indexed_labels()) {
            if (depth_of(idx) == depth) {
                CHECK(leaf_set.count(idx) == 1);
            } else {
                CHECK(label == nt);
            }
        }
    }
}

TEST_CASE("scan tsv parsing accepts the IN/OUT format") {
    const char* path = "/tmp/sdtm_scan_test.tsv";
    {
        std::ofstream out(path);
        out << "IN: jump OUT: JUMP\n";
        out << "\n";
        out << "IN: walk twice OUT: WALK WALK\n";
    }
    auto samples = read_scan_tsv(path);
    REQUIRE(samples.size() == 2);
    CHECK(samples[0].input == "jump");
    CHECK(samples[0].output == "JUMP");
    CHECK_FALSE(samples[0].tree_input);

    {
        std::ofstream out(path);
        out << "IN: jump\n";
    }
    CHECK_THROWS_WITH_AS(read_scan_tsv(path), doctest::Contains("line 1"), DataError);

    {
        std::ofstream out(path);
        out << "";
    }
    CHECK(read_scan_tsv(path).empty());
}

TEST_CASE("zero-shot substitution touches only the requested side") {
    Sample s;
    s.input = "x y x";
    s.output = "x z";
    auto out = make_zeroshot_split({s, s}, "x", "q", ZeroshotSide::Both);
    CHECK(out[0].input == "q y q");
    CHECK(out[0].output == "q z");

    auto in_only = make_zeroshot_split({s}, "x", "q", ZeroshotSide::Input);
    CHECK(in_only[0].input == "q y q");
    CHECK(in_only[0].output == "x z");

    Sample untouched;
    untouched.input = "a b";
    untouched.output = "c";
    CHECK(make_zeroshot_split({untouched}, "x", "q", ZeroshotSide::Both)[0].input ==
          "a b");

    // Tree records substitute the bare atoms inside parentheses.
    Sample tree;
    tree.tree_input = tree.tree_output = true;
    tree.input = "(x (y x) z)";
    tree.output = "(x z)";
    auto tout = make_zeroshot_split({tree}, "x", "q", ZeroshotSide::Both);
    CHECK(tout[0].input == "(q (y q) z)");
    CHECK(tout[0].output == "(q z)");
}

TEST_CASE("toy task oracles") {
    Vocabulary vocab;
    SymbolTree t = parse_sexpr_binary("(a (b c d) e)", vocab);
    CHECK(toy_apply(ToyTask::Identity, t) == t);
    CHECK(toy_apply(ToyTask::SwapChildren, t) ==
          parse_sexpr_binary("(a e (b c d))", vocab));
    // Mirror: recursive reversal.
    CHECK(toy_apply(ToyTask::Mirror, t) == parse_sexpr_binary("(a e (b d c))", vocab));
}

TEST_CASE("toy generator respects shape, vocab and held-out token") {
    ToyOptions opt;
    opt.task = ToyTask::SwapChildren;
    opt.vocab_size = 12;
    opt.depth = 4;
    opt.n_train = 40;
    opt.n_test = 10;
    opt.n_zeroshot = 10;
    opt.shape = ToyShape::Lopsided;
    opt.seed = 5;
    ToyData data = gen_toy_transduction(opt);
    CHECK(data.train.size() == 40);
    CHECK(data.heldout_token == "t11");

    Vocabulary vocab;
    for (const auto& tok : data.tokens) vocab.add(tok);
    for (const auto& s : data.train) {
        SymbolTree in = parse_sexpr_binary(s.input, vocab);
        SymbolTree out = parse_sexpr_binary(s.output, vocab);
        CHECK(out == toy_apply(ToyTask::SwapChildren, in));
        CHECK(in.depth() == 4);
        CHECK(in.node_count() == 23);  // 1 + perfect(2) + perfect(3)
        // The held-out token never appears in training data.
        CHECK(s.input.find("t11") == std::string::npos);
    }
    int with_heldout = 0;
    for (const auto& s : data.zeroshot) {
        SymbolTree in = parse_sexpr_binary(s.input, vocab);
        // The held-out token never lands on the root; it rides the copy path.
        CHECK(in.label() != vocab.id("t11"));
        if (s.input.find("t11") != std::string::npos) ++with_heldout;
        SymbolTree out = parse_sexpr_binary(s.output, vocab);
        CHECK(out == toy_apply(ToyTask::SwapChildren, in));
    }
    CHECK(with_heldout > 8);

    // Same seed, same data.
    ToyData again = gen_toy_transduction(opt);
    CHECK(again.train[0].input == data.train[0].input);
}

TEST_CASE("scan generator interprets the command grammar") {
    ScanOptions opt;
    opt.max_samples = 60;
    opt.min_output_len = 1;
    opt.max_output_len = 4;
    opt.unified_vocab = false;
    auto samples = generate_scan(opt);
    CHECK(samples.size() == 60);
    std::set<std::string> seen;
    std::map<std::string, std::string> expect = {
        {"jump", "JUMP"},
        {"walk twice", "WALK WALK"},
        {"look opposite left", "LTURN LTURN LOOK"},
        {"turn around right", "RTURN RTURN RTURN RTURN"},
        {"run left", "LTURN RUN"},
        {"jump after walk", "WALK JUMP"},
        {"look and run", "LOOK RUN"},
    };
    ScanOptions all;
    all.max_samples = 600;
    all.min_output_len = 1;
    all.max_output_len = 8;
    all.unified_vocab = false;
    all.seed = 3;
    for (const auto& s : generate_scan(all)) {
        seen.insert(s.input);
        auto it = expect.find(s.input);
        if (it != expect.end()) CHECK(s.output == it->second);
    }
    CHECK(seen.size() == 600);

    // Unified vocabulary keeps every output token inside the input lexicon.
    ScanOptions uni;
    uni.max_samples = 100;
    uni.unified_vocab = true;
    std::set<std::string> input_words = {"walk", "look",  "run",    "jump",
                                         "turn", "left",  "right",  "opposite",
                                         "around", "twice", "thrice", "and",
                                         "after"};
    for (const auto& s : generate_scan(uni)) {
        for (const auto& tok : tokenize(s.output)) {
            CHECK(input_words.count(tok) == 1);
        }
    }
}

TEST_CASE("dataset jsonl round trip") {
    std::vector<Sample> samples;
    Sample a;
    a.input = "(x (y z))";
    a.output = "(x z)";
    a.tree_input = a.tree_output = true;
    samples.push_back(a);
    Sample b;
    b.input = "jump twice";
    b.output = "jump jump";
    samples.push_back(b);
    const char* path = "/tmp/sdtm_ds_test.jsonl";
    write_dataset_jsonl(path, samples);
    auto loaded = read_dataset_jsonl(path);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].input == a.input);
    CHECK(loaded[0].tree_input);
    CHECK_FALSE(loaded[1].tree_input);
}
