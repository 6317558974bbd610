#include "sdtm/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace sdtm {

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream is(text);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

RawTree binarize_cnf(const RawTree& t) {
    RawTree out;
    out.label = t.label;
    if (t.children.empty()) return out;
    if (t.children.size() == 1) {
        out.children.push_back(binarize_cnf(t.children[0]));
        return out;
    }
    // Right-branching grouping: (a b c d) -> (a b (<NT> c d)).
    std::function<RawTree(size_t)> group = [&](size_t from) -> RawTree {
        if (from + 1 == t.children.size()) return binarize_cnf(t.children[from]);
        if (from + 2 == t.children.size()) {
            RawTree nt{kNonTerminalToken, {}, false};
            nt.children.push_back(binarize_cnf(t.children[from]));
            nt.children.push_back(binarize_cnf(t.children[from + 1]));
            return nt;
        }
        RawTree nt{kNonTerminalToken, {}, false};
        nt.children.push_back(binarize_cnf(t.children[from]));
        nt.children.push_back(group(from + 1));
        return nt;
    };
    out.children.push_back(binarize_cnf(t.children[0]));
    if (t.children.size() == 2) {
        out.children.push_back(binarize_cnf(t.children[1]));
    } else {
        out.children.push_back(group(1));
    }
    return out;
}

namespace {

int laud_depth(size_t leaf_count) {
    int d = 0;
    size_t cap = 1;
    while (cap < leaf_count) {
        cap <<= 1;
        ++d;
    }
    return d;
}

SymbolTree laud_build(const std::vector<int>& leaves, size_t from, size_t to, int depth,
                      int nt_id) {
    if (depth == 0) return SymbolTree(leaves[from]);
    size_t half = size_t{1} << (depth - 1);
    size_t n = to - from;
    if (n <= half) {
        // Everything fits in the left subtree; the right stays absent.
        return SymbolTree(nt_id, laud_build(leaves, from, to, depth - 1, nt_id));
    }
    return SymbolTree(nt_id, laud_build(leaves, from, from + half, depth - 1, nt_id),
                      laud_build(leaves, from + half, to, depth - 1, nt_id));
}

}  // namespace

SymbolTree laud_embed(const std::vector<int>& tokens, int nt_id, int eob_id) {
    if (tokens.empty()) throw DataError("cannot LAUD-embed an empty sequence");
    if (tokens.size() == 1) {
        return SymbolTree(nt_id, SymbolTree(tokens[0]));
    }
    std::vector<int> leaves = tokens;
    leaves.push_back(eob_id);
    int depth = laud_depth(leaves.size());
    return laud_build(leaves, 0, leaves.size(), depth, nt_id);
}

std::vector<TreeIndex> laud_leaf_addresses(size_t token_count) {
    if (token_count == 0) throw DataError("empty sequence has no LAUD addresses");
    size_t leaf_count = token_count == 1 ? 1 : token_count + 1;
    int depth = token_count == 1 ? 1 : laud_depth(leaf_count);
    std::vector<TreeIndex> out;
    out.reserve(leaf_count);
    for (size_t p = 0; p < leaf_count; ++p) {
        Path path(static_cast<size_t>(depth));
        for (int j = 0; j < depth; ++j) {
            bool right = (p >> (depth - 1 - j)) & 1;
            path[static_cast<size_t>(j)] = right ? Branch::Right : Branch::Left;
        }
        out.push_back(encode_address(path));
    }
    return out;
}

std::vector<Sample> read_scan_tsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::vector<Sample> samples;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        size_t in_pos = line.find("IN:");
        size_t out_pos = line.find("OUT:");
        if (in_pos == std::string::npos || out_pos == std::string::npos ||
            out_pos < in_pos) {
            throw DataError("line " + std::to_string(line_no) +
                            ": expected `IN: ... OUT: ...`");
        }
        std::string input = line.substr(in_pos + 3, out_pos - (in_pos + 3));
        std::string output = line.substr(out_pos + 4);
        auto in_toks = tokenize(input);
        auto out_toks = tokenize(output);
        if (in_toks.empty() || out_toks.empty()) {
            throw DataError("line " + std::to_string(line_no) + ": empty side");
        }
        Sample s;
        std::string sep;
        for (const auto& t : in_toks) {
            s.input += sep + t;
            sep = " ";
        }
        sep.clear();
        for (const auto& t : out_toks) {
            s.output += sep + t;
            sep = " ";
        }
        samples.push_back(std::move(s));
    }
    if (samples.empty()) {
        std::cerr << "warning: " << path << " contains no samples\n";
    }
    return samples;
}

void write_scan_tsv(const std::string& path, const std::vector<Sample>& samples) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    for (const auto& s : samples) {
        out << "IN: " << s.input << " OUT: " << s.output << "\n";
    }
}

std::vector<Sample> read_dataset_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::vector<Sample> samples;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("line " + std::to_string(line_no) + ": " + e.what());
        }
        Sample s;
        s.input = j.at("in").get<std::string>();
        s.output = j.at("out").get<std::string>();
        std::string kind = j.value("kind", "tree");
        if (kind == "tree") {
            s.tree_input = s.tree_output = true;
        } else if (kind == "seq") {
            s.tree_input = s.tree_output = false;
        } else {
            throw DataError("line " + std::to_string(line_no) + ": bad kind " + kind);
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

void write_dataset_jsonl(const std::string& path, const std::vector<Sample>& samples) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    for (const auto& s : samples) {
        nlohmann::json j;
        j["in"] = s.input;
        j["out"] = s.output;
        j["kind"] = s.tree_input ? "tree" : "seq";
        out << j.dump() << "\n";
    }
}

namespace {

std::string replace_tokens(const std::string& text, const std::string& old_token,
                           const std::string& new_token) {
    auto toks = tokenize(text);
    std::string out;
    std::string sep;
    for (auto& t : toks) {
        // Tree inputs carry parens glued to atoms; substitute the bare atom.
        std::string stripped = t;
        size_t lead = stripped.find_first_not_of('(');
        size_t tail = stripped.find_last_not_of(')');
        if (lead == std::string::npos) {
            out += sep + t;
            sep = " ";
            continue;
        }
        std::string core = stripped.substr(lead, tail - lead + 1);
        if (core == old_token) {
            out += sep + stripped.substr(0, lead) + new_token +
                   stripped.substr(tail + 1);
        } else {
            out += sep + t;
        }
        sep = " ";
    }
    return out;
}

}  // namespace

std::vector<Sample> make_zeroshot_split(const std::vector<Sample>& samples,
                                        const std::string& old_token,
                                        const std::string& new_token,
                                        ZeroshotSide side) {
    std::vector<Sample> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        Sample r = s;
        if (side == ZeroshotSide::Input || side == ZeroshotSide::Both) {
            r.input = replace_tokens(r.input, old_token, new_token);
        }
        if (side == ZeroshotSide::Output || side == ZeroshotSide::Both) {
            r.output = replace_tokens(r.output, old_token, new_token);
        }
        out.push_back(std::move(r));
    }
    return out;
}

ToyTask toy_task_from_string(const std::string& s) {
    if (s == "identity") return ToyTask::Identity;
    if (s == "swap_children") return ToyTask::SwapChildren;
    if (s == "mirror") return ToyTask::Mirror;
    throw ConfigError("unknown toy task: " + s);
}

ToyShape toy_shape_from_string(const std::string& s) {
    if (s == "random") return ToyShape::Random;
    if (s == "perfect") return ToyShape::Perfect;
    if (s == "lopsided") return ToyShape::Lopsided;
    throw ConfigError("unknown toy shape: " + s);
}

namespace {

SymbolTree mirror_tree(const SymbolTree& t) {
    auto l = t.left_subtree();
    auto r = t.right_subtree();
    std::optional<SymbolTree> ml, mr;
    if (r) ml = mirror_tree(*r);
    if (l) mr = mirror_tree(*l);
    return SymbolTree::with_children(t.label(), std::move(ml), std::move(mr));
}

// Label draws are sequenced through locals: C++ argument evaluation order
// would otherwise make the rng stream (and the root-label contract of the
// 0-shot generator) compiler-dependent.
SymbolTree random_labeled(const std::function<int()>& pick, int depth, ToyShape shape,
                          Rng& rng) {
    std::function<SymbolTree(int)> perfect = [&](int d) -> SymbolTree {
        int label = pick();
        if (d == 0) return SymbolTree(label);
        SymbolTree l = perfect(d - 1);
        SymbolTree r = perfect(d - 1);
        return SymbolTree(label, std::move(l), std::move(r));
    };
    switch (shape) {
        case ToyShape::Perfect:
            return perfect(depth);
        case ToyShape::Lopsided: {
            if (depth < 2) throw ConfigError("lopsided shape needs depth >= 2");
            int label = pick();
            SymbolTree l = perfect(depth - 2);
            SymbolTree r = perfect(depth - 1);
            return SymbolTree(label, std::move(l), std::move(r));
        }
        case ToyShape::Random: {
            std::function<SymbolTree(int)> grow = [&](int d) -> SymbolTree {
                int label = pick();
                if (d == 0) return SymbolTree(label);
                double roll = rng.uniform();
                if (roll < 0.25) return SymbolTree(label);
                if (roll < 0.4) return SymbolTree(label, grow(d - 1));
                SymbolTree l = grow(d - 1);
                SymbolTree r = grow(d - 1);
                return SymbolTree(label, std::move(l), std::move(r));
            };
            int label = pick();
            SymbolTree l = grow(depth - 1);
            SymbolTree r = grow(depth - 1);
            return SymbolTree(label, std::move(l), std::move(r));
        }
    }
    throw ConfigError("bad toy shape");
}

}  // namespace

SymbolTree toy_apply(ToyTask task, const SymbolTree& t) {
    switch (task) {
        case ToyTask::Identity:
            return t;
        case ToyTask::SwapChildren:
            return SymbolTree::with_children(t.label(), t.right_subtree(),
                                             t.left_subtree());
        case ToyTask::Mirror:
            return mirror_tree(t);
    }
    throw ConfigError("bad toy task");
}

ToyData gen_toy_transduction(const ToyOptions& opt) {
    if (opt.vocab_size < 3) throw ConfigError("toy vocab too small");
    if (opt.depth < 1 || opt.depth > 5) throw ConfigError("toy depth must be 1..5");
    ToyData data;
    for (int i = 0; i < opt.vocab_size; ++i) {
        data.tokens.push_back("t" + std::to_string(i));
    }
    data.heldout_token = data.tokens.back();
    const int pool = opt.vocab_size - 1;  // t0..t{V-2} appear in training
    Rng rng(opt.seed);
    Vocabulary scratch;
    for (const auto& t : data.tokens) scratch.add(t);

    const int marker = scratch.id("t0");
    // Token-id helpers; vocab ids skip <NULL>, so the pool is 1..pool.
    const int half = pool / 2;
    auto uniform_pool = [&]() { return static_cast<int>(rng.uniform_int(pool)) + 1; };
    auto uniform_a = [&]() { return static_cast<int>(rng.uniform_int(half)) + 1; };
    auto uniform_b = [&]() {
        return static_cast<int>(rng.uniform_int(pool - half)) + 1 + half;
    };
    // plant_density > 0: non-root nodes carry t0 with that probability and
    // the root avoids it, so the later substitution never touches the root.
    // Class-structured samples are built subtree-by-subtree instead of with
    // one label stream.
    auto emit = [&](double plant_density) {
        SymbolTree input = [&]() -> SymbolTree {
            if (opt.class_structured) {
                if (opt.shape != ToyShape::Perfect || opt.depth < 2) {
                    throw ConfigError("class-structured samples need perfect shape");
                }
                auto build = [&](auto&& self, int d, bool left_side,
                                 double density) -> SymbolTree {
                    int label;
                    if (left_side) {
                        label = (density > 0.0 && rng.uniform() < density)
                                    ? marker
                                    : uniform_a();
                    } else {
                        label = uniform_b();
                    }
                    if (d == 0) return SymbolTree(label);
                    SymbolTree l = self(self, d - 1, left_side, density);
                    SymbolTree r = self(self, d - 1, left_side, density);
                    return SymbolTree(label, std::move(l), std::move(r));
                };
                int root;
                do {
                    root = uniform_pool();
                } while (plant_density > 0.0 && root == marker);
                SymbolTree l = build(build, opt.depth - 1, true, plant_density);
                SymbolTree r = build(build, opt.depth - 1, false, 0.0);
                return SymbolTree(root, std::move(l), std::move(r));
            }
            bool at_root = true;
            auto pick = [&]() {
                if (at_root) {
                    at_root = false;
                    if (plant_density > 0.0) {
                        int label;
                        do {
                            label = uniform_pool();
                        } while (label == marker);
                        return label;
                    }
                    return uniform_pool();
                }
                if (plant_density > 0.0 && rng.uniform() < plant_density) return marker;
                return uniform_pool();
            };
            return random_labeled(pick, opt.depth, opt.shape, rng);
        }();
        SymbolTree target = toy_apply(opt.task, input);
        Sample s;
        s.tree_input = s.tree_output = true;
        s.input = to_sexpr(input, scratch);
        s.output = to_sexpr(target, scratch);
        return s;
    };

    std::set<std::string> seen;
    auto fill = [&](std::vector<Sample>& dst, int n, double plant_density) {
        int guard = 0;
        while (static_cast<int>(dst.size()) < n && guard < n * 200) {
            ++guard;
            Sample s = emit(plant_density);
            if (seen.insert(s.input).second) dst.push_back(std::move(s));
        }
        if (static_cast<int>(dst.size()) < n) {
            throw DataError("toy generator exhausted distinct trees; lower n or raise depth");
        }
    };

    fill(data.train, opt.n_train, 0.0);
    fill(data.test, opt.n_test, 0.0);
    // 0-shot lexical split: plant t0 densely off-root, then t0 -> held out.
    std::vector<Sample> planted;
    fill(planted, opt.n_zeroshot, opt.zeroshot_density);
    data.zeroshot = make_zeroshot_split(planted, "t0", data.heldout_token,
                                        ZeroshotSide::Both);
    return data;
}

namespace {

struct ScanPhrase {
    std::vector<std::string> words;
    std::vector<std::string> actions;
};

std::vector<ScanPhrase> scan_verb_phrases() {
    const std::vector<std::pair<std::string, std::string>> prims = {
        {"walk", "WALK"}, {"look", "LOOK"}, {"run", "RUN"}, {"jump", "JUMP"}};
    const std::vector<std::pair<std::string, std::string>> dirs = {{"left", "LTURN"},
                                                                   {"right", "RTURN"}};
    std::vector<ScanPhrase> out;
    for (const auto& [w, a] : prims) out.push_back({{w}, {a}});
    for (const auto& [dw, da] : dirs) {
        out.push_back({{"turn", dw}, {da}});
        for (const auto& [w, a] : prims) out.push_back({{w, dw}, {da, a}});
        out.push_back({{"turn", "opposite", dw}, {da, da}});
        for (const auto& [w, a] : prims) {
            out.push_back({{w, "opposite", dw}, {da, da, a}});
        }
        out.push_back({{"turn", "around", dw}, {da, da, da, da}});
        for (const auto& [w, a] : prims) {
            out.push_back({{w, "around", dw}, {da, a, da, a, da, a, da, a}});
        }
    }
    return out;
}

std::vector<ScanPhrase> scan_sentences() {
    std::vector<ScanPhrase> verbs = scan_verb_phrases();
    std::vector<ScanPhrase> out;
    for (const auto& v : verbs) {
        out.push_back(v);
        ScanPhrase twice{v.words, {}};
        twice.words.push_back("twice");
        for (int r = 0; r < 2; ++r) {
            twice.actions.insert(twice.actions.end(), v.actions.begin(), v.actions.end());
        }
        out.push_back(twice);
        ScanPhrase thrice{v.words, {}};
        thrice.words.push_back("thrice");
        for (int r = 0; r < 3; ++r) {
            thrice.actions.insert(thrice.actions.end(), v.actions.begin(),
                                  v.actions.end());
        }
        out.push_back(thrice);
    }
    return out;
}

std::string join(const std::vector<std::string>& parts) {
    std::string s;
    std::string sep;
    for (const auto& p : parts) {
        s += sep + p;
        sep = " ";
    }
    return s;
}

std::string map_action(const std::string& a, bool unified) {
    if (!unified) return a;
    if (a == "WALK") return "walk";
    if (a == "LOOK") return "look";
    if (a == "RUN") return "run";
    if (a == "JUMP") return "jump";
    if (a == "LTURN") return "left";
    if (a == "RTURN") return "right";
    throw DataError("unknown action " + a);
}

}  // namespace

std::vector<Sample> generate_scan(const ScanOptions& opt) {
    std::vector<ScanPhrase> sentences = scan_sentences();
    std::vector<ScanPhrase> commands;
    for (const auto& s : sentences) commands.push_back(s);
    for (const auto& a : sentences) {
        for (const auto& b : sentences) {
            ScanPhrase et{a.words, a.actions};
            et.words.push_back("and");
            et.words.insert(et.words.end(), b.words.begin(), b.words.end());
            et.actions.insert(et.actions.end(), b.actions.begin(), b.actions.end());
            commands.push_back(std::move(et));

            ScanPhrase after{a.words, b.actions};
            after.words.push_back("after");
            after.words.insert(after.words.end(), b.words.begin(), b.words.end());
            after.actions.insert(after.actions.end(), a.actions.begin(), a.actions.end());
            commands.push_back(std::move(after));
        }
    }
    std::vector<size_t> keep;
    for (size_t i = 0; i < commands.size(); ++i) {
        int len = static_cast<int>(commands[i].actions.size());
        if (len >= opt.min_output_len && len <= opt.max_output_len) keep.push_back(i);
    }
    Rng rng(opt.seed);
    for (size_t i = keep.size(); i > 1; --i) {
        size_t j = rng.uniform_int(i);
        std::swap(keep[i - 1], keep[j]);
    }
    std::vector<Sample> out;
    for (size_t i : keep) {
        if (static_cast<int>(out.size()) >= opt.max_samples) break;
        Sample s;
        s.input = join(commands[i].words);
        std::vector<std::string> acts;
        for (const auto& a : commands[i].actions) {
            acts.push_back(map_action(a, opt.unified_vocab));
        }
        s.output = join(acts);
        out.push_back(std::move(s));
    }
    if (static_cast<int>(out.size()) < opt.max_samples) {
        throw DataError("SCAN grammar yields only " + std::to_string(out.size()) +
                        " samples within the length bounds");
    }
    return out;
}

void build_vocab(const std::vector<Sample>& samples, Vocabulary& vocab) {
    for (const auto& s : samples) {
        for (const auto& text : {s.input, s.output}) {
            for (const auto& tok : tokenize(text)) {
                std::string stripped = tok;
                size_t lead = stripped.find_first_not_of('(');
                size_t tail = stripped.find_last_not_of(')');
                if (lead == std::string::npos) continue;
                vocab.add(stripped.substr(lead, tail - lead + 1));
            }
        }
    }
}

}  // namespace sdtm
