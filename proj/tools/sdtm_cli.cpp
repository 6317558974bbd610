#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "sdtm/config.hpp"
#include "sdtm/data.hpp"
#include "sdtm/machine.hpp"
#include "sdtm/sct.hpp"
#include "sdtm/tpr_oracle.hpp"
#include "sdtm/train.hpp"
#include "sdtm/tree_ops.hpp"

namespace fs = std::filesystem;
using namespace sdtm;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

struct TreeCtx {
    std::string vocab_path;
    int dim = 16;
    uint64_t seed = 7;
};

Vocabulary load_vocab(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open vocabulary " + path);
    Vocabulary vocab;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (first && line == Vocabulary::kNullToken) {
            first = false;
            continue;
        }
        first = false;
        vocab.add(line);
    }
    return vocab;
}

void save_vocab(const std::string& path, const Vocabulary& vocab) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write vocabulary " + path);
    for (const auto& tok : vocab.tokens()) out << tok << "\n";
}

EmbeddingTable table_for(const Vocabulary& vocab, int dim, uint64_t seed) {
    Rng rng(seed);
    return EmbeddingTable(vocab.size(), dim, rng);
}

SparseTree read_tree_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + " is empty");
    return SparseTree::from_jsonl(line);
}

void write_tree_jsonl(const std::string& path, const SparseTree& t) {
    if (path.empty() || path == "-") {
        std::cout << t.to_jsonl() << "\n";
        return;
    }
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << t.to_jsonl() << "\n";
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create directory " + dir);
}

std::map<std::string, std::vector<PreparedSample>> load_splits(
    const RunConfig& cfg, const Vocabulary& vocab) {
    std::map<std::string, std::vector<PreparedSample>> out;
    for (const auto& [name, path] : cfg.data) {
        out[name] = prepare_samples(read_dataset_jsonl(path), vocab, cfg.machine);
    }
    return out;
}

Vocabulary vocab_for_run(const RunConfig& cfg) {
    // Deterministic order: the train split first, then the rest by name.
    Vocabulary vocab;
    auto it = cfg.data.find("train");
    if (it != cfg.data.end()) build_vocab(read_dataset_jsonl(it->second), vocab);
    for (const auto& [name, path] : cfg.data) {
        if (name == "train") continue;
        build_vocab(read_dataset_jsonl(path), vocab);
    }
    return vocab;
}

int run_train(const std::string& config_path) {
    RunConfig cfg = load_run_config(config_path);
    if (!cfg.data.count("train")) throw ConfigError("config has no data.train entry");
    ensure_dir(cfg.out_dir);
    Vocabulary vocab = vocab_for_run(cfg);
    Machine machine(cfg.machine, vocab, cfg.train.seed);

    auto splits = load_splits(cfg, machine.vocab());
    auto train_split = splits.at("train");
    splits.erase("train");

    TrainConfig tc = cfg.train;
    if (tc.metrics_path.empty()) tc.metrics_path = cfg.out_dir + "/metrics.jsonl";
    if (tc.checkpoint_path.empty()) tc.checkpoint_path = cfg.out_dir + "/model.sdtm";
    {
        std::ofstream echo(cfg.out_dir + "/config.resolved.json");
        echo << resolved_config_json(cfg) << "\n";
    }
    Trainer trainer(machine, tc);
    trainer.train(train_split, splits);
    std::cout << "checkpoint written to " << tc.checkpoint_path << "\n";
    return kExitOk;
}

int run_eval(const std::string& config_path, const std::string& checkpoint) {
    RunConfig cfg = load_run_config(config_path);
    Machine machine = load_checkpoint(checkpoint);
    TrainConfig tc = cfg.train;
    tc.metrics_path.clear();
    Trainer trainer(machine, tc);
    for (const auto& [name, path] : cfg.data) {
        auto split = prepare_samples(read_dataset_jsonl(path), machine.vocab(),
                                     machine.config());
        EvalResult r = trainer.evaluate(split);
        std::cout << name << " exact_match " << r.exact_match << " (" << r.total
                  << " samples)\n";
    }
    return kExitOk;
}

int run_predict(const std::string& checkpoint, const std::string& input,
                uint64_t pos_seed) {
    Machine machine = load_checkpoint(checkpoint);
    Machine::Input in;
    if (machine.config().mode == Mode::Tree2Tree) {
        in.tree = parse_sexpr_binary(input, machine.vocab());
    } else {
        for (const auto& tok : tokenize(input)) {
            in.tokens.push_back(machine.vocab().id(tok));
        }
    }
    SparseTree pred = machine.run(in, pos_seed);
    SymbolTree decoded = to_symbol_tree(pred, machine.embeddings());
    std::cout << to_sexpr(decoded, machine.vocab()) << "\n";
    if (machine.config().mode == Mode::Seq2SeqLaud) {
        std::cout << "seq:";
        for (int label : decoded.leaf_labels()) {
            if (label == machine.eob_id()) break;
            std::cout << " " << machine.vocab().token(label);
        }
        std::cout << "\n";
    }
    return kExitOk;
}

int run_sweep(const std::string& config_path) {
    RunConfig cfg = load_run_config(config_path);
    if (!cfg.data.count("train")) throw ConfigError("config has no data.train entry");
    if (cfg.sweep_seeds.empty()) throw ConfigError("sweep needs sweep_seeds");
    ensure_dir(cfg.out_dir);
    {
        std::ofstream echo(cfg.out_dir + "/config.resolved.json");
        echo << resolved_config_json(cfg) << "\n";
    }
    nlohmann::json summary;
    std::map<std::string, double> best;
    for (uint64_t seed : cfg.sweep_seeds) {
        Vocabulary vocab = vocab_for_run(cfg);
        TrainConfig tc = cfg.train;
        tc.seed = seed;
        tc.metrics_path = cfg.out_dir + "/metrics_seed" + std::to_string(seed) + ".jsonl";
        tc.checkpoint_path = cfg.out_dir + "/model_seed" + std::to_string(seed) + ".sdtm";
        Machine machine(cfg.machine, vocab, seed);
        auto splits = load_splits(cfg, machine.vocab());
        auto train_split = splits.at("train");
        splits.erase("train");
        Trainer trainer(machine, tc);
        trainer.train(train_split, splits);
        nlohmann::json per_seed;
        for (const auto& [name, split] : splits) {
            EvalResult r = trainer.evaluate(split);
            per_seed[name] = r.exact_match;
            auto it = best.find(name);
            if (it == best.end() || r.exact_match > it->second) {
                best[name] = r.exact_match;
            }
        }
        summary["seeds"][std::to_string(seed)] = per_seed;
    }
    for (const auto& [name, em] : best) summary["best"][name] = em;
    std::ofstream out(cfg.out_dir + "/summary.json");
    out << summary.dump(2) << "\n";
    std::cout << summary.dump(2) << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sparse Coordinate Trees and the sparse differentiable tree machine"};
    app.require_subcommand(1);

    // ---- tree ----
    auto* tree = app.add_subcommand("tree", "s-expression <-> sparse tree utilities");
    tree->require_subcommand(1);
    TreeCtx tctx;

    auto* tree_encode = tree->add_subcommand("encode", "s-expression to JSON-lines tree");
    std::string sexpr_arg, out_path;
    tree_encode->add_option("sexpr", sexpr_arg, "tree as s-expression")->required();
    tree_encode->add_option("--out", out_path, "output file (default stdout)");
    tree_encode->add_option("--vocab", tctx.vocab_path, "vocabulary sidecar to write");
    tree_encode->add_option("--dim", tctx.dim, "embedding width");
    tree_encode->add_option("--seed", tctx.seed, "embedding seed");

    auto* tree_decode = tree->add_subcommand("decode", "JSON-lines tree to s-expression");
    std::string tree_path;
    tree_decode->add_option("tree", tree_path, "tree JSON-lines file")->required();
    tree_decode->add_option("--vocab", tctx.vocab_path, "vocabulary sidecar")->required();
    tree_decode->add_option("--dim", tctx.dim, "embedding width");
    tree_decode->add_option("--seed", tctx.seed, "embedding seed");

    auto* tree_show = tree->add_subcommand("show", "index table with paths");
    tree_show->add_option("tree", tree_path, "tree JSON-lines file")->required();

    // ---- ops ----
    auto* ops = app.add_subcommand("ops", "structural operations on sparse trees");
    auto* ops_apply = ops->add_subcommand("apply", "apply left/right/cons");
    std::string op_name, in1, in2, root_token;
    ops_apply->add_option("--op", op_name, "left|right|cons")->required();
    ops_apply->add_option("--in", in1, "input tree")->required();
    ops_apply->add_option("--in2", in2, "second input (cons)");
    ops_apply->add_option("--root", root_token, "root token for cons");
    ops_apply->add_option("--vocab", tctx.vocab_path, "vocabulary for --root");
    ops_apply->add_option("--dim", tctx.dim, "embedding width");
    ops_apply->add_option("--seed", tctx.seed, "embedding seed");
    ops_apply->add_option("--out", out_path, "output file (default stdout)");
    int max_depth = kDefaultMaxDepth;
    ops_apply->add_option("--max-depth", max_depth, "depth bound for cons");

    // ---- tpr ----
    auto* tpr = app.add_subcommand("tpr", "dense tensor-product oracle checks");
    auto* tpr_check = tpr->add_subcommand("check", "sparse vs dense agreement");
    int tpr_depth = 5, tpr_dim = 4, tpr_trials = 500;
    uint64_t tpr_seed = 11;
    double tpr_tol = 1e-9;
    tpr_check->add_option("--depth", tpr_depth, "tree depth");
    tpr_check->add_option("--dim", tpr_dim, "filler width");
    tpr_check->add_option("--trials", tpr_trials, "random trees");
    tpr_check->add_option("--seed", tpr_seed, "rng seed");
    tpr_check->add_option("--tol", tpr_tol, "failure threshold");

    // ---- data ----
    auto* data = app.add_subcommand("data", "dataset utilities");
    data->require_subcommand(1);
    std::string data_in, data_out, old_token, new_token, side = "both";

    auto* d_binarize = data->add_subcommand("binarize", "CNF-binarize tree records");
    d_binarize->add_option("--in", data_in)->required();
    d_binarize->add_option("--out", data_out)->required();

    auto* d_laud = data->add_subcommand("laud", "LAUD-embed output sequences");
    d_laud->add_option("--in", data_in)->required();
    d_laud->add_option("--out", data_out)->required();

    auto* d_zeroshot = data->add_subcommand("zeroshot", "substitute a held-out token");
    d_zeroshot->add_option("--in", data_in)->required();
    d_zeroshot->add_option("--out", data_out)->required();
    d_zeroshot->add_option("--old", old_token)->required();
    d_zeroshot->add_option("--new", new_token)->required();
    d_zeroshot->add_option("--side", side, "input|output|both");

    auto* d_toy = data->add_subcommand("gen-toy", "synthetic tree transduction tasks");
    std::string toy_task = "swap_children", toy_shape = "random", toy_dir = "toy_data";
    ToyOptions topt;
    d_toy->add_option("--task", toy_task, "identity|swap_children|mirror");
    d_toy->add_option("--vocab-size", topt.vocab_size);
    d_toy->add_option("--depth", topt.depth);
    d_toy->add_option("--n-train", topt.n_train);
    d_toy->add_option("--n-test", topt.n_test);
    d_toy->add_option("--n-zeroshot", topt.n_zeroshot);
    d_toy->add_option("--shape", toy_shape, "random|perfect|lopsided");
    d_toy->add_option("--zeroshot-density", topt.zeroshot_density);
    d_toy->add_flag("--class-structured", topt.class_structured);
    d_toy->add_option("--seed", topt.seed);
    d_toy->add_option("--out-dir", toy_dir);

    auto* d_scan = data->add_subcommand("gen-scan", "sample the SCAN grammar");
    ScanOptions sopt;
    std::string scan_out = "scan.tsv";
    d_scan->add_option("--max-samples", sopt.max_samples);
    d_scan->add_option("--min-len", sopt.min_output_len);
    d_scan->add_option("--max-len", sopt.max_output_len);
    d_scan->add_option("--seed", sopt.seed);
    bool raw_actions = false;
    d_scan->add_flag("--raw-actions", raw_actions, "keep JUMP/LTURN action tokens");
    d_scan->add_option("--out", scan_out);

    // ---- train / eval / predict / sweep ----
    std::string config_path, checkpoint_path, predict_input;
    uint64_t predict_pos_seed = 9001;
    auto* train_cmd = app.add_subcommand("train", "train from a config file");
    train_cmd->add_option("--config", config_path)->required();
    auto* eval_cmd = app.add_subcommand("eval", "exact match per split");
    eval_cmd->add_option("--config", config_path)->required();
    eval_cmd->add_option("--checkpoint", checkpoint_path)->required();
    auto* predict_cmd = app.add_subcommand("predict", "decode one input");
    predict_cmd->add_option("--checkpoint", checkpoint_path)->required();
    predict_cmd->add_option("--input", predict_input)->required();
    predict_cmd->add_option("--pos-seed", predict_pos_seed);
    auto* sweep_cmd = app.add_subcommand("sweep", "multi-seed training sweep");
    sweep_cmd->add_option("--config", config_path)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (tree_encode->parsed()) {
            Vocabulary vocab;
            SymbolTree t = parse_sexpr_binary(sexpr_arg, vocab);
            EmbeddingTable table = table_for(vocab, tctx.dim, tctx.seed);
            write_tree_jsonl(out_path, from_symbol_tree(t, table, kMaxAddressDepth));
            if (!tctx.vocab_path.empty()) save_vocab(tctx.vocab_path, vocab);
        } else if (tree_decode->parsed()) {
            Vocabulary vocab = load_vocab(tctx.vocab_path);
            EmbeddingTable table = table_for(vocab, tctx.dim, tctx.seed);
            SparseTree t = read_tree_jsonl(tree_path);
            std::cout << to_sexpr(to_symbol_tree(t, table), vocab) << "\n";
        } else if (tree_show->parsed()) {
            SparseTree t = read_tree_jsonl(tree_path);
            std::cout << "index\tpath\tnorm\n";
            for (size_t k = 0; k < t.size(); ++k) {
                double norm = 0.0;
                for (int c = 0; c < t.dim(); ++c) norm += t.row(k)[c] * t.row(k)[c];
                std::cout << t.indices()[k] << "\t"
                          << path_to_string(decode_address(t.indices()[k])) << "\t"
                          << std::sqrt(norm) << "\n";
            }
        } else if (ops_apply->parsed()) {
            SparseTree a = read_tree_jsonl(in1);
            SparseTree result(a.dim());
            if (op_name == "left") {
                result = op_left(a);
            } else if (op_name == "right") {
                result = op_right(a);
            } else if (op_name == "cons") {
                if (in2.empty()) throw ConfigError("cons needs --in2");
                SparseTree b = read_tree_jsonl(in2);
                std::optional<std::vector<double>> root;
                if (!root_token.empty()) {
                    if (tctx.vocab_path.empty()) {
                        throw ConfigError("--root needs --vocab");
                    }
                    Vocabulary vocab = load_vocab(tctx.vocab_path);
                    EmbeddingTable table = table_for(vocab, a.dim(), tctx.seed);
                    root = table.embed(vocab.id(root_token));
                }
                result = op_cons(a, b, root, max_depth);
            } else {
                throw ConfigError("unknown op " + op_name);
            }
            write_tree_jsonl(out_path, result);
        } else if (tpr_check->parsed()) {
            TprCheckReport r = run_tpr_check(tpr_depth, tpr_dim, tpr_trials, tpr_seed);
            std::cout << format_tpr_report(r) << "\n";
            if (r.max_abs_deviation > tpr_tol) {
                std::cerr << "deviation exceeds tolerance " << tpr_tol << "\n";
                return kExitNumerical;
            }
        } else if (d_binarize->parsed()) {
            auto samples = read_dataset_jsonl(data_in);
            for (auto& s : samples) {
                if (s.tree_input) {
                    s.input = raw_to_sexpr(binarize_cnf(parse_sexpr(s.input)));
                }
                if (s.tree_output) {
                    s.output = raw_to_sexpr(binarize_cnf(parse_sexpr(s.output)));
                }
            }
            write_dataset_jsonl(data_out, samples);
        } else if (d_laud->parsed()) {
            auto samples = read_dataset_jsonl(data_in);
            for (auto& s : samples) {
                if (s.tree_output) throw DataError("laud expects sequence outputs");
                Vocabulary vocab;
                int nt = vocab.add(kNonTerminalToken);
                int eob = vocab.add(kEndOfBranchToken);
                std::vector<int> ids;
                for (const auto& tok : tokenize(s.output)) ids.push_back(vocab.add(tok));
                s.output = to_sexpr(laud_embed(ids, nt, eob), vocab);
                s.tree_output = true;
            }
            write_dataset_jsonl(data_out, samples);
        } else if (d_zeroshot->parsed()) {
            ZeroshotSide zs = ZeroshotSide::Both;
            if (side == "input") {
                zs = ZeroshotSide::Input;
            } else if (side == "output") {
                zs = ZeroshotSide::Output;
            } else if (side != "both") {
                throw ConfigError("bad --side " + side);
            }
            write_dataset_jsonl(
                data_out, make_zeroshot_split(read_dataset_jsonl(data_in), old_token,
                                              new_token, zs));
        } else if (d_toy->parsed()) {
            topt.task = toy_task_from_string(toy_task);
            topt.shape = toy_shape_from_string(toy_shape);
            ToyData td = gen_toy_transduction(topt);
            ensure_dir(toy_dir);
            write_dataset_jsonl(toy_dir + "/train.jsonl", td.train);
            write_dataset_jsonl(toy_dir + "/test.jsonl", td.test);
            write_dataset_jsonl(toy_dir + "/zeroshot.jsonl", td.zeroshot);
            std::cout << "wrote " << td.train.size() << "/" << td.test.size() << "/"
                      << td.zeroshot.size() << " samples to " << toy_dir << "\n";
        } else if (d_scan->parsed()) {
            sopt.unified_vocab = !raw_actions;
            auto samples = generate_scan(sopt);
            write_scan_tsv(scan_out, samples);
            std::cout << "wrote " << samples.size() << " samples to " << scan_out << "\n";
        } else if (train_cmd->parsed()) {
            return run_train(config_path);
        } else if (eval_cmd->parsed()) {
            return run_eval(config_path, checkpoint_path);
        } else if (predict_cmd->parsed()) {
            return run_predict(checkpoint_path, predict_input, predict_pos_seed);
        } else if (sweep_cmd->parsed()) {
            return run_sweep(config_path);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const VocabularyError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const MalformedTreeError& e) {
        std::cerr << "decode error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitOk;
}
