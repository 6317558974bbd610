#include "sdtm/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iostream>
#include <iterator>
#include <thread>

#include "json.hpp"

namespace sdtm {

PreparedSample prepare_sample(const Sample& s, const Vocabulary& vocab,
                              const MachineConfig& cfg) {
    PreparedSample out;
    auto ids_of = [&](const std::string& text) {
        std::vector<int> ids;
        for (const auto& tok : tokenize(text)) ids.push_back(vocab.id(tok));
        return ids;
    };
    if (cfg.mode == Mode::Tree2Tree) {
        out.input.tree = parse_sexpr_binary(s.input, vocab);
        out.target_tree = parse_sexpr_binary(s.output, vocab);
    } else if (cfg.mode == Mode::Seq2SeqLaud) {
        out.input.tokens = ids_of(s.input);
        out.target_tokens = ids_of(s.output);
        out.target_tree = laud_embed(out.target_tokens, vocab.id(kNonTerminalToken),
                                     vocab.id(kEndOfBranchToken));
    } else {
        // seq2tree / seq2seq-parse: sequence in, explicit tree out.
        out.input.tokens = ids_of(s.input);
        out.target_tree = parse_sexpr_binary(s.output, vocab);
    }
    return out;
}

std::vector<PreparedSample> prepare_samples(const std::vector<Sample>& samples,
                                            const Vocabulary& vocab,
                                            const MachineConfig& cfg) {
    std::vector<PreparedSample> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(prepare_sample(s, vocab, cfg));
    return out;
}

Trainer::Trainer(Machine& machine, TrainConfig cfg)
    : machine_(machine), cfg_(std::move(cfg)) {
    if (!cfg_.metrics_path.empty()) {
        metrics_ = std::make_unique<std::ofstream>(cfg_.metrics_path);
        if (!*metrics_) throw DataError("cannot write metrics to " + cfg_.metrics_path);
    }
}

void Trainer::log_metric(int step, const std::string& split, double loss, double em) {
    nlohmann::json j;
    j["step"] = step;
    j["loss"] = loss;
    j["split"] = split;
    j["exact_match"] = em;
    if (metrics_) *metrics_ << j.dump() << "\n";
    if (!cfg_.quiet) std::cout << j.dump() << std::endl;
}

namespace {

struct SampleResult {
    double loss = 0.0;
    ParamStore::GradBuffer grads;
};

uint64_t mix_seed(uint64_t seed, uint64_t step, uint64_t index, uint64_t salt) {
    uint64_t x = seed ^ (0x9e3779b97f4a7c15ull * (step + 1)) ^
                 (0xbf58476d1ce4e5b9ull * (index + 1)) ^ salt;
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return x;
}

}  // namespace

double Trainer::run_batch(const std::vector<const PreparedSample*>& batch, int step,
                          ParamStore::GradBuffer& grads) {
    const int workers =
        std::max(1, std::min<int>(cfg_.workers, static_cast<int>(batch.size())));
    std::vector<double> losses(batch.size(), 0.0);
    std::vector<ParamStore::GradBuffer> buffers;
    buffers.reserve(workers);
    for (int w = 0; w < workers; ++w) buffers.push_back(machine_.params().make_grad_buffer());
    std::vector<std::string> errors(workers);

    auto work = [&](int w) {
        try {
            for (size_t i = w; i < batch.size(); i += workers) {
                Tape tape;
                AgentBinding binding(tape, machine_.params(), machine_.config().agent,
                                     &buffers[w]);
                Rng pos_rng(mix_seed(cfg_.seed, step, i, 0xA11CE));
                Rng noise_rng(mix_seed(cfg_.seed, step, i, 0xB0B));
                DiffTree out = machine_.run_on_tape(tape, binding, batch[i]->input,
                                                    pos_rng, true, &noise_rng);
                Value loss = machine_.loss_on_tape(tape, out, batch[i]->target_tree);
                losses[i] = tape.data(loss).v[0];
                tape.backward(loss);
            }
        } catch (const std::exception& e) {
            errors[w] = e.what();
        }
    };

    if (workers == 1) {
        work(0);
    } else {
        std::vector<std::thread> threads;
        threads.reserve(workers);
        for (int w = 0; w < workers; ++w) threads.emplace_back(work, w);
        for (auto& t : threads) t.join();
    }
    for (const auto& e : errors) {
        if (!e.empty()) throw Error(e);
    }

    // Deterministic ordered reduction: worker buffers are summed in worker
    // order, which is independent of thread scheduling.
    double inv = 1.0 / static_cast<double>(batch.size());
    for (auto& [name, g] : grads) {
        for (int w = 0; w < workers; ++w) {
            const Tensor& src = buffers[w].at(name);
            for (size_t i = 0; i < g.v.size(); ++i) g.v[i] += src.v[i];
        }
        for (double& x : g.v) x *= inv;
    }
    double mean_loss = 0.0;
    for (double l : losses) mean_loss += l;
    return mean_loss * inv;
}

void Trainer::adam_step(AdamState& state, const ParamStore::GradBuffer& grads,
                        double lr) {
    state.t += 1;
    double b1t = 1.0 - std::pow(cfg_.beta1, state.t);
    double b2t = 1.0 - std::pow(cfg_.beta2, state.t);
    for (const std::string& name : machine_.params().order()) {
        Tensor& p = machine_.params().at(name);
        const Tensor& g = grads.at(name);
        if (state.m.find(name) == state.m.end()) {
            state.m.emplace(name, Tensor::zeros(p.shape));
            state.v.emplace(name, Tensor::zeros(p.shape));
        }
        Tensor& m = state.m.at(name);
        Tensor& v = state.v.at(name);
        for (size_t i = 0; i < p.v.size(); ++i) {
            m.v[i] = cfg_.beta1 * m.v[i] + (1.0 - cfg_.beta1) * g.v[i];
            v.v[i] = cfg_.beta2 * v.v[i] + (1.0 - cfg_.beta2) * g.v[i] * g.v[i];
            double mhat = m.v[i] / b1t;
            double vhat = v.v[i] / b2t;
            p.v[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.adam_eps);
        }
    }
}

void Trainer::train(
    const std::vector<PreparedSample>& train_split,
    const std::map<std::string, std::vector<PreparedSample>>& eval_splits) {
    if (train_split.empty()) throw DataError("training split is empty");
    Rng batch_rng(cfg_.seed);
    for (int step = 1; step <= cfg_.steps; ++step) {
        std::vector<const PreparedSample*> batch;
        batch.reserve(cfg_.batch_size);
        for (int b = 0; b < cfg_.batch_size; ++b) {
            batch.push_back(&train_split[batch_rng.uniform_int(train_split.size())]);
        }
        ParamStore::GradBuffer grads = machine_.params().make_grad_buffer();
        double loss = run_batch(batch, step, grads);
        if (!std::isfinite(loss)) {
            throw NumericalError("loss diverged (non-finite) at step " +
                                 std::to_string(step));
        }
        double lr = cfg_.lr;
        if (cfg_.warmup_steps > 0 && step <= cfg_.warmup_steps) {
            lr = cfg_.lr * static_cast<double>(step) / cfg_.warmup_steps;
        } else if (cfg_.lr_linear_decay && cfg_.steps > cfg_.warmup_steps) {
            lr = cfg_.lr * static_cast<double>(cfg_.steps - step) /
                 (cfg_.steps - cfg_.warmup_steps);
        }
        adam_step(adam_, grads, lr);
        losses_.push_back(loss);

        bool do_eval = cfg_.eval_every > 0 &&
                       (step % cfg_.eval_every == 0 || step == cfg_.steps);
        if (do_eval) {
            log_metric(step, "train", loss, -1.0);
            for (const auto& [name, split] : eval_splits) {
                EvalResult r = evaluate(split);
                log_metric(step, name, loss, r.exact_match);
            }
        }
    }
    if (!cfg_.checkpoint_path.empty()) save_checkpoint(cfg_.checkpoint_path, machine_);
}

EvalResult Trainer::evaluate(const std::vector<PreparedSample>& split) const {
    EvalResult r;
    int limit = cfg_.eval_max_samples > 0
                    ? std::min<int>(cfg_.eval_max_samples, static_cast<int>(split.size()))
                    : static_cast<int>(split.size());
    int hits = 0;
    for (int i = 0; i < limit; ++i) {
        SparseTree pred =
            machine_.run(split[i].input, mix_seed(cfg_.eval_pos_seed, 0, i, 0xE7A1));
        bool ok;
        if (machine_.config().mode == Mode::Seq2SeqLaud) {
            ok = machine_.exact_match_seq(pred, split[i].target_tokens);
        } else {
            ok = machine_.exact_match(pred, split[i].target_tree);
        }
        hits += ok ? 1 : 0;
    }
    r.total = limit;
    r.exact_match = limit > 0 ? static_cast<double>(hits) / limit : 0.0;
    return r;
}

namespace {

void put_u32(std::vector<uint8_t>& buf, uint32_t v) {
    for (int b = 0; b < 4; ++b) buf.push_back(static_cast<uint8_t>(v >> (8 * b)));
}

void put_u64(std::vector<uint8_t>& buf, uint64_t v) {
    for (int b = 0; b < 8; ++b) buf.push_back(static_cast<uint8_t>(v >> (8 * b)));
}

void put_string(std::vector<uint8_t>& buf, const std::string& s) {
    put_u32(buf, static_cast<uint32_t>(s.size()));
    buf.insert(buf.end(), s.begin(), s.end());
}

void put_tensor(std::vector<uint8_t>& buf, const std::string& name, const Tensor& t) {
    put_string(buf, name);
    put_u32(buf, static_cast<uint32_t>(t.shape.size()));
    for (size_t d : t.shape) put_u32(buf, static_cast<uint32_t>(d));
    for (double x : t.v) {
        uint64_t bits;
        std::memcpy(&bits, &x, 8);
        put_u64(buf, bits);
    }
}

struct Reader {
    const std::vector<uint8_t>& buf;
    size_t pos = 0;

    uint32_t u32() {
        if (pos + 4 > buf.size()) throw DataError("truncated checkpoint");
        uint32_t v = 0;
        for (int b = 0; b < 4; ++b) v |= static_cast<uint32_t>(buf[pos + b]) << (8 * b);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        if (pos + 8 > buf.size()) throw DataError("truncated checkpoint");
        uint64_t v = 0;
        for (int b = 0; b < 8; ++b) v |= static_cast<uint64_t>(buf[pos + b]) << (8 * b);
        pos += 8;
        return v;
    }
    std::string str() {
        uint32_t n = u32();
        if (pos + n > buf.size()) throw DataError("truncated checkpoint");
        std::string s(buf.begin() + pos, buf.begin() + pos + n);
        pos += n;
        return s;
    }
    Tensor tensor() {
        uint32_t rank = u32();
        std::vector<size_t> shape;
        for (uint32_t i = 0; i < rank; ++i) shape.push_back(u32());
        Tensor t(shape);
        for (size_t i = 0; i < t.v.size(); ++i) {
            uint64_t bits = u64();
            double x;
            std::memcpy(&x, &bits, 8);
            t.v[i] = x;
        }
        return t;
    }
};

nlohmann::json config_to_json(const MachineConfig& cfg) {
    nlohmann::json j;
    j["mode"] = mode_to_string(cfg.mode);
    j["max_depth"] = cfg.max_depth;
    j["prune_k"] = cfg.prune_k;
    j["noise_std"] = cfg.noise_std;
    j["max_tree_depth"] = cfg.max_tree_depth;
    j["append_eob_input"] = cfg.append_eob_input;
    j["d"] = cfg.agent.d;
    j["model_dim"] = cfg.agent.model_dim;
    j["num_heads"] = cfg.agent.num_heads;
    j["key_dim"] = cfg.agent.key_dim;
    j["value_dim"] = cfg.agent.value_dim;
    j["ff_dim"] = cfg.agent.ff_dim;
    j["num_layers"] = cfg.agent.num_layers;
    j["bit_width"] = cfg.agent.bit_width;
    j["rpe_max_int"] = cfg.agent.rpe_max_int;
    return j;
}

MachineConfig config_from_json(const nlohmann::json& j) {
    MachineConfig cfg;
    cfg.mode = mode_from_string(j.at("mode").get<std::string>());
    cfg.max_depth = j.at("max_depth").get<int>();
    cfg.prune_k = j.at("prune_k").get<size_t>();
    cfg.noise_std = j.at("noise_std").get<double>();
    cfg.max_tree_depth = j.at("max_tree_depth").get<int>();
    cfg.append_eob_input = j.at("append_eob_input").get<bool>();
    cfg.agent.d = j.at("d").get<int>();
    cfg.agent.model_dim = j.at("model_dim").get<int>();
    cfg.agent.num_heads = j.at("num_heads").get<int>();
    cfg.agent.key_dim = j.at("key_dim").get<int>();
    cfg.agent.value_dim = j.at("value_dim").get<int>();
    cfg.agent.ff_dim = j.at("ff_dim").get<int>();
    cfg.agent.num_layers = j.at("num_layers").get<int>();
    cfg.agent.bit_width = j.at("bit_width").get<int>();
    cfg.agent.rpe_max_int = j.at("rpe_max_int").get<int>();
    return cfg;
}

constexpr uint32_t kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const std::string& path, const Machine& machine) {
    std::vector<uint8_t> buf;
    buf.push_back('S');
    buf.push_back('D');
    buf.push_back('T');
    buf.push_back('M');
    put_u32(buf, kCheckpointVersion);

    const ParamStore& params = machine.params();
    put_u32(buf, static_cast<uint32_t>(params.count() + 1));
    put_tensor(buf, "embeddings",
               Tensor({static_cast<size_t>(machine.embeddings().vocab_size()),
                       static_cast<size_t>(machine.embeddings().dim())},
                      machine.embeddings().rows()));
    for (const std::string& name : params.order()) {
        put_tensor(buf, name, params.at(name));
    }
    put_u32(buf, static_cast<uint32_t>(machine.vocab().size()));
    for (const auto& tok : machine.vocab().tokens()) put_string(buf, tok);
    put_string(buf, config_to_json(machine.config()).dump());

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint " + path);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size()));
}

Machine load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path);
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
    if (buf.size() < 8 || buf[0] != 'S' || buf[1] != 'D' || buf[2] != 'T' ||
        buf[3] != 'M') {
        throw DataError("not an SDTM checkpoint: " + path);
    }
    Reader r{buf, 4};
    uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw DataError("unsupported checkpoint version " + std::to_string(version));
    }
    uint32_t n_tensors = r.u32();
    std::optional<Tensor> embeddings;
    ParamStore params;
    for (uint32_t i = 0; i < n_tensors; ++i) {
        std::string name = r.str();
        Tensor t = r.tensor();
        if (name == "embeddings") {
            embeddings = std::move(t);
        } else {
            params.add(name, std::move(t));
        }
    }
    if (!embeddings) throw DataError("checkpoint has no embedding table");
    uint32_t vocab_count = r.u32();
    Vocabulary vocab;
    for (uint32_t i = 0; i < vocab_count; ++i) {
        std::string tok = r.str();
        if (i == 0) {
            if (tok != Vocabulary::kNullToken) {
                throw DataError("checkpoint vocabulary must start with <NULL>");
            }
            continue;
        }
        vocab.add(tok);
    }
    MachineConfig cfg = config_from_json(nlohmann::json::parse(r.str()));
    EmbeddingTable table(static_cast<int>(embeddings->shape[0]),
                         static_cast<int>(embeddings->shape[1]), embeddings->v);
    return Machine(cfg, std::move(vocab), std::move(table), std::move(params));
}

}  // namespace sdtm
