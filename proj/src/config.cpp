#include "sdtm/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace sdtm {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& known,
                    const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!known.count(it.key())) {
            throw ConfigError("unknown config key \"" + it.key() + "\" in " + where);
        }
    }
}

template <typename T>
void pick(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig run_config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    reject_unknown(j, {"mode", "model", "train", "data", "sweep_seeds", "out_dir"},
                   "top level");
    RunConfig cfg;
    if (j.contains("mode")) {
        cfg.machine.mode = mode_from_string(j.at("mode").get<std::string>());
    }
    if (j.contains("model")) {
        const json& m = j.at("model");
        reject_unknown(m,
                       {"d", "model_dim", "num_heads", "key_dim", "value_dim", "ff_dim",
                        "num_layers", "bit_width", "rpe_max_int", "max_depth", "prune_k",
                        "max_tree_depth", "append_eob_input"},
                       "model");
        pick(m, "d", cfg.machine.agent.d);
        pick(m, "model_dim", cfg.machine.agent.model_dim);
        pick(m, "num_heads", cfg.machine.agent.num_heads);
        pick(m, "key_dim", cfg.machine.agent.key_dim);
        pick(m, "value_dim", cfg.machine.agent.value_dim);
        pick(m, "ff_dim", cfg.machine.agent.ff_dim);
        pick(m, "num_layers", cfg.machine.agent.num_layers);
        pick(m, "bit_width", cfg.machine.agent.bit_width);
        pick(m, "rpe_max_int", cfg.machine.agent.rpe_max_int);
        pick(m, "max_depth", cfg.machine.max_depth);
        pick(m, "prune_k", cfg.machine.prune_k);
        pick(m, "max_tree_depth", cfg.machine.max_tree_depth);
        pick(m, "append_eob_input", cfg.machine.append_eob_input);
    }
    if (j.contains("train")) {
        const json& t = j.at("train");
        reject_unknown(t,
                       {"steps", "batch_size", "lr", "warmup_steps", "beta1", "beta2",
                        "adam_eps", "noise_std", "eval_every", "eval_max_samples",
                        "workers", "seed", "eval_pos_seed", "quiet",
                        "lr_linear_decay"},
                       "train");
        pick(t, "steps", cfg.train.steps);
        pick(t, "batch_size", cfg.train.batch_size);
        pick(t, "lr", cfg.train.lr);
        pick(t, "warmup_steps", cfg.train.warmup_steps);
        pick(t, "lr_linear_decay", cfg.train.lr_linear_decay);
        pick(t, "beta1", cfg.train.beta1);
        pick(t, "beta2", cfg.train.beta2);
        pick(t, "adam_eps", cfg.train.adam_eps);
        pick(t, "noise_std", cfg.machine.noise_std);
        pick(t, "eval_every", cfg.train.eval_every);
        pick(t, "eval_max_samples", cfg.train.eval_max_samples);
        pick(t, "workers", cfg.train.workers);
        pick(t, "seed", cfg.train.seed);
        pick(t, "eval_pos_seed", cfg.train.eval_pos_seed);
        pick(t, "quiet", cfg.train.quiet);
    }
    if (j.contains("data")) {
        for (auto it = j.at("data").begin(); it != j.at("data").end(); ++it) {
            cfg.data[it.key()] = it.value().get<std::string>();
        }
    }
    if (j.contains("sweep_seeds")) {
        cfg.sweep_seeds = j.at("sweep_seeds").get<std::vector<uint64_t>>();
    }
    pick(j, "out_dir", cfg.out_dir);
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return run_config_from_json_text(ss.str());
}

std::string resolved_config_json(const RunConfig& cfg) {
    json j;
    j["mode"] = mode_to_string(cfg.machine.mode);
    json m;
    m["d"] = cfg.machine.agent.d;
    m["model_dim"] = cfg.machine.agent.model_dim;
    m["num_heads"] = cfg.machine.agent.num_heads;
    m["key_dim"] = cfg.machine.agent.key_dim;
    m["value_dim"] = cfg.machine.agent.value_dim;
    m["ff_dim"] = cfg.machine.agent.ff_dim;
    m["num_layers"] = cfg.machine.agent.num_layers;
    m["bit_width"] = cfg.machine.agent.bit_width;
    m["rpe_max_int"] = cfg.machine.agent.rpe_max_int;
    m["max_depth"] = cfg.machine.max_depth;
    m["prune_k"] = cfg.machine.prune_k;
    m["max_tree_depth"] = cfg.machine.max_tree_depth;
    m["append_eob_input"] = cfg.machine.append_eob_input;
    j["model"] = m;
    json t;
    t["steps"] = cfg.train.steps;
    t["batch_size"] = cfg.train.batch_size;
    t["lr"] = cfg.train.lr;
    t["warmup_steps"] = cfg.train.warmup_steps;
    t["lr_linear_decay"] = cfg.train.lr_linear_decay;
    t["beta1"] = cfg.train.beta1;
    t["beta2"] = cfg.train.beta2;
    t["adam_eps"] = cfg.train.adam_eps;
    t["noise_std"] = cfg.machine.noise_std;
    t["eval_every"] = cfg.train.eval_every;
    t["eval_max_samples"] = cfg.train.eval_max_samples;
    t["workers"] = cfg.train.workers;
    t["seed"] = cfg.train.seed;
    t["eval_pos_seed"] = cfg.train.eval_pos_seed;
    t["quiet"] = cfg.train.quiet;
    j["train"] = t;
    j["data"] = cfg.data;
    j["sweep_seeds"] = cfg.sweep_seeds;
    j["out_dir"] = cfg.out_dir;
    return j.dump(2);
}

}  // namespace sdtm
