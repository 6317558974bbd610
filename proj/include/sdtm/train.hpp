#pragma once

#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sdtm/data.hpp"
#include "sdtm/machine.hpp"

namespace sdtm {

// Sample converted to machine terms. In seq2seq-laud mode the loss target is
// the LAUD embedding of the output sequence; evaluation additionally keeps
// the raw token ids for the sequence readout.
struct PreparedSample {
    Machine::Input input;
    SymbolTree target_tree{0};
    std::vector<int> target_tokens;
};

PreparedSample prepare_sample(const Sample& s, const Vocabulary& vocab,
                              const MachineConfig& cfg);

std::vector<PreparedSample> prepare_samples(const std::vector<Sample>& samples,
                                            const Vocabulary& vocab,
                                            const MachineConfig& cfg);

struct TrainConfig {
    int steps = 2000;
    int batch_size = 16;
    double lr = 1e-4;
    int warmup_steps = 1000;
    bool lr_linear_decay = false;  // decay to 0 after warmup
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int eval_every = 250;
    int eval_max_samples = 200;
    int workers = 1;
    uint64_t seed = 1;
    // Evaluation-time positional sampling is pinned to one seed so metrics
    // are reproducible.
    uint64_t eval_pos_seed = 9001;
    std::string metrics_path;     // JSONL; empty -> no file
    std::string checkpoint_path;  // empty -> no checkpoint
    bool quiet = false;
};

struct EvalResult {
    double exact_match = 0.0;
    int total = 0;
};

class Trainer {
public:
    Trainer(Machine& machine, TrainConfig cfg);

    // Gradient-descent loop over the train split with periodic evaluation of
    // every named split. Throws NumericalError if the loss diverges.
    void train(const std::vector<PreparedSample>& train_split,
               const std::map<std::string, std::vector<PreparedSample>>& eval_splits);

    EvalResult evaluate(const std::vector<PreparedSample>& split) const;

    // Mean batch loss of one optimization step (after the update).
    const std::vector<double>& loss_history() const { return losses_; }

private:
    Machine& machine_;
    TrainConfig cfg_;
    std::vector<double> losses_;

    struct AdamState {
        std::map<std::string, Tensor> m;
        std::map<std::string, Tensor> v;
        int t = 0;
    };

    double run_batch(const std::vector<const PreparedSample*>& batch, int step,
                     ParamStore::GradBuffer& grads);
    void adam_step(AdamState& state, const ParamStore::GradBuffer& grads, double lr);
    void log_metric(int step, const std::string& split, double loss, double em);

    AdamState adam_;
    std::unique_ptr<std::ofstream> metrics_;
};

// Versioned binary checkpoint: magic "SDTM", format version, named tensors
// (parameters plus the frozen embedding table), vocabulary, and the resolved
// machine config as JSON. Layout details in the README.
void save_checkpoint(const std::string& path, const Machine& machine);
Machine load_checkpoint(const std::string& path);

}  // namespace sdtm
