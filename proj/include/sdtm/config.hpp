#pragma once

#include <map>
#include <string>
#include <vector>

#include "sdtm/machine.hpp"
#include "sdtm/train.hpp"

namespace sdtm {

// Experiment configuration document (JSON). Schema-validated: unknown keys
// are rejected. Every run echoes the fully resolved config next to its
// outputs.
struct RunConfig {
    MachineConfig machine;
    TrainConfig train;
    // Split name -> dataset path. "train" is required for training; every
    // other entry becomes an evaluation split.
    std::map<std::string, std::string> data;
    std::vector<uint64_t> sweep_seeds;
    std::string out_dir = "runs/out";
};

RunConfig load_run_config(const std::string& path);
RunConfig run_config_from_json_text(const std::string& text);
std::string resolved_config_json(const RunConfig& cfg);

}  // namespace sdtm
