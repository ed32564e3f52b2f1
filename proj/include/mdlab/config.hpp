#pragma once

#include "mdlab/curriculum.hpp"
#include "mdlab/decoder.hpp"
#include "mdlab/io.hpp"
#include "mdlab/model.hpp"
#include "mdlab/tasks.hpp"
#include "mdlab/tracerl.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mdlab {

struct SftConfig {
    int steps = 4000;
    int batch_size = 32;
    double learning_rate = 1e-3;
    int warmup_steps = 200;
    double min_lr_ratio = 0.05;  // cosine decay floor
    int block_size = 2;
    double grad_clip = 1.0;
    int log_every = 50;
    int eval_every = 500;
    int checkpoint_every = 500;
};

// Decoding knobs shared by rollouts and evaluation; the block size comes
// from the command.
struct DecodeSettings {
    double eta = 0.9;
    double temperature = 1.0;
    int max_steps_per_block = 0;
};

struct RlConfig {
    int block_size = 2;
    bool shifted = false;
    int updates = 24;
    int eval_every = 4;
    int checkpoint_every = 0;  // 0 = final only
};

struct EvalConfig {
    std::string split = "validation";
    int count = 100;    // 0 = the whole split
    int samples = 1;    // 1 = greedy, else sampled at decode.temperature
    std::vector<int> ks{1};
};

struct RunConfig {
    std::uint64_t seed = 1;
    std::string output_dir = "runs/default";
    std::string model_tag = "mdlab";
    int workers = 1;
    int response_len = 8;
    std::string dataset_path;  // empty: generate from `dataset`
    ModelConfig model;
    DatasetSpec dataset;
    SftConfig sft;
    TrainConfig train;
    DecodeSettings decode;
    RlConfig rl;
    CurriculumConfig curriculum;
    EvalConfig eval;

    RunConfig();
    void validate() const;
    DecodeConfig decode_config(int block_size, bool shifted, DecodeMode mode) const;
};

json to_json(const RunConfig & c);
// Unknown keys anywhere are errors naming the full key path.
RunConfig run_config_from_json(const json & j);
RunConfig load_run_config(const fs::path & path);

// "train.beta=0.02": the value is parsed as JSON, falling back to a string.
void apply_override(json & config, const std::string & assignment);

}  // namespace mdlab
