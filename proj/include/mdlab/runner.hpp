#pragma once

#include "mdlab/config.hpp"
#include "mdlab/io.hpp"
#include "mdlab/optimizer.hpp"
#include "mdlab/tracerl.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace mdlab {

struct EvalReport {
    std::string model_tag;
    int block_size = 0;
    bool shifted = false;
    std::string split;
    int problems = 0;
    int samples = 0;  // per problem
    std::vector<std::pair<int, double>> pass_at_k;
    double pass1 = 0.0;
    double mean_steps = 0.0;
};
json to_json(const EvalReport & r);

// Greedy when samples == 1, otherwise `samples` draws per problem in sample
// mode. Each (problem, sample) owns the stream (seed, "eval", id, sample).
EvalReport evaluate(const Model & model, std::span<const Problem> problems, const DecodeConfig & base,
                    int samples, std::span<const int> ks, std::uint64_t seed, int workers,
                    const std::string & model_tag, std::vector<TraceRecord> * traces = nullptr);

// Dataset from cfg.dataset_path when set, otherwise generated from cfg.dataset.
std::vector<Problem> load_problems(const RunConfig & cfg);
// The first `count` problems of a split (0 = all).
std::vector<Problem> take_split(const std::vector<Problem> & all, Split split, int count = 0);

// Linear warmup, then cosine decay to min_lr_ratio at cfg.steps.
double sft_lr_scale(const SftConfig & cfg, long step);

struct SftStepInfo {
    double loss = 0.0;  // mean per response token
    double grad_norm = 0.0;
    double lr = 0.0;
    bool skipped = false;
};
// One optimizer step; examples and corruption come from (seed, "sft", step).
SftStepInfo sft_step(Model & model, AdamW & opt, std::span<const Problem> train, const RunConfig & cfg, long step);

struct RlStepInfo {
    TrainMetrics metrics;
    int batch_id = 0;
    int block_size = 0;
    bool shifted = false;
    int tokens = 0;
    double mean_steps = 0.0;
};
// Samples cfg.train.batch_prompts problems from (seed, "batch", batch_id),
// rolls out G samples each under the given partition and applies one update.
RlStepInfo rl_update(Model & model, AdamW & opt, std::span<const Problem> train, const RunConfig & cfg,
                     int block_size, bool shifted, int batch_id);
json to_json(const RlStepInfo & s, long step);

struct PhaseRecord {
    int index = 0;
    int block_size = 0;
    Phase phase = Phase::aligned;
    std::vector<int> batch_ids;
    long step_begin = 0;
    long step_end = 0;
    double val_pass1 = 0.0;
    double mean_reward = 0.0;
    std::string checkpoint;  // relative to the run directory
};
json to_json(const PhaseRecord & r);
PhaseRecord phase_record_from_json(const json & j);

struct CurriculumResult {
    std::vector<PhaseRecord> phases;
    bool failed = false;
    std::string failure;
};

// T*: per block size, TraceRL on aligned blocks, then on half-shifted blocks,
// then doubling. After every phase: validation at the stage block size, a
// checkpoint, a validation record and a manifest update in `run_dir`.
// With `resume`, completed phases recorded in the manifest are skipped and
// training continues from the last phase checkpoint.
CurriculumResult run_curriculum(Model & model, std::span<const Problem> train, std::span<const Problem> validation,
                                const RunConfig & cfg, const fs::path & run_dir, bool resume,
                                const json & manifest_base = json::object());

}  // namespace mdlab
