#pragma once

#include "mdlab/config.hpp"
#include "mdlab/runner.hpp"
#include "mdlab/schedule.hpp"

#include <string>
#include <vector>

namespace mdlab {

// All commands write into cfg.output_dir, which must be empty or absent
// unless resuming. Each writes config.json and manifest.json listing its
// outputs. Inputs are never modified. Return values mirror the manifest.

json cmd_sft(const RunConfig & cfg, bool resume = false);

// Direct TraceRL at cfg.rl.block_size from `checkpoint`.
json cmd_rl(const RunConfig & cfg, const fs::path & checkpoint);

// T* from `checkpoint`; with `resume`, continues an interrupted run in cfg.output_dir.
json cmd_tstar(const RunConfig & cfg, const fs::path & checkpoint, bool resume = false);

struct DecodeOptions {
    int block_size = 2;
    bool shifted = false;
    bool sample = false;
    std::string prompts_path;  // dataset JSONL or one prompt per line; empty: eval split
};
json cmd_decode(const RunConfig & cfg, const fs::path & checkpoint, const DecodeOptions & opt);

struct EvalOptions {
    int block_size = 2;
    bool shifted = false;
    bool write_traces = true;
};
json cmd_eval(const RunConfig & cfg, const fs::path & checkpoint, const EvalOptions & opt);

struct AnalyzeOptions {
    std::vector<fs::path> trace_files;
    int width = 0;  // heatmap row width, 0 = whole response on one row
};
json cmd_analyze(const RunConfig & cfg, const AnalyzeOptions & opt);

}  // namespace mdlab
