#pragma once

#include "mdlab/model.hpp"
#include "mdlab/partition.hpp"

#include <random>
#include <span>
#include <string>
#include <vector>

namespace mdlab {

enum class DecodeMode { greedy, sample };

struct DecodeConfig {
    double eta = 0.9;  // confidence threshold
    int block_size = 2;
    int max_blocks = 4;
    int max_steps_per_block = 0;  // 0 means block_size
    double temperature = 1.0;
    DecodeMode mode = DecodeMode::greedy;
    bool shifted = false;  // boundaries offset by block_size / 2

    void validate() const;
    int response_len() const { return block_size * max_blocks; }
    int step_budget() const { return max_steps_per_block > 0 ? max_steps_per_block : block_size; }
    BlockPartition response_partition() const;
};

struct DecodedToken {
    int position = 0;  // response-relative
    int token = 0;
    double logprob = 0.0;     // under the temperature-scaled generating distribution
    double confidence = 0.0;  // max probability at this position when finalized
    std::vector<double> logprob_row;  // full scaled log-distribution, cached for KL
};

struct DecodeStep {
    int block = 0;
    std::vector<DecodedToken> tokens;  // ascending position
};

// The denoising record. Steps are in decode order; every generated response
// position appears in exactly one step.
struct Trajectory {
    std::vector<int> prompt;
    BlockPartition partition;  // response-relative partition used for decoding
    double temperature = 1.0;
    std::vector<DecodeStep> steps;

    int num_steps() const { return static_cast<int>(steps.size()); }
    int num_tokens() const;
    // Number of response positions covered by the decoded blocks.
    int generated_len() const;
};

struct TraceRecord {
    std::string prompt_id;
    std::string model_tag;
    int block_size = 0;
    double eta = 0.0;
    bool shifted = false;
    bool truncated = false;
    int num_steps = 0;
    // Parallel arrays, ascending position; steps are 1-based.
    std::vector<int> positions;
    std::vector<int> steps;
    std::vector<int> tokens;
};

struct DecodeResult {
    std::vector<int> response;  // generated positions only
    Trajectory trajectory;
    TraceRecord trace;
};

// Max of the temperature-scaled softmax for each row of `logits` [n, V].
std::vector<double> confidence_scores(const Tensor & logits, double temperature);

// Indices i with conf[i] >= eta; when none qualifies, the single highest
// confidence (smallest position on ties). `positions` and `conf` are parallel.
std::vector<int> select_unmask(std::span<const int> positions, std::span<const double> conf, double eta);

// Token state the model sees while decoding `block`: prompt, finalized
// earlier blocks, and the current block with unfinalized positions masked.
// Later blocks are absent.
struct DecodeInput {
    std::vector<int> tokens;
    BlockPartition partition;  // full-sequence partition (prompt block first)
};
DecodeInput decode_input(std::span<const int> prompt, std::span<const int> response_state,
                         const BlockPartition & response_partition, int block);

// Temperature-scaled log-distribution at `rows` of `logits`, with the mask
// token given zero probability. Shared by decoding and replay.
Var step_log_probs(Graph & g, Var logits, std::span<const int> rows, double temperature, int mask_id);

DecodeResult decode(const Model & model, std::span<const int> prompt, const DecodeConfig & cfg,
                    std::mt19937_64 & rng, int eos_id);

}  // namespace mdlab
