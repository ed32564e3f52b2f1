#pragma once

#include "mdlab/autograd.hpp"
#include "mdlab/partition.hpp"

#include <random>
#include <span>
#include <vector>

namespace mdlab {

struct CorruptionSample {
    std::vector<int> x0;
    std::vector<int> xt;
    double t = 1.0;
    std::vector<int> masked;  // sorted positions where xt == MASK
    int span_begin = 0;
    int span_end = 0;
};

// Draws t from U(0,1] (1 - u with u in [0,1)).
double sample_mask_ratio(std::mt19937_64 & rng);

// Masks each position of [span_begin, span_end) independently with
// probability t, where t is first floored at 1/|span| so the 1/t loss weight
// stays bounded. An empty draw is redrawn once; if still empty, one uniform
// position of the span is masked.
CorruptionSample corrupt(std::span<const int> x0, int span_begin, int span_end, double t, int mask_id,
                         std::mt19937_64 & rng);

// (1/t) * sum over masked positions of -log p(x0 | xt). `row_of` maps a
// sequence position to its row in `logits`; empty means identity.
Var mdm_loss(Graph & g, Var logits, const CorruptionSample & sample, std::span<const int> row_of = {});

// Input for one blockwise-diffusion training pass: the clean sequence followed
// by a noisy copy of the response span. A noisy token in block k sees the
// clean blocks before k and the noisy tokens of block k, and reuses the
// position id of its clean twin. This matches what a block sees at decode time.
struct TrainingView {
    std::vector<int> tokens;
    std::vector<int> positions;
    BoolMatrix mask;
    std::vector<int> row_of;  // sequence position -> row of its noisy copy, -1 for prompt
};

// `partition` covers the full clean sequence (prompt block + response blocks);
// the response span is [prompt_len, partition.length()).
TrainingView blockwise_training_view(const CorruptionSample & sample, const BlockPartition & partition,
                                     int prompt_len);

}  // namespace mdlab
