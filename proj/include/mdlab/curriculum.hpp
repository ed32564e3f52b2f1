#pragma once

#include "mdlab/partition.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mdlab {

enum class Phase { aligned, shifted };
std::string_view to_string(Phase p);

struct CurriculumConfig {
    int b0 = 2;
    int b_hat = 8;
    int batches_per_stage = 8;  // first ceil(N/2) aligned, the rest shifted

    void validate() const;
};

struct CurriculumStage {
    int block_size = 0;
    Phase phase = Phase::aligned;
    int delta = 0;                // B/2 in the shifted phase, else 0
    std::vector<int> batch_ids;   // global batch counters processed in this phase
};

bool is_power_of_two(int x);

// Seeded shuffle, then the first ceil(n/2) ids go to d1.
std::pair<std::vector<int>, std::vector<int>> split(std::span<const int> ids, std::uint64_t seed);

// 2B.
int expand(int block_size);
// Merges adjacent pairs of blocks of an aligned partition.
BlockPartition expand(const BlockPartition & partition);

// B0, 2B0, ..., Bhat.
std::vector<int> stage_block_sizes(int b0, int b_hat);

// Every phase of the run in order: per block size, aligned then shifted.
// Batch ids are consecutive per stage and divided between phases by split().
std::vector<CurriculumStage> curriculum_phases(const CurriculumConfig & cfg, std::uint64_t seed);

// Response partition of a phase.
BlockPartition phase_partition(int response_len, int block_size, Phase phase);

}  // namespace mdlab
