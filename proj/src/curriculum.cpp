#include "mdlab/curriculum.hpp"

#include "mdlab/rng.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace mdlab {

std::string_view to_string(Phase p) {
    return p == Phase::aligned ? "aligned" : "shifted";
}

bool is_power_of_two(int x) {
    return x > 0 && (x & (x - 1)) == 0;
}

void CurriculumConfig::validate() const {
    if (!is_power_of_two(b0) || !is_power_of_two(b_hat)) {
        throw std::invalid_argument("curriculum: b0 and b_hat must be powers of two");
    }
    if (b0 > b_hat) {
        throw std::invalid_argument("curriculum: b0 must not exceed b_hat");
    }
    if (batches_per_stage < 2) {
        throw std::invalid_argument("curriculum: batches_per_stage must be >= 2 so both phases run");
    }
}

std::pair<std::vector<int>, std::vector<int>> split(std::span<const int> ids, std::uint64_t seed) {
    std::vector<int> shuffled(ids.begin(), ids.end());
    std::mt19937_64 rng = substream(seed, "split", {static_cast<std::uint64_t>(ids.size())});
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const std::size_t half = (shuffled.size() + 1) / 2;
    return {std::vector<int>(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(half)),
            std::vector<int>(shuffled.begin() + static_cast<std::ptrdiff_t>(half), shuffled.end())};
}

int expand(int block_size) {
    if (!is_power_of_two(block_size)) {
        throw std::invalid_argument("expand: block size must be a power of two");
    }
    return 2 * block_size;
}

BlockPartition expand(const BlockPartition & partition) {
    const int B = partition.block_size();
    if (!(partition == BlockPartition::aligned(partition.length(), B))) {
        throw std::invalid_argument("expand: partition must be aligned");
    }
    return BlockPartition::aligned(partition.length(), expand(B));
}

std::vector<int> stage_block_sizes(int b0, int b_hat) {
    CurriculumConfig c;
    c.b0 = b0;
    c.b_hat = b_hat;
    c.validate();
    std::vector<int> out;
    for (int b = b0; b <= b_hat; b *= 2) {
        out.push_back(b);
    }
    return out;
}

std::vector<CurriculumStage> curriculum_phases(const CurriculumConfig & cfg, std::uint64_t seed) {
    cfg.validate();
    std::vector<CurriculumStage> out;
    int next_batch = 0;
    for (int B : stage_block_sizes(cfg.b0, cfg.b_hat)) {
        std::vector<int> ids(static_cast<std::size_t>(cfg.batches_per_stage));
        std::iota(ids.begin(), ids.end(), next_batch);
        next_batch += cfg.batches_per_stage;
        auto [d1, d2] = split(ids, derive_seed(seed, "stage", {static_cast<std::uint64_t>(B)}));
        out.push_back({B, Phase::aligned, 0, std::move(d1)});
        out.push_back({B, Phase::shifted, B / 2, std::move(d2)});
    }
    return out;
}

BlockPartition phase_partition(int response_len, int block_size, Phase phase) {
    return phase == Phase::aligned ? BlockPartition::aligned(response_len, block_size)
                                   : shift_partition(response_len, block_size, block_size / 2);
}

}  // namespace mdlab
