#pragma once

#include "mdlab/tensor.hpp"

#include <vector>

namespace mdlab {

// Contiguous blocks covering [0, length()). boundaries = {0, b1, ..., L}.
class BlockPartition {
  public:
    BlockPartition() = default;
    // Validates: first boundary 0, strictly increasing.
    BlockPartition(std::vector<int> boundaries, int block_size_nominal);

    // [0,B), [B,2B), ... with a shorter final block when B does not divide L.
    static BlockPartition aligned(int length, int block_size);

    const std::vector<int> & boundaries() const { return boundaries_; }
    int block_size() const { return block_size_; }
    int length() const { return boundaries_.empty() ? 0 : boundaries_.back(); }
    int num_blocks() const { return boundaries_.empty() ? 0 : static_cast<int>(boundaries_.size()) - 1; }
    int block_begin(int b) const { return boundaries_[b]; }
    int block_end(int b) const { return boundaries_[b + 1]; }
    int block_of(int pos) const;

    // A leading block [0, prefix) followed by this partition shifted right by prefix.
    BlockPartition with_prefix(int prefix) const;
    // The first `blocks` blocks only.
    BlockPartition truncated(int blocks) const;

    bool operator==(const BlockPartition &) const = default;

  private:
    std::vector<int> boundaries_;
    int block_size_ = 0;
};

// [0,delta), [delta, delta+B), ... , remainder. Each interior block straddles
// a boundary of the aligned partition. delta must equal B/2; delta == 0
// (B == 1) yields the aligned partition. length < delta gives one block.
BlockPartition shift_partition(int length, int block_size, int delta);

// (i, j) allowed iff block(j) <= block(i): bidirectional inside a block, causal across blocks.
BoolMatrix attention_mask(const BlockPartition & partition, int length);

}  // namespace mdlab
