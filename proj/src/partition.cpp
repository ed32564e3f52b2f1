#include "mdlab/partition.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace mdlab {

BlockPartition::BlockPartition(std::vector<int> boundaries, int block_size_nominal)
    : boundaries_(std::move(boundaries)), block_size_(block_size_nominal) {
    if (boundaries_.size() < 2 || boundaries_.front() != 0) {
        throw std::invalid_argument("block partition must start at 0 and contain at least one block");
    }
    for (std::size_t i = 1; i < boundaries_.size(); ++i) {
        if (boundaries_[i] <= boundaries_[i - 1]) {
            throw std::invalid_argument("block partition boundaries must be strictly increasing");
        }
    }
}

BlockPartition BlockPartition::aligned(int length, int block_size) {
    if (length < 1 || block_size < 1) {
        throw std::invalid_argument("aligned partition needs length >= 1 and block size >= 1");
    }
    std::vector<int> b;
    for (int p = 0; p < length; p += block_size) {
        b.push_back(p);
    }
    b.push_back(length);
    return BlockPartition(std::move(b), block_size);
}

int BlockPartition::block_of(int pos) const {
    if (pos < 0 || pos >= length()) {
        throw std::out_of_range("position " + std::to_string(pos) + " outside partition of length " +
                                std::to_string(length()));
    }
    auto it = std::upper_bound(boundaries_.begin(), boundaries_.end(), pos);
    return static_cast<int>(it - boundaries_.begin()) - 1;
}

BlockPartition BlockPartition::with_prefix(int prefix) const {
    if (prefix <= 0) {
        return *this;
    }
    std::vector<int> b{0};
    for (int x : boundaries_) {
        b.push_back(x + prefix);
    }
    return BlockPartition(std::move(b), block_size_);
}

BlockPartition BlockPartition::truncated(int blocks) const {
    if (blocks < 1 || blocks > num_blocks()) {
        throw std::out_of_range("cannot truncate partition of " + std::to_string(num_blocks()) + " blocks to " +
                                std::to_string(blocks));
    }
    return BlockPartition(std::vector<int>(boundaries_.begin(), boundaries_.begin() + blocks + 1), block_size_);
}

BlockPartition shift_partition(int length, int block_size, int delta) {
    if (length < 1 || block_size < 1) {
        throw std::invalid_argument("shift partition needs length >= 1 and block size >= 1");
    }
    if (delta != block_size / 2) {
        throw std::invalid_argument("shift offset must be B/2 (B=" + std::to_string(block_size) +
                                    ", delta=" + std::to_string(delta) + ")");
    }
    if (delta == 0) {
        return BlockPartition::aligned(length, block_size);
    }
    if (length <= delta) {
        return BlockPartition({0, length}, block_size);
    }
    std::vector<int> b{0};
    for (int p = delta; p < length; p += block_size) {
        b.push_back(p);
    }
    b.push_back(length);
    return BlockPartition(std::move(b), block_size);
}

BoolMatrix attention_mask(const BlockPartition & partition, int length) {
    if (partition.length() != length) {
        throw std::invalid_argument("partition covers " + std::to_string(partition.length()) +
                                    " positions but sequence length is " + std::to_string(length));
    }
    BoolMatrix m(length, length);
    for (int i = 0; i < length; ++i) {
        const int end = partition.block_end(partition.block_of(i));
        for (int j = 0; j < end; ++j) {
            m.set(i, j, true);
        }
    }
    return m;
}

}  // namespace mdlab
