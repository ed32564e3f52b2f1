#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace mdlab {

// Named substreams derived from one root seed, e.g.
// substream(seed, "rollout", {batch, prompt, sample}).
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream, std::initializer_list<std::uint64_t> keys = {});

inline std::mt19937_64 substream(std::uint64_t root, std::string_view stream,
                                 std::initializer_list<std::uint64_t> keys = {}) {
    return std::mt19937_64(derive_seed(root, stream, keys));
}

std::uint64_t hash_string(std::string_view s);

}  // namespace mdlab
