#include "mdlab/curriculum.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace mdlab;

TEST_CASE("split sizes and determinism") {
    std::vector<int> ten(10), eleven(11);
    std::iota(ten.begin(), ten.end(), 0);
    std::iota(eleven.begin(), eleven.end(), 0);
    auto [a, b] = split(ten, 3);
    CHECK(a.size() == 5);
    CHECK(b.size() == 5);
    auto [c, d] = split(eleven, 3);
    CHECK(c.size() == 6);
    CHECK(d.size() == 5);
    auto [a2, b2] = split(ten, 3);
    CHECK(a == a2);
    CHECK(b == b2);
    std::vector<int> all(a.begin(), a.end());
    all.insert(all.end(), b.begin(), b.end());
    std::sort(all.begin(), all.end());
    CHECK(all == ten);
}

TEST_CASE("expand") {
    CHECK(expand(4) == 8);
    CHECK(expand(BlockPartition::aligned(8, 4)) == BlockPartition::aligned(8, 8));
    CHECK(expand(BlockPartition::aligned(8, 4)).boundaries() == std::vector<int>{0, 8});
    CHECK_THROWS(expand(3));
    CHECK_THROWS(expand(shift_partition(8, 4, 2)));
}

TEST_CASE("stage schedule") {
    CHECK(stage_block_sizes(4, 16) == std::vector<int>{4, 8, 16});
    CHECK(stage_block_sizes(2, 2) == std::vector<int>{2});
    CHECK_THROWS(stage_block_sizes(8, 4));
    CHECK_THROWS(stage_block_sizes(3, 12));
    for (int b0 : {1, 2, 4}) {
        for (int bh = b0; bh <= 32; bh *= 2) {
            CHECK(static_cast<int>(stage_block_sizes(b0, bh).size()) == static_cast<int>(std::log2(bh / b0)) + 1);
        }
    }
}

TEST_CASE("curriculum phases") {
    CurriculumConfig cfg;
    cfg.b0 = 2;
    cfg.b_hat = 8;
    cfg.batches_per_stage = 7;
    auto ph = curriculum_phases(cfg, 11);
    REQUIRE(ph.size() == 6);
    std::vector<int> seen;
    for (std::size_t i = 0; i < ph.size(); ++i) {
        CHECK(ph[i].block_size == (2 << (i / 2)));
        CHECK(ph[i].phase == (i % 2 == 0 ? Phase::aligned : Phase::shifted));
        CHECK(ph[i].delta == (i % 2 == 0 ? 0 : ph[i].block_size / 2));
        CHECK(ph[i].batch_ids.size() == (i % 2 == 0 ? 4u : 3u));
        seen.insert(seen.end(), ph[i].batch_ids.begin(), ph[i].batch_ids.end());
    }
    std::sort(seen.begin(), seen.end());
    std::vector<int> want(21);
    std::iota(want.begin(), want.end(), 0);
    CHECK(seen == want);
    cfg.b_hat = 2;
    CHECK(curriculum_phases(cfg, 1).size() == 2);
}

TEST_CASE("phase partitions") {
    CHECK(phase_partition(8, 4, Phase::aligned).boundaries() == std::vector<int>{0, 4, 8});
    CHECK(phase_partition(8, 4, Phase::shifted).boundaries() == std::vector<int>{0, 2, 6, 8});
    CHECK(phase_partition(8, 8, Phase::shifted).boundaries() == std::vector<int>{0, 4, 8});
}
