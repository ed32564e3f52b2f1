#include "fixtures.hpp"
#include "mdlab/diffusion.hpp"

#include <doctest.h>

#include <random>

using namespace mdlab;

namespace {

Tensor run(const Model & m, const std::vector<int> & tokens, const BlockPartition & p) {
    Graph g(false);
    return g.value(m.forward(g, tokens, p).logits);
}

std::vector<int> random_tokens(int L, int vocab, std::mt19937_64 & rng) {
    std::uniform_int_distribution<int> d(0, vocab - 1);
    std::vector<int> t(L);
    for (int & x : t) {
        x = d(rng);
    }
    return t;
}

}  // namespace

TEST_CASE("parameter layout and init") {
    Model m(fixtures::tiny_config(), 7);
    auto layout = parameter_layout(m.config());
    REQUIRE(layout.size() == m.params().size());
    for (std::size_t i = 0; i < layout.size(); ++i) {
        CHECK(layout[i].first == m.params()[i].name);
        CHECK(layout[i].second == m.params()[i].value.shape());
    }
    Model same(fixtures::tiny_config(), 7);
    CHECK(same.params()[0].value.vec() == m.params()[0].value.vec());
    CHECK(Model(fixtures::tiny_config(), 8).params()[0].value.vec() != m.params()[0].value.vec());
}

TEST_CASE("all-mask single block gives finite logits") {
    Model m(fixtures::tiny_config(), 1);
    const int L = 12;
    std::vector<int> t(L, m.config().mask_token_id);
    Tensor y = run(m, t, BlockPartition::aligned(L, L));
    CHECK(y.shape() == Shape{L, m.config().vocab_size});
    CHECK(y.all_finite());
}

TEST_CASE("forward rejects bad inputs") {
    Model m(fixtures::tiny_config(), 1);
    Graph g(false);
    std::vector<int> bad{0, m.config().vocab_size};
    CHECK_THROWS_AS(m.forward(g, bad, BlockPartition::aligned(2, 2)), std::invalid_argument);
    std::vector<int> longer(m.config().max_len + 1, 0);
    CHECK_THROWS(m.forward(g, longer, BlockPartition::aligned(static_cast<int>(longer.size()), 4)));
}

TEST_CASE("later blocks never influence earlier blocks") {
    Model m = fixtures::sharp_model(3, 3.0);
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const int L = 16;
        const int B = 1 << (trial % 4);
        auto p = BlockPartition::aligned(L, B);
        auto a = random_tokens(L, m.config().vocab_size, rng);
        auto b = a;
        const int k = trial % p.num_blocks();
        for (int i = p.block_end(k); i < L; ++i) {
            b[i] = (b[i] + 1 + trial) % m.config().vocab_size;
        }
        Tensor ya = run(m, a, p), yb = run(m, b, p);
        const int V = m.config().vocab_size;
        for (int i = 0; i < p.block_end(k) * V; ++i) {
            REQUIRE(ya[i] == yb[i]);
        }
    }
}

TEST_CASE("a token inside a block changes its block neighbours") {
    Model m(fixtures::tiny_config(), 5);
    auto p = BlockPartition::aligned(8, 4);
    std::vector<int> a{4, 5, 6, 7, 8, 9, 10, 11};
    auto b = a;
    b[5] = 12;
    Tensor ya = run(m, a, p), yb = run(m, b, p);
    const int V = m.config().vocab_size;
    double diff = 0;
    for (int i = 4 * V; i < 5 * V; ++i) {
        diff += std::abs(ya[i] - yb[i]);
    }
    CHECK(diff > 0.0);
}

TEST_CASE("B=1 equals an autoregressive transformer") {
    Model m(fixtures::tiny_config(), 9);
    std::mt19937_64 rng(2);
    const int L = 10;
    auto t = random_tokens(L, m.config().vocab_size, rng);
    BoolMatrix causal(L, L);
    for (int i = 0; i < L; ++i) {
        for (int j = 0; j <= i; ++j) {
            causal.set(i, j, true);
        }
    }
    CHECK(attention_mask(BlockPartition::aligned(L, 1), L).cells == causal.cells);
    std::vector<int> pos(L);
    for (int i = 0; i < L; ++i) {
        pos[i] = i;
    }
    Graph g(false);
    Tensor ar = g.value(m.forward(g, t, pos, causal).logits);
    CHECK(ar.vec() == run(m, t, BlockPartition::aligned(L, 1)).vec());
}

TEST_CASE("full model gradient check") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        Model m(fixtures::tiny_config(), seed);
        std::mt19937_64 rng(seed + 100);
        const int L = 8;
        auto x0 = random_tokens(L, m.config().vocab_size, rng);
        std::mt19937_64 crng(seed);
        CorruptionSample s = corrupt(x0, 2, L, 0.6, m.config().mask_token_id, crng);
        auto p = BlockPartition::aligned(L, 2);
        std::vector<Parameter *> ps;
        for (auto & q : m.params()) {
            ps.push_back(&q);
        }
        auto loss = [&](Graph & g) { return mdm_loss(g, m.forward(g, s.xt, p).logits, s); };
        std::mt19937_64 pick(seed);
        CHECK(finite_diff_check(loss, ps, 1e-5, 6, pick) < 1e-4);
    }
}
