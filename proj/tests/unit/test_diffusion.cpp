#include "fixtures.hpp"
#include "mdlab/diffusion.hpp"
#include "mdlab/optimizer.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace mdlab;

TEST_CASE("corrupt respects span and ratio") {
    std::vector<int> x0(20, 7);
    std::mt19937_64 rng(1);
    auto s = corrupt(x0, 5, 20, 1.0, 1, rng);
    CHECK(s.masked.size() == 15);
    for (int i = 0; i < 20; ++i) {
        CHECK(s.xt[i] == (i >= 5 ? 1 : 7));
    }
    CHECK_THROWS_AS(corrupt(x0, 5, 20, 0.0, 1, rng), std::invalid_argument);
    CHECK_THROWS_AS(corrupt(x0, 5, 20, 1.5, 1, rng), std::invalid_argument);
    CHECK_THROWS_AS(corrupt(x0, 5, 5, 0.5, 1, rng), std::invalid_argument);
}

TEST_CASE("tiny t still masks one position") {
    std::vector<int> x0(10, 7);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed);
        auto s = corrupt(x0, 2, 10, 1e-9, 1, rng);
        CHECK(s.masked.size() >= 1);
        CHECK(s.masked[0] >= 2);
        CHECK(s.t == doctest::Approx(1.0 / 8));
    }
}

TEST_CASE("binomial concentration at t=0.5") {
    std::vector<int> x0(1000, 7);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        std::mt19937_64 rng(seed);
        auto s = corrupt(x0, 0, 1000, 0.5, 1, rng);
        CHECK(s.masked.size() >= 400);
        CHECK(s.masked.size() <= 600);
    }
}

TEST_CASE("mask ratio lies in (0,1]") {
    std::mt19937_64 rng(4);
    for (int i = 0; i < 10000; ++i) {
        double t = sample_mask_ratio(rng);
        REQUIRE(t > 0.0);
        REQUIRE(t <= 1.0);
    }
}

TEST_CASE("mdm loss degenerate cases") {
    Graph g;
    Tensor logits({3, 4}, {1, 2, 3, 4, 0, 0, 0, 0, -1, 5, 2, 0});
    Var l = g.constant(logits);
    CorruptionSample s;
    s.x0 = {2, 1, 3};
    s.xt = s.x0;
    s.t = 0.3;
    CHECK(g.value(mdm_loss(g, l, s)).item() == 0.0);

    s.t = 1.0;
    s.masked = {0, 1, 2};
    double ce = 0.0;
    for (int r = 0; r < 3; ++r) {
        double m = -1e300, z = 0.0;
        for (int c = 0; c < 4; ++c) {
            m = std::max(m, logits.at(r, c));
        }
        for (int c = 0; c < 4; ++c) {
            z += std::exp(logits.at(r, c) - m);
        }
        ce += -(logits.at(r, s.x0[r]) - m - std::log(z));
    }
    CHECK(std::abs(g.value(mdm_loss(g, l, s)).item() - ce) < 1e-12);

    s.t = 0.5;
    s.masked = {1};
    CHECK(g.value(mdm_loss(g, l, s)).item() == doctest::Approx(-2.0 * std::log(0.25)).epsilon(1e-14));
}

TEST_CASE("mdm loss Monte Carlo mean stabilizes") {
    Model m(fixtures::tiny_config(), 2);
    std::vector<int> x0{3, 4, 5, 6, 7, 8, 9, 10};
    auto p = BlockPartition::aligned(8, 8);
    std::mt19937_64 rng(0);
    std::vector<double> running;
    double sum = 0.0;
    for (int i = 1; i <= 1000; ++i) {
        double t = sample_mask_ratio(rng);
        auto s = corrupt(x0, 1, 8, t, m.config().mask_token_id, rng);
        Graph g(false);
        double v = g.value(mdm_loss(g, m.forward(g, s.xt, p).logits, s)).item();
        CHECK(v >= 0.0);
        sum += v;
        running.push_back(sum / i);
    }
    const double last = running.back();
    for (int i = 500; i < 1000; ++i) {
        CHECK(std::abs(running[i] - last) <= 0.02 * last);
    }
}

TEST_CASE("training view wiring") {
    CorruptionSample s;
    s.x0 = {3, 10, 11, 12, 13};
    s.xt = {3, 10, 1, 12, 1};
    s.t = 0.5;
    s.masked = {2, 4};
    s.span_begin = 1;
    s.span_end = 5;
    auto full = BlockPartition::aligned(4, 2).with_prefix(1);
    TrainingView v = blockwise_training_view(s, full, 1);
    CHECK(v.tokens == std::vector<int>{3, 10, 11, 12, 13, 10, 1, 12, 1});
    CHECK(v.positions == std::vector<int>{0, 1, 2, 3, 4, 1, 2, 3, 4});
    CHECK(v.row_of == std::vector<int>{-1, 5, 6, 7, 8});
    // noisy token of block 2 (position 3) sees prompt, clean block 1 and noisy block 2
    for (int j = 0; j < 9; ++j) {
        const bool want = j <= 2 || j == 7 || j == 8;
        CHECK(v.mask(7, j) == want);
    }
    for (int j = 0; j < 9; ++j) {
        CHECK(v.mask(5, j) == (j == 0 || j == 5 || j == 6));
    }
    CHECK(v.mask(2, 1));
    CHECK_FALSE(v.mask(2, 3));
}

TEST_CASE("SFT loss decreases on a memorizable set") {
    Model m(fixtures::tiny_config(), 1);
    // 16 fixed short sequences
    std::vector<std::vector<int>> data;
    std::mt19937_64 drng(5);
    std::uniform_int_distribution<int> tok(4, 20);
    for (int i = 0; i < 16; ++i) {
        std::vector<int> x{3};
        for (int j = 0; j < 6; ++j) {
            x.push_back(tok(drng));
        }
        data.push_back(x);
    }
    auto full = BlockPartition::aligned(6, 2).with_prefix(1);
    AdamW opt(m);
    AdamWConfig cfg;
    cfg.learning_rate = 3e-3;
    auto eval = [&] {
        double tot = 0.0;
        Graph g(false);
        for (const auto & x : data) {
            CorruptionSample s;
            s.x0 = x;
            s.xt = x;
            s.t = 1.0;
            s.span_begin = 1;
            s.span_end = 7;
            for (int j = 1; j < 7; ++j) {
                s.xt[j] = m.config().mask_token_id;
                s.masked.push_back(j);
            }
            auto v = blockwise_training_view(s, full, 1);
            tot += g.value(mdm_loss(g, m.forward(g, v.tokens, v.positions, v.mask).logits, s, v.row_of)).item();
        }
        return tot;
    };
    double prev = eval();
    std::mt19937_64 rng(9);
    int decreases = 0;
    for (int step = 0; step < 50; ++step) {
        Gradients grads = m.zero_gradients();
        for (const auto & x : data) {
            auto s = corrupt(x, 1, 7, sample_mask_ratio(rng), m.config().mask_token_id, rng);
            auto v = blockwise_training_view(s, full, 1);
            Graph g;
            Var loss = g.scale(mdm_loss(g, m.forward(g, v.tokens, v.positions, v.mask).logits, s, v.row_of),
                               1.0 / data.size());
            g.backward(loss);
            m.accumulate(g, grads);
        }
        opt.step(m, grads, cfg);
        double cur = eval();
        decreases += cur < prev ? 1 : 0;
        prev = cur;
    }
    CHECK(decreases == 50);
}
