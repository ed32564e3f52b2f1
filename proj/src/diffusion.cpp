#include "mdlab/diffusion.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace mdlab {

double sample_mask_ratio(std::mt19937_64 & rng) {
    return 1.0 - std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

CorruptionSample corrupt(std::span<const int> x0, int span_begin, int span_end, double t, int mask_id,
                         std::mt19937_64 & rng) {
    if (!(t > 0.0 && t <= 1.0)) {
        throw std::invalid_argument("mask ratio t must lie in (0, 1], got " + std::to_string(t));
    }
    if (span_begin < 0 || span_end > static_cast<int>(x0.size()) || span_begin >= span_end) {
        throw std::invalid_argument("corruption span must be a nonempty range inside the sequence");
    }
    CorruptionSample s;
    s.x0.assign(x0.begin(), x0.end());
    s.t = std::max(t, 1.0 / (span_end - span_begin));
    s.span_begin = span_begin;
    s.span_end = span_end;
    std::bernoulli_distribution coin(s.t);
    for (int attempt = 0; attempt < 2 && s.masked.empty(); ++attempt) {
        for (int i = span_begin; i < span_end; ++i) {
            if (coin(rng)) {
                s.masked.push_back(i);
            }
        }
    }
    if (s.masked.empty()) {
        s.masked.push_back(std::uniform_int_distribution<int>(span_begin, span_end - 1)(rng));
    }
    s.xt = s.x0;
    for (int i : s.masked) {
        s.xt[i] = mask_id;
    }
    return s;
}

Var mdm_loss(Graph & g, Var logits, const CorruptionSample & sample, std::span<const int> row_of) {
    if (sample.masked.empty()) {
        return g.constant(Tensor::scalar(0.0));
    }
    std::vector<int> rows;
    std::vector<int> targets;
    rows.reserve(sample.masked.size());
    for (int pos : sample.masked) {
        rows.push_back(row_of.empty() ? pos : row_of[pos]);
        targets.push_back(sample.x0[pos]);
    }
    Var lp = g.pick(g.log_softmax(g.gather_rows(logits, rows)), targets);
    return g.scale(g.sum(lp), -1.0 / sample.t);
}

TrainingView blockwise_training_view(const CorruptionSample & sample, const BlockPartition & partition,
                                     int prompt_len) {
    const int L = static_cast<int>(sample.x0.size());
    if (partition.length() != L) {
        throw std::invalid_argument("training view: partition length differs from sequence length");
    }
    if (prompt_len < 0 || prompt_len >= L || (prompt_len > 0 && partition.block_of(prompt_len) == 0)) {
        throw std::invalid_argument("training view: prompt must form its own leading block");
    }
    const int R = L - prompt_len;
    const int N = L + R;
    TrainingView v;
    v.tokens.resize(N);
    v.positions.resize(N);
    v.row_of.assign(L, -1);
    for (int i = 0; i < L; ++i) {
        v.tokens[i] = sample.x0[i];
        v.positions[i] = i;
    }
    for (int r = 0; r < R; ++r) {
        v.tokens[L + r] = sample.xt[prompt_len + r];
        v.positions[L + r] = prompt_len + r;
        v.row_of[prompt_len + r] = L + r;
    }
    v.mask = BoolMatrix(N, N);
    std::vector<int> block(L);
    for (int i = 0; i < L; ++i) {
        block[i] = partition.block_of(i);
    }
    for (int i = 0; i < L; ++i) {
        for (int j = 0; j < L; ++j) {
            v.mask.set(i, j, block[j] <= block[i]);
        }
    }
    for (int r = 0; r < R; ++r) {
        const int k = block[prompt_len + r];
        for (int j = 0; j < L; ++j) {
            v.mask.set(L + r, j, block[j] < k);
        }
        for (int s = 0; s < R; ++s) {
            v.mask.set(L + r, L + s, block[prompt_len + s] == k);
        }
    }
    return v;
}

}  // namespace mdlab
