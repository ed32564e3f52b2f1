#include "mdlab/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mdlab {

void DecodeConfig::validate() const {
    if (!(eta >= 0.0 && eta <= 1.0)) {
        throw std::invalid_argument("decode: eta must lie in [0, 1]");
    }
    if (block_size < 1 || max_blocks < 1) {
        throw std::invalid_argument("decode: block_size and max_blocks must be >= 1");
    }
    if (max_steps_per_block < 0) {
        throw std::invalid_argument("decode: max_steps_per_block must be >= 0");
    }
    if (!(temperature > 0.0)) {
        throw std::invalid_argument("decode: temperature must be > 0");
    }
}

BlockPartition DecodeConfig::response_partition() const {
    return shifted ? shift_partition(response_len(), block_size, block_size / 2)
                   : BlockPartition::aligned(response_len(), block_size);
}

int Trajectory::num_tokens() const {
    int n = 0;
    for (const auto & s : steps) {
        n += static_cast<int>(s.tokens.size());
    }
    return n;
}

int Trajectory::generated_len() const {
    if (steps.empty()) {
        return 0;
    }
    return partition.block_end(steps.back().block);
}

std::vector<double> confidence_scores(const Tensor & logits, double temperature) {
    if (logits.rank() != 2) {
        throw ShapeError("confidence_scores: logits must be [n, V], got " + shape_str(logits.shape()));
    }
    const int n = logits.dim(0), V = logits.dim(1);
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) {
        const double * x = logits.data().data() + static_cast<std::size_t>(i) * V;
        const double mx = *std::max_element(x, x + V);
        double s = 0.0;
        for (int j = 0; j < V; ++j) {
            s += std::exp((x[j] - mx) / temperature);
        }
        out[i] = 1.0 / s;  // the max element contributes exp(0)
    }
    return out;
}

std::vector<int> select_unmask(std::span<const int> positions, std::span<const double> conf, double eta) {
    if (positions.size() != conf.size()) {
        throw std::invalid_argument("select_unmask: positions and confidences differ in length");
    }
    std::vector<int> out;
    for (std::size_t i = 0; i < conf.size(); ++i) {
        if (conf[i] >= eta) {
            out.push_back(static_cast<int>(i));
        }
    }
    if (out.empty() && !conf.empty()) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < conf.size(); ++i) {
            if (conf[i] > conf[best] || (conf[i] == conf[best] && positions[i] < positions[best])) {
                best = i;
            }
        }
        out.push_back(static_cast<int>(best));
    }
    return out;
}

DecodeInput decode_input(std::span<const int> prompt, std::span<const int> response_state,
                         const BlockPartition & response_partition, int block) {
    const int end = response_partition.block_end(block);
    DecodeInput in;
    in.tokens.assign(prompt.begin(), prompt.end());
    in.tokens.insert(in.tokens.end(), response_state.begin(), response_state.begin() + end);
    in.partition = response_partition.truncated(block + 1).with_prefix(static_cast<int>(prompt.size()));
    return in;
}

Var step_log_probs(Graph & g, Var logits, std::span<const int> rows, double temperature, int mask_id) {
    Var scaled = g.scale(g.gather_rows(logits, rows), 1.0 / temperature);
    const int V = g.value(scaled).dim(1);
    Tensor bias({V});
    bias[static_cast<std::size_t>(mask_id)] = -1e30;
    return g.log_softmax(g.add_row(scaled, g.constant(std::move(bias))));
}

DecodeResult decode(const Model & model, std::span<const int> prompt, const DecodeConfig & cfg,
                    std::mt19937_64 & rng, int eos_id) {
    cfg.validate();
    const ModelConfig & mc = model.config();
    const int P = static_cast<int>(prompt.size());
    const int R = cfg.response_len();
    if (P < 1) {
        throw std::invalid_argument("decode: empty prompt");
    }
    if (P + R > mc.max_len) {
        throw std::invalid_argument("decode: prompt length " + std::to_string(P) + " + response budget " +
                                    std::to_string(R) + " exceeds max_len " + std::to_string(mc.max_len));
    }
    const BlockPartition part = cfg.response_partition();
    std::vector<int> state(static_cast<std::size_t>(R), mc.mask_token_id);

    DecodeResult res;
    res.trajectory.prompt.assign(prompt.begin(), prompt.end());
    res.trajectory.partition = part;
    res.trajectory.temperature = cfg.temperature;
    res.trace.block_size = cfg.block_size;
    res.trace.eta = cfg.eta;
    res.trace.shifted = cfg.shifted;

    bool saw_eos = false;
    for (int b = 0; b < part.num_blocks() && !saw_eos; ++b) {
        const int begin = part.block_begin(b), end = part.block_end(b);
        int steps_here = 0;
        for (;;) {
            std::vector<int> masked;
            for (int p = begin; p < end; ++p) {
                if (state[p] == mc.mask_token_id) {
                    masked.push_back(p);
                }
            }
            if (masked.empty()) {
                break;
            }
            const DecodeInput in = decode_input(prompt, state, part, b);
            Graph g(false);
            const ForwardOutput fw = model.forward(g, in.tokens, in.partition);
            std::vector<int> rows;
            for (int p : masked) {
                rows.push_back(P + p);
            }
            const Tensor lp = g.value(step_log_probs(g, fw.logits, rows, cfg.temperature, mc.mask_token_id));
            const int V = lp.dim(1);
            std::vector<double> conf(masked.size());
            for (std::size_t i = 0; i < masked.size(); ++i) {
                const double * row = lp.data().data() + i * V;
                conf[i] = std::exp(*std::max_element(row, row + V));
            }
            ++steps_here;
            const bool force = steps_here >= cfg.step_budget();
            const std::vector<int> selected = select_unmask(masked, conf, cfg.eta);
            std::vector<int> chosen = selected;
            std::vector<bool> forced(masked.size(), force);
            if (force) {
                chosen.resize(masked.size());
                std::iota(chosen.begin(), chosen.end(), 0);
                for (int i : selected) {
                    forced[static_cast<std::size_t>(i)] = false;
                }
            }
            DecodeStep step;
            step.block = b;
            for (int i : chosen) {
                const double * row = lp.data().data() + static_cast<std::size_t>(i) * V;
                int tok = 0;
                if (cfg.mode == DecodeMode::sample && !forced[static_cast<std::size_t>(i)]) {
                    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
                    double acc = 0.0;
                    tok = V - 1;
                    for (int v = 0; v < V; ++v) {
                        acc += std::exp(row[v]);
                        if (u < acc) {
                            tok = v;
                            break;
                        }
                    }
                } else {
                    tok = static_cast<int>(std::max_element(row, row + V) - row);
                }
                DecodedToken d;
                d.position = masked[i];
                d.token = tok;
                d.logprob = row[tok];
                d.confidence = conf[i];
                d.logprob_row.assign(row, row + V);
                step.tokens.push_back(std::move(d));
            }
            for (const auto & d : step.tokens) {
                state[d.position] = d.token;
            }
            res.trajectory.steps.push_back(std::move(step));
        }
        for (int p = begin; p < end; ++p) {
            saw_eos = saw_eos || state[p] == eos_id;
        }
    }

    const int gen = res.trajectory.generated_len();
    res.response.assign(state.begin(), state.begin() + gen);
    res.trace.truncated = !saw_eos;
    res.trace.num_steps = res.trajectory.num_steps();
    std::vector<int> step_of(gen, 0);
    for (int s = 0; s < res.trajectory.num_steps(); ++s) {
        for (const auto & d : res.trajectory.steps[s].tokens) {
            step_of[d.position] = s + 1;
        }
    }
    for (int p = 0; p < gen; ++p) {
        res.trace.positions.push_back(p);
        res.trace.steps.push_back(step_of[p]);
        res.trace.tokens.push_back(res.response[p]);
    }
    return res;
}

}  // namespace mdlab
