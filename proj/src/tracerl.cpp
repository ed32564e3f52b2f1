#include "mdlab/tracerl.hpp"

#include "mdlab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace mdlab {

void TrainConfig::validate() const {
    if (!(epsilon > 0.0 && epsilon < 1.0)) {
        throw std::invalid_argument("train: epsilon must lie in (0, 1)");
    }
    if (beta < 0.0) {
        throw std::invalid_argument("train: beta must be >= 0");
    }
    if (!(gamma >= 0.0 && gamma <= 1.0) || !(lambda >= 0.0 && lambda <= 1.0)) {
        throw std::invalid_argument("train: gamma and lambda must lie in [0, 1]");
    }
    if (group_size < 2) {
        throw std::invalid_argument("train: group_size must be >= 2 for group normalization");
    }
    if (batch_prompts < 1 || !(learning_rate > 0.0)) {
        throw std::invalid_argument("train: batch_prompts and learning_rate must be positive");
    }
}

AdamWConfig TrainConfig::optimizer() const {
    AdamWConfig a;
    a.learning_rate = learning_rate;
    a.weight_decay = weight_decay;
    a.grad_clip = grad_clip;
    return a;
}

int RolloutBatch::num_trajectories() const {
    int n = 0;
    for (const auto & g : groups) {
        n += static_cast<int>(g.samples.size());
    }
    return n;
}

int RolloutBatch::num_tokens() const {
    int n = 0;
    for (const auto & g : groups) {
        for (const auto & s : g.samples) {
            n += s.trajectory.num_tokens();
        }
    }
    return n;
}

double RolloutBatch::mean_reward() const {
    double s = 0.0;
    int n = 0;
    for (const auto & g : groups) {
        for (const auto & r : g.samples) {
            s += r.reward;
            ++n;
        }
    }
    return n ? s / n : 0.0;
}

std::vector<double> group_advantages(std::span<const double> rewards) {
    const std::size_t n = rewards.size();
    if (n < 2) {
        throw std::invalid_argument("group_advantages needs at least two rewards");
    }
    double mean = 0.0;
    for (double r : rewards) {
        mean += r;
    }
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double r : rewards) {
        var += (r - mean) * (r - mean);
    }
    const double sd = std::sqrt(var / static_cast<double>(n));
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = (rewards[i] - mean) / (sd + 1e-6);
    }
    return out;
}

double clipped_term(double rho, double advantage, double epsilon) {
    return std::min(rho * advantage, std::clamp(rho, 1.0 - epsilon, 1.0 + epsilon) * advantage);
}

std::vector<double> gae_step_advantages(std::span<const double> step_rewards, std::span<const double> values,
                                        double gamma, double lambda) {
    const std::size_t T = step_rewards.size();
    if (values.size() != T + 1) {
        throw std::invalid_argument("gae: need T+1 values for T rewards");
    }
    std::vector<double> adv(T);
    double running = 0.0;
    for (std::size_t i = T; i-- > 0;) {
        const double delta = step_rewards[i] + gamma * values[i + 1] - values[i];
        running = delta + gamma * lambda * running;
        adv[i] = running;
    }
    return adv;
}

std::vector<StepTerms> trajectory_terms(Graph & g, const Model & model, const Trajectory & traj) {
    const ModelConfig & mc = model.config();
    const int P = static_cast<int>(traj.prompt.size());
    std::vector<int> state(static_cast<std::size_t>(traj.partition.length()), mc.mask_token_id);
    std::vector<StepTerms> out;
    out.reserve(traj.steps.size());
    for (const DecodeStep & step : traj.steps) {
        if (step.tokens.empty()) {
            throw std::invalid_argument("trajectory has an empty step");
        }
        const DecodeInput in = decode_input(traj.prompt, state, traj.partition, step.block);
        const ForwardOutput fw = model.forward(g, in.tokens, in.partition);
        std::vector<int> rows, toks;
        for (const auto & d : step.tokens) {
            if (d.position < traj.partition.block_begin(step.block) || d.position >= traj.partition.block_end(step.block)) {
                throw std::invalid_argument("trajectory token outside its recorded block");
            }
            rows.push_back(P + d.position);
            toks.push_back(d.token);
        }
        StepTerms t;
        t.logp_rows = step_log_probs(g, fw.logits, rows, traj.temperature, mc.mask_token_id);
        t.logp = g.pick(t.logp_rows, toks);
        t.pooled = g.mean_rows(g.gather_rows(fw.hidden, rows));
        out.push_back(t);
        for (const auto & d : step.tokens) {
            state[d.position] = d.token;
        }
    }
    return out;
}

std::vector<double> policy_logprobs(const Model & model, const Trajectory & traj) {
    Graph g(false);
    std::vector<double> out;
    for (const StepTerms & t : trajectory_terms(g, model, traj)) {
        const Tensor & lp = g.value(t.logp);
        out.insert(out.end(), lp.data().begin(), lp.data().end());
    }
    return out;
}

namespace {

Tensor cached_rows(const DecodeStep & step, int vocab) {
    Tensor rows({static_cast<int>(step.tokens.size()), vocab});
    for (std::size_t i = 0; i < step.tokens.size(); ++i) {
        const auto & r = step.tokens[i].logprob_row;
        if (static_cast<int>(r.size()) != vocab) {
            throw std::invalid_argument("trajectory lacks cached old-policy log-probs for the KL term");
        }
        std::copy(r.begin(), r.end(), rows.data().begin() + static_cast<std::ptrdiff_t>(i * vocab));
    }
    return rows;
}

}  // namespace

ObjectiveStats tracerl_objective(const RolloutBatch & batch, const Model & model, const TrainConfig & cfg,
                                 Gradients * grads) {
    const int n_traj = batch.num_trajectories();
    const int n_tok = batch.num_tokens();
    if (n_traj == 0 || n_tok == 0) {
        throw std::invalid_argument("tracerl objective on an empty batch");
    }
    const int V = model.config().vocab_size;
    ObjectiveStats st;
    st.tokens = n_tok;
    double surrogate_total = 0.0, kl_total = 0.0, ratio_total = 0.0;
    int clipped = 0;

    for (const RolloutGroup & group : batch.groups) {
        std::vector<double> rewards;
        for (const auto & s : group.samples) {
            rewards.push_back(s.reward);
        }
        std::vector<double> seq_adv(rewards.size(), 0.0);
        if (cfg.advantage_mode == AdvantageMode::sequence) {
            seq_adv = group_advantages(rewards);
        }
        for (std::size_t i = 0; i < group.samples.size(); ++i) {
            const Trajectory & traj = group.samples[i].trajectory;
            if (!(traj.partition == batch.partition)) {
                throw std::invalid_argument("trajectory was decoded under a different block partition than the batch");
            }
            Graph g(grads != nullptr);
            const std::vector<StepTerms> terms = trajectory_terms(g, model, traj);
            const int T = static_cast<int>(terms.size());

            std::vector<double> step_adv(T, seq_adv[i]);
            Var value_loss{};
            if (cfg.advantage_mode == AdvantageMode::step_gae) {
                std::vector<Var> values;
                std::vector<double> v(T + 1, 0.0);
                for (int t = 0; t < T; ++t) {
                    values.push_back(model.value(g, terms[t].pooled));
                    v[t] = g.value(values.back()).item();
                }
                std::vector<double> r(T, 0.0);
                r[T - 1] = group.samples[i].reward;
                step_adv = gae_step_advantages(r, v, cfg.gamma, cfg.lambda);
                for (int t = 0; t < T; ++t) {
                    const double target = step_adv[t] + v[t];
                    Var e = g.square(g.sub(values[t], g.constant(Tensor({1}, {target}))));
                    value_loss = value_loss.valid() ? g.add(value_loss, e) : e;
                }
                value_loss = g.scale(g.sum(value_loss), cfg.value_coef / (T * static_cast<double>(n_traj)));
            }

            Var surrogate{};
            Var kl{};
            for (int t = 0; t < T; ++t) {
                const DecodeStep & step = traj.steps[t];
                const std::size_t n = step.tokens.size();
                std::vector<double> old_lp(n), adv(n, step_adv[t]);
                for (std::size_t k = 0; k < n; ++k) {
                    old_lp[k] = step.tokens[k].logprob;
                }
                const Tensor & new_lp = g.value(terms[t].logp);
                for (std::size_t k = 0; k < n; ++k) {
                    const double rho = std::exp(new_lp[k] - old_lp[k]);
                    ratio_total += rho;
                    clipped += std::abs(rho - 1.0) > cfg.epsilon ? 1 : 0;
                }
                Var c = g.scale(g.sum(g.clipped_surrogate(terms[t].logp, old_lp, adv, cfg.epsilon)),
                                1.0 / static_cast<double>(n));
                surrogate = surrogate.valid() ? g.add(surrogate, c) : c;
                Var k = g.sum(g.categorical_kl(terms[t].logp_rows, cached_rows(step, V)));
                kl = kl.valid() ? g.add(kl, k) : k;
            }
            surrogate_total += g.value(surrogate).item();
            kl_total += g.value(kl).item();

            Var loss = g.add(g.scale(surrogate, -1.0 / n_traj), g.scale(kl, cfg.beta / n_tok));
            if (value_loss.valid()) {
                st.value_loss += g.value(value_loss).item();
                loss = g.add(loss, value_loss);
            }
            st.loss += g.value(loss).item();
            if (grads) {
                g.backward(loss);
                model.accumulate(g, *grads);
            }
        }
    }
    st.kl = kl_total / n_tok;
    st.objective = surrogate_total / n_traj - cfg.beta * st.kl;
    st.mean_ratio = ratio_total / n_tok;
    st.clip_fraction = static_cast<double>(clipped) / n_tok;
    return st;
}

double kl_term(const RolloutBatch & batch, const Model & model) {
    const int V = model.config().vocab_size;
    double total = 0.0;
    int n = 0;
    for (const auto & group : batch.groups) {
        for (const auto & s : group.samples) {
            Graph g(false);
            const auto terms = trajectory_terms(g, model, s.trajectory);
            for (std::size_t t = 0; t < terms.size(); ++t) {
                const Tensor & k = g.value(g.categorical_kl(terms[t].logp_rows, cached_rows(s.trajectory.steps[t], V)));
                for (double x : k.data()) {
                    total += x;
                    ++n;
                }
            }
        }
    }
    if (n == 0) {
        throw std::invalid_argument("kl_term on an empty batch");
    }
    return total / n;
}

TrainMetrics train_step(const RolloutBatch & batch, Model & model, const TrainConfig & cfg, AdamW & opt) {
    Gradients grads = model.zero_gradients();
    const ObjectiveStats st = tracerl_objective(batch, model, cfg, &grads);
    TrainMetrics m;
    m.mean_reward = batch.mean_reward();
    m.mean_ratio = st.mean_ratio;
    m.clip_fraction = st.clip_fraction;
    m.kl = st.kl;
    m.loss = st.loss;
    m.grad_norm = gradient_norm(grads);
    if (!std::isfinite(m.grad_norm) || !std::isfinite(st.loss)) {
        m.skipped = true;
        return m;
    }
    opt.step(model, grads, cfg.optimizer());
    return m;
}

void parallel_for(int n, int workers, const std::function<void(int)> & fn) {
    if (workers <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr err;
    std::mutex err_mu;
    for (int w = 0; w < std::min(workers, n); ++w) {
        pool.emplace_back([&] {
            for (int i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mu);
                    if (!err) {
                        err = std::current_exception();
                    }
                }
            }
        });
    }
    for (auto & t : pool) {
        t.join();
    }
    if (err) {
        std::rethrow_exception(err);
    }
}

RolloutBatch collect_rollouts(const Model & model, const Vocab & vocab, std::span<const Problem> problems,
                              const DecodeConfig & cfg, int group_size, std::uint64_t seed,
                              std::uint64_t batch_key, int workers) {
    RolloutBatch batch;
    batch.partition = cfg.response_partition();
    batch.groups.resize(problems.size());
    parallel_for(static_cast<int>(problems.size()), workers, [&](int i) {
        const Problem & p = problems[static_cast<std::size_t>(i)];
        const std::vector<int> prompt = prompt_tokens(vocab, p);
        RolloutGroup & group = batch.groups[static_cast<std::size_t>(i)];
        for (int s = 0; s < group_size; ++s) {
            std::mt19937_64 rng = substream(seed, "rollout", {batch_key, hash_string(p.id), static_cast<std::uint64_t>(s)});
            DecodeResult res = decode(model, prompt, cfg, rng, Vocab::kEos);
            Rollout r;
            r.problem_id = p.id;
            r.problem_index = i;
            r.text = vocab.response_text(res.response);
            r.reward = verify(r.text, p);
            r.response = std::move(res.response);
            r.trajectory = std::move(res.trajectory);
            group.samples.push_back(std::move(r));
        }
    });
    return batch;
}

}  // namespace mdlab
