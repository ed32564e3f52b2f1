#pragma once

#include "mdlab/decoder.hpp"
#include "mdlab/model.hpp"
#include "mdlab/optimizer.hpp"
#include "mdlab/tasks.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace mdlab {

enum class AdvantageMode { sequence, step_gae };

struct TrainConfig {
    double epsilon = 0.2;
    double beta = 0.01;
    double learning_rate = 3e-4;
    int group_size = 8;
    int batch_prompts = 32;
    double gamma = 1.0;
    double lambda = 0.95;
    AdvantageMode advantage_mode = AdvantageMode::sequence;
    double value_coef = 0.5;
    double grad_clip = 1.0;
    double weight_decay = 0.0;

    void validate() const;
    AdamWConfig optimizer() const;
};

struct Rollout {
    std::string problem_id;
    int problem_index = 0;  // index into the prompt list the batch was built from
    Trajectory trajectory;
    std::vector<int> response;
    std::string text;
    double reward = 0.0;
};

struct RolloutGroup {
    std::vector<Rollout> samples;
};

// One RL unit of work: G trajectories per prompt from a frozen snapshot, all
// decoded under `partition`.
struct RolloutBatch {
    std::vector<RolloutGroup> groups;
    BlockPartition partition;

    int num_trajectories() const;
    int num_tokens() const;
    double mean_reward() const;
};

// (r - mean) / (std + 1e-6), population std.
std::vector<double> group_advantages(std::span<const double> rewards);

// min(rho A, clip(rho, 1-eps, 1+eps) A)
double clipped_term(double rho, double advantage, double epsilon);

// delta_t = r_t + gamma v_{t+1} - v_t; A_t = sum_l (gamma lambda)^l delta_{t+l}.
// `values` has T+1 entries, the last being the terminal value.
std::vector<double> gae_step_advantages(std::span<const double> step_rewards, std::span<const double> values,
                                        double gamma, double lambda);

// Per-step graph terms of a trajectory replayed under the current parameters.
struct StepTerms {
    Var logp;       // [n_t] log-prob of each token decoded at the step
    Var logp_rows;  // [n_t, V] full scaled log-distribution at those positions
    Var pooled;     // [d_model] mean final hidden state over those positions
};
std::vector<StepTerms> trajectory_terms(Graph & g, const Model & model, const Trajectory & traj);

// Flattened in step order, then ascending position.
std::vector<double> policy_logprobs(const Model & model, const Trajectory & traj);

struct ObjectiveStats {
    double loss = 0.0;       // -J (+ value loss on the step_gae path)
    double objective = 0.0;  // J including the KL penalty
    double kl = 0.0;         // mean per-token KL(pi_theta || pi_old)
    double mean_ratio = 0.0;
    double clip_fraction = 0.0;
    double value_loss = 0.0;
    int tokens = 0;
};

// J = mean over trajectories of sum_t (1/|tau_t|) sum_o C_eps(rho, A) - beta KL.
// When `grads` is non-null, d(loss)/d(theta) is added into it.
ObjectiveStats tracerl_objective(const RolloutBatch & batch, const Model & model, const TrainConfig & cfg,
                                 Gradients * grads = nullptr);

double kl_term(const RolloutBatch & batch, const Model & model);

struct TrainMetrics {
    double mean_reward = 0.0;
    double mean_ratio = 0.0;
    double clip_fraction = 0.0;
    double kl = 0.0;
    double loss = 0.0;
    double grad_norm = 0.0;
    bool skipped = false;
};

// One gradient step on -J. A non-finite gradient skips the update.
TrainMetrics train_step(const RolloutBatch & batch, Model & model, const TrainConfig & cfg, AdamW & opt);

// Decodes `group_size` samples per problem. Each sample owns the RNG stream
// (seed, "rollout", batch_key, problem id, sample id), so results do not
// depend on `workers`.
RolloutBatch collect_rollouts(const Model & model, const Vocab & vocab, std::span<const Problem> problems,
                              const DecodeConfig & cfg, int group_size, std::uint64_t seed,
                              std::uint64_t batch_key, int workers = 1);

// Runs fn(i) for i in [0, n) on up to `workers` threads.
void parallel_for(int n, int workers, const std::function<void(int)> & fn);

}  // namespace mdlab
