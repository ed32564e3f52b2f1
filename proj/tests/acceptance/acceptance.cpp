// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--work DIR] [--criterion N]...
//
// Criteria 8-10 start from the SFT run of criterion 7 and reuse it when
// DIR/sft/final.ckpt already exists.

#include "mdlab/commands.hpp"
#include "mdlab/diffusion.hpp"
#include "mdlab/schedule.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

using namespace mdlab;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char * f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string join(const std::vector<double> & v) {
    std::string s;
    for (double x : v) {
        s += (s.empty() ? "" : " ") + fmt("%.3f", x);
    }
    return s;
}

fs::path fresh(const fs::path & p) {
    fs::remove_all(p);
    return p;
}

// Desk-scale settings shared by the end-to-end criteria.
RunConfig base_config(const fs::path & out) {
    RunConfig c;
    c.output_dir = out.string();
    c.eval.count = 200;
    return c;
}

constexpr long kRlStartStep = 1500;

fs::path sft_dir(const fs::path & work) { return work / "sft"; }
fs::path sft_dataset(const fs::path & work) { return sft_dir(work) / "dataset.jsonl"; }
fs::path rl_start(const fs::path & work) {
    return sft_dir(work) / "checkpoints" / ("step_" + std::to_string(kRlStartStep) + ".ckpt");
}

void ensure_sft(const fs::path & work) {
    if (!fs::exists(sft_dir(work) / "final.ckpt")) {
        cmd_sft(base_config(fresh(sft_dir(work))));
    }
}

RunConfig rl_config(const fs::path & work, const fs::path & out, std::uint64_t seed) {
    RunConfig c = base_config(out);
    c.seed = seed;
    c.dataset_path = sft_dataset(work).string();
    return c;
}

// ---------------------------------------------------------------------------

Model perturbed(Model m, double scale, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, scale);
    for (auto & p : m.params()) {
        for (double & v : p.value.data()) {
            v += n(rng);
        }
    }
    return m;
}

ModelConfig small_model() {
    ModelConfig c;
    c.vocab_size = Vocab().size();
    c.d_model = 16;
    c.n_layers = 2;
    c.n_heads = 2;
    c.d_ff = 32;
    c.max_len = 32;
    return c;
}

std::vector<Problem> some_problems(int n, std::uint64_t seed) {
    DatasetSpec spec;
    spec.count = std::max(n, 20);
    auto ds = generate_dataset(spec, seed);
    ds.resize(static_cast<std::size_t>(n));
    return ds;
}

RolloutBatch mixed_batch(const Model & m, int B, int G, int prompts, std::uint64_t seed, double eta = 0.6) {
    DecodeConfig c;
    c.block_size = B;
    c.max_blocks = 8 / B;
    c.eta = eta;
    c.mode = DecodeMode::sample;
    const auto probs = some_problems(prompts, seed);
    RolloutBatch batch = collect_rollouts(m, Vocab(), probs, c, G, seed, 0);
    for (auto & g : batch.groups) {
        for (std::size_t i = 0; i < g.samples.size(); ++i) {
            g.samples[i].reward = (i + seed) % 2 == 0 ? 1.0 : 0.0;
        }
    }
    return batch;
}

Outcome gradient_check() {
    const double eps = 1e-5;
    double worst_model = 0.0;
    double worst_rl = 0.0;
    ModelConfig desk;
    desk.vocab_size = Vocab().size();
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Model m(desk, seed);
        std::mt19937_64 rng(seed + 100);
        std::uniform_int_distribution<int> tok(0, desk.vocab_size - 1);
        const int prompt_len = 6;
        const int L = prompt_len + 8;
        std::vector<int> x0(L);
        for (int & x : x0) {
            x = tok(rng);
        }
        const int B = 1 << (seed % 4);
        CorruptionSample s = corrupt(x0, prompt_len, L, 0.3 + 0.07 * seed, desk.mask_token_id, rng);
        auto p = BlockPartition::aligned(L, B);
        std::vector<Parameter *> ps;
        for (auto & q : m.params()) {
            ps.push_back(&q);
        }
        auto loss = [&](Graph & g) { return mdm_loss(g, m.forward(g, s.xt, p).logits, s); };
        std::mt19937_64 pick(seed);
        worst_model = std::max(worst_model, finite_diff_check(loss, ps, eps, 4, pick));

        Model base(small_model(), 50 + seed);
        for (auto & q : base.params()) {
            if (q.name.find(".g") == std::string::npos) {
                for (double & v : q.value.data()) {
                    v *= 1.5;
                }
            }
        }
        RolloutBatch batch = mixed_batch(base, B, 3, 2, seed);
        Model cur = perturbed(base, 0.05, seed);
        TrainConfig cfg;
        cfg.beta = 0.05;
        std::vector<Parameter *> cps;
        for (auto & q : cur.params()) {
            cps.push_back(&q);
        }
        Gradients grads = cur.zero_gradients();
        tracerl_objective(batch, cur, cfg, &grads);
        std::mt19937_64 crng(seed + 7);
        for (std::size_t pi = 0; pi < cps.size(); ++pi) {
            auto data = cps[pi]->value.data();
            std::uniform_int_distribution<std::size_t> at(0, data.size() - 1);
            for (int k = 0; k < 2; ++k) {
                const std::size_t i = at(crng);
                const double orig = data[i];
                data[i] = orig + eps;
                const double up = tracerl_objective(batch, cur, cfg).loss;
                data[i] = orig - eps;
                const double down = tracerl_objective(batch, cur, cfg).loss;
                data[i] = orig;
                const double num = (up - down) / (2 * eps);
                const double a = grads[pi][i];
                worst_rl = std::max(worst_rl, std::abs(a - num) / std::max({1.0, std::abs(a), std::abs(num)}));
            }
        }
    }
    return {worst_model < 1e-4 && worst_rl < 1e-4,
            fmt("max rel err model+mdm_loss %.2e, TraceRL objective %.2e (< 1e-4, 10 seeds)", worst_model,
                worst_rl)};
}

// ---------------------------------------------------------------------------

double oracle_local_strict(const std::vector<int> & pi) {
    const std::size_t n = pi.size();
    int hits = 0;
    for (std::size_t k = 0; k < n; ++k) {
        int lo = pi[k];
        for (std::size_t j = k; j < n; ++j) {
            lo = std::min(lo, pi[j]);
        }
        hits += pi[k] == lo ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

Outcome local_strict_oracle() {
    long checked = 0;
    long bad = 0;
    for (int n = 1; n <= 6; ++n) {
        std::vector<int> pi(n);
        std::iota(pi.begin(), pi.end(), 1);
        do {
            bad += local_strict(pi) != oracle_local_strict(pi) ? 1 : 0;
            ++checked;
        } while (std::next_permutation(pi.begin(), pi.end()));
    }
    std::mt19937_64 rng(2024);
    for (int n : {7, 8}) {
        std::vector<int> pi(n);
        std::iota(pi.begin(), pi.end(), 1);
        for (int r = 0; r < 1000; ++r) {
            std::shuffle(pi.begin(), pi.end(), rng);
            bad += local_strict(pi) != oracle_local_strict(pi) ? 1 : 0;
            ++checked;
        }
    }
    bool anchors = true;
    for (int n = 1; n <= 64; ++n) {
        std::vector<int> pi(n);
        std::iota(pi.begin(), pi.end(), 1);
        anchors = anchors && local_strict(pi) == 1.0;
        std::reverse(pi.begin(), pi.end());
        anchors = anchors && local_strict(pi) == 1.0 / n;
    }
    return {bad == 0 && anchors,
            fmt("%ld permutations, %ld disagreements; identity=1 and reverse=1/n for n<=64: %s", checked, bad,
                anchors ? "yes" : "no")};
}

// ---------------------------------------------------------------------------

Outcome ar_limit(const fs::path & work) {
    std::vector<TraceRecord> traces;
    const auto probs = some_problems(100, 5);
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        Model m(small_model(), seed);
        for (double eta : {0.0, 0.9}) {
            DecodeConfig c;
            c.block_size = 1;
            c.max_blocks = 8;
            c.eta = eta;
            for (const auto & p : probs) {
                std::mt19937_64 rng(seed);
                traces.push_back(decode(m, prompt_tokens(Vocab(), p), c, rng, Vocab::kEos).trace);
            }
        }
    }
    if (fs::exists(sft_dir(work) / "final.ckpt")) {
        const fs::path out = fresh(work / "c3_eval");
        RunConfig cfg = base_config(out);
        cfg.dataset_path = sft_dataset(work).string();
        cmd_eval(cfg, sft_dir(work) / "final.ckpt", EvalOptions{1, false, true});
        for (auto & t : read_traces(out / "traces.jsonl")) {
            traces.push_back(std::move(t));
        }
    }
    int exact = 0;
    for (const auto & t : traces) {
        exact += local_strict(linearize(t)) == 1.0 ? 1 : 0;
    }
    const auto s = aggregate_localstrict(traces);
    return {exact == static_cast<int>(traces.size()) && s.mean == 1.0,
            fmt("%d/%zu greedy B=1 traces with LocalStrict exactly 1, corpus mean %.3f", exact, traces.size(),
                s.mean)};
}

// ---------------------------------------------------------------------------

Outcome degenerate_loss() {
    double worst = 0.0;
    bool empty_zero = true;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Model m(small_model(), seed);
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<int> tok(4, m.config().vocab_size - 1);
        const int L = 12;
        std::vector<int> x0(L);
        for (int & x : x0) {
            x = tok(rng);
        }
        CorruptionSample s = corrupt(x0, 4, L, 1.0, m.config().mask_token_id, rng);
        const auto p = BlockPartition::aligned(L, 4);
        Graph g(false);
        Var logits = m.forward(g, s.xt, p).logits;
        const double loss = g.value(mdm_loss(g, logits, s))[0];
        const Tensor lg = g.value(logits);
        const int V = m.config().vocab_size;
        double ce = 0.0;
        for (int i = 4; i < L; ++i) {
            double mx = -INFINITY;
            for (int v = 0; v < V; ++v) {
                mx = std::max(mx, lg[static_cast<std::size_t>(i * V + v)]);
            }
            double z = 0.0;
            for (int v = 0; v < V; ++v) {
                z += std::exp(lg[static_cast<std::size_t>(i * V + v)] - mx);
            }
            ce += mx + std::log(z) - lg[static_cast<std::size_t>(i * V + x0[i])];
        }
        worst = std::max(worst, std::abs(loss - ce));

        CorruptionSample none;
        none.x0 = x0;
        none.xt = x0;
        none.t = 0.5;
        none.span_begin = 4;
        none.span_end = L;
        Graph h;
        Var l0 = mdm_loss(h, m.forward(h, none.xt, p).logits, none);
        empty_zero = empty_zero && h.value(l0)[0] == 0.0;
    }
    return {worst <= 1e-12 && empty_zero,
            fmt("t=1 loss vs summed CE max |diff| %.2e (<= 1e-12); empty mask gives 0 exactly: %s", worst,
                empty_zero ? "yes" : "no")};
}

// ---------------------------------------------------------------------------

Outcome snapshot_identities() {
    double ratio_err = 0.0;
    double kl_abs = 0.0;
    double clip = 0.0;
    double grad_diff = 0.0;
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        Model m(small_model(), 30 + seed);
        for (auto & q : m.params()) {
            if (q.name.find(".g") == std::string::npos) {
                for (double & v : q.value.data()) {
                    v *= 1.5;
                }
            }
        }
        const int B = 1 << seed;
        RolloutBatch batch = mixed_batch(m, B, 4, 3, seed);
        TrainConfig cfg;
        for (const auto & group : batch.groups) {
            for (const auto & s : group.samples) {
                const auto now = policy_logprobs(m, s.trajectory);
                std::size_t k = 0;
                for (const auto & st : s.trajectory.steps) {
                    for (const auto & d : st.tokens) {
                        ratio_err = std::max(ratio_err, std::abs(std::exp(now[k++] - d.logprob) - 1.0));
                    }
                }
            }
        }
        Gradients trace = m.zero_gradients();
        const auto st = tracerl_objective(batch, m, cfg, &trace);
        kl_abs = std::max({kl_abs, std::abs(st.kl), std::abs(kl_term(batch, m))});
        clip = std::max(clip, st.clip_fraction);

        Gradients reinforce = m.zero_gradients();
        const double N = batch.num_trajectories();
        for (const auto & group : batch.groups) {
            std::vector<double> r;
            for (const auto & s : group.samples) {
                r.push_back(s.reward);
            }
            const auto adv = group_advantages(r);
            for (std::size_t i = 0; i < group.samples.size(); ++i) {
                Graph g;
                auto terms = trajectory_terms(g, m, group.samples[i].trajectory);
                Var total{};
                for (const auto & t : terms) {
                    const int n = g.value(t.logp).size();
                    Var s = g.weighted_sum(t.logp, std::vector<double>(n, -adv[i] / (n * N)));
                    total = total.valid() ? g.add(total, s) : s;
                }
                g.backward(total);
                m.accumulate(g, reinforce);
            }
        }
        for (std::size_t p = 0; p < trace.size(); ++p) {
            for (std::size_t i = 0; i < trace[p].size(); ++i) {
                grad_diff = std::max(grad_diff, std::abs(trace[p][i] - reinforce[p][i]));
            }
        }
    }
    const bool ok = ratio_err <= 1e-10 && kl_abs <= 1e-12 && clip == 0.0 && grad_diff <= 1e-8;
    return {ok, fmt("max |rho-1| %.1e, |KL| %.1e, clip fraction %.0f, |g_TraceRL - g_REINFORCE| %.1e", ratio_err,
                    kl_abs, clip, grad_diff)};
}

// ---------------------------------------------------------------------------

Outcome replay_consistency() {
    double worst = 0.0;
    int count = 0;
    int tokens = 0;
    const auto probs = some_problems(25, 9);
    for (int b = 0; b < 4; ++b) {
        const int B = 1 << b;
        Model m(small_model(), 70 + b);
        for (int i = 0; i < 25; ++i) {
            DecodeConfig c;
            c.block_size = B;
            c.max_blocks = 8 / B;
            c.eta = 0.3 + 0.02 * i;
            c.temperature = 0.7 + 0.05 * (i % 7);
            c.mode = DecodeMode::sample;
            c.shifted = B > 1 && i % 3 == 0;
            std::mt19937_64 rng(1000 * B + i);
            const auto r = decode(m, prompt_tokens(Vocab(), probs[i]), c, rng, Vocab::kEos);
            const auto replay = policy_logprobs(m, r.trajectory);
            std::size_t k = 0;
            for (const auto & st : r.trajectory.steps) {
                for (const auto & d : st.tokens) {
                    worst = std::max(worst, std::abs(replay[k++] - d.logprob));
                }
            }
            tokens += static_cast<int>(k);
            ++count;
        }
    }
    return {worst <= 1e-10 && count == 100,
            fmt("%d trajectories (%d tokens) over B in {1,2,4,8}: max |replay - recorded| %.1e", count, tokens,
                worst)};
}

// ---------------------------------------------------------------------------

Outcome sft_learnability(const fs::path & work) {
    const RunConfig cfg = base_config(fresh(sft_dir(work)));
    cmd_sft(cfg);
    RunConfig ecfg = base_config(fresh(work / "c7_eval"));
    ecfg.dataset_path = sft_dataset(work).string();
    ecfg.eval.count = 0;
    const json m = cmd_eval(ecfg, sft_dir(work) / "final.ckpt", EvalOptions{2, false, false});
    const double acc = m["report"]["pass1"].get<double>();
    const int n = m["report"]["problems"].get<int>();
    return {acc >= 0.95, fmt("greedy exact match at B=2 %.3f on %d validation problems after %ld steps (>= 0.95)",
                             acc, n, cfg.sft.steps)};
}

Outcome rl_improves(const fs::path & work) {
    ensure_sft(work);
    std::vector<double> gains;
    double base = 0.0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        RunConfig cfg = rl_config(work, fresh(work / ("c8_rl_s" + std::to_string(seed))), seed);
        cfg.rl.block_size = 2;
        const json m = cmd_rl(cfg, rl_start(work));
        base = m["initial_val_pass1"].get<double>();
        gains.push_back(m["final_val_pass1"].get<double>() - base);
    }
    const double med = median(gains);
    return {med >= 0.05, fmt("SFT step %ld pass@1 %.3f at B=2, gains over 3 seeds [%s], median %+.3f (>= +0.05)",
                             kRlStartStep, base, join(gains).c_str(), med)};
}

std::vector<double> read_curve(const fs::path & csv) {
    std::istringstream in(read_file(csv));
    std::string line;
    std::getline(in, line);
    std::vector<double> v;
    while (std::getline(in, line)) {
        v.push_back(std::stod(line.substr(line.rfind(',') + 1)));
    }
    return v;
}

Outcome curriculum_vs_direct(const fs::path & work) {
    ensure_sft(work);
    std::vector<double> tstar;
    std::vector<double> direct;
    double worst_drop = 0.0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const std::string tag = std::to_string(seed);
        RunConfig t = rl_config(work, fresh(work / ("c9_tstar_s" + tag)), seed);
        cmd_tstar(t, rl_start(work));
        const auto curve = read_curve(work / ("c9_tstar_s" + tag) / "validation_curve.csv");
        for (std::size_t i = 1; i < curve.size(); ++i) {
            worst_drop = std::max(worst_drop, curve[i - 1] - curve[i]);
        }
        tstar.push_back(curve.back());

        RunConfig d = rl_config(work, fresh(work / ("c9_direct_s" + tag)), seed);
        const int stages = static_cast<int>(stage_block_sizes(t.curriculum.b0, t.curriculum.b_hat).size());
        d.rl.block_size = t.curriculum.b_hat;
        d.rl.updates = stages * t.curriculum.batches_per_stage;
        d.rl.eval_every = t.curriculum.batches_per_stage / 2;
        direct.push_back(cmd_rl(d, rl_start(work))["final_val_pass1"].get<double>());
    }
    const double mt = median(tstar);
    const double md = median(direct);
    return {mt >= md && worst_drop <= 0.15,
            fmt("B=8 pass@1 T* [%s] median %.3f vs direct [%s] median %.3f (need >=); largest phase-over-phase "
                "drop %.3f (<= 0.15)",
                join(tstar).c_str(), mt, join(direct).c_str(), md, worst_drop)};
}

Outcome schedule_probe(const fs::path & work) {
    ensure_sft(work);
    const fs::path ts = work / "c10_tstar";
    const RunConfig t = rl_config(work, fresh(ts), 1);
    cmd_tstar(t, rl_start(work));

    RunConfig e = rl_config(work, fresh(work / "c10_eval"), 1);
    e.eval.count = 0;
    cmd_eval(e, ts / "final.ckpt", EvalOptions{t.curriculum.b_hat, false, true});
    const fs::path traces_file = work / "c10_eval" / "traces.jsonl";
    const auto traces = read_traces(traces_file);

    RunConfig a = rl_config(work, fresh(work / "c10_analyze"), 1);
    cmd_analyze(a, AnalyzeOptions{{traces_file}, 0});
    const auto s = aggregate_localstrict(traces);
    int grids = 0;
    int grid_ok = 0;
    for (const auto & entry : fs::directory_iterator(work / "c10_analyze" / "heatmaps")) {
        if (entry.path().filename() == "index.csv") {
            continue;
        }
        const HeatmapGrid g = parse_heatmap(read_file(entry.path()));
        int mx = 0;
        for (const auto & row : g.rows) {
            for (int v : row) {
                mx = std::max(mx, v);
            }
        }
        ++grids;
        grid_ok += mx == g.num_steps ? 1 : 0;
    }
    const double lower = 1.0 / s.mean_length;
    const bool ok = s.count >= 200 && s.mean > lower && s.mean < 1.0 && grids == s.count && grid_ok == grids;
    return {ok, fmt("%d traces at B=%d, mean LocalStrict %.4f in (1/n=%.4f, 1); %d/%d heatmaps with max = T", s.count,
                    t.curriculum.b_hat, s.mean, lower, grid_ok, grids)};
}

// ---------------------------------------------------------------------------

std::map<std::string, std::string> snapshot_tree(const fs::path & dir) {
    std::map<std::string, std::string> files;
    for (const auto & e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) {
            files[fs::relative(e.path(), dir).generic_string()] = read_file(e.path());
        }
    }
    return files;
}

// Runs `run` twice into the same directory and compares every file.
std::pair<int, std::string> rerun_identical(const fs::path & dir, const std::function<void()> & run) {
    fresh(dir);
    run();
    const auto first = snapshot_tree(dir);
    fresh(dir);
    run();
    const auto second = snapshot_tree(dir);
    if (first.size() != second.size()) {
        return {0, "file set differs"};
    }
    for (const auto & [name, bytes] : first) {
        auto it = second.find(name);
        if (it == second.end() || it->second != bytes) {
            return {0, name + " differs"};
        }
    }
    return {static_cast<int>(first.size()), ""};
}

Outcome determinism(const fs::path & work) {
    const fs::path root = work / "c11";
    fs::create_directories(root);
    auto small = [&](const fs::path & out) {
        RunConfig c = base_config(out);
        c.dataset.count = 400;
        c.sft.steps = 40;
        c.sft.warmup_steps = 10;
        c.sft.log_every = 10;
        c.sft.eval_every = 20;
        c.sft.checkpoint_every = 20;
        c.eval.count = 16;
        c.train.batch_prompts = 4;
        c.train.group_size = 4;
        c.rl.updates = 3;
        c.rl.eval_every = 1;
        c.curriculum.b_hat = 4;
        c.curriculum.batches_per_stage = 2;
        c.workers = 2;
        return c;
    };
    const fs::path sft = root / "sft";
    const fs::path ckpt = sft / "final.ckpt";
    const fs::path data = sft / "dataset.jsonl";
    std::vector<std::pair<std::string, std::function<void()>>> cmds = {
        {"sft", [&] { cmd_sft(small(sft)); }},
        {"rl",
         [&] {
             RunConfig c = small(root / "rl");
             c.dataset_path = data.string();
             cmd_rl(c, ckpt);
         }},
        {"tstar",
         [&] {
             RunConfig c = small(root / "tstar");
             c.dataset_path = data.string();
             cmd_tstar(c, ckpt);
         }},
        {"decode",
         [&] {
             RunConfig c = small(root / "decode");
             c.dataset_path = data.string();
             cmd_decode(c, ckpt, DecodeOptions{4, false, true, ""});
         }},
        {"eval",
         [&] {
             RunConfig c = small(root / "eval");
             c.dataset_path = data.string();
             c.eval.samples = 4;
             c.eval.ks = {1, 2, 4};
             cmd_eval(c, ckpt, EvalOptions{2, true, true});
         }},
        {"analyze",
         [&] {
             cmd_analyze(small(root / "analyze"), AnalyzeOptions{{root / "decode" / "traces.jsonl"}, 4});
         }},
    };
    std::string detail;
    bool ok = true;
    for (const auto & [name, run] : cmds) {
        const auto [files, why] = rerun_identical(root / name, run);
        ok = ok && why.empty() && files > 0;
        detail += (detail.empty() ? "" : ", ") + name + (why.empty() ? " " + std::to_string(files) + " files" : ": " + why);
    }
    return {ok, "byte-identical reruns: " + detail};
}

}  // namespace

int main(int argc, char ** argv) {
    CLI::App app{"Acceptance criteria"};
    std::string work = "acceptance_work";
    std::vector<int> only;
    app.add_option("--work", work, "Scratch directory");
    app.add_option("--criterion", only, "Run only these criteria")->check(CLI::Range(1, 11));
    CLI11_PARSE(app, argc, argv);
    const fs::path dir = fs::absolute(work);
    fs::create_directories(dir);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"gradient correctness", gradient_check},
        {"LocalStrict oracle equivalence", local_strict_oracle},
        {"AR-limit anchor", [&] { return ar_limit(dir); }},
        {"degenerate loss cases", degenerate_loss},
        {"ratio/KL at snapshot", snapshot_identities},
        {"trajectory self-consistency", replay_consistency},
        {"SFT learnability", [&] { return sft_learnability(dir); }},
        {"RL improves reward", [&] { return rl_improves(dir); }},
        {"curriculum vs direct scaling", [&] { return curriculum_vs_direct(dir); }},
        {"schedule non-canonicality probe", [&] { return schedule_probe(dir); }},
        {"determinism", [&] { return determinism(dir); }},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) {
            continue;
        }
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception & e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << id << " " << criteria[i].first << ": "
                  << o.detail << fmt(" [%.1fs]", secs) << std::endl;
        failed += o.pass ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
}
