#include "mdlab/runner.hpp"

#include "mdlab/diffusion.hpp"
#include "mdlab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace mdlab {

json to_json(const EvalReport & r) {
    json pk = json::object();
    for (const auto & [k, v] : r.pass_at_k) {
        pk["pass@" + std::to_string(k)] = v;
    }
    return json{{"model_tag", r.model_tag}, {"block_size", r.block_size}, {"shifted", r.shifted},
                {"split", r.split},         {"problems", r.problems},     {"n", r.samples},
                {"pass_at_k", pk},          {"pass1", r.pass1},           {"mean_steps", r.mean_steps}};
}

EvalReport evaluate(const Model & model, std::span<const Problem> problems, const DecodeConfig & base, int samples,
                    std::span<const int> ks, std::uint64_t seed, int workers, const std::string & model_tag,
                    std::vector<TraceRecord> * traces) {
    if (problems.empty() || samples < 1) {
        throw std::invalid_argument("evaluate: need problems and samples >= 1");
    }
    DecodeConfig dc = base;
    dc.mode = samples == 1 ? DecodeMode::greedy : DecodeMode::sample;
    const Vocab vocab;
    const std::size_t n = problems.size();
    std::vector<int> correct(n, 0);
    std::vector<long> steps(n, 0);
    std::vector<std::vector<TraceRecord>> per(n);
    parallel_for(static_cast<int>(n), workers, [&](int i) {
        const Problem & p = problems[static_cast<std::size_t>(i)];
        const auto prompt = prompt_tokens(vocab, p);
        for (int s = 0; s < samples; ++s) {
            std::mt19937_64 rng = substream(seed, "eval", {hash_string(p.id), static_cast<std::uint64_t>(s)});
            DecodeResult r = decode(model, prompt, dc, rng, Vocab::kEos);
            correct[i] += verify(vocab.response_text(r.response), p) > 0.0 ? 1 : 0;
            steps[i] += r.trajectory.num_steps();
            if (traces) {
                r.trace.prompt_id = p.id;
                r.trace.model_tag = model_tag;
                per[i].push_back(std::move(r.trace));
            }
        }
    });
    EvalReport rep;
    rep.model_tag = model_tag;
    rep.block_size = dc.block_size;
    rep.shifted = dc.shifted;
    rep.problems = static_cast<int>(n);
    rep.samples = samples;
    rep.split = std::string(to_string(problems.front().split));
    std::vector<std::pair<int, int>> nc;
    for (std::size_t i = 0; i < n; ++i) {
        nc.emplace_back(samples, correct[i]);
    }
    for (int k : ks) {
        rep.pass_at_k.emplace_back(k, pass_at_k(nc, k));
    }
    rep.pass1 = pass_at_k(nc, 1);
    rep.mean_steps = static_cast<double>(std::accumulate(steps.begin(), steps.end(), 0L)) / (n * samples);
    if (traces) {
        for (auto & v : per) {
            for (auto & t : v) {
                traces->push_back(std::move(t));
            }
        }
    }
    return rep;
}

std::vector<Problem> load_problems(const RunConfig & cfg) {
    if (!cfg.dataset_path.empty()) {
        return read_dataset(cfg.dataset_path);
    }
    return generate_dataset(cfg.dataset, derive_seed(cfg.seed, "data"));
}

std::vector<Problem> take_split(const std::vector<Problem> & all, Split split, int count) {
    std::vector<Problem> out = select_split(all, split);
    if (out.empty()) {
        throw std::invalid_argument("dataset has no " + std::string(to_string(split)) + " problems");
    }
    if (count > 0 && static_cast<std::size_t>(count) < out.size()) {
        out.resize(static_cast<std::size_t>(count));
    }
    return out;
}

double sft_lr_scale(const SftConfig & cfg, long step) {
    if (cfg.warmup_steps > 0 && step <= cfg.warmup_steps) {
        return static_cast<double>(step) / cfg.warmup_steps;
    }
    const double span = std::max(1L, static_cast<long>(cfg.steps) - cfg.warmup_steps);
    const double progress = std::clamp((step - cfg.warmup_steps) / span, 0.0, 1.0);
    return cfg.min_lr_ratio + (1.0 - cfg.min_lr_ratio) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

SftStepInfo sft_step(Model & model, AdamW & opt, std::span<const Problem> train, const RunConfig & cfg, long step) {
    if (train.empty()) {
        throw std::invalid_argument("sft: empty training split");
    }
    const Vocab vocab;
    const int R = cfg.response_len;
    std::mt19937_64 rng = substream(cfg.seed, "sft", {static_cast<std::uint64_t>(step)});
    std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
    Gradients grads = model.zero_gradients();
    SftStepInfo info;
    const double norm = 1.0 / (static_cast<double>(R) * cfg.sft.batch_size);
    for (int b = 0; b < cfg.sft.batch_size; ++b) {
        const Problem & p = train[pick(rng)];
        std::vector<int> x0 = prompt_tokens(vocab, p);
        const int P = static_cast<int>(x0.size());
        const auto resp = response_tokens(vocab, p, R);
        x0.insert(x0.end(), resp.begin(), resp.end());
        const CorruptionSample s = corrupt(x0, P, P + R, sample_mask_ratio(rng), model.config().mask_token_id, rng);
        const TrainingView v =
            blockwise_training_view(s, BlockPartition::aligned(R, cfg.sft.block_size).with_prefix(P), P);
        Graph g;
        Var loss = g.scale(mdm_loss(g, model.forward(g, v.tokens, v.positions, v.mask).logits, s, v.row_of), norm);
        info.loss += g.value(loss).item();
        g.backward(loss);
        model.accumulate(g, grads);
    }
    AdamWConfig oc;
    oc.learning_rate = cfg.sft.learning_rate;
    oc.grad_clip = cfg.sft.grad_clip;
    const double scale = sft_lr_scale(cfg.sft, step);
    info.lr = oc.learning_rate * scale;
    info.grad_norm = opt.step(model, grads, oc, scale);
    info.skipped = !std::isfinite(info.grad_norm) || !std::isfinite(info.loss);
    return info;
}

RlStepInfo rl_update(Model & model, AdamW & opt, std::span<const Problem> train, const RunConfig & cfg,
                     int block_size, bool shifted, int batch_id) {
    if (train.empty()) {
        throw std::invalid_argument("rl: empty training split");
    }
    std::vector<std::size_t> idx(train.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng = substream(cfg.seed, "batch", {static_cast<std::uint64_t>(batch_id)});
    const std::size_t take = std::min(idx.size(), static_cast<std::size_t>(cfg.train.batch_prompts));
    for (std::size_t i = 0; i < take; ++i) {
        std::swap(idx[i], idx[std::uniform_int_distribution<std::size_t>(i, idx.size() - 1)(rng)]);
    }
    std::vector<Problem> batch_problems;
    for (std::size_t i = 0; i < take; ++i) {
        batch_problems.push_back(train[idx[i]]);
    }
    const DecodeConfig dc = cfg.decode_config(block_size, shifted, DecodeMode::sample);
    RolloutBatch batch = collect_rollouts(model, Vocab(), batch_problems, dc, cfg.train.group_size, cfg.seed,
                                          static_cast<std::uint64_t>(batch_id), cfg.workers);
    RlStepInfo info;
    info.batch_id = batch_id;
    info.block_size = block_size;
    info.shifted = shifted;
    info.tokens = batch.num_tokens();
    long steps = 0;
    for (const auto & g : batch.groups) {
        for (const auto & s : g.samples) {
            steps += s.trajectory.num_steps();
        }
    }
    info.mean_steps = static_cast<double>(steps) / batch.num_trajectories();
    info.metrics = train_step(batch, model, cfg.train, opt);
    return info;
}

json to_json(const RlStepInfo & s, long step) {
    const TrainMetrics & m = s.metrics;
    return json{{"step", step},
                {"batch_id", s.batch_id},
                {"block_size", s.block_size},
                {"shifted", s.shifted},
                {"mean_reward", m.mean_reward},
                {"mean_ratio", m.mean_ratio},
                {"clip_fraction", m.clip_fraction},
                {"kl", m.kl},
                {"loss", m.loss},
                {"grad_norm", m.grad_norm},
                {"tokens", s.tokens},
                {"mean_steps", s.mean_steps},
                {"skipped", m.skipped}};
}

json to_json(const PhaseRecord & r) {
    return json{{"index", r.index},
                {"block_size", r.block_size},
                {"phase", std::string(to_string(r.phase))},
                {"batch_ids", r.batch_ids},
                {"step_begin", r.step_begin},
                {"step_end", r.step_end},
                {"val_pass1", r.val_pass1},
                {"mean_reward", r.mean_reward},
                {"checkpoint", r.checkpoint}};
}

PhaseRecord phase_record_from_json(const json & j) {
    PhaseRecord r;
    r.index = j.at("index").get<int>();
    r.block_size = j.at("block_size").get<int>();
    r.phase = j.at("phase").get<std::string>() == "aligned" ? Phase::aligned : Phase::shifted;
    r.batch_ids = j.at("batch_ids").get<std::vector<int>>();
    r.step_begin = j.at("step_begin").get<long>();
    r.step_end = j.at("step_end").get<long>();
    r.val_pass1 = j.at("val_pass1").get<double>();
    r.mean_reward = j.at("mean_reward").get<double>();
    r.checkpoint = j.at("checkpoint").get<std::string>();
    return r;
}

namespace {

// Keeps only the records for which keep(record) holds.
void truncate_jsonl(const fs::path & path, const std::function<bool(const json &)> & keep) {
    if (!fs::exists(path)) {
        return;
    }
    std::vector<json> kept;
    for (const auto & r : read_jsonl(path)) {
        if (keep(r)) {
            kept.push_back(r);
        }
    }
    atomic_write(path, to_jsonl(kept));
}

}  // namespace

CurriculumResult run_curriculum(Model & model, std::span<const Problem> train, std::span<const Problem> validation,
                                const RunConfig & cfg, const fs::path & run_dir, bool resume,
                                const json & manifest_base) {
    cfg.validate();
    const auto phases = curriculum_phases(cfg.curriculum, cfg.seed);
    const fs::path manifest_path = run_dir / "manifest.json";
    CurriculumResult result;
    json manifest = manifest_base;
    AdamW opt(model);
    long step = 0;
    std::size_t start = 0;

    if (resume && fs::exists(manifest_path)) {
        manifest = json::parse(read_file(manifest_path));
        for (const auto & r : manifest.at("phases")) {
            result.phases.push_back(phase_record_from_json(r));
        }
        if (!result.phases.empty()) {
            const Checkpoint ck = load_checkpoint(run_dir / result.phases.back().checkpoint);
            model = ck.model();
            if (ck.optimizer) {
                opt.state() = *ck.optimizer;
            }
            step = ck.step;
        }
        start = result.phases.size();
        truncate_jsonl(run_dir / "metrics.jsonl", [&](const json & r) { return r.at("step").get<long>() <= step; });
        truncate_jsonl(run_dir / "validation.jsonl",
                       [&](const json & r) { return r.at("index").get<std::size_t>() < start; });
    } else {
        manifest["phases"] = json::array();
    }
    manifest["b0"] = cfg.curriculum.b0;
    manifest["b_hat"] = cfg.curriculum.b_hat;
    manifest["batches_per_stage"] = cfg.curriculum.batches_per_stage;
    manifest["seed"] = cfg.seed;
    manifest["schedule"] = json::array();
    for (std::size_t i = 0; i < phases.size(); ++i) {
        manifest["schedule"].push_back({{"index", i},
                                        {"block_size", phases[i].block_size},
                                        {"phase", std::string(to_string(phases[i].phase))},
                                        {"delta", phases[i].delta},
                                        {"batch_ids", phases[i].batch_ids}});
    }
    manifest["status"] = "running";
    atomic_write(manifest_path, manifest.dump(2));

    JsonlWriter metrics(run_dir / "metrics.jsonl", resume);
    JsonlWriter val_log(run_dir / "validation.jsonl", resume);
    for (std::size_t i = start; i < phases.size(); ++i) {
        const CurriculumStage & st = phases[i];
        const bool shifted = st.phase == Phase::shifted;
        PhaseRecord rec;
        rec.index = static_cast<int>(i);
        rec.block_size = st.block_size;
        rec.phase = st.phase;
        rec.batch_ids = st.batch_ids;
        rec.step_begin = step;
        double reward = 0.0;
        for (int batch_id : st.batch_ids) {
            const RlStepInfo info = rl_update(model, opt, train, cfg, st.block_size, shifted, batch_id);
            ++step;
            json line = to_json(info, step);
            line["phase_index"] = i;
            metrics.write(line);
            reward += info.metrics.mean_reward;
            if (info.metrics.skipped) {
                result.failed = true;
                result.failure = "non-finite loss or gradient at step " + std::to_string(step) + " (B=" +
                                 std::to_string(st.block_size) + ", " + std::string(to_string(st.phase)) + ")";
                break;
            }
        }
        if (result.failed) {
            manifest["status"] = "failed";
            manifest["failure"] = result.failure;
            atomic_write(manifest_path, manifest.dump(2));
            return result;
        }
        rec.step_end = step;
        rec.mean_reward = st.batch_ids.empty() ? 0.0 : reward / st.batch_ids.size();
        const DecodeConfig vdc = cfg.decode_config(st.block_size, false, DecodeMode::greedy);
        const std::vector<int> ks{1};
        rec.val_pass1 = evaluate(model, validation, vdc, 1, ks, cfg.seed, cfg.workers, cfg.model_tag).pass1;
        rec.checkpoint = "checkpoints/phase" + std::to_string(i) + "_b" + std::to_string(st.block_size) + "_" +
                         std::string(to_string(st.phase)) + ".ckpt";
        save_checkpoint(run_dir / rec.checkpoint, model, &opt, step,
                        json{{"phase_index", i}, {"block_size", st.block_size}, {"phase", to_string(st.phase)}});
        val_log.write(to_json(rec));
        result.phases.push_back(rec);
        manifest["phases"].push_back(to_json(rec));
        atomic_write(manifest_path, manifest.dump(2));
    }
    int best = -1;
    for (const auto & r : result.phases) {
        if (r.block_size == cfg.curriculum.b_hat && (best < 0 || r.val_pass1 > result.phases[best].val_pass1)) {
            best = r.index;
        }
    }
    manifest["status"] = "completed";
    manifest["final_checkpoint"] = result.phases.back().checkpoint;
    manifest["best_checkpoint"] = best >= 0 ? json(result.phases[best].checkpoint) : json(nullptr);
    atomic_write(manifest_path, manifest.dump(2));
    return result;
}

}  // namespace mdlab
