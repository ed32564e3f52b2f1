#include "mdlab/commands.hpp"

#include "mdlab/rng.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

namespace mdlab {

namespace {

void prepare_run_dir(const fs::path & dir, bool resume) {
    if (fs::exists(dir)) {
        if (!fs::is_directory(dir)) {
            throw FileError("output path " + dir.string() + " exists and is not a directory");
        }
        if (!resume && !fs::is_empty(dir)) {
            throw FileError("output directory " + dir.string() + " is not empty; choose a fresh directory");
        }
    }
    fs::create_directories(dir);
}

void require_file(const fs::path & p, const std::string & what) {
    if (!fs::is_regular_file(p)) {
        throw FileError(what + " " + p.string() + " does not exist");
    }
}

// Lists files under `dir` (relative, sorted), excluding the manifest itself.
json list_outputs(const fs::path & dir) {
    std::vector<std::string> files;
    for (const auto & e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) {
            const std::string rel = fs::relative(e.path(), dir).generic_string();
            if (rel != "manifest.json") {
                files.push_back(rel);
            }
        }
    }
    std::sort(files.begin(), files.end());
    return files;
}

json base_manifest(const std::string & command, const RunConfig & cfg) {
    return json{{"command", command}, {"seed", cfg.seed}, {"model_tag", cfg.model_tag}};
}

void finish_manifest(const fs::path & dir, json & manifest, const std::string & status) {
    manifest["status"] = status;
    manifest["outputs"] = list_outputs(dir);
    atomic_write(dir / "manifest.json", manifest.dump(2));
}

Model load_model(const fs::path & checkpoint, const RunConfig & cfg) {
    require_file(checkpoint, "checkpoint");
    const Checkpoint ck = load_checkpoint(checkpoint);
    if (!(ck.config == cfg.model)) {
        throw std::invalid_argument("checkpoint " + checkpoint.string() +
                                    " was written for a different model config than the run config");
    }
    return ck.model();
}

void write_config(const fs::path & dir, const RunConfig & cfg) {
    atomic_write(dir / "config.json", to_json(cfg).dump(2));
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Drops data rows of a CSV whose leading step column exceeds `step`.
void truncate_csv(const fs::path & path, long step) {
    if (!fs::exists(path)) {
        return;
    }
    std::istringstream in(read_file(path));
    std::string line, out;
    bool header = true;
    while (std::getline(in, line)) {
        if (header || std::stol(line.substr(0, line.find(','))) <= step) {
            out += line + "\n";
        }
        header = false;
    }
    atomic_write(path, out);
}

std::vector<Problem> eval_problems(const RunConfig & cfg) {
    return take_split(load_problems(cfg), split_from_string(cfg.eval.split), cfg.eval.count);
}

EvalReport validation_report(const Model & model, const RunConfig & cfg, std::span<const Problem> val, int B) {
    const std::vector<int> ks{1};
    return evaluate(model, val, cfg.decode_config(B, false, DecodeMode::greedy), 1, ks, cfg.seed, cfg.workers,
                    cfg.model_tag);
}

}  // namespace

json cmd_sft(const RunConfig & cfg, bool resume) {
    cfg.validate();
    const fs::path dir = cfg.output_dir;
    prepare_run_dir(dir, resume);
    write_config(dir, cfg);
    const std::vector<Problem> problems = load_problems(cfg);
    if (!fs::exists(dir / "dataset.jsonl")) {
        write_dataset(dir / "dataset.jsonl", problems);
    }
    const std::vector<Problem> train = take_split(problems, Split::train);
    const std::vector<Problem> val = take_split(problems, Split::validation, cfg.eval.count);

    Model model(cfg.model, derive_seed(cfg.seed, "init"));
    AdamW opt(model);
    long step = 0;
    const fs::path last = dir / "checkpoints" / "last.ckpt";
    if (resume && fs::exists(last)) {
        const Checkpoint ck = load_checkpoint(last);
        model = ck.model();
        if (ck.optimizer) {
            opt.state() = *ck.optimizer;
        }
        step = ck.step;
        const long kept = step;
        for (const char * name : {"metrics.jsonl"}) {
            std::vector<json> rows;
            if (fs::exists(dir / name)) {
                for (const auto & r : read_jsonl(dir / name)) {
                    if (r.at("step").get<long>() <= kept) {
                        rows.push_back(r);
                    }
                }
            }
            atomic_write(dir / name, to_jsonl(rows));
        }
        truncate_csv(dir / "loss_curve.csv", kept);
    }
    const bool fresh_curve = !fs::exists(dir / "loss_curve.csv");
    std::ofstream curve(dir / "loss_curve.csv", std::ios::app);
    if (fresh_curve) {
        curve << "step,loss\n";
    }
    JsonlWriter metrics(dir / "metrics.jsonl", true);
    json manifest = base_manifest("sft", cfg);
    manifest["block_size"] = cfg.sft.block_size;

    double window = 0.0;
    int window_n = 0;
    bool failed = false;
    for (long s = step + 1; s <= cfg.sft.steps; ++s) {
        const SftStepInfo info = sft_step(model, opt, train, cfg, s);
        if (info.skipped) {
            save_checkpoint(last, model, &opt, s - 1, json{{"command", "sft"}});
            manifest["failure"] = "non-finite loss at step " + std::to_string(s);
            failed = true;
            break;
        }
        window += info.loss;
        ++window_n;
        if (s % cfg.sft.log_every == 0 || s == cfg.sft.steps) {
            const double loss = window / window_n;
            metrics.write({{"step", s}, {"loss", loss}, {"lr", info.lr}, {"grad_norm", info.grad_norm}});
            curve << s << "," << format_double(loss) << "\n";
            curve.flush();
            window = 0.0;
            window_n = 0;
        }
        if (cfg.sft.eval_every > 0 && (s % cfg.sft.eval_every == 0 || s == cfg.sft.steps)) {
            const EvalReport rep = validation_report(model, cfg, val, cfg.sft.block_size);
            metrics.write({{"step", s}, {"event", "eval"}, {"pass1", rep.pass1}, {"block_size", cfg.sft.block_size}});
            std::cerr << "sft step " << s << " val pass@1 " << rep.pass1 << "\n";
        }
        if (cfg.sft.checkpoint_every > 0 && s % cfg.sft.checkpoint_every == 0) {
            save_checkpoint(dir / "checkpoints" / ("step_" + std::to_string(s) + ".ckpt"), model, &opt, s,
                            json{{"command", "sft"}});
            save_checkpoint(last, model, &opt, s, json{{"command", "sft"}});
        }
        step = s;
    }
    curve.close();
    if (!failed) {
        save_checkpoint(dir / "final.ckpt", model, &opt, step, json{{"command", "sft"}});
        save_checkpoint(last, model, &opt, step, json{{"command", "sft"}});
    }
    manifest["final_step"] = step;
    finish_manifest(dir, manifest, failed ? "failed" : "completed");
    return manifest;
}

json cmd_rl(const RunConfig & cfg, const fs::path & checkpoint) {
    cfg.validate();
    Model model = load_model(checkpoint, cfg);
    const fs::path dir = cfg.output_dir;
    prepare_run_dir(dir, false);
    write_config(dir, cfg);
    const std::vector<Problem> problems = load_problems(cfg);
    const std::vector<Problem> train = take_split(problems, Split::train);
    const std::vector<Problem> val = take_split(problems, Split::validation, cfg.eval.count);
    const int B = cfg.rl.block_size;
    AdamW opt(model);
    JsonlWriter metrics(dir / "metrics.jsonl", false);
    JsonlWriter val_log(dir / "validation.jsonl", false);
    json manifest = base_manifest("rl", cfg);
    manifest["input_checkpoint"] = checkpoint.string();
    manifest["block_size"] = B;
    manifest["shifted"] = cfg.rl.shifted;

    auto validate_at = [&](long step) {
        const EvalReport rep = validation_report(model, cfg, val, B);
        val_log.write({{"step", step}, {"block_size", B}, {"val_pass1", rep.pass1}});
        return rep.pass1;
    };
    manifest["initial_val_pass1"] = validate_at(0);
    bool failed = false;
    long step = 0;
    for (int u = 0; u < cfg.rl.updates; ++u) {
        const RlStepInfo info = rl_update(model, opt, train, cfg, B, cfg.rl.shifted, u);
        ++step;
        metrics.write(to_json(info, step));
        if (info.metrics.skipped) {
            manifest["failure"] = "non-finite loss or gradient at step " + std::to_string(step);
            failed = true;
            break;
        }
        if (cfg.rl.checkpoint_every > 0 && step % cfg.rl.checkpoint_every == 0) {
            save_checkpoint(dir / "checkpoints" / ("step_" + std::to_string(step) + ".ckpt"), model, &opt, step,
                            json{{"command", "rl"}, {"block_size", B}});
        }
        if (cfg.rl.eval_every > 0 && step % cfg.rl.eval_every == 0 && step != cfg.rl.updates) {
            validate_at(step);
        }
    }
    if (!failed) {
        manifest["final_val_pass1"] = validate_at(step);
    }
    save_checkpoint(dir / "final.ckpt", model, &opt, step, json{{"command", "rl"}, {"block_size", B}});
    manifest["final_step"] = step;
    finish_manifest(dir, manifest, failed ? "failed" : "completed");
    return manifest;
}

json cmd_tstar(const RunConfig & cfg, const fs::path & checkpoint, bool resume) {
    cfg.validate();
    Model model = load_model(checkpoint, cfg);
    const fs::path dir = cfg.output_dir;
    prepare_run_dir(dir, resume);
    write_config(dir, cfg);
    const std::vector<Problem> problems = load_problems(cfg);
    const std::vector<Problem> train = take_split(problems, Split::train);
    const std::vector<Problem> val = take_split(problems, Split::validation, cfg.eval.count);
    json base = base_manifest("tstar", cfg);
    base["input_checkpoint"] = checkpoint.string();
    base["initial_val_pass1"] = validation_report(model, cfg, val, cfg.curriculum.b0).pass1;
    const CurriculumResult res = run_curriculum(model, train, val, cfg, dir, resume, base);

    std::string curve = "phase_index,block_size,phase,step,val_pass1\n";
    for (const auto & r : res.phases) {
        curve += std::to_string(r.index) + "," + std::to_string(r.block_size) + "," +
                 std::string(to_string(r.phase)) + "," + std::to_string(r.step_end) + "," +
                 format_double(r.val_pass1) + "\n";
    }
    atomic_write(dir / "validation_curve.csv", curve);
    if (!res.phases.empty()) {
        fs::copy_file(dir / res.phases.back().checkpoint, dir / "final.ckpt", fs::copy_options::overwrite_existing);
    }
    json manifest = json::parse(read_file(dir / "manifest.json"));
    finish_manifest(dir, manifest, res.failed ? "failed" : "completed");
    return manifest;
}

json cmd_decode(const RunConfig & cfg, const fs::path & checkpoint, const DecodeOptions & opt) {
    cfg.validate();
    const Model model = load_model(checkpoint, cfg);
    std::vector<Problem> problems;
    if (opt.prompts_path.empty()) {
        problems = eval_problems(cfg);
    } else if (fs::path(opt.prompts_path).extension() == ".jsonl") {
        problems = read_dataset(opt.prompts_path);
    } else {
        std::istringstream in(read_file(opt.prompts_path));
        std::string line;
        int i = 0;
        while (std::getline(in, line)) {
            if (!line.empty()) {
                Problem p;
                p.id = "prompt-" + std::to_string(i++);
                p.prompt = line;
                problems.push_back(p);
            }
        }
    }
    if (problems.empty()) {
        throw std::invalid_argument("decode: no prompts");
    }
    const fs::path dir = cfg.output_dir;
    prepare_run_dir(dir, false);
    write_config(dir, cfg);
    const DecodeConfig dc =
        cfg.decode_config(opt.block_size, opt.shifted, opt.sample ? DecodeMode::sample : DecodeMode::greedy);
    const Vocab vocab;
    std::vector<json> responses(problems.size());
    std::vector<TraceRecord> traces(problems.size());
    parallel_for(static_cast<int>(problems.size()), cfg.workers, [&](int i) {
        const Problem & p = problems[static_cast<std::size_t>(i)];
        std::mt19937_64 rng = substream(cfg.seed, "decode", {hash_string(p.id)});
        DecodeResult r = decode(model, prompt_tokens(vocab, p), dc, rng, Vocab::kEos);
        const std::string text = vocab.response_text(r.response);
        json row{{"prompt_id", p.id}, {"prompt", p.prompt}, {"response", text}, {"num_steps", r.trace.num_steps}};
        if (!p.answer.empty()) {
            row["reward"] = verify(text, p);
        }
        responses[i] = std::move(row);
        r.trace.prompt_id = p.id;
        r.trace.model_tag = cfg.model_tag;
        traces[i] = std::move(r.trace);
    });
    atomic_write(dir / "responses.jsonl", to_jsonl(responses));
    write_traces(dir / "traces.jsonl", traces);
    json manifest = base_manifest("decode", cfg);
    manifest["input_checkpoint"] = checkpoint.string();
    manifest["block_size"] = opt.block_size;
    manifest["shifted"] = opt.shifted;
    manifest["mode"] = opt.sample ? "sample" : "greedy";
    finish_manifest(dir, manifest, "completed");
    return manifest;
}

json cmd_eval(const RunConfig & cfg, const fs::path & checkpoint, const EvalOptions & opt) {
    cfg.validate();
    const Model model = load_model(checkpoint, cfg);
    const std::vector<Problem> problems = eval_problems(cfg);
    const fs::path dir = cfg.output_dir;
    prepare_run_dir(dir, false);
    write_config(dir, cfg);
    std::vector<TraceRecord> traces;
    const EvalReport rep = evaluate(model, problems, cfg.decode_config(opt.block_size, opt.shifted, DecodeMode::greedy),
                                    cfg.eval.samples, cfg.eval.ks, cfg.seed, cfg.workers, cfg.model_tag,
                                    opt.write_traces ? &traces : nullptr);
    atomic_write(dir / "eval.json", to_json(rep).dump(2));
    if (opt.write_traces) {
        write_traces(dir / "traces.jsonl", traces);
    }
    json manifest = base_manifest("eval", cfg);
    manifest["input_checkpoint"] = checkpoint.string();
    manifest["report"] = to_json(rep);
    finish_manifest(dir, manifest, "completed");
    return manifest;
}

json cmd_analyze(const RunConfig & cfg, const AnalyzeOptions & opt) {
    if (opt.trace_files.empty()) {
        throw std::invalid_argument("analyze: no trace files given");
    }
    std::vector<TraceRecord> traces;
    for (const auto & f : opt.trace_files) {
        require_file(f, "trace file");
        auto t = read_traces(f);
        traces.insert(traces.end(), t.begin(), t.end());
    }
    if (traces.empty()) {
        throw std::invalid_argument("analyze: trace files contain no records");
    }
    const fs::path dir = cfg.output_dir;
    prepare_run_dir(dir, false);
    const std::vector<SummaryRow> rows = summarize(traces);
    atomic_write(dir / "summary.csv", format_summary_csv(rows));

    std::vector<json> per_trace;
    std::string index = "file,prompt_id,model_tag,block_size,num_steps,length,localstrict\n";
    for (std::size_t i = 0; i < traces.size(); ++i) {
        const TraceRecord & t = traces[i];
        const LinearOrder pi = linearize(t);
        const int events = local_strict_events(pi);
        const HeatmapGrid grid = heatmap_grid(t, opt.width);
        char name[64];
        std::snprintf(name, sizeof name, "%05zu.csv", i);
        const std::string rel = "heatmaps/" + std::string(name);
        atomic_write(dir / rel, format_heatmap(grid));
        const double ls = static_cast<double>(events) / pi.size();
        per_trace.push_back({{"prompt_id", t.prompt_id},
                             {"model_tag", t.model_tag},
                             {"block_size", t.block_size},
                             {"length", pi.size()},
                             {"events", events},
                             {"num_steps", t.num_steps},
                             {"localstrict", ls},
                             {"heatmap", rel}});
        index += rel + "," + t.prompt_id + "," + t.model_tag + "," + std::to_string(t.block_size) + "," +
                 std::to_string(t.num_steps) + "," + std::to_string(pi.size()) + "," + format_double(ls) + "\n";
    }
    atomic_write(dir / "per_trace.jsonl", to_jsonl(per_trace));
    atomic_write(dir / "heatmaps/index.csv", index);
    json manifest = base_manifest("analyze", cfg);
    json inputs = json::array();
    for (const auto & f : opt.trace_files) {
        inputs.push_back(f.string());
    }
    manifest["inputs"] = inputs;
    json summary = json::array();
    for (const auto & r : rows) {
        summary.push_back({{"model_tag", r.model_tag},
                           {"block_size", r.block_size},
                           {"mean_localstrict", r.stats.mean},
                           {"stddev", r.stats.stddev},
                           {"trace_count", r.stats.count},
                           {"mean_length", r.stats.mean_length},
                           {"pooled_localstrict", r.stats.pooled}});
    }
    manifest["summary"] = summary;
    finish_manifest(dir, manifest, "completed");
    return manifest;
}

}  // namespace mdlab
