#include "mdlab/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace mdlab;

namespace {

struct Common {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out;
    long long seed = -1;
    int workers = 0;
};

void add_common(CLI::App * app, Common & c) {
    app->add_option("-c,--config", c.config_path, "Run config JSON");
    app->add_option("--set", c.overrides, "Override a config field, e.g. --set train.beta=0.02")->take_all();
    app->add_option("-o,--out", c.out, "Output directory (must be fresh)");
    app->add_option("--seed", c.seed, "Root seed");
    app->add_option("--workers", c.workers, "Rollout/eval worker threads");
}

RunConfig resolve(const Common & c) {
    json j = c.config_path.empty() ? to_json(RunConfig{}) : json::parse(read_file(c.config_path));
    for (const auto & o : c.overrides) {
        apply_override(j, o);
    }
    if (!c.out.empty()) {
        j["output_dir"] = c.out;
    }
    if (c.seed >= 0) {
        j["seed"] = c.seed;
    }
    if (c.workers > 0) {
        j["workers"] = c.workers;
    }
    return run_config_from_json(j);
}

}  // namespace

int main(int argc, char ** argv) {
    CLI::App app{"Block diffusion LM training, TraceRL and T* curriculum toolkit"};
    app.require_subcommand(0, 1);
    bool print_config = false;
    app.add_flag("--print-default-config", print_config, "Print the default run config and exit");

    Common c_sft, c_rl, c_tstar, c_decode, c_eval, c_analyze;
    bool sft_resume = false, tstar_resume = false;
    std::string rl_ckpt, tstar_ckpt, decode_ckpt, eval_ckpt;
    int rl_block = 0, rl_updates = 0;
    bool rl_shifted = false;
    DecodeOptions dopt;
    EvalOptions eopt;
    std::string eval_split;
    int eval_n = 0, eval_count = -1;
    std::vector<int> eval_k;
    AnalyzeOptions aopt;
    std::vector<std::string> trace_files;

    auto * sft = app.add_subcommand("sft", "Masked-diffusion SFT warm-up at B0");
    add_common(sft, c_sft);
    sft->add_flag("--resume", sft_resume, "Continue from <out>/checkpoints/last.ckpt");

    auto * rl = app.add_subcommand("rl", "Direct TraceRL at a fixed block size");
    add_common(rl, c_rl);
    rl->add_option("--checkpoint", rl_ckpt, "Starting checkpoint")->required();
    rl->add_option("--block-size", rl_block, "Block size (default rl.block_size)");
    rl->add_option("--updates", rl_updates, "Number of updates (default rl.updates)");
    rl->add_flag("--shifted", rl_shifted, "Use half-shifted block boundaries");

    auto * tstar = app.add_subcommand("tstar", "Progressive block scaling curriculum");
    add_common(tstar, c_tstar);
    tstar->add_option("--checkpoint", tstar_ckpt, "Starting checkpoint")->required();
    tstar->add_flag("--resume", tstar_resume, "Continue an interrupted run in <out>");

    auto * dec = app.add_subcommand("decode", "Decode prompts and write responses and traces");
    add_common(dec, c_decode);
    dec->add_option("--checkpoint", decode_ckpt, "Model checkpoint")->required();
    dec->add_option("--block-size", dopt.block_size, "Block size");
    dec->add_flag("--shifted", dopt.shifted, "Half-shifted block boundaries");
    dec->add_flag("--sample", dopt.sample, "Sample instead of greedy argmax");
    dec->add_option("--prompts", dopt.prompts_path, "Dataset JSONL or one prompt per line (default: eval split)");

    auto * ev = app.add_subcommand("eval", "Pass@k on a dataset split");
    add_common(ev, c_eval);
    ev->add_option("--checkpoint", eval_ckpt, "Model checkpoint")->required();
    ev->add_option("--block-size", eopt.block_size, "Block size");
    ev->add_flag("--shifted", eopt.shifted, "Half-shifted block boundaries");
    ev->add_option("--split", eval_split, "train | validation | test");
    ev->add_option("--n", eval_n, "Samples per problem (1 = greedy)");
    ev->add_option("--k", eval_k, "k values for pass@k")->take_all();
    ev->add_option("--count", eval_count, "Number of problems (0 = whole split)");

    auto * an = app.add_subcommand("analyze", "LocalStrict table and heatmap grids from trace files");
    add_common(an, c_analyze);
    an->add_option("traces", trace_files, "TraceRecord JSONL files")->required();
    an->add_option("--width", aopt.width, "Heatmap row width (0 = one row per trace)");

    CLI11_PARSE(app, argc, argv);
    try {
        if (print_config) {
            std::cout << to_json(RunConfig{}).dump(2) << "\n";
            return 0;
        }
        json out;
        if (*sft) {
            out = cmd_sft(resolve(c_sft), sft_resume);
        } else if (*rl) {
            if (rl_block > 0) c_rl.overrides.push_back("rl.block_size=" + std::to_string(rl_block));
            if (rl_updates > 0) c_rl.overrides.push_back("rl.updates=" + std::to_string(rl_updates));
            if (rl_shifted) c_rl.overrides.push_back("rl.shifted=true");
            out = cmd_rl(resolve(c_rl), rl_ckpt);
        } else if (*tstar) {
            out = cmd_tstar(resolve(c_tstar), tstar_ckpt, tstar_resume);
        } else if (*dec) {
            out = cmd_decode(resolve(c_decode), decode_ckpt, dopt);
        } else if (*ev) {
            if (!eval_split.empty()) c_eval.overrides.push_back("eval.split=\"" + eval_split + "\"");
            if (eval_n > 0) c_eval.overrides.push_back("eval.samples=" + std::to_string(eval_n));
            if (eval_count >= 0) c_eval.overrides.push_back("eval.count=" + std::to_string(eval_count));
            if (!eval_k.empty()) c_eval.overrides.push_back("eval.ks=" + json(eval_k).dump());
            out = cmd_eval(resolve(c_eval), eval_ckpt, eopt);
        } else if (*an) {
            for (const auto & f : trace_files) {
                aopt.trace_files.emplace_back(f);
            }
            out = cmd_analyze(resolve(c_analyze), aopt);
        } else {
            std::cout << app.help();
            return 0;
        }
        out.erase("outputs");
        std::cout << out.dump(2) << "\n";
    } catch (const std::exception & e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
