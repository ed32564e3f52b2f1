#include "mdlab/config.hpp"

#include <set>
#include <stdexcept>

namespace mdlab {

namespace {

std::string_view to_string(AdvantageMode m) {
    return m == AdvantageMode::sequence ? "sequence" : "step_gae";
}

AdvantageMode advantage_mode_from_string(const std::string & s) {
    if (s == "sequence") return AdvantageMode::sequence;
    if (s == "step_gae") return AdvantageMode::step_gae;
    throw std::invalid_argument("unknown advantage_mode '" + s + "' (expected sequence | step_gae)");
}

// Reads the keys of one object, rejecting any it does not consume.
class Reader {
  public:
    Reader(const json & j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) {
            throw std::invalid_argument("config: " + (path_.empty() ? std::string("root") : path_) +
                                        " must be an object");
        }
    }
    template <class T>
    void get(const char * key, T & out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) {
            return;
        }
        try {
            out = it->template get<T>();
        } catch (const json::exception &) {
            throw std::invalid_argument("config: " + full(key) + " has the wrong type");
        }
    }
    const json * child(const char * key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }
    std::string full(const std::string & key) const { return path_.empty() ? key : path_ + "." + key; }
    void finish() const {
        for (const auto & [k, v] : j_.items()) {
            if (!seen_.count(k)) {
                throw std::invalid_argument("config: unknown key '" + full(k) + "'");
            }
        }
    }

  private:
    const json & j_;
    std::string path_;
    std::set<std::string> seen_;
};

}  // namespace

RunConfig::RunConfig() {
    model.vocab_size = Vocab().size();
    model.mask_token_id = Vocab::kMask;
    model.max_len = 32;
    dataset.count = 5000;
}

void RunConfig::validate() const {
    model.validate();
    if (model.vocab_size != Vocab().size() || model.mask_token_id != Vocab::kMask) {
        throw std::invalid_argument("config: model.vocab_size and model.mask_token_id must match the task vocabulary (" +
                                    std::to_string(Vocab().size()) + ", " + std::to_string(Vocab::kMask) + ")");
    }
    if (response_len < 1) {
        throw std::invalid_argument("config: response_len must be positive");
    }
    if (workers < 1) {
        throw std::invalid_argument("config: workers must be >= 1");
    }
    train.validate();
    curriculum.validate();
    if (response_len % curriculum.b_hat != 0) {
        throw std::invalid_argument("config: response_len must be a multiple of curriculum.b_hat");
    }
    for (int B : {sft.block_size, rl.block_size}) {
        if (B < 1 || response_len % B != 0) {
            throw std::invalid_argument("config: block sizes must divide response_len");
        }
    }
    if (sft.steps < 0 || sft.batch_size < 1 || !(sft.learning_rate > 0.0)) {
        throw std::invalid_argument("config: sft.steps, sft.batch_size and sft.learning_rate must be positive");
    }
    if (eval.samples < 1) {
        throw std::invalid_argument("config: eval.samples must be >= 1");
    }
    for (int k : eval.ks) {
        if (k < 1 || k > eval.samples) {
            throw std::invalid_argument("config: every eval.ks entry must lie in [1, eval.samples]");
        }
    }
    split_from_string(eval.split);
    if (!(decode.eta >= 0.0 && decode.eta <= 1.0) || !(decode.temperature > 0.0)) {
        throw std::invalid_argument("config: decode.eta must lie in [0,1] and decode.temperature be positive");
    }
}

DecodeConfig RunConfig::decode_config(int block_size, bool shifted, DecodeMode mode) const {
    DecodeConfig d;
    d.eta = decode.eta;
    d.temperature = decode.temperature;
    d.max_steps_per_block = decode.max_steps_per_block;
    d.block_size = block_size;
    d.max_blocks = response_len / block_size;
    d.mode = mode;
    d.shifted = shifted;
    d.validate();
    return d;
}

json to_json(const RunConfig & c) {
    json j;
    j["seed"] = c.seed;
    j["output_dir"] = c.output_dir;
    j["model_tag"] = c.model_tag;
    j["workers"] = c.workers;
    j["response_len"] = c.response_len;
    j["dataset_path"] = c.dataset_path;
    j["model"] = to_json(c.model);
    j["dataset"] = {{"family", c.dataset.family},
                    {"min_digits", c.dataset.min_digits},
                    {"max_digits", c.dataset.max_digits},
                    {"count", c.dataset.count},
                    {"worked", c.dataset.worked},
                    {"train_fraction", c.dataset.train_fraction},
                    {"validation_fraction", c.dataset.validation_fraction},
                    {"min_difficulty", c.dataset.min_difficulty},
                    {"max_difficulty", c.dataset.max_difficulty}};
    j["sft"] = {{"steps", c.sft.steps},
                {"batch_size", c.sft.batch_size},
                {"learning_rate", c.sft.learning_rate},
                {"warmup_steps", c.sft.warmup_steps},
                {"min_lr_ratio", c.sft.min_lr_ratio},
                {"block_size", c.sft.block_size},
                {"grad_clip", c.sft.grad_clip},
                {"log_every", c.sft.log_every},
                {"eval_every", c.sft.eval_every},
                {"checkpoint_every", c.sft.checkpoint_every}};
    j["train"] = {{"epsilon", c.train.epsilon},
                  {"beta", c.train.beta},
                  {"learning_rate", c.train.learning_rate},
                  {"group_size", c.train.group_size},
                  {"batch_prompts", c.train.batch_prompts},
                  {"gamma", c.train.gamma},
                  {"lambda", c.train.lambda},
                  {"advantage_mode", std::string(to_string(c.train.advantage_mode))},
                  {"value_coef", c.train.value_coef},
                  {"grad_clip", c.train.grad_clip},
                  {"weight_decay", c.train.weight_decay}};
    j["decode"] = {{"eta", c.decode.eta},
                   {"temperature", c.decode.temperature},
                   {"max_steps_per_block", c.decode.max_steps_per_block}};
    j["rl"] = {{"block_size", c.rl.block_size},
               {"shifted", c.rl.shifted},
               {"updates", c.rl.updates},
               {"eval_every", c.rl.eval_every},
               {"checkpoint_every", c.rl.checkpoint_every}};
    j["curriculum"] = {{"b0", c.curriculum.b0},
                       {"b_hat", c.curriculum.b_hat},
                       {"batches_per_stage", c.curriculum.batches_per_stage}};
    j["eval"] = {{"split", c.eval.split}, {"count", c.eval.count}, {"samples", c.eval.samples}, {"ks", c.eval.ks}};
    return j;
}

RunConfig run_config_from_json(const json & j) {
    RunConfig c;
    Reader r(j, "");
    r.get("seed", c.seed);
    r.get("output_dir", c.output_dir);
    r.get("model_tag", c.model_tag);
    r.get("workers", c.workers);
    r.get("response_len", c.response_len);
    r.get("dataset_path", c.dataset_path);
    if (const json * m = r.child("model")) {
        Reader s(*m, "model");
        s.get("vocab_size", c.model.vocab_size);
        s.get("d_model", c.model.d_model);
        s.get("n_layers", c.model.n_layers);
        s.get("n_heads", c.model.n_heads);
        s.get("d_ff", c.model.d_ff);
        s.get("max_len", c.model.max_len);
        s.get("mask_token_id", c.model.mask_token_id);
        s.finish();
    }
    if (const json * m = r.child("dataset")) {
        Reader s(*m, "dataset");
        s.get("family", c.dataset.family);
        s.get("min_digits", c.dataset.min_digits);
        s.get("max_digits", c.dataset.max_digits);
        s.get("count", c.dataset.count);
        s.get("worked", c.dataset.worked);
        s.get("train_fraction", c.dataset.train_fraction);
        s.get("validation_fraction", c.dataset.validation_fraction);
        s.get("min_difficulty", c.dataset.min_difficulty);
        s.get("max_difficulty", c.dataset.max_difficulty);
        s.finish();
    }
    if (const json * m = r.child("sft")) {
        Reader s(*m, "sft");
        s.get("steps", c.sft.steps);
        s.get("batch_size", c.sft.batch_size);
        s.get("learning_rate", c.sft.learning_rate);
        s.get("warmup_steps", c.sft.warmup_steps);
        s.get("min_lr_ratio", c.sft.min_lr_ratio);
        s.get("block_size", c.sft.block_size);
        s.get("grad_clip", c.sft.grad_clip);
        s.get("log_every", c.sft.log_every);
        s.get("eval_every", c.sft.eval_every);
        s.get("checkpoint_every", c.sft.checkpoint_every);
        s.finish();
    }
    if (const json * m = r.child("train")) {
        Reader s(*m, "train");
        s.get("epsilon", c.train.epsilon);
        s.get("beta", c.train.beta);
        s.get("learning_rate", c.train.learning_rate);
        s.get("group_size", c.train.group_size);
        s.get("batch_prompts", c.train.batch_prompts);
        s.get("gamma", c.train.gamma);
        s.get("lambda", c.train.lambda);
        std::string mode(to_string(c.train.advantage_mode));
        s.get("advantage_mode", mode);
        c.train.advantage_mode = advantage_mode_from_string(mode);
        s.get("value_coef", c.train.value_coef);
        s.get("grad_clip", c.train.grad_clip);
        s.get("weight_decay", c.train.weight_decay);
        s.finish();
    }
    if (const json * m = r.child("decode")) {
        Reader s(*m, "decode");
        s.get("eta", c.decode.eta);
        s.get("temperature", c.decode.temperature);
        s.get("max_steps_per_block", c.decode.max_steps_per_block);
        s.finish();
    }
    if (const json * m = r.child("rl")) {
        Reader s(*m, "rl");
        s.get("block_size", c.rl.block_size);
        s.get("shifted", c.rl.shifted);
        s.get("updates", c.rl.updates);
        s.get("eval_every", c.rl.eval_every);
        s.get("checkpoint_every", c.rl.checkpoint_every);
        s.finish();
    }
    if (const json * m = r.child("curriculum")) {
        Reader s(*m, "curriculum");
        s.get("b0", c.curriculum.b0);
        s.get("b_hat", c.curriculum.b_hat);
        s.get("batches_per_stage", c.curriculum.batches_per_stage);
        s.finish();
    }
    if (const json * m = r.child("eval")) {
        Reader s(*m, "eval");
        s.get("split", c.eval.split);
        s.get("count", c.eval.count);
        s.get("samples", c.eval.samples);
        s.get("ks", c.eval.ks);
        s.finish();
    }
    r.finish();
    c.validate();
    return c;
}

RunConfig load_run_config(const fs::path & path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception & e) {
        throw FileError("cannot parse config " + path.string() + ": " + e.what());
    }
    return run_config_from_json(j);
}

void apply_override(json & config, const std::string & assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw std::invalid_argument("override '" + assignment + "' must look like key.path=value");
    }
    const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception &) {
        value = raw;
    }
    json * node = &config;
    std::size_t start = 0;
    for (;;) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (dot == std::string::npos) {
            (*node)[part] = value;
            return;
        }
        node = &(*node)[part];
        start = dot + 1;
    }
}

}  // namespace mdlab
