#include "mdlab/io.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mdlab {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'M', 'D', 'L', 'A', 'B', 'C', 'K', '1'};

void append_doubles(std::string & out, std::span<const double> v) {
    const std::size_t off = out.size();
    out.resize(off + v.size() * sizeof(double));
    std::memcpy(out.data() + off, v.data(), v.size() * sizeof(double));
}

}  // namespace

void atomic_write(const fs::path & path, std::string_view contents) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw FileError("cannot write " + tmp.string());
        }
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) {
            throw FileError("short write to " + tmp.string());
        }
    }
    fs::rename(tmp, path);
}

std::string read_file(const fs::path & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FileError("cannot open " + path.string() + (fs::exists(path) ? "" : " (file does not exist)"));
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<json> read_jsonl(const fs::path & path) {
    std::istringstream in(read_file(path));
    std::vector<json> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            out.push_back(json::parse(line));
        } catch (const json::exception & e) {
            throw FileError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

std::string to_jsonl(const std::vector<json> & records) {
    std::string s;
    for (const auto & r : records) {
        s += r.dump();
        s += '\n';
    }
    return s;
}

JsonlWriter::JsonlWriter(const fs::path & path, bool append) : path_(path) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    out_ = std::fopen(path.c_str(), append ? "ab" : "wb");
    if (!out_) {
        throw FileError("cannot open " + path.string() + " for writing");
    }
}

void JsonlWriter::write(const json & record) {
    if (!out_) {
        throw FileError("writer is not open");
    }
    const std::string line = record.dump() + "\n";
    if (std::fwrite(line.data(), 1, line.size(), out_) != line.size() || std::fflush(out_) != 0) {
        throw FileError("write failed for " + path_.string());
    }
}

JsonlWriter::~JsonlWriter() {
    if (out_) {
        std::fclose(out_);
    }
}

JsonlWriter::JsonlWriter(JsonlWriter && other) noexcept : out_(other.out_), path_(std::move(other.path_)) {
    other.out_ = nullptr;
}

JsonlWriter & JsonlWriter::operator=(JsonlWriter && other) noexcept {
    if (this != &other) {
        if (out_) {
            std::fclose(out_);
        }
        out_ = other.out_;
        path_ = std::move(other.path_);
        other.out_ = nullptr;
    }
    return *this;
}

json to_json(const Problem & p) {
    return json{{"id", p.id},
                {"prompt", p.prompt},
                {"solution", p.solution},
                {"answer", p.answer},
                {"difficulty", p.difficulty},
                {"split", std::string(to_string(p.split))}};
}

Problem problem_from_json(const json & j) {
    Problem p;
    p.id = j.at("id").get<std::string>();
    p.prompt = j.at("prompt").get<std::string>();
    p.solution = j.at("solution").get<std::string>();
    p.answer = j.at("answer").get<std::string>();
    p.difficulty = j.at("difficulty").get<int>();
    p.split = split_from_string(j.at("split").get<std::string>());
    return p;
}

void write_dataset(const fs::path & path, const std::vector<Problem> & problems) {
    std::vector<json> rows;
    for (const auto & p : problems) {
        rows.push_back(to_json(p));
    }
    atomic_write(path, to_jsonl(rows));
}

std::vector<Problem> read_dataset(const fs::path & path) {
    std::vector<Problem> out;
    for (const auto & j : read_jsonl(path)) {
        try {
            out.push_back(problem_from_json(j));
        } catch (const std::exception & e) {
            throw FileError(path.string() + ": bad dataset record: " + e.what());
        }
    }
    return out;
}

json to_json(const TraceRecord & t) {
    return json{{"prompt_id", t.prompt_id}, {"model_tag", t.model_tag}, {"block_size", t.block_size},
                {"eta", t.eta},             {"shifted", t.shifted},     {"truncated", t.truncated},
                {"num_steps", t.num_steps}, {"positions", t.positions}, {"steps", t.steps},
                {"tokens", t.tokens}};
}

TraceRecord trace_from_json(const json & j) {
    TraceRecord t;
    t.prompt_id = j.at("prompt_id").get<std::string>();
    t.model_tag = j.value("model_tag", std::string());
    t.block_size = j.at("block_size").get<int>();
    t.eta = j.at("eta").get<double>();
    t.shifted = j.value("shifted", false);
    t.truncated = j.value("truncated", false);
    t.positions = j.at("positions").get<std::vector<int>>();
    t.steps = j.at("steps").get<std::vector<int>>();
    t.tokens = j.value("tokens", std::vector<int>{});
    t.num_steps = j.value("num_steps", t.steps.empty() ? 0 : *std::max_element(t.steps.begin(), t.steps.end()));
    if (t.positions.size() != t.steps.size()) {
        throw std::invalid_argument("trace " + t.prompt_id + ": positions and steps differ in length");
    }
    return t;
}

void write_traces(const fs::path & path, const std::vector<TraceRecord> & traces) {
    std::vector<json> rows;
    for (const auto & t : traces) {
        rows.push_back(to_json(t));
    }
    atomic_write(path, to_jsonl(rows));
}

std::vector<TraceRecord> read_traces(const fs::path & path) {
    std::vector<TraceRecord> out;
    for (const auto & j : read_jsonl(path)) {
        try {
            out.push_back(trace_from_json(j));
        } catch (const std::exception & e) {
            throw FileError(path.string() + ": bad trace record: " + e.what());
        }
    }
    return out;
}

json to_json(const ModelConfig & c) {
    return json{{"vocab_size", c.vocab_size}, {"d_model", c.d_model}, {"n_layers", c.n_layers},
                {"n_heads", c.n_heads},       {"d_ff", c.d_ff},       {"max_len", c.max_len},
                {"mask_token_id", c.mask_token_id}};
}

ModelConfig model_config_from_json(const json & j) {
    ModelConfig c;
    c.vocab_size = j.at("vocab_size").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.n_layers = j.at("n_layers").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.d_ff = j.at("d_ff").get<int>();
    c.max_len = j.at("max_len").get<int>();
    c.mask_token_id = j.at("mask_token_id").get<int>();
    c.validate();
    return c;
}

Model Checkpoint::model() const {
    return Model(config, init_seed, params);
}

void save_checkpoint(const fs::path & path, const Model & model, const AdamW * opt, long step, const json & meta) {
    json header;
    header["format"] = "mdlab-checkpoint";
    header["version"] = 1;
    header["config"] = to_json(model.config());
    header["init_seed"] = model.init_seed();
    header["step"] = step;
    header["meta"] = meta;
    std::string body;
    json tensors = json::array();
    for (const auto & p : model.params()) {
        tensors.push_back({{"name", p.name},
                           {"shape", p.value.shape()},
                           {"offset", body.size() / sizeof(double)},
                           {"count", p.value.size()}});
        append_doubles(body, p.value.data());
    }
    header["tensors"] = tensors;
    const bool has_opt = opt != nullptr && !opt->state().m.empty();
    header["optimizer"] = {{"present", has_opt}, {"step", has_opt ? opt->state().step : 0}};
    if (has_opt) {
        for (const auto & m : opt->state().m) {
            append_doubles(body, m);
        }
        for (const auto & v : opt->state().v) {
            append_doubles(body, v);
        }
    }
    const std::string h = header.dump();
    std::string out(kMagic, sizeof kMagic);
    const std::uint64_t len = h.size();
    out.append(reinterpret_cast<const char *>(&len), sizeof len);
    out += h;
    out += body;
    atomic_write(path, out);
}

Checkpoint load_checkpoint(const fs::path & path) {
    const std::string raw = read_file(path);
    auto fail = [&](const std::string & why) { return FileError("corrupt checkpoint " + path.string() + ": " + why); };
    if (raw.size() < 16 || std::memcmp(raw.data(), kMagic, sizeof kMagic) != 0) {
        throw fail("bad magic");
    }
    std::uint64_t len = 0;
    std::memcpy(&len, raw.data() + 8, sizeof len);
    if (len > raw.size() - 16) {
        throw fail("header length exceeds file size");
    }
    json header;
    try {
        header = json::parse(raw.substr(16, len));
    } catch (const json::exception & e) {
        throw fail(e.what());
    }
    const char * body = raw.data() + 16 + len;
    const std::size_t body_doubles = (raw.size() - 16 - len) / sizeof(double);
    auto read_block = [&](std::size_t offset, std::size_t count) {
        if (offset + count > body_doubles) {
            throw fail("tensor data truncated");
        }
        std::vector<double> v(count);
        std::memcpy(v.data(), body + offset * sizeof(double), count * sizeof(double));
        return v;
    };
    Checkpoint ck;
    try {
        ck.config = model_config_from_json(header.at("config"));
        ck.init_seed = header.at("init_seed").get<std::uint64_t>();
        ck.step = header.at("step").get<long>();
        ck.meta = header.value("meta", json::object());
        std::size_t total = 0;
        for (const auto & t : header.at("tensors")) {
            const auto count = t.at("count").get<std::size_t>();
            Tensor value(t.at("shape").get<Shape>(), read_block(t.at("offset").get<std::size_t>(), count));
            ck.params.push_back({t.at("name").get<std::string>(), std::move(value)});
            total += count;
        }
        const json & o = header.at("optimizer");
        if (o.at("present").get<bool>()) {
            AdamWState st;
            st.step = o.at("step").get<long>();
            std::size_t off = total;
            for (auto * dst : {&st.m, &st.v}) {
                for (const auto & p : ck.params) {
                    dst->push_back(read_block(off, p.value.size()));
                    off += p.value.size();
                }
            }
            ck.optimizer = std::move(st);
        }
    } catch (const FileError &) {
        throw;
    } catch (const std::exception & e) {
        throw fail(e.what());
    }
    return ck;
}

}  // namespace mdlab
