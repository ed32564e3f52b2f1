#pragma once

#include "mdlab/decoder.hpp"
#include "mdlab/model.hpp"
#include "mdlab/optimizer.hpp"
#include "mdlab/tasks.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mdlab {

using json = nlohmann::json;
namespace fs = std::filesystem;

// Input file missing or malformed; the message names the file.
class FileError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Writes to a sibling temp file, then renames over `path`.
void atomic_write(const fs::path & path, std::string_view contents);
std::string read_file(const fs::path & path);

std::vector<json> read_jsonl(const fs::path & path);
std::string to_jsonl(const std::vector<json> & records);

// Appends one JSON record per line; flushed after every record.
class JsonlWriter {
  public:
    JsonlWriter() = default;
    JsonlWriter(const fs::path & path, bool append);
    void write(const json & record);
    bool is_open() const { return out_ != nullptr; }
    ~JsonlWriter();
    JsonlWriter(JsonlWriter && other) noexcept;
    JsonlWriter & operator=(JsonlWriter && other) noexcept;
    JsonlWriter(const JsonlWriter &) = delete;
    JsonlWriter & operator=(const JsonlWriter &) = delete;

  private:
    std::FILE * out_ = nullptr;
    fs::path path_;
};

json to_json(const Problem & p);
Problem problem_from_json(const json & j);
void write_dataset(const fs::path & path, const std::vector<Problem> & problems);
std::vector<Problem> read_dataset(const fs::path & path);

json to_json(const TraceRecord & t);
TraceRecord trace_from_json(const json & j);
void write_traces(const fs::path & path, const std::vector<TraceRecord> & traces);
std::vector<TraceRecord> read_traces(const fs::path & path);

json to_json(const ModelConfig & c);
ModelConfig model_config_from_json(const json & j);

// Binary checkpoint:
//   8 bytes  magic "MDLABCK1"
//   8 bytes  header length H (little-endian uint64)
//   H bytes  JSON header: config, init_seed, step, meta, tensors [{name, shape, offset, count}],
//            optimizer {step, present}
//   raw little-endian float64 values: parameters in table order, then Adam m and v
//   in the same order when the optimizer is present.
struct Checkpoint {
    ModelConfig config;
    std::uint64_t init_seed = 0;
    long step = 0;
    json meta = json::object();
    std::vector<Parameter> params;
    std::optional<AdamWState> optimizer;

    Model model() const;
};

void save_checkpoint(const fs::path & path, const Model & model, const AdamW * opt, long step,
                     const json & meta = json::object());
Checkpoint load_checkpoint(const fs::path & path);

}  // namespace mdlab
