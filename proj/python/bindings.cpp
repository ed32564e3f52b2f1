#include "mdlab/commands.hpp"
#include "mdlab/curriculum.hpp"
#include "mdlab/io.hpp"
#include "mdlab/rng.hpp"
#include "mdlab/schedule.hpp"
#include "mdlab/tracerl.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace mdlab;

namespace {

py::object to_py(const json & j) { return py::module_::import("json").attr("loads")(j.dump()); }

json from_py(const py::handle & o) {
    return json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

RunConfig config_from(const py::object & cfg, const std::string & out) {
    json j = cfg.is_none() ? to_json(RunConfig()) : from_py(cfg);
    if (!out.empty()) {
        j["output_dir"] = out;
    }
    return run_config_from_json(j);
}

template <class F>
py::object released(F && f) {
    json r;
    {
        py::gil_scoped_release release;
        r = f();
    }
    return to_py(r);
}

std::vector<fs::path> paths(const std::vector<std::string> & v) { return {v.begin(), v.end()}; }

class PyModel {
  public:
    PyModel(const py::dict & config, std::uint64_t seed) : model_(make(config), seed) {}
    explicit PyModel(Model m) : model_(std::move(m)) {}

    static PyModel load(const std::string & path) { return PyModel(load_checkpoint(path).model()); }
    void save(const std::string & path) const { save_checkpoint(path, model_, nullptr, 0); }

    py::object config() const { return to_py(to_json(model_.config())); }
    std::size_t num_parameters() const { return model_.num_scalars(); }

    py::dict decode(const std::string & prompt, int block_size, double eta, bool sample, std::uint64_t seed,
                    bool shifted, int response_len, double temperature) const {
        const Vocab vocab;
        DecodeConfig c;
        c.block_size = block_size;
        c.max_blocks = response_len / block_size;
        c.eta = eta;
        c.temperature = temperature;
        c.shifted = shifted;
        c.mode = sample ? DecodeMode::sample : DecodeMode::greedy;
        c.validate();
        Problem p;
        p.prompt = prompt;
        auto rng = substream(seed, "decode");
        const DecodeResult r = decode_impl(prompt_tokens(vocab, p), c, rng);
        py::dict out;
        out["text"] = vocab.response_text(r.response);
        out["tokens"] = r.response;
        out["num_steps"] = r.trajectory.num_steps();
        out["trace"] = to_py(to_json(r.trace));
        out["logprobs"] = policy_logprobs(model_, r.trajectory);
        return out;
    }

  private:
    static ModelConfig make(const py::dict & config) {
        json j = to_json(ModelConfig{});
        j["vocab_size"] = Vocab().size();
        j.update(from_py(config));
        return model_config_from_json(j);
    }

    DecodeResult decode_impl(const std::vector<int> & prompt, const DecodeConfig & c, std::mt19937_64 & rng) const {
        return mdlab::decode(model_, prompt, c, rng, Vocab::kEos);
    }

    Model model_;
};

TraceRecord trace_from(const py::handle & o) { return trace_from_json(from_py(o)); }

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Block diffusion language model training and analysis";

    py::register_exception<FileError>(m, "FileError", PyExc_OSError);

    py::class_<Vocab>(m, "Vocab")
        .def(py::init<>())
        .def("__len__", &Vocab::size)
        .def("encode", &Vocab::encode)
        .def("decode", [](const Vocab & v, const std::vector<int> & ids) { return v.decode(ids); })
        .def("response_text", [](const Vocab & v, const std::vector<int> & ids) { return v.response_text(ids); })
        .def_readonly_static("PAD", &Vocab::kPad)
        .def_readonly_static("MASK", &Vocab::kMask)
        .def_readonly_static("EOS", &Vocab::kEos)
        .def_readonly_static("BOS", &Vocab::kBos);

    m.def(
        "generate_dataset",
        [](const py::dict & spec, std::uint64_t seed) {
            DatasetSpec s;
            const json j = from_py(spec);
            s.family = j.value("family", s.family);
            s.min_digits = j.value("min_digits", s.min_digits);
            s.max_digits = j.value("max_digits", s.max_digits);
            s.count = j.value("count", s.count);
            s.worked = j.value("worked", s.worked);
            json out = json::array();
            for (const auto & p : generate_dataset(s, seed)) {
                out.push_back(to_json(p));
            }
            return to_py(out);
        },
        py::arg("spec") = py::dict(), py::arg("seed") = 1);
    m.def(
        "verify", [](const std::string & response, const py::dict & problem) {
            return verify(response, problem_from_json(from_py(problem)));
        },
        py::arg("response"), py::arg("problem"));
    m.def("pass_at_k", py::overload_cast<int, int, int>(&pass_at_k), py::arg("n"), py::arg("c"), py::arg("k"));

    m.def("local_strict", [](const std::vector<int> & pi) { return local_strict(pi); }, py::arg("order"));
    m.def("linearize", [](const py::dict & trace) { return linearize(trace_from(trace)); }, py::arg("trace"));
    m.def(
        "aggregate_localstrict",
        [](const py::list & traces) {
            std::vector<TraceRecord> ts;
            for (const auto & t : traces) {
                ts.push_back(trace_from(t));
            }
            const auto s = aggregate_localstrict(ts);
            py::dict d;
            d["mean"] = s.mean;
            d["stddev"] = s.stddev;
            d["count"] = s.count;
            d["mean_length"] = s.mean_length;
            d["pooled"] = s.pooled;
            return d;
        },
        py::arg("traces"));
    m.def(
        "heatmap_grid",
        [](const py::dict & trace, int width) { return heatmap_grid(trace_from(trace), width).rows; },
        py::arg("trace"), py::arg("width") = 0);

    m.def("group_advantages", [](const std::vector<double> & r) { return group_advantages(r); }, py::arg("rewards"));
    m.def("clipped_term", &clipped_term, py::arg("rho"), py::arg("advantage"), py::arg("epsilon"));
    m.def(
        "gae_step_advantages",
        [](const std::vector<double> & rewards, const std::vector<double> & values, double gamma, double lambda) {
            return gae_step_advantages(rewards, values, gamma, lambda);
        },
        py::arg("step_rewards"), py::arg("values"), py::arg("gamma"), py::arg("lam"));
    m.def("stage_block_sizes", &stage_block_sizes, py::arg("b0"), py::arg("b_hat"));

    py::class_<PyModel>(m, "Model")
        .def(py::init<const py::dict &, std::uint64_t>(), py::arg("config") = py::dict(), py::arg("seed") = 1)
        .def_static("load", &PyModel::load, py::arg("path"))
        .def("save", &PyModel::save, py::arg("path"))
        .def_property_readonly("config", &PyModel::config)
        .def_property_readonly("num_parameters", &PyModel::num_parameters)
        .def("decode", &PyModel::decode, py::arg("prompt"), py::arg("block_size") = 2, py::arg("eta") = 0.9,
             py::arg("sample") = false, py::arg("seed") = 1, py::arg("shifted") = false,
             py::arg("response_len") = 8, py::arg("temperature") = 1.0);

    m.def("default_config", [] { return to_py(to_json(RunConfig())); });
    m.def(
        "sft",
        [](const py::object & cfg, const std::string & out, bool resume) {
            const RunConfig c = config_from(cfg, out);
            return released([&] { return cmd_sft(c, resume); });
        },
        py::arg("config") = py::none(), py::arg("out") = "", py::arg("resume") = false);
    m.def(
        "rl",
        [](const py::object & cfg, const std::string & checkpoint, const std::string & out) {
            const RunConfig c = config_from(cfg, out);
            return released([&] { return cmd_rl(c, checkpoint); });
        },
        py::arg("config"), py::arg("checkpoint"), py::arg("out") = "");
    m.def(
        "tstar",
        [](const py::object & cfg, const std::string & checkpoint, const std::string & out, bool resume) {
            const RunConfig c = config_from(cfg, out);
            return released([&] { return cmd_tstar(c, checkpoint, resume); });
        },
        py::arg("config"), py::arg("checkpoint"), py::arg("out") = "", py::arg("resume") = false);
    m.def(
        "decode",
        [](const py::object & cfg, const std::string & checkpoint, const std::string & out, int block_size,
           bool shifted, bool sample, const std::string & prompts) {
            const RunConfig c = config_from(cfg, out);
            return released([&] { return cmd_decode(c, checkpoint, DecodeOptions{block_size, shifted, sample, prompts}); });
        },
        py::arg("config"), py::arg("checkpoint"), py::arg("out") = "", py::arg("block_size") = 2,
        py::arg("shifted") = false, py::arg("sample") = false, py::arg("prompts") = "");
    m.def(
        "evaluate",
        [](const py::object & cfg, const std::string & checkpoint, const std::string & out, int block_size,
           bool shifted) {
            const RunConfig c = config_from(cfg, out);
            return released([&] { return cmd_eval(c, checkpoint, EvalOptions{block_size, shifted, true}); });
        },
        py::arg("config"), py::arg("checkpoint"), py::arg("out") = "", py::arg("block_size") = 2,
        py::arg("shifted") = false);
    m.def(
        "analyze",
        [](const py::object & cfg, const std::vector<std::string> & traces, const std::string & out, int width) {
            const RunConfig c = config_from(cfg, out);
            return released([&] { return cmd_analyze(c, AnalyzeOptions{paths(traces), width}); });
        },
        py::arg("config"), py::arg("traces"), py::arg("out") = "", py::arg("width") = 0);
}
