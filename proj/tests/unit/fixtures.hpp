#pragma once

#include "mdlab/model.hpp"
#include "mdlab/tasks.hpp"

namespace fixtures {

inline mdlab::ModelConfig tiny_config(int vocab = mdlab::Vocab().size()) {
    mdlab::ModelConfig c;
    c.vocab_size = vocab;
    c.d_model = 16;
    c.n_layers = 2;
    c.n_heads = 2;
    c.d_ff = 32;
    c.max_len = 32;
    return c;
}

// Random init scaled up so distributions are far from uniform.
inline mdlab::Model sharp_model(std::uint64_t seed, double scale = 10.0) {
    mdlab::Model m(tiny_config(), seed);
    for (auto & p : m.params()) {
        if (p.name.find(".g") == std::string::npos) {
            for (double & v : p.value.data()) {
                v *= scale;
            }
        }
    }
    return m;
}

}  // namespace fixtures
