#pragma once

#include "mdlab/autograd.hpp"
#include "mdlab/partition.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mdlab {

struct ModelConfig {
    int vocab_size = 0;  // includes MASK, PAD, EOS, BOS
    int d_model = 64;
    int n_layers = 2;
    int n_heads = 4;
    int d_ff = 256;
    int max_len = 64;
    int mask_token_id = 1;

    void validate() const;
    bool operator==(const ModelConfig &) const = default;
};

struct ForwardOutput {
    Var logits;  // [L, vocab]
    Var hidden;  // [L, d_model], after the final layer norm
};

// Gradient buffers aligned with Model::params().
using Gradients = std::vector<std::vector<double>>;

// Pre-LN transformer with learned absolute positions and untied output head.
// Also carries a scalar value probe (value.w, value.b) used only by the
// step-level advantage path.
class Model {
  public:
    Model(ModelConfig cfg, std::uint64_t init_seed);
    Model(ModelConfig cfg, std::uint64_t init_seed, std::vector<Parameter> params);

    const ModelConfig & config() const { return cfg_; }
    std::uint64_t init_seed() const { return init_seed_; }

    std::vector<Parameter> & params() { return params_; }
    const std::vector<Parameter> & params() const { return params_; }
    std::size_t num_scalars() const;

    // General form: explicit position ids and visibility mask.
    ForwardOutput forward(Graph & g, std::span<const int> tokens, std::span<const int> positions,
                          const BoolMatrix & mask) const;
    // Positions 0..L-1 with the block-causal mask of `partition`.
    ForwardOutput forward(Graph & g, std::span<const int> tokens, const BlockPartition & partition) const;

    // [d_model] -> [1]
    Var value(Graph & g, Var pooled_hidden) const;

    Gradients zero_gradients() const;
    // Adds this graph's parameter gradients into `grads`.
    void accumulate(const Graph & g, Gradients & grads) const;

  private:
    struct LayerIdx {
        int ln1_g, ln1_b, w_qkv, b_qkv, w_o, b_o, ln2_g, ln2_b, w_1, b_1, w_2, b_2;
    };

    int add_param(const std::string & name, Shape shape);
    void index_params();

    ModelConfig cfg_;
    std::uint64_t init_seed_ = 0;
    std::vector<Parameter> params_;
    int tok_emb_ = -1, pos_emb_ = -1, lnf_g_ = -1, lnf_b_ = -1, w_out_ = -1, b_out_ = -1, v_w_ = -1, v_b_ = -1;
    std::vector<LayerIdx> layers_;
};

// Canonical parameter names and shapes for a config, in storage order.
std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelConfig & cfg);

}  // namespace mdlab
