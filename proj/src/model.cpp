#include "mdlab/model.hpp"

#include <random>
#include <stdexcept>

namespace mdlab {

void ModelConfig::validate() const {
    if (vocab_size < 1 || d_model < 1 || n_layers < 1 || n_heads < 1 || d_ff < 1 || max_len < 1) {
        throw std::invalid_argument("model config: all sizes must be positive");
    }
    if (d_model % n_heads != 0) {
        throw std::invalid_argument("model config: d_model " + std::to_string(d_model) +
                                    " not divisible by n_heads " + std::to_string(n_heads));
    }
    if (mask_token_id < 0 || mask_token_id >= vocab_size) {
        throw std::invalid_argument("model config: mask_token_id must be < vocab_size");
    }
}

std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelConfig & cfg) {
    const int d = cfg.d_model;
    std::vector<std::pair<std::string, Shape>> out{
        {"tok_emb", {cfg.vocab_size, d}},
        {"pos_emb", {cfg.max_len, d}},
    };
    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        out.push_back({p + "ln1.g", {d}});
        out.push_back({p + "ln1.b", {d}});
        out.push_back({p + "attn.w_qkv", {d, 3 * d}});
        out.push_back({p + "attn.b_qkv", {3 * d}});
        out.push_back({p + "attn.w_o", {d, d}});
        out.push_back({p + "attn.b_o", {d}});
        out.push_back({p + "ln2.g", {d}});
        out.push_back({p + "ln2.b", {d}});
        out.push_back({p + "mlp.w_1", {d, cfg.d_ff}});
        out.push_back({p + "mlp.b_1", {cfg.d_ff}});
        out.push_back({p + "mlp.w_2", {cfg.d_ff, d}});
        out.push_back({p + "mlp.b_2", {d}});
    }
    out.push_back({"ln_f.g", {d}});
    out.push_back({"ln_f.b", {d}});
    out.push_back({"head.w", {d, cfg.vocab_size}});
    out.push_back({"head.b", {cfg.vocab_size}});
    out.push_back({"value.w", {d, 1}});
    out.push_back({"value.b", {1}});
    return out;
}

namespace {

bool is_gain(const std::string & name) {
    return name.size() > 2 && name.compare(name.size() - 2, 2, ".g") == 0;
}

bool is_bias(const std::string & name) {
    const auto dot = name.rfind('.');
    const std::string leaf = dot == std::string::npos ? name : name.substr(dot + 1);
    return leaf == "b" || leaf.rfind("b_", 0) == 0;
}

}  // namespace

Model::Model(ModelConfig cfg, std::uint64_t init_seed) : cfg_(cfg), init_seed_(init_seed) {
    cfg_.validate();
    std::mt19937_64 rng(init_seed);
    std::normal_distribution<double> normal(0.0, 0.02);
    for (auto & [name, shape] : parameter_layout(cfg_)) {
        Tensor t(shape);
        if (is_gain(name)) {
            for (double & v : t.data()) {
                v = 1.0;
            }
        } else if (!is_bias(name)) {
            for (double & v : t.data()) {
                v = normal(rng);
            }
        }
        params_.push_back({name, std::move(t)});
    }
    index_params();
}

Model::Model(ModelConfig cfg, std::uint64_t init_seed, std::vector<Parameter> params)
    : cfg_(cfg), init_seed_(init_seed), params_(std::move(params)) {
    cfg_.validate();
    const auto layout = parameter_layout(cfg_);
    if (layout.size() != params_.size()) {
        throw std::invalid_argument("parameter list does not match model config layout");
    }
    for (std::size_t i = 0; i < layout.size(); ++i) {
        if (layout[i].first != params_[i].name || layout[i].second != params_[i].value.shape()) {
            throw std::invalid_argument("parameter " + params_[i].name + " " + shape_str(params_[i].value.shape()) +
                                        " does not match expected " + layout[i].first + " " +
                                        shape_str(layout[i].second));
        }
    }
    index_params();
}

void Model::index_params() {
    int i = 0;
    tok_emb_ = i++;
    pos_emb_ = i++;
    layers_.clear();
    for (int l = 0; l < cfg_.n_layers; ++l) {
        LayerIdx L{};
        L.ln1_g = i++;
        L.ln1_b = i++;
        L.w_qkv = i++;
        L.b_qkv = i++;
        L.w_o = i++;
        L.b_o = i++;
        L.ln2_g = i++;
        L.ln2_b = i++;
        L.w_1 = i++;
        L.b_1 = i++;
        L.w_2 = i++;
        L.b_2 = i++;
        layers_.push_back(L);
    }
    lnf_g_ = i++;
    lnf_b_ = i++;
    w_out_ = i++;
    b_out_ = i++;
    v_w_ = i++;
    v_b_ = i++;
}

std::size_t Model::num_scalars() const {
    std::size_t n = 0;
    for (const auto & p : params_) {
        n += p.value.size();
    }
    return n;
}

ForwardOutput Model::forward(Graph & g, std::span<const int> tokens, std::span<const int> positions,
                             const BoolMatrix & mask) const {
    const int L = static_cast<int>(tokens.size());
    if (L < 1) {
        throw std::invalid_argument("forward: empty token sequence");
    }
    if (static_cast<int>(positions.size()) != L || mask.rows != L || mask.cols != L) {
        throw ShapeError("forward: tokens, positions and mask sizes disagree");
    }
    for (int t : tokens) {
        if (t < 0 || t >= cfg_.vocab_size) {
            throw std::invalid_argument("forward: token id " + std::to_string(t) + " outside vocabulary of " +
                                        std::to_string(cfg_.vocab_size));
        }
    }
    for (int p : positions) {
        if (p < 0 || p >= cfg_.max_len) {
            throw std::invalid_argument("forward: position " + std::to_string(p) + " exceeds max_len " +
                                        std::to_string(cfg_.max_len));
        }
    }
    auto P = [&](int idx) { return g.param(params_[idx]); };
    const int d = cfg_.d_model;
    const int dh = d / cfg_.n_heads;

    Var x = g.add(g.embedding(P(tok_emb_), tokens), g.embedding(P(pos_emb_), positions));
    for (const LayerIdx & ly : layers_) {
        Var h = g.layer_norm(x, P(ly.ln1_g), P(ly.ln1_b));
        Var qkv = g.add_row(g.matmul(h, P(ly.w_qkv)), P(ly.b_qkv));
        std::vector<Var> heads;
        heads.reserve(cfg_.n_heads);
        for (int hd = 0; hd < cfg_.n_heads; ++hd) {
            Var q = g.slice_cols(qkv, hd * dh, dh);
            Var k = g.slice_cols(qkv, d + hd * dh, dh);
            Var v = g.slice_cols(qkv, 2 * d + hd * dh, dh);
            Var att = g.softmax(g.attention_scores(q, k, mask));
            heads.push_back(g.matmul(att, v));
        }
        Var o = g.add_row(g.matmul(g.concat_cols(heads), P(ly.w_o)), P(ly.b_o));
        x = g.add(x, o);
        Var h2 = g.layer_norm(x, P(ly.ln2_g), P(ly.ln2_b));
        Var f = g.gelu(g.add_row(g.matmul(h2, P(ly.w_1)), P(ly.b_1)));
        x = g.add(x, g.add_row(g.matmul(f, P(ly.w_2)), P(ly.b_2)));
    }
    Var hidden = g.layer_norm(x, P(lnf_g_), P(lnf_b_));
    Var logits = g.add_row(g.matmul(hidden, P(w_out_)), P(b_out_));
    return {logits, hidden};
}

ForwardOutput Model::forward(Graph & g, std::span<const int> tokens, const BlockPartition & partition) const {
    const int L = static_cast<int>(tokens.size());
    std::vector<int> positions(L);
    for (int i = 0; i < L; ++i) {
        positions[i] = i;
    }
    return forward(g, tokens, positions, attention_mask(partition, L));
}

Var Model::value(Graph & g, Var pooled_hidden) const {
    const Tensor & h = g.value(pooled_hidden);
    if (h.rank() != 1 || h.dim(0) != cfg_.d_model) {
        throw ShapeError("value: expected pooled hidden of width " + std::to_string(cfg_.d_model));
    }
    Var row = g.reshape(pooled_hidden, {1, cfg_.d_model});
    return g.add(g.reshape(g.matmul(row, g.param(params_[v_w_])), {1}), g.param(params_[v_b_]));
}

Gradients Model::zero_gradients() const {
    Gradients out;
    out.reserve(params_.size());
    for (const auto & p : params_) {
        out.emplace_back(p.value.size(), 0.0);
    }
    return out;
}

void Model::accumulate(const Graph & g, Gradients & grads) const {
    for (auto [param, grad] : g.param_grads()) {
        if (grad.empty()) {
            continue;
        }
        const auto idx = param - params_.data();
        if (idx < 0 || idx >= static_cast<std::ptrdiff_t>(params_.size())) {
            throw std::invalid_argument("accumulate: graph references a parameter of another model");
        }
        auto & dst = grads[static_cast<std::size_t>(idx)];
        for (std::size_t i = 0; i < grad.size(); ++i) {
            dst[i] += grad[i];
        }
    }
}

}  // namespace mdlab
