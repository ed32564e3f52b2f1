#pragma once

#include "mdlab/tensor.hpp"

#include <functional>
#include <random>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

namespace mdlab {

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Eager tape. Every op computes its value immediately and, when gradients are
// enabled, records a closure that propagates the output gradient to its inputs.
// Nodes are appended in topological order, so backward is a reverse sweep.
class Graph {
  public:
    explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    Graph(const Graph &) = delete;
    Graph & operator=(const Graph &) = delete;

    bool grad_enabled() const { return grad_enabled_; }
    std::size_t size() const { return nodes_.size(); }

    Var constant(Tensor t);
    // Leaf that references the parameter's storage; the parameter must outlive the graph.
    Var param(const Parameter & p);

    const Tensor & value(Var v) const;
    // Empty span if the node received no gradient.
    std::span<const double> grad(Var v) const;

    // Reverse sweep from a single-element output.
    void backward(Var out);

    // After backward: gradients of every parameter leaf, in registration order.
    std::vector<std::pair<const Parameter *, std::span<const double>>> param_grads() const;

    // ---- ops ----
    Var matmul(Var a, Var b);     // [m,k] x [k,n]
    Var matmul_nt(Var a, Var b);  // [m,k] x [n,k]^T
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var add_row(Var a, Var row);  // [m,n] + [n]
    Var mul(Var a, Var b);
    Var scale(Var a, double c);
    Var reshape(Var a, Shape shape);
    Var exp(Var a);
    Var square(Var a);
    Var gelu(Var a);
    Var softmax(Var a);      // over last axis
    Var log_softmax(Var a);  // over last axis
    Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
    Var embedding(Var table, std::span<const int> ids);
    // (q k^T) / sqrt(d) with disallowed entries set to -inf.
    Var attention_scores(Var q, Var k, const BoolMatrix & mask);
    Var slice_cols(Var a, int start, int count);
    Var concat_cols(std::span<const Var> parts);
    Var gather_rows(Var a, std::span<const int> rows);
    Var pick(Var a, std::span<const int> cols);  // out[i] = a[i, cols[i]]
    Var sum(Var a);
    Var mean_rows(Var a);  // [m,n] -> [n]
    Var weighted_sum(Var a, std::span<const double> w);
    // Per element: min(r A, clip(r, 1-eps, 1+eps) A), r = exp(logp_new - logp_old).
    Var clipped_surrogate(Var logp_new, std::span<const double> logp_old, std::span<const double> adv, double eps);
    // Per row: sum_v p_new(v) (log p_new(v) - log p_old(v)), p_new = exp(logp_new).
    Var categorical_kl(Var logp_new, const Tensor & logp_old);

  private:
    struct Node {
        Tensor owned;
        const Tensor * ref = nullptr;
        const Parameter * param = nullptr;
        bool requires_grad = false;
        std::vector<double> grad;
        std::function<void()> backward;
    };

    const Tensor & val(int id) const { return nodes_[id].ref ? *nodes_[id].ref : nodes_[id].owned; }
    std::vector<double> & grad_buf(int id);
    bool needs(int id) const { return nodes_[id].requires_grad; }
    Var push(Tensor value, std::initializer_list<Var> parents, std::function<void()> bw);
    void expect(bool cond, const char * op, std::initializer_list<Var> args, const char * what) const;

    bool grad_enabled_;
    std::vector<Node> nodes_;
    std::unordered_map<const Parameter *, int> param_leaf_;
};

// Builds a scalar loss on a fresh graph; called repeatedly by the checker.
using LossBuilder = std::function<Var(Graph &)>;

// Central-difference check of reverse-mode gradients. Parameters are perturbed
// in place and restored. Returns max over sampled coordinates of
// |analytic - numeric| / max(1, |analytic|, |numeric|); 0 if nothing to check.
double finite_diff_check(const LossBuilder & build, std::span<Parameter * const> params, double eps,
                         int max_coords_per_param, std::mt19937_64 & rng);

}  // namespace mdlab
