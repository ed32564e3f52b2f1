#include "mdlab/autograd.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace mdlab {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

constexpr double kInvSqrt2Pi = 0.7978845608028654;  // sqrt(2/pi)

int rows_of(const Tensor & t) {
    return t.rank() == 0 ? 1 : static_cast<int>(t.size() / t.shape().back());
}

int cols_of(const Tensor & t) {
    return t.rank() == 0 ? 1 : t.shape().back();
}

}  // namespace

void Graph::expect(bool cond, const char * op, std::initializer_list<Var> args, const char * what) const {
    if (cond) {
        return;
    }
    std::ostringstream os;
    os << op << ": " << what << " (shapes";
    for (Var a : args) {
        os << ' ' << shape_str(val(a.id).shape());
    }
    os << ')';
    throw ShapeError(os.str());
}

Var Graph::push(Tensor value, std::initializer_list<Var> parents, std::function<void()> bw) {
    Node n;
    n.owned = std::move(value);
    if (grad_enabled_) {
        for (Var p : parents) {
            if (nodes_[p.id].requires_grad) {
                n.requires_grad = true;
                break;
            }
        }
    }
    if (n.requires_grad) {
        n.backward = std::move(bw);
    }
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

std::vector<double> & Graph::grad_buf(int id) {
    auto & g = nodes_[id].grad;
    if (g.empty()) {
        g.assign(val(id).size(), 0.0);
    }
    return g;
}

Var Graph::constant(Tensor t) {
    Node n;
    n.owned = std::move(t);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Graph::param(const Parameter & p) {
    if (auto it = param_leaf_.find(&p); it != param_leaf_.end()) {
        return Var{it->second};
    }
    Node n;
    n.ref = &p.value;
    n.param = &p;
    n.requires_grad = grad_enabled_;
    nodes_.push_back(std::move(n));
    int id = static_cast<int>(nodes_.size()) - 1;
    param_leaf_.emplace(&p, id);
    return Var{id};
}

const Tensor & Graph::value(Var v) const {
    return val(v.id);
}

std::span<const double> Graph::grad(Var v) const {
    return nodes_[v.id].grad;
}

void Graph::backward(Var out) {
    if (val(out.id).size() != 1) {
        throw ShapeError("backward: output must be scalar, got shape " + shape_str(val(out.id).shape()));
    }
    if (!nodes_[out.id].requires_grad) {
        return;
    }
    grad_buf(out.id)[0] += 1.0;
    for (int id = out.id; id >= 0; --id) {
        Node & n = nodes_[id];
        if (n.backward && !n.grad.empty()) {
            n.backward();
        }
    }
}

std::vector<std::pair<const Parameter *, std::span<const double>>> Graph::param_grads() const {
    std::vector<std::pair<const Parameter *, std::span<const double>>> out;
    for (const Node & n : nodes_) {
        if (n.param) {
            out.emplace_back(n.param, std::span<const double>(n.grad));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

Var Graph::matmul(Var a, Var b) {
    const Tensor & A = val(a.id);
    const Tensor & B = val(b.id);
    expect(A.rank() == 2 && B.rank() == 2 && A.dim(1) == B.dim(0), "matmul", {a, b}, "inner dimensions differ");
    const int m = A.dim(0), k = A.dim(1), n = B.dim(1);
    Tensor C({m, n});
    Map(C.data().data(), m, n).noalias() = MapC(A.data().data(), m, k) * MapC(B.data().data(), k, n);
    Var out = push(std::move(C), {a, b}, {});
    if (nodes_[out.id].requires_grad) {
        nodes_[out.id].backward = [this, a, b, out, m, k, n] {
            MapC dC(nodes_[out.id].grad.data(), m, n);
            if (needs(a.id)) {
                Map(grad_buf(a.id).data(), m, k).noalias() += dC * MapC(val(b.id).data().data(), k, n).transpose();
            }
            if (needs(b.id)) {
                Map(grad_buf(b.id).data(), k, n).noalias() += MapC(val(a.id).data().data(), m, k).transpose() * dC;
            }
        };
    }
    return out;
}

Var Graph::matmul_nt(Var a, Var b) {
    const Tensor & A = val(a.id);
    const Tensor & B = val(b.id);
    expect(A.rank() == 2 && B.rank() == 2 && A.dim(1) == B.dim(1), "matmul_nt", {a, b}, "inner dimensions differ");
    const int m = A.dim(0), k = A.dim(1), n = B.dim(0);
    Tensor C({m, n});
    Map(C.data().data(), m, n).noalias() = MapC(A.data().data(), m, k) * MapC(B.data().data(), n, k).transpose();
    Var out = push(std::move(C), {a, b}, {});
    if (nodes_[out.id].requires_grad) {
        nodes_[out.id].backward = [this, a, b, out, m, k, n] {
            MapC dC(nodes_[out.id].grad.data(), m, n);
            if (needs(a.id)) {
                Map(grad_buf(a.id).data(), m, k).noalias() += dC * MapC(val(b.id).data().data(), n, k);
            }
            if (needs(b.id)) {
                Map(grad_buf(b.id).data(), n, k).noalias() += dC.transpose() * MapC(val(a.id).data().data(), m, k);
            }
        };
    }
    return out;
}

Var Graph::add(Var a, Var b) {
    const Tensor & A = val(a.id);
    const Tensor & B = val(b.id);
    expect(A.shape() == B.shape(), "add", {a, b}, "shapes differ");
    Tensor C(A.shape());
    for (std::size_t i = 0; i < C.size(); ++i) {
        C[i] = A[i] + B[i];
    }
    Var out = push(std::move(C), {a, b}, {});
    if (nodes_[out.id].requires_grad) {
        nodes_[out.id].backward = [this, a, b, out] {
            const auto & g = nodes_[out.id].grad;
            for (Var p : {a, b}) {
                if (needs(p.id)) {
                    auto & d = grad_buf(p.id);
                    for (std::size_t i = 0; i < g.size(); ++i) {
                        d[i] += g[i];
                    }
                }
            }
        };
    }
    return out;
}

Var Graph::sub(Var a, Var b) {
    const Tensor & A = val(a.id);
    const Tensor & B = val(b.id);
    expect(A.shape() == B.shape(), "sub", {a, b}, "shapes differ");
    Tensor C(A.shape());
    for (std::size_t i = 0; i < C.size(); ++i) {
        C[i] = A[i] - B[i];
    }
    Var out = push(std::move(C), {a, b}, {});
    if (nodes_[out.id].requires_grad) {
        nodes_[out.id].backward = [this, a, b, out] {
            const auto & g = nodes_[out.id].grad;
            if (needs(a.id)) {
                auto & d = grad_buf(a.id);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    d[i] += g[i];
                }
            }
            if (needs(b.id)) {
                auto & d = grad_buf(b.id);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    d[i] -= g[i];
                }
            }
        };
    }
    return out;
}

Var Graph::add_row(Var a, Var row) {
    const Tensor & A = val(a.id);
    const Tensor & R = val(row.id);
    expect(A.rank() == 2 && R.rank() == 1 && R.dim(0) == A.dim(1), "add_row", {a, row}, "row length must match columns");
    const int m = A.dim(0), n = A.dim(1);
    Tensor C(A.shape());
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            C[i * n + j] = A[i * n + j] + R[j];
        }
    }
    Var out = push(std::move(C), {a, row}, {});
    if (nodes_[out.id].requires_grad) {
        nodes_[out.id].backward = [this, a, row, out, m, n] {
            const auto & g = nodes_[out.id].grad;
            if (needs(a.id)) {
                auto & d = grad_buf(a.id);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    d[i] += g[i];
                }
            }
            if (needs(row.id)) {
                auto & d = grad_buf(row.id);
                for (int i = 0; i < m; ++i) {
                    for (int j = 0; j < n; ++j) {
                        d[j] += g[i * n + j];
                    }
                }
            }
        };
    }
    return out;
}

Var Graph::mul(Var a, Var b) {
    const Tensor & A = val(a.id);
    const Tensor & B = val(b.id);
    expect(A.shape() == B.shape(), "mul", {a, b}, "shapes differ");
    Tensor C(A.shape());
    for (std::size_t i = 0; i < C.size(); ++i) {
        C[i] = A[i] * B[i];
    }
    Var out = push(std::move(C), {a, b}, {});
    if (nodes_[out.id].requires_grad) {
        nodes_[out.id].backward = [this, a, b, out] {
            const auto & g = nodes_[out.id].grad;
            if (needs(a.id)) {
                auto & d = grad_buf(a.id);
                const Tensor & B = val(b.id);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    d[i] += g[i] * B[i];
                }
            }
            if (needs(b.id)) {
                auto & d = grad_buf(b.id);
                const Tensor & A = val(a.id);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    d[i] += g[i] * A[i];
                }
            }
        };
    }
    return out;
}

Var Graph::scale(Var a, double c) {
    const Tensor & A = val(a.id);
    Tensor C(A.shape());
    for (std::size_t i = 0; i < C.size(); ++i) {
        C[i] = A[i] * c;
    }
    Var out = push(std::move(C), {a}, {});
    if (nodes_[out.id].requires_grad) {
        nodes_[out.id].backward = [this, a, out, c] {
            const auto & g = nodes_[out.id].grad;
            auto & d = grad_buf(a.id);
            for (std::size_t i = 0; i < g.size(); ++i) {
                d[i] += g[i] * c;
            }
        };
    }
    return out;
}

Var Graph::reshape(Var a, Shape shape) {
    const Tensor & A = val(a.id);
    expect(shape_numel(shape) == A.size(), "reshape", {a}, "element count changes");
    Var out = push(Tensor(std::move(shape), A.vec()), {a}, {});
    if (nodes_[out.id].requires_grad) {
        nodes_[out.id].backward = [this, a, out] {
            const auto & g = nodes_[out.id].grad;
            auto & d = grad_buf(a.id);
            for (std::size_t i = 0; i < g.size(); ++i) {
                d[i] += g[i];
            }
        };
    }
    return out;
}

Var Graph::exp(Var a) {
    const Tensor & A = val(a.id);
    Tensor C(A.shape());
    for (std::size_t i = 0; i < C.size(); ++i) {
        C[i] = std::exp(A[i]);
    }
    Var out = push(std::move(C), {a}, {});
    if (nodes_[out.id].requires_grad) {
        nodes_[out.id].backward = [this, a, out] {
            const auto & g = nodes_[out.id].grad;
            const Tensor & y = val(out.id);
            auto & d = grad_buf(a.id);
            for (std::size_t i = 0; i < g.size(); ++i) {
                d[i] += g[i] * y[i];
            }
        };
    }
    return out;
}

Var Graph::square(Var a) {
    const Tensor & A = val(a.id);
    Tensor C(A.shape());
    for (std::size_t i = 0; i < C.size(); ++i) {
        C[i] = A[i] * A[i];
    }
    Var out = push(std::move(C), {a}, {});
    if (nodes_[out.id].requires_grad) {
        nodes_[out.id].backward = [this, a, out] {
            const auto & g = nodes_[out.id].grad;
            const Tensor & x = val(a.id);
            auto & d = grad_buf(a.id);
            for (std::size_t i = 0; i < g.size(); ++i) {
                d[i] += 2.0 * g[i] * x[i];
            }
        };
    }
    return out;
}

// tanh approximation
Var Graph::gelu(Var a) {
    const Tensor & A = val(a.id);
    Tensor C(A.shape());
    for (std::size_t i = 0; i < C.size(); ++i) {
        const double x = A[i];
        C[i] = 0.5 * x * (1.0 + std::tanh(kInvSqrt2Pi * (x + 0.044715 * x * x * x)));
    }
    Var out = push(std::move(C), {a}, {});
    if (nodes_[out.id].requires_grad) {
        nodes_[out.id].backward = [this, a, out] {
            const auto & g = nodes_[out.id].grad;
            const Tensor & A = val(a.id);
            auto & d = grad_buf(a.id);
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double x = A[i];
                const double u = kInvSqrt2Pi * (x + 0.044715 * x * x * x);
                const double th = std::tanh(u);
                const double du = kInvSqrt2Pi * (1.0 + 3.0 * 0.044715 * x * x);
                d[i] += g[i] * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du);
            }
        };
    }
    return out;
}

Var Graph::softmax(Var a) {
    const Tensor & A = val(a.id);
    expect(A.rank() >= 1, "softmax", {a}, "needs at least one axis");
    const int m = rows_of(A), n = cols_of(A);
    Tensor C(A.shape());
    for (int i = 0; i < m; ++i) {
        const double * x = A.data().data() + static_cast<std::size_t>(i) * n;
        double * y = C.data().data() + static_cast<std::size_t>(i) * n;
        const double mx = *std::max_element(x, x + n);
        double s = 0.0;
        for (int j = 0; j < n; ++j) {
            y[j] = std::exp(x[j] - mx);
            s += y[j];
        }
        for (int j = 0; j < n; ++j) {
            y[j] /= s;
        }
    }
    Var out = push(std::move(C), {a}, {});
    if (nodes_[out.id].requires_grad) {
        nodes_[out.id].backward = [this, a, out, m, n] {
            const auto & g = nodes_[out.id].grad;
            const Tensor & y = val(out.id);
            auto & d = grad_buf(a.id);
            for (int i = 0; i < m; ++i) {
                const std::size_t o = static_cast<std::size_t>(i) * n;
                double dot = 0.0;
                for (int j = 0; j < n; ++j) {
                    dot += g[o + j] * y[o + j];
                }
                for (int j = 0; j < n; ++j) {
                    d[o + j] += y[o + j] * (g[o + j] - dot);
                }
            }
        };
    }
    return out;
}

Var Graph::log_softmax(Var a) {
    const Tensor & A = val(a.id);
    expect(A.rank() >= 1, "log_softmax", {a}, "needs at least one axis");
    const int m = rows_of(A), n = cols_of(A);
    Tensor C(A.shape());
    for (int i = 0; i < m; ++i) {
        const double * x = A.data().data() + static_cast<std::size_t>(i) * n;
        double * y = C.data().data() + static_cast<std::size_t>(i) * n;
        const double mx = *std::max_element(x, x + n);
        double s = 0.0;
        for (int j = 0; j < n; ++j) {
            s += std::exp(x[j] - mx);
        }
        const double lse = mx + std::log(s);
        for (int j = 0; j < n; ++j) {
            y[j] = x[j] - lse;
        }
    }
    Var out = push(std::move(C), {a}, {});
    if (nodes_[out.id].requires_grad) {
        nodes_[out.id].backward = [this, a, out, m, n] {
            const auto & g = nodes_[out.id].grad;
            const Tensor & y = val(out.id);
            auto & d = grad_buf(a.id);
            for (int i = 0; i < m; ++i) {
                const std::size_t o = static_cast<std::size_t>(i) * n;
                double gs = 0.0;
                for (int j = 0; j < n; ++j) {
                    gs += g[o + j];
                }
                for (int j = 0; j < n; ++j) {
                    d[o + j] += g[o + j] - std::exp(y[o + j]) * gs;
                }
            }
        };
    }
    return out;
}

Var Graph::layer_norm(Var x, Var gain, Var bias, double eps) {
    const Tensor & X = val(x.id);
    const Tensor & G = val(gain.id);
    const Tensor & Bv = val(bias.id);
    expect(X.rank() == 2 && G.rank() == 1 && Bv.rank() == 1 && G.dim(0) == X.dim(1) && Bv.dim(0) == X.dim(1),
           "layer_norm", {x, gain, bias}, "gain/bias must match feature width");
    const int m = X.dim(0), n = X.dim(1);
    Tensor C(X.shape());
    std::vector<double> xhat(X.size());
    std::vector<double> inv_std(m);
    for (int i = 0; i < m; ++i) {
        const std::size_t o = static_cast<std::size_t>(i) * n;
        double mu = 0.0;
        for (int j = 0; j < n; ++j) {
            mu += X[o + j];
        }
        mu /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) {
            const double c = X[o + j] - mu;
            var += c * c;
        }
        var /= n;
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (int j = 0; j < n; ++j) {
            xhat[o + j] = (X[o + j] - mu) * inv_std[i];
            C[o + j] = xhat[o + j] * G[j] + Bv[j];
        }
    }
    Var out = push(std::move(C), {x, gain, bias}, {});
    if (nodes_[out.id].requires_grad) {
        nodes_[out.id].backward = [this, x, gain, bias, out, m, n, xhat = std::move(xhat),
                                   inv_std = std::move(inv_std)] {
            const auto & g = nodes_[out.id].grad;
            const Tensor & G = val(gain.id);
            if (needs(gain.id) || needs(bias.id)) {
                auto & dg = grad_buf(gain.id);
                auto & db = grad_buf(bias.id);
                for (int i = 0; i < m; ++i) {
                    for (int j = 0; j < n; ++j) {
                        const std::size_t k = static_cast<std::size_t>(i) * n + j;
                        dg[j] += g[k] * xhat[k];
                        db[j] += g[k];
                    }
                }
            }
            if (needs(x.id)) {
                auto & dx = grad_buf(x.id);
                for (int i = 0; i < m; ++i) {
                    const std::size_t o = static_cast<std::size_t>(i) * n;
                    double mean_d = 0.0, mean_dx = 0.0;
                    for (int j = 0; j < n; ++j) {
                        const double dh = g[o + j] * G[j];
                        mean_d += dh;
                        mean_dx += dh * xhat[o + j];
                    }
                    mean_d /= n;
                    mean_dx /= n;
                    for (int j = 0; j < n; ++j) {
                        const double dh = g[o + j] * G[j];
                        dx[o + j] += inv_std[i] * (dh - mean_d - xhat[o + j] * mean_dx);
                    }
                }
            }
        };
    }
    return out;
}

Var Graph::embedding(Var table, std::span<const int> ids) {
    const Tensor & T = val(table.id);
    expect(T.rank() == 2, "embedding", {table}, "table must be 2-D");
    const int rows = T.dim(0), d = T.dim(1);
    const int len = static_cast<int>(ids.size());
    Tensor C({len, d});
    for (int i = 0; i < len; ++i) {
        if (ids[i] < 0 || ids[i] >= rows) {
            throw std::out_of_range("embedding: id " + std::to_string(ids[i]) + " outside table of " +
                                    std::to_string(rows) + " rows");
        }
        std::copy_n(T.data().data() + static_cast<std::size_t>(ids[i]) * d, d,
                    C.data().data() + static_cast<std::size_t>(i) * d);
    }
    Var out = push(std::move(C), {table}, {});
    if (nodes_[out.id].requires_grad) {
        nodes_[out.id].backward = [this, table, out, d, idv = std::vector<int>(ids.begin(), ids.end())] {
            const auto & g = nodes_[out.id].grad;
            auto & dt = grad_buf(table.id);
            for (std::size_t i = 0; i < idv.size(); ++i) {
                for (int j = 0; j < d; ++j) {
                    dt[static_cast<std::size_t>(idv[i]) * d + j] += g[i * d + j];
                }
            }
        };
    }
    return out;
}

Var Graph::attention_scores(Var q, Var k, const BoolMatrix & mask) {
    const Tensor & Q = val(q.id);
    const Tensor & K = val(k.id);
    expect(Q.rank() == 2 && K.rank() == 2 && Q.dim(1) == K.dim(1), "attention_scores", {q, k}, "head widths differ");
    const int m = Q.dim(0), n = K.dim(0), dh = Q.dim(1);
    expect(mask.rows == m && mask.cols == n, "attention_scores", {q, k}, "mask does not match query/key counts");
    const double s = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor C({m, n});
    Map(C.data().data(), m, n).noalias() = s * (MapC(Q.data().data(), m, dh) * MapC(K.data().data(), n, dh).transpose());
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            if (!mask(i, j)) {
                C[static_cast<std::size_t>(i) * n + j] = -std::numeric_limits<double>::infinity();
            }
        }
    }
    Var out = push(std::move(C), {q, k}, {});
    if (nodes_[out.id].requires_grad) {
        nodes_[out.id].backward = [this, q, k, out, m, n, dh, s, mask] {
            std::vector<double> g = nodes_[out.id].grad;
            for (int i = 0; i < m; ++i) {
                for (int j = 0; j < n; ++j) {
                    if (!mask(i, j)) {
                        g[static_cast<std::size_t>(i) * n + j] = 0.0;
                    }
                }
            }
            MapC dC(g.data(), m, n);
            if (needs(q.id)) {
                Map(grad_buf(q.id).data(), m, dh).noalias() += s * (dC * MapC(val(k.id).data().data(), n, dh));
            }
            if (needs(k.id)) {
                Map(grad_buf(k.id).data(), n, dh).noalias() +=
                    s * (dC.transpose() * MapC(val(q.id).data().data(), m, dh));
            }
        };
    }
    return out;
}

Var Graph::slice_cols(Var a, int start, int count) {
    const Tensor & A = val(a.id);
    expect(A.rank() == 2 && start >= 0 && count >= 0 && start + count <= A.dim(1), "slice_cols", {a},
           "column range out of bounds");
    const int m = A.dim(0), n = A.dim(1);
    Tensor C({m, count});
    for (int i = 0; i < m; ++i) {
        std::copy_n(A.data().data() + static_cast<std::size_t>(i) * n + start, count,
                    C.data().data() + static_cast<std::size_t>(i) * count);
    }
    Var out = push(std::move(C), {a}, {});
    if (nodes_[out.id].requires_grad) {
        nodes_[out.id].backward = [this, a, out, m, n, start, count] {
            const auto & g = nodes_[out.id].grad;
            auto & d = grad_buf(a.id);
            for (int i = 0; i < m; ++i) {
                for (int j = 0; j < count; ++j) {
                    d[static_cast<std::size_t>(i) * n + start + j] += g[static_cast<std::size_t>(i) * count + j];
                }
            }
        };
    }
    return out;
}

Var Graph::concat_cols(std::span<const Var> parts) {
    if (parts.empty()) {
        throw ShapeError("concat_cols: no inputs");
    }
    const int m = val(parts[0].id).dim(0);
    int n = 0;
    std::vector<int> widths;
    for (Var p : parts) {
        const Tensor & P = val(p.id);
        expect(P.rank() == 2 && P.dim(0) == m, "concat_cols", {parts[0], p}, "row counts differ");
        widths.push_back(P.dim(1));
        n += P.dim(1);
    }
    Tensor C({m, n});
    int off = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        const Tensor & P = val(parts[p].id);
        for (int i = 0; i < m; ++i) {
            std::copy_n(P.data().data() + static_cast<std::size_t>(i) * widths[p], widths[p],
                        C.data().data() + static_cast<std::size_t>(i) * n + off);
        }
        off += widths[p];
    }
    Node node;
    node.owned = std::move(C);
    if (grad_enabled_) {
        for (Var p : parts) {
            node.requires_grad = node.requires_grad || nodes_[p.id].requires_grad;
        }
    }
    nodes_.push_back(std::move(node));
    Var out{static_cast<int>(nodes_.size()) - 1};
    if (nodes_[out.id].requires_grad) {
        nodes_[out.id].backward = [this, out, m, n, widths, pv = std::vector<Var>(parts.begin(), parts.end())] {
            const auto & g = nodes_[out.id].grad;
            int off = 0;
            for (std::size_t p = 0; p < pv.size(); ++p) {
                if (needs(pv[p].id)) {
                    auto & d = grad_buf(pv[p].id);
                    for (int i = 0; i < m; ++i) {
                        for (int j = 0; j < widths[p]; ++j) {
                            d[static_cast<std::size_t>(i) * widths[p] + j] += g[static_cast<std::size_t>(i) * n + off + j];
                        }
                    }
                }
                off += widths[p];
            }
        };
    }
    return out;
}

Var Graph::gather_rows(Var a, std::span<const int> rows) {
    const Tensor & A = val(a.id);
    expect(A.rank() == 2, "gather_rows", {a}, "input must be 2-D");
    const int m = A.dim(0), n = A.dim(1);
    const int r = static_cast<int>(rows.size());
    Tensor C({r, n});
    for (int i = 0; i < r; ++i) {
        if (rows[i] < 0 || rows[i] >= m) {
            throw std::out_of_range("gather_rows: row " + std::to_string(rows[i]) + " outside " + std::to_string(m));
        }
        std::copy_n(A.data().data() + static_cast<std::size_t>(rows[i]) * n, n,
                    C.data().data() + static_cast<std::size_t>(i) * n);
    }
    Var out = push(std::move(C), {a}, {});
    if (nodes_[out.id].requires_grad) {
        nodes_[out.id].backward = [this, a, out, n, rv = std::vector<int>(rows.begin(), rows.end())] {
            const auto & g = nodes_[out.id].grad;
            auto & d = grad_buf(a.id);
            for (std::size_t i = 0; i < rv.size(); ++i) {
                for (int j = 0; j < n; ++j) {
                    d[static_cast<std::size_t>(rv[i]) * n + j] += g[i * n + j];
                }
            }
        };
    }
    return out;
}

Var Graph::pick(Var a, std::span<const int> cols) {
    const Tensor & A = val(a.id);
    expect(A.rank() == 2 && A.dim(0) == static_cast<int>(cols.size()), "pick", {a}, "need one index per row");
    const int m = A.dim(0), n = A.dim(1);
    Tensor C({m});
    for (int i = 0; i < m; ++i) {
        if (cols[i] < 0 || cols[i] >= n) {
            throw std::out_of_range("pick: index " + std::to_string(cols[i]) + " outside " + std::to_string(n));
        }
        C[i] = A[static_cast<std::size_t>(i) * n + cols[i]];
    }
    Var out = push(std::move(C), {a}, {});
    if (nodes_[out.id].requires_grad) {
        nodes_[out.id].backward = [this, a, out, n, cv = std::vector<int>(cols.begin(), cols.end())] {
            const auto & g = nodes_[out.id].grad;
            auto & d = grad_buf(a.id);
            for (std::size_t i = 0; i < cv.size(); ++i) {
                d[i * n + cv[i]] += g[i];
            }
        };
    }
    return out;
}

Var Graph::sum(Var a) {
    const Tensor & A = val(a.id);
    double s = 0.0;
    for (double v : A.data()) {
        s += v;
    }
    Var out = push(Tensor::scalar(s), {a}, {});
    if (nodes_[out.id].requires_grad) {
        nodes_[out.id].backward = [this, a, out] {
            const double g = nodes_[out.id].grad[0];
            for (double & d : grad_buf(a.id)) {
                d += g;
            }
        };
    }
    return out;
}

Var Graph::mean_rows(Var a) {
    const Tensor & A = val(a.id);
    expect(A.rank() == 2 && A.dim(0) > 0, "mean_rows", {a}, "needs a nonempty 2-D input");
    const int m = A.dim(0), n = A.dim(1);
    Tensor C({n});
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            C[j] += A[static_cast<std::size_t>(i) * n + j];
        }
    }
    for (int j = 0; j < n; ++j) {
        C[j] /= m;
    }
    Var out = push(std::move(C), {a}, {});
    if (nodes_[out.id].requires_grad) {
        nodes_[out.id].backward = [this, a, out, m, n] {
            const auto & g = nodes_[out.id].grad;
            auto & d = grad_buf(a.id);
            for (int i = 0; i < m; ++i) {
                for (int j = 0; j < n; ++j) {
                    d[static_cast<std::size_t>(i) * n + j] += g[j] / m;
                }
            }
        };
    }
    return out;
}

Var Graph::weighted_sum(Var a, std::span<const double> w) {
    const Tensor & A = val(a.id);
    expect(A.size() == w.size(), "weighted_sum", {a}, "weight count differs from element count");
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        s += A[i] * w[i];
    }
    Var out = push(Tensor::scalar(s), {a}, {});
    if (nodes_[out.id].requires_grad) {
        nodes_[out.id].backward = [this, a, out, wv = std::vector<double>(w.begin(), w.end())] {
            const double g = nodes_[out.id].grad[0];
            auto & d = grad_buf(a.id);
            for (std::size_t i = 0; i < wv.size(); ++i) {
                d[i] += g * wv[i];
            }
        };
    }
    return out;
}

Var Graph::clipped_surrogate(Var logp_new, std::span<const double> logp_old, std::span<const double> adv, double eps) {
    const Tensor & L = val(logp_new.id);
    expect(L.size() == logp_old.size() && L.size() == adv.size(), "clipped_surrogate", {logp_new},
           "old log-probs / advantages must match token count");
    const std::size_t n = L.size();
    Tensor C({static_cast<int>(n)});
    // d out / d logp_new: r*A on the unclipped branch, 0 when the clipped branch is selected.
    std::vector<double> dlogp(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double r = std::exp(L[i] - logp_old[i]);
        const double unclipped = r * adv[i];
        const double clipped = std::clamp(r, 1.0 - eps, 1.0 + eps) * adv[i];
        if (unclipped <= clipped) {
            C[i] = unclipped;
            dlogp[i] = unclipped;
        } else {
            C[i] = clipped;
        }
    }
    Var out = push(std::move(C), {logp_new}, {});
    if (nodes_[out.id].requires_grad) {
        nodes_[out.id].backward = [this, logp_new, out, dlogp = std::move(dlogp)] {
            const auto & g = nodes_[out.id].grad;
            auto & d = grad_buf(logp_new.id);
            for (std::size_t i = 0; i < g.size(); ++i) {
                d[i] += g[i] * dlogp[i];
            }
        };
    }
    return out;
}

Var Graph::categorical_kl(Var logp_new, const Tensor & logp_old) {
    const Tensor & L = val(logp_new.id);
    expect(L.rank() == 2 && L.shape() == logp_old.shape(), "categorical_kl", {logp_new},
           "cached old log-probs must match new log-prob rows");
    const int m = L.dim(0), n = L.dim(1);
    Tensor C({m});
    for (int i = 0; i < m; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) {
            const std::size_t k = static_cast<std::size_t>(i) * n + j;
            const double p = std::exp(L[k]);
            if (p > 0.0) {
                s += p * (L[k] - logp_old[k]);
            }
        }
        C[i] = s;
    }
    Var out = push(std::move(C), {logp_new}, {});
    if (nodes_[out.id].requires_grad) {
        nodes_[out.id].backward = [this, logp_new, out, m, n, old = logp_old] {
            const auto & g = nodes_[out.id].grad;
            const Tensor & L = val(logp_new.id);
            auto & d = grad_buf(logp_new.id);
            for (int i = 0; i < m; ++i) {
                for (int j = 0; j < n; ++j) {
                    const std::size_t k = static_cast<std::size_t>(i) * n + j;
                    const double p = std::exp(L[k]);
                    if (p > 0.0) {
                        d[k] += g[i] * p * (L[k] - old[k] + 1.0);
                    }
                }
            }
        };
    }
    return out;
}

// ---------------------------------------------------------------------------

double finite_diff_check(const LossBuilder & build, std::span<Parameter * const> params, double eps,
                         int max_coords_per_param, std::mt19937_64 & rng) {
    if (params.empty()) {
        return 0.0;
    }
    std::vector<std::vector<double>> analytic(params.size());
    {
        Graph g(true);
        Var loss = build(g);
        g.backward(loss);
        for (std::size_t p = 0; p < params.size(); ++p) {
            analytic[p].assign(params[p]->value.size(), 0.0);
        }
        for (auto [param, grad] : g.param_grads()) {
            for (std::size_t p = 0; p < params.size(); ++p) {
                if (params[p] == param && !grad.empty()) {
                    std::copy(grad.begin(), grad.end(), analytic[p].begin());
                }
            }
        }
    }
    auto eval = [&] {
        Graph g(false);
        return g.value(build(g)).item();
    };
    double worst = 0.0;
    for (std::size_t p = 0; p < params.size(); ++p) {
        const std::size_t n = params[p]->value.size();
        std::vector<std::size_t> coords(n);
        for (std::size_t i = 0; i < n; ++i) {
            coords[i] = i;
        }
        if (max_coords_per_param > 0 && n > static_cast<std::size_t>(max_coords_per_param)) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(static_cast<std::size_t>(max_coords_per_param));
        }
        for (std::size_t c : coords) {
            double & x = params[p]->value[c];
            const double saved = x;
            x = saved + eps;
            const double up = eval();
            x = saved - eps;
            const double down = eval();
            x = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double a = analytic[p][c];
            const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace mdlab
