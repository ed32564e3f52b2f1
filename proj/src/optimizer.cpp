#include "mdlab/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace mdlab {

AdamW::AdamW(const Model & model) {
    for (const auto & p : model.params()) {
        state_.m.emplace_back(p.value.size(), 0.0);
        state_.v.emplace_back(p.value.size(), 0.0);
    }
}

double gradient_norm(const Gradients & grads) {
    double s = 0.0;
    for (const auto & g : grads) {
        for (double x : g) {
            s += x * x;
        }
    }
    return std::sqrt(s);
}

double AdamW::step(Model & model, const Gradients & grads, const AdamWConfig & cfg, double lr_scale) {
    auto & params = model.params();
    if (grads.size() != params.size() || state_.m.size() != params.size()) {
        throw std::invalid_argument("optimizer state does not match the model");
    }
    const double norm = gradient_norm(grads);
    if (!std::isfinite(norm)) {
        return norm;
    }
    const double clip = (cfg.grad_clip > 0.0 && norm > cfg.grad_clip) ? cfg.grad_clip / norm : 1.0;
    ++state_.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state_.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state_.step));
    const double lr = cfg.learning_rate * lr_scale;
    for (std::size_t p = 0; p < params.size(); ++p) {
        auto w = params[p].value.data();
        auto & m = state_.m[p];
        auto & v = state_.v[p];
        const auto & g = grads[p];
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double gi = g[i] * clip;
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * w[i]);
        }
    }
    return norm;
}

}  // namespace mdlab
