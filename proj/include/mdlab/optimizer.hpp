#pragma once

#include "mdlab/model.hpp"

#include <vector>

namespace mdlab {

struct AdamWConfig {
    double learning_rate = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    double grad_clip = 1.0;  // global L2 norm; <= 0 disables
};

struct AdamWState {
    long step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
};

class AdamW {
  public:
    AdamW() = default;
    explicit AdamW(const Model & model);

    AdamWState & state() { return state_; }
    const AdamWState & state() const { return state_; }

    // Returns the pre-clip gradient norm. Non-finite gradients leave the model
    // and the state untouched and return the non-finite norm.
    double step(Model & model, const Gradients & grads, const AdamWConfig & cfg, double lr_scale = 1.0);

  private:
    AdamWState state_;
};

double gradient_norm(const Gradients & grads);

}  // namespace mdlab
