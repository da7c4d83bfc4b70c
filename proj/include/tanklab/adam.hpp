#pragma once

#include <vector>

#include "tanklab/layers.hpp"
#include "tanklab/tensor.hpp"

namespace tanklab::nn {

/// Adam with bias correction. Moment buffers are laid out to match a
/// ParamSet; one state instance per training run.
struct AdamState {
    long step = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::vector<Tensor> m;
    std::vector<Tensor> v;

    static AdamState init(const ParamSet& params, double lr = 1e-3, double beta1 = 0.9,
                          double beta2 = 0.999, double eps = 1e-8);
};

/// One update in place. Throws OptimizerError naming the parameter if a
/// gradient is non-finite.
void adam_step(AdamState& state, const ParamSet& params, const std::vector<Tensor>& grads);

}  // namespace tanklab::nn
