#include "tanklab/adam.hpp"

#include <cmath>

#include "tanklab/errors.hpp"

namespace tanklab::nn {

AdamState AdamState::init(const ParamSet& params, double lr, double beta1, double beta2,
                          double eps) {
    AdamState s;
    s.lr = lr;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.eps = eps;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const Tensor* t : params.tensors) {
        s.m.emplace_back(t->rows(), t->cols());
        s.v.emplace_back(t->rows(), t->cols());
    }
    return s;
}

void adam_step(AdamState& state, const ParamSet& params, const std::vector<Tensor>& grads) {
    if (grads.size() != params.size())
        throw OptimizerError("adam_step: got " + std::to_string(grads.size()) + " gradients for " +
                             std::to_string(params.size()) + " parameters");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& w = *params.tensors[p];
        const Tensor& g = grads[p];
        if (!w.same_shape(g))
            throw OptimizerError("adam_step: gradient shape " + g.shape_str() +
                                 " does not match parameter " + params.names[p]);
        if (!g.all_finite())
            throw OptimizerError("adam_step: non-finite gradient for parameter " + params.names[p]);
        Tensor& m = state.m[p];
        Tensor& v = state.v[p];
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

}  // namespace tanklab::nn
