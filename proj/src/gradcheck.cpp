#include "tanklab/gradcheck.hpp"

#include <cmath>

#include "tanklab/errors.hpp"

namespace tanklab::nn {

GradCheckReport check_gradients(const LossBuilder& build, const std::vector<Tensor*>& tensors,
                                double h, double tol) {
    GradCheckReport report;

    Graph g;
    Graph::NodeId loss = build(g);
    g.backward(loss);
    if (g.param_nodes().size() != tensors.size())
        throw StateError("check_gradients: builder registered " +
                         std::to_string(g.param_nodes().size()) + " params, caller passed " +
                         std::to_string(tensors.size()));
    std::vector<Tensor> analytic = g.param_grads();

    auto eval = [&]() {
        Graph scratch;
        return scratch.value(build(scratch)).item();
    };

    for (std::size_t p = 0; p < tensors.size(); ++p) {
        Tensor& t = *tensors[p];
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double keep = t[i];
            t[i] = keep + h;
            const double up = eval();
            t[i] = keep - h;
            const double dn = eval();
            t[i] = keep;
            const double fd = (up - dn) / (2.0 * h);
            const double a = analytic[p][i];
            const double err = std::fabs(a - fd) / std::max({std::fabs(a), std::fabs(fd), 0.01});
            if (err > report.max_err) {
                report.max_err = err;
                report.worst = "param#" + std::to_string(p) + "[" + std::to_string(i) + "]";
            }
            if (err > tol) report.ok = false;
        }
    }
    return report;
}

}  // namespace tanklab::nn
