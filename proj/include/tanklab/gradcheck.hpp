#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tanklab/graph.hpp"
#include "tanklab/tensor.hpp"

namespace tanklab::nn {

/// Builds a scalar loss on a fresh graph; must register the checked tensors
/// via Graph::param (closing over them) so analytic gradients line up with
/// the finite-difference sweep.
using LossBuilder = std::function<Graph::NodeId(Graph&)>;

struct GradCheckReport {
    bool ok = true;
    double max_err = 0.0;   // worst guarded relative error
    std::string worst;      // "param#k[i]" of the worst entry
};

/// Central finite differences against reverse-mode gradients for every
/// element of every checked tensor. The error is relative with the
/// denominator floored at 0.01 so that near-zero gradients are compared
/// absolutely (FD noise would otherwise dominate the ratio).
GradCheckReport check_gradients(const LossBuilder& build, const std::vector<Tensor*>& tensors,
                                double h = 1e-5, double tol = 1e-4);

}  // namespace tanklab::nn
