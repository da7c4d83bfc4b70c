#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tanklab/graph.hpp"
#include "tanklab/tensor.hpp"

namespace tanklab::nn {

enum class Activation : std::uint8_t { Identity, Tanh, Relu, Sigmoid, Softplus };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

/// Fully connected layer, W is (out x in), b is (1 x out).
struct DenseLayer {
    Tensor W;
    Tensor b;
    Activation act = Activation::Identity;

    std::size_t in_dim() const { return W.cols(); }
    std::size_t out_dim() const { return W.rows(); }
};

/// Glorot-uniform initialized layer from a caller-owned RNG stream.
DenseLayer make_dense(std::size_t in, std::size_t out, Activation act, std::mt19937_64& rng);

struct Mlp {
    std::vector<DenseLayer> layers;

    std::size_t in_dim() const { return layers.front().in_dim(); }
    std::size_t out_dim() const { return layers.back().out_dim(); }
};

/// hidden activations on every layer except the last, which gets out_act.
Mlp make_mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out,
             Activation hidden_act, Activation out_act, std::mt19937_64& rng);

/// Node ids of one MLP's parameters registered on a graph for this step.
struct MlpNodes {
    std::vector<Graph::NodeId> W;
    std::vector<Graph::NodeId> b;
};

MlpNodes register_mlp(Graph& g, const Mlp& mlp);

/// Builds y = mlp(x) on the tape; x is (batch x in).
Graph::NodeId mlp_forward(Graph& g, const Mlp& mlp, const MlpNodes& nodes, Graph::NodeId x);

/// Builds (y, dy) where dy is the Jacobian-vector product of the network at
/// x in direction dx, propagated layer by layer: du = W dx, dy = act'(u) du.
/// Both outputs live on the tape, so reverse mode differentiates through the
/// JVP as well (needed by the chained dynamics losses).
struct ValueAndTangent {
    Graph::NodeId value;
    Graph::NodeId tangent;
};
ValueAndTangent mlp_forward_with_tangent(Graph& g, const Mlp& mlp, const MlpNodes& nodes,
                                         Graph::NodeId x, Graph::NodeId dx);

/// Plain-number conveniences on frozen models (no tape).
Tensor mlp_eval(const Mlp& mlp, const Tensor& x);

/// Directional derivative of the network output at x in direction v,
/// computed by tangent propagation on a scratch graph.
Tensor jacobian_vector(const Mlp& mlp, const Tensor& x, const Tensor& v);

/// Gradient of <output, cotangent> with respect to the input, one reverse pass.
Tensor vector_jacobian(const Mlp& mlp, const Tensor& x, const Tensor& cotangent);

/// Named trainable tensors. Registration order defines the flattened
/// parameter layout used by the optimizer and the checkpoint format.
struct ParamSet {
    std::vector<Tensor*> tensors;
    std::vector<std::string> names;

    void add(const std::string& name, Tensor& t) {
        names.push_back(name);
        tensors.push_back(&t);
    }
    std::size_t size() const { return tensors.size(); }
};

/// Adds W/b of every layer as "<prefix>.W0", "<prefix>.b0", ...
void collect_mlp_params(const std::string& prefix, Mlp& mlp, ParamSet& ps);

}  // namespace tanklab::nn
