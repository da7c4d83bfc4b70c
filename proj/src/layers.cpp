#include "tanklab/layers.hpp"

#include <cmath>
#include <random>

#include "tanklab/errors.hpp"

namespace tanklab::nn {

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::Tanh: return "tanh";
        case Activation::Relu: return "relu";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Softplus: return "softplus";
    }
    return "?";
}

Activation activation_from_name(const std::string& name) {
    if (name == "identity") return Activation::Identity;
    if (name == "tanh") return Activation::Tanh;
    if (name == "relu") return Activation::Relu;
    if (name == "sigmoid") return Activation::Sigmoid;
    if (name == "softplus") return Activation::Softplus;
    throw ConfigError("unknown activation: " + name);
}

DenseLayer make_dense(std::size_t in, std::size_t out, Activation act, std::mt19937_64& rng) {
    DenseLayer layer;
    layer.W = Tensor(out, in);
    layer.b = Tensor(1, out);
    layer.act = act;
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t i = 0; i < layer.W.size(); ++i) layer.W[i] = dist(rng);
    return layer;
}

Mlp make_mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out,
             Activation hidden_act, Activation out_act, std::mt19937_64& rng) {
    Mlp mlp;
    std::size_t prev = in;
    for (std::size_t h : hidden) {
        mlp.layers.push_back(make_dense(prev, h, hidden_act, rng));
        prev = h;
    }
    mlp.layers.push_back(make_dense(prev, out, out_act, rng));
    return mlp;
}

MlpNodes register_mlp(Graph& g, const Mlp& mlp) {
    MlpNodes nodes;
    for (const DenseLayer& layer : mlp.layers) {
        nodes.W.push_back(g.param(layer.W));
        nodes.b.push_back(g.param(layer.b));
    }
    return nodes;
}

namespace {

Graph::NodeId apply_activation(Graph& g, Activation act, Graph::NodeId u) {
    switch (act) {
        case Activation::Identity: return u;
        case Activation::Tanh: return g.tanh(u);
        case Activation::Relu: return g.relu(u);
        case Activation::Sigmoid: return g.sigmoid(u);
        case Activation::Softplus: return g.softplus(u);
    }
    throw StateError("apply_activation: bad enum");
}

/// act'(u) expressed through already computed nodes (u and y = act(u)).
Graph::NodeId activation_slope(Graph& g, Activation act, Graph::NodeId u, Graph::NodeId y) {
    switch (act) {
        case Activation::Identity: return -1;  // slope 1, handled by caller
        case Activation::Tanh:
            return g.add_const(g.scale(g.square(y), -1.0), 1.0);
        case Activation::Relu: return g.heaviside(u);
        case Activation::Sigmoid:
            return g.mul(y, g.add_const(g.scale(y, -1.0), 1.0));
        case Activation::Softplus: return g.sigmoid(u);
    }
    throw StateError("activation_slope: bad enum");
}

}  // namespace

Graph::NodeId mlp_forward(Graph& g, const Mlp& mlp, const MlpNodes& nodes, Graph::NodeId x) {
    Graph::NodeId h = x;
    for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
        Graph::NodeId u = g.add_rowvec(g.matmul(h, g.transpose(nodes.W[l])), nodes.b[l]);
        h = apply_activation(g, mlp.layers[l].act, u);
    }
    return h;
}

ValueAndTangent mlp_forward_with_tangent(Graph& g, const Mlp& mlp, const MlpNodes& nodes,
                                         Graph::NodeId x, Graph::NodeId dx) {
    Graph::NodeId h = x;
    Graph::NodeId dh = dx;
    for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
        Graph::NodeId wt = g.transpose(nodes.W[l]);
        Graph::NodeId u = g.add_rowvec(g.matmul(h, wt), nodes.b[l]);
        Graph::NodeId du = g.matmul(dh, wt);
        Graph::NodeId y = apply_activation(g, mlp.layers[l].act, u);
        Graph::NodeId slope = activation_slope(g, mlp.layers[l].act, u, y);
        dh = slope < 0 ? du : g.mul(slope, du);
        h = y;
    }
    return {h, dh};
}

Tensor mlp_eval(const Mlp& mlp, const Tensor& x) {
    Graph g;
    MlpNodes nodes = register_mlp(g, mlp);
    return g.value(mlp_forward(g, mlp, nodes, g.input(x)));
}

Tensor jacobian_vector(const Mlp& mlp, const Tensor& x, const Tensor& v) {
    if (!x.same_shape(v))
        throw ShapeError("jacobian_vector: x " + x.shape_str() + " vs v " + v.shape_str());
    Graph g;
    MlpNodes nodes = register_mlp(g, mlp);
    ValueAndTangent vt = mlp_forward_with_tangent(g, mlp, nodes, g.input(x), g.input(v));
    return g.value(vt.tangent);
}

Tensor vector_jacobian(const Mlp& mlp, const Tensor& x, const Tensor& cotangent) {
    Graph g;
    MlpNodes nodes = register_mlp(g, mlp);
    Graph::NodeId xin = g.input(x);
    Graph::NodeId y = mlp_forward(g, mlp, nodes, xin);
    if (!g.value(y).same_shape(cotangent))
        throw ShapeError("vector_jacobian: output " + g.value(y).shape_str() + " vs cotangent " +
                         cotangent.shape_str());
    Graph::NodeId dotted = g.sum_all(g.mul(y, g.input(cotangent)));
    g.backward(dotted);
    return g.grad(xin);
}

void collect_mlp_params(const std::string& prefix, Mlp& mlp, ParamSet& ps) {
    for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
        ps.add(prefix + ".W" + std::to_string(l), mlp.layers[l].W);
        ps.add(prefix + ".b" + std::to_string(l), mlp.layers[l].b);
    }
}

}  // namespace tanklab::nn
