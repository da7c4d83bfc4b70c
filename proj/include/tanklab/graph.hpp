#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tanklab/tensor.hpp"

namespace tanklab::nn {

enum class OpKind : std::uint8_t {
    Input,
    Param,
    Matmul,
    Transpose,
    Add,
    Sub,
    Mul,
    AddRowVec,
    MulColVec,
    Scale,
    AddConst,
    Exp,
    Log,
    Tanh,
    Relu,
    Sigmoid,
    Softplus,
    Square,
    Abs,
    SignedSqrt,
    Heaviside,
    Sin,
    Cos,
    SumAll,
    MeanAll,
    Col,
    ConcatCols,
    StopGradient,
    GatherRows,
};

const char* op_name(OpKind k);

/// Reverse-mode tape. Nodes are appended in evaluation order (so the tape is
/// already topologically sorted); values are computed eagerly on insertion
/// and cached for the backward sweep. One Graph instance per training step,
/// single-threaded.
class Graph {
public:
    using NodeId = int;

    /// Constant leaf (inputs, noise draws, masks).
    NodeId input(Tensor v);
    /// Trainable leaf; the tensor is copied in and remembered for
    /// gradient collection in registration order.
    NodeId param(const Tensor& p);

    NodeId matmul(NodeId a, NodeId b);
    NodeId transpose(NodeId a);
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    /// x (B x n) + r (1 x n), r broadcast over rows.
    NodeId add_rowvec(NodeId x, NodeId r);
    /// x (B x n) * c (B x 1), c broadcast over columns.
    NodeId mul_colvec(NodeId x, NodeId c);
    NodeId scale(NodeId a, double c);
    NodeId add_const(NodeId a, double c);

    NodeId exp(NodeId a);
    NodeId log(NodeId a);
    NodeId tanh(NodeId a);
    NodeId relu(NodeId a);
    NodeId sigmoid(NodeId a);
    NodeId softplus(NodeId a);
    NodeId square(NodeId a);
    NodeId abs(NodeId a);
    /// sign(x) * sqrt(|x|); the backward factor 1/(2 sqrt(|x|)) is floored
    /// near the kink (see kSignedSqrtGradFloor).
    NodeId signed_sqrt(NodeId a);
    /// 1 for x > 0 else 0; treated as locally constant in backward.
    NodeId heaviside(NodeId a);
    NodeId sin(NodeId a);
    NodeId cos(NodeId a);

    NodeId sum_all(NodeId a);
    NodeId mean_all(NodeId a);
    NodeId col(NodeId a, std::size_t j);
    NodeId concat_cols(const std::vector<NodeId>& parts);
    /// Forward identity, zero gradient upstream (the sg[.] operator).
    NodeId stop_gradient(NodeId a);
    /// P (R x m) gathered into (rows.size() x m); backward scatter-adds.
    NodeId gather_rows(NodeId p, std::vector<int> rows);

    const Tensor& value(NodeId id) const;
    const Tensor& grad(NodeId id) const;

    /// Reverse sweep from a scalar loss node. Fills grad() for every node
    /// that participates in the loss.
    void backward(NodeId loss);

    std::size_t num_nodes() const { return nodes_.size(); }
    const std::vector<NodeId>& param_nodes() const { return param_nodes_; }
    /// Gradients of registered params, in registration order. Requires a
    /// completed backward pass.
    std::vector<Tensor> param_grads() const;

    static constexpr double kSignedSqrtGradFloor = 1e-4;

private:
    struct Node {
        OpKind kind;
        std::vector<NodeId> inputs;
        Tensor value;
        Tensor grad;
        double c = 0.0;            // Scale / AddConst constant
        std::size_t index = 0;     // Col index
        std::vector<int> rows;     // GatherRows indices
    };

    NodeId push(Node n);
    const Node& at(NodeId id, const char* who) const;
    NodeId unary(OpKind k, NodeId a);
    void backprop_node(NodeId id);

    std::vector<Node> nodes_;
    std::vector<NodeId> param_nodes_;
    bool have_backward_ = false;
};

}  // namespace tanklab::nn
