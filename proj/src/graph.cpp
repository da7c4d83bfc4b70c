#include "tanklab/graph.hpp"

#include <Eigen/Core>

#include <cmath>
#include <utility>

namespace tanklab::nn {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<EMat>;
using CMapM = Eigen::Map<const EMat>;

CMapM cmap(const Tensor& t) {
    return CMapM(t.data(), static_cast<Eigen::Index>(t.rows()),
                 static_cast<Eigen::Index>(t.cols()));
}

MapM map(Tensor& t) {
    return MapM(t.data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double stable_softplus(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

}  // namespace

const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::Input: return "input";
        case OpKind::Param: return "param";
        case OpKind::Matmul: return "matmul";
        case OpKind::Transpose: return "transpose";
        case OpKind::Add: return "add";
        case OpKind::Sub: return "sub";
        case OpKind::Mul: return "mul";
        case OpKind::AddRowVec: return "add_rowvec";
        case OpKind::MulColVec: return "mul_colvec";
        case OpKind::Scale: return "scale";
        case OpKind::AddConst: return "add_const";
        case OpKind::Exp: return "exp";
        case OpKind::Log: return "log";
        case OpKind::Tanh: return "tanh";
        case OpKind::Relu: return "relu";
        case OpKind::Sigmoid: return "sigmoid";
        case OpKind::Softplus: return "softplus";
        case OpKind::Square: return "square";
        case OpKind::Abs: return "abs";
        case OpKind::SignedSqrt: return "signed_sqrt";
        case OpKind::Heaviside: return "heaviside";
        case OpKind::Sin: return "sin";
        case OpKind::Cos: return "cos";
        case OpKind::SumAll: return "sum_all";
        case OpKind::MeanAll: return "mean_all";
        case OpKind::Col: return "col";
        case OpKind::ConcatCols: return "concat_cols";
        case OpKind::StopGradient: return "stop_gradient";
        case OpKind::GatherRows: return "gather_rows";
    }
    return "?";
}

Graph::NodeId Graph::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size()) - 1;
}

const Graph::Node& Graph::at(NodeId id, const char* who) const {
    if (id < 0 || id >= static_cast<NodeId>(nodes_.size()))
        throw StateError(std::string(who) + ": invalid node id " + std::to_string(id));
    return nodes_[static_cast<std::size_t>(id)];
}

Graph::NodeId Graph::input(Tensor v) {
    Node n;
    n.kind = OpKind::Input;
    n.value = std::move(v);
    return push(std::move(n));
}

Graph::NodeId Graph::param(const Tensor& p) {
    Node n;
    n.kind = OpKind::Param;
    n.value = p;
    NodeId id = push(std::move(n));
    param_nodes_.push_back(id);
    return id;
}

Graph::NodeId Graph::matmul(NodeId a, NodeId b) {
    const Tensor& A = at(a, "matmul").value;
    const Tensor& B = at(b, "matmul").value;
    if (A.cols() != B.rows())
        throw ShapeError("matmul(node " + std::to_string(a) + " " + A.shape_str() + ", node " +
                         std::to_string(b) + " " + B.shape_str() + "): inner dims differ");
    Node n;
    n.kind = OpKind::Matmul;
    n.inputs = {a, b};
    n.value = Tensor(A.rows(), B.cols());
    map(n.value).noalias() = cmap(A) * cmap(B);
    return push(std::move(n));
}

Graph::NodeId Graph::transpose(NodeId a) {
    const Tensor& A = at(a, "transpose").value;
    Node n;
    n.kind = OpKind::Transpose;
    n.inputs = {a};
    n.value = Tensor(A.cols(), A.rows());
    map(n.value) = cmap(A).transpose();
    return push(std::move(n));
}

Graph::NodeId Graph::add(NodeId a, NodeId b) {
    const Tensor& A = at(a, "add").value;
    const Tensor& B = at(b, "add").value;
    if (!A.same_shape(B))
        throw ShapeError("add: shapes " + A.shape_str() + " vs " + B.shape_str());
    Node n;
    n.kind = OpKind::Add;
    n.inputs = {a, b};
    n.value = A;
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] += B[i];
    return push(std::move(n));
}

Graph::NodeId Graph::sub(NodeId a, NodeId b) {
    const Tensor& A = at(a, "sub").value;
    const Tensor& B = at(b, "sub").value;
    if (!A.same_shape(B))
        throw ShapeError("sub: shapes " + A.shape_str() + " vs " + B.shape_str());
    Node n;
    n.kind = OpKind::Sub;
    n.inputs = {a, b};
    n.value = A;
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] -= B[i];
    return push(std::move(n));
}

Graph::NodeId Graph::mul(NodeId a, NodeId b) {
    const Tensor& A = at(a, "mul").value;
    const Tensor& B = at(b, "mul").value;
    if (!A.same_shape(B))
        throw ShapeError("mul: shapes " + A.shape_str() + " vs " + B.shape_str());
    Node n;
    n.kind = OpKind::Mul;
    n.inputs = {a, b};
    n.value = A;
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] *= B[i];
    return push(std::move(n));
}

Graph::NodeId Graph::add_rowvec(NodeId x, NodeId r) {
    const Tensor& X = at(x, "add_rowvec").value;
    const Tensor& R = at(r, "add_rowvec").value;
    if (R.rows() != 1 || R.cols() != X.cols())
        throw ShapeError("add_rowvec: " + X.shape_str() + " + " + R.shape_str());
    Node n;
    n.kind = OpKind::AddRowVec;
    n.inputs = {x, r};
    n.value = X;
    for (std::size_t i = 0; i < X.rows(); ++i)
        for (std::size_t j = 0; j < X.cols(); ++j) n.value(i, j) += R(0, j);
    return push(std::move(n));
}

Graph::NodeId Graph::mul_colvec(NodeId x, NodeId c) {
    const Tensor& X = at(x, "mul_colvec").value;
    const Tensor& C = at(c, "mul_colvec").value;
    if (C.cols() != 1 || C.rows() != X.rows())
        throw ShapeError("mul_colvec: " + X.shape_str() + " * " + C.shape_str());
    Node n;
    n.kind = OpKind::MulColVec;
    n.inputs = {x, c};
    n.value = X;
    for (std::size_t i = 0; i < X.rows(); ++i)
        for (std::size_t j = 0; j < X.cols(); ++j) n.value(i, j) *= C(i, 0);
    return push(std::move(n));
}

Graph::NodeId Graph::scale(NodeId a, double c) {
    const Tensor& A = at(a, "scale").value;
    Node n;
    n.kind = OpKind::Scale;
    n.inputs = {a};
    n.c = c;
    n.value = A;
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] *= c;
    return push(std::move(n));
}

Graph::NodeId Graph::add_const(NodeId a, double c) {
    const Tensor& A = at(a, "add_const").value;
    Node n;
    n.kind = OpKind::AddConst;
    n.inputs = {a};
    n.c = c;
    n.value = A;
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] += c;
    return push(std::move(n));
}

Graph::NodeId Graph::unary(OpKind k, NodeId a) {
    const Tensor& A = at(a, op_name(k)).value;
    Node n;
    n.kind = k;
    n.inputs = {a};
    n.value = A;
    for (std::size_t i = 0; i < n.value.size(); ++i) {
        const double x = A[i];
        double y = 0.0;
        switch (k) {
            case OpKind::Exp: y = std::exp(x); break;
            case OpKind::Log: y = std::log(x); break;
            case OpKind::Tanh: y = std::tanh(x); break;
            case OpKind::Relu: y = x > 0.0 ? x : 0.0; break;
            case OpKind::Sigmoid: y = stable_sigmoid(x); break;
            case OpKind::Softplus: y = stable_softplus(x); break;
            case OpKind::Square: y = x * x; break;
            case OpKind::Abs: y = std::fabs(x); break;
            case OpKind::SignedSqrt: y = (x >= 0.0 ? 1.0 : -1.0) * std::sqrt(std::fabs(x));
                if (x == 0.0) y = 0.0;
                break;
            case OpKind::Heaviside: y = x > 0.0 ? 1.0 : 0.0; break;
            case OpKind::Sin: y = std::sin(x); break;
            case OpKind::Cos: y = std::cos(x); break;
            default: throw StateError("unary: bad op");
        }
        n.value[i] = y;
    }
    return push(std::move(n));
}

Graph::NodeId Graph::exp(NodeId a) { return unary(OpKind::Exp, a); }
Graph::NodeId Graph::log(NodeId a) { return unary(OpKind::Log, a); }
Graph::NodeId Graph::tanh(NodeId a) { return unary(OpKind::Tanh, a); }
Graph::NodeId Graph::relu(NodeId a) { return unary(OpKind::Relu, a); }
Graph::NodeId Graph::sigmoid(NodeId a) { return unary(OpKind::Sigmoid, a); }
Graph::NodeId Graph::softplus(NodeId a) { return unary(OpKind::Softplus, a); }
Graph::NodeId Graph::square(NodeId a) { return unary(OpKind::Square, a); }
Graph::NodeId Graph::abs(NodeId a) { return unary(OpKind::Abs, a); }
Graph::NodeId Graph::signed_sqrt(NodeId a) { return unary(OpKind::SignedSqrt, a); }
Graph::NodeId Graph::heaviside(NodeId a) { return unary(OpKind::Heaviside, a); }
Graph::NodeId Graph::sin(NodeId a) { return unary(OpKind::Sin, a); }
Graph::NodeId Graph::cos(NodeId a) { return unary(OpKind::Cos, a); }

Graph::NodeId Graph::sum_all(NodeId a) {
    const Tensor& A = at(a, "sum_all").value;
    double s = 0.0;
    for (std::size_t i = 0; i < A.size(); ++i) s += A[i];
    Node n;
    n.kind = OpKind::SumAll;
    n.inputs = {a};
    n.value = Tensor::scalar(s);
    return push(std::move(n));
}

Graph::NodeId Graph::mean_all(NodeId a) {
    const Tensor& A = at(a, "mean_all").value;
    if (A.size() == 0) throw ShapeError("mean_all: empty tensor");
    double s = 0.0;
    for (std::size_t i = 0; i < A.size(); ++i) s += A[i];
    Node n;
    n.kind = OpKind::MeanAll;
    n.inputs = {a};
    n.value = Tensor::scalar(s / static_cast<double>(A.size()));
    return push(std::move(n));
}

Graph::NodeId Graph::col(NodeId a, std::size_t j) {
    const Tensor& A = at(a, "col").value;
    if (j >= A.cols())
        throw ShapeError("col: index " + std::to_string(j) + " out of " + A.shape_str());
    Node n;
    n.kind = OpKind::Col;
    n.inputs = {a};
    n.index = j;
    n.value = Tensor(A.rows(), 1);
    for (std::size_t i = 0; i < A.rows(); ++i) n.value(i, 0) = A(i, j);
    return push(std::move(n));
}

Graph::NodeId Graph::concat_cols(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    std::size_t rows = at(parts[0], "concat_cols").value.rows();
    std::size_t cols = 0;
    for (NodeId p : parts) {
        const Tensor& t = at(p, "concat_cols").value;
        if (t.rows() != rows) throw ShapeError("concat_cols: row mismatch");
        cols += t.cols();
    }
    Node n;
    n.kind = OpKind::ConcatCols;
    n.inputs = parts;
    n.value = Tensor(rows, cols);
    std::size_t off = 0;
    for (NodeId p : parts) {
        const Tensor& t = nodes_[static_cast<std::size_t>(p)].value;
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < t.cols(); ++j) n.value(i, off + j) = t(i, j);
        off += t.cols();
    }
    return push(std::move(n));
}

Graph::NodeId Graph::stop_gradient(NodeId a) {
    Node n;
    n.kind = OpKind::StopGradient;
    n.inputs = {a};
    n.value = at(a, "stop_gradient").value;
    return push(std::move(n));
}

Graph::NodeId Graph::gather_rows(NodeId p, std::vector<int> rows) {
    const Tensor& P = at(p, "gather_rows").value;
    Node n;
    n.kind = OpKind::GatherRows;
    n.inputs = {p};
    n.value = Tensor(rows.size(), P.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const int r = rows[i];
        if (r < 0 || static_cast<std::size_t>(r) >= P.rows())
            throw ShapeError("gather_rows: row " + std::to_string(r) + " out of " + P.shape_str());
        for (std::size_t j = 0; j < P.cols(); ++j)
            n.value(i, j) = P(static_cast<std::size_t>(r), j);
    }
    n.rows = std::move(rows);
    return push(std::move(n));
}

const Tensor& Graph::value(NodeId id) const { return at(id, "value").value; }

const Tensor& Graph::grad(NodeId id) const {
    if (!have_backward_) throw StateError("grad: backward has not been run");
    return at(id, "grad").grad;
}

void Graph::backprop_node(NodeId id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    const Tensor& g = n.grad;
    auto gin = [&](int slot) -> Tensor& { return nodes_[static_cast<std::size_t>(n.inputs[slot])].grad; };
    auto vin = [&](int slot) -> const Tensor& {
        return nodes_[static_cast<std::size_t>(n.inputs[slot])].value;
    };
    switch (n.kind) {
        case OpKind::Input:
        case OpKind::Param:
            break;
        case OpKind::Matmul: {
            // C = A*B: dA += dC*B^T, dB += A^T*dC
            map(gin(0)).noalias() += cmap(g) * cmap(vin(1)).transpose();
            map(gin(1)).noalias() += cmap(vin(0)).transpose() * cmap(g);
            break;
        }
        case OpKind::Transpose:
            map(gin(0)) += cmap(g).transpose();
            break;
        case OpKind::Add:
            for (std::size_t i = 0; i < g.size(); ++i) gin(0)[i] += g[i];
            for (std::size_t i = 0; i < g.size(); ++i) gin(1)[i] += g[i];
            break;
        case OpKind::Sub:
            for (std::size_t i = 0; i < g.size(); ++i) gin(0)[i] += g[i];
            for (std::size_t i = 0; i < g.size(); ++i) gin(1)[i] -= g[i];
            break;
        case OpKind::Mul:
            for (std::size_t i = 0; i < g.size(); ++i) gin(0)[i] += g[i] * vin(1)[i];
            for (std::size_t i = 0; i < g.size(); ++i) gin(1)[i] += g[i] * vin(0)[i];
            break;
        case OpKind::AddRowVec: {
            Tensor& gx = gin(0);
            Tensor& gr = gin(1);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j) gr(0, j) += g(i, j);
            break;
        }
        case OpKind::MulColVec: {
            Tensor& gx = gin(0);
            Tensor& gc = gin(1);
            const Tensor& X = vin(0);
            const Tensor& C = vin(1);
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j) {
                    gx(i, j) += g(i, j) * C(i, 0);
                    gc(i, 0) += g(i, j) * X(i, j);
                }
            break;
        }
        case OpKind::Scale:
            for (std::size_t i = 0; i < g.size(); ++i) gin(0)[i] += n.c * g[i];
            break;
        case OpKind::AddConst:
            for (std::size_t i = 0; i < g.size(); ++i) gin(0)[i] += g[i];
            break;
        case OpKind::Exp:
            for (std::size_t i = 0; i < g.size(); ++i) gin(0)[i] += g[i] * n.value[i];
            break;
        case OpKind::Log:
            for (std::size_t i = 0; i < g.size(); ++i) gin(0)[i] += g[i] / vin(0)[i];
            break;
        case OpKind::Tanh:
            for (std::size_t i = 0; i < g.size(); ++i)
                gin(0)[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
            break;
        case OpKind::Relu:
            for (std::size_t i = 0; i < g.size(); ++i)
                gin(0)[i] += vin(0)[i] > 0.0 ? g[i] : 0.0;
            break;
        case OpKind::Sigmoid:
            for (std::size_t i = 0; i < g.size(); ++i)
                gin(0)[i] += g[i] * n.value[i] * (1.0 - n.value[i]);
            break;
        case OpKind::Softplus:
            for (std::size_t i = 0; i < g.size(); ++i)
                gin(0)[i] += g[i] * stable_sigmoid(vin(0)[i]);
            break;
        case OpKind::Square:
            for (std::size_t i = 0; i < g.size(); ++i) gin(0)[i] += g[i] * 2.0 * vin(0)[i];
            break;
        case OpKind::Abs:
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double x = vin(0)[i];
                gin(0)[i] += g[i] * (x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0));
            }
            break;
        case OpKind::SignedSqrt:
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double r = std::sqrt(std::fabs(vin(0)[i]));
                gin(0)[i] += g[i] * 0.5 / std::max(r, kSignedSqrtGradFloor);
            }
            break;
        case OpKind::Heaviside:
            break;
        case OpKind::Sin:
            for (std::size_t i = 0; i < g.size(); ++i) gin(0)[i] += g[i] * std::cos(vin(0)[i]);
            break;
        case OpKind::Cos:
            for (std::size_t i = 0; i < g.size(); ++i) gin(0)[i] -= g[i] * std::sin(vin(0)[i]);
            break;
        case OpKind::SumAll: {
            const double s = g(0, 0);
            Tensor& gx = gin(0);
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += s;
            break;
        }
        case OpKind::MeanAll: {
            Tensor& gx = gin(0);
            const double s = g(0, 0) / static_cast<double>(gx.size());
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += s;
            break;
        }
        case OpKind::Col: {
            Tensor& gx = gin(0);
            for (std::size_t i = 0; i < g.rows(); ++i) gx(i, n.index) += g(i, 0);
            break;
        }
        case OpKind::ConcatCols: {
            std::size_t off = 0;
            for (std::size_t k = 0; k < n.inputs.size(); ++k) {
                Tensor& gx = gin(static_cast<int>(k));
                for (std::size_t i = 0; i < gx.rows(); ++i)
                    for (std::size_t j = 0; j < gx.cols(); ++j) gx(i, j) += g(i, off + j);
                off += gx.cols();
            }
            break;
        }
        case OpKind::StopGradient:
            break;
        case OpKind::GatherRows: {
            Tensor& gp = gin(0);
            for (std::size_t i = 0; i < n.rows.size(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j)
                    gp(static_cast<std::size_t>(n.rows[i]), j) += g(i, j);
            break;
        }
    }
}

void Graph::backward(NodeId loss) {
    if (nodes_.empty()) throw StateError("backward: no forward evaluation recorded");
    const Node& ln = at(loss, "backward");
    if (ln.value.size() != 1)
        throw ShapeError("backward: loss node must be scalar, got " + ln.value.shape_str());
    for (Node& n : nodes_) {
        n.grad = Tensor(n.value.rows(), n.value.cols());
    }
    nodes_[static_cast<std::size_t>(loss)].grad(0, 0) = 1.0;
    for (NodeId id = loss; id >= 0; --id) backprop_node(id);
    have_backward_ = true;
}

std::vector<Tensor> Graph::param_grads() const {
    if (!have_backward_) throw StateError("param_grads: backward has not been run");
    std::vector<Tensor> out;
    out.reserve(param_nodes_.size());
    for (NodeId id : param_nodes_) out.push_back(nodes_[static_cast<std::size_t>(id)].grad);
    return out;
}

}  // namespace tanklab::nn
