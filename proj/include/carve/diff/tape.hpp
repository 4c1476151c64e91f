#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "carve/diff/tensor.hpp"

namespace carve::diff {

using NodeId = std::uint32_t;

enum class Op : std::uint8_t {
    leaf,
    affine,      // W (m,n), x (n), b (m) -> (m)
    add,         // elementwise, same shape
    mul,         // elementwise, same shape
    relu,        // max(x, 0); subgradient 0 at 0
    tanh_fn,
    sigmoid,
    exp_fn,
    l2norm,      // Euclidean norm of the flattened input -> scalar
    hinge_max0,  // alias semantics of relu, kept as a distinct op id
    sum,         // sum of all elements -> scalar
    scale,       // x * k for a constant k
    concat,      // flatten-and-join -> vector
    pick,        // single element -> scalar
    external,    // black-box value with caller-supplied Jacobian
};

// Define-by-run reverse-mode tape. Rebuilt per forward pass; reset() keeps
// node storage alive so steady-state training does not allocate.
//
// A Tape is single-threaded. Distinct tapes may run on distinct threads.
class Tape {
public:
    // Leaves.
    NodeId constant(Tensor t);
    NodeId constant_scalar(double x) { return constant(Tensor::scalar(x)); }
    NodeId constant_vec(std::vector<double> v) { return constant(Tensor::vec(std::move(v))); }
    NodeId variable(Tensor t);  // differentiable input (gradient readable after backward)
    NodeId use(Parameter& p);   // memoized per tape; gradient accumulates into p.grad on backward

    // Primitives.
    NodeId affine(NodeId w, NodeId x, NodeId b);
    NodeId add(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId relu(NodeId a);
    NodeId tanh(NodeId a);
    NodeId sigmoid(NodeId a);
    NodeId exp(NodeId a);
    NodeId l2norm(NodeId a);
    NodeId hinge_max0(NodeId a);
    NodeId sum(NodeId a);
    NodeId scale(NodeId a, double k);

    // Structural ops.
    NodeId concat(std::span<const NodeId> parts);
    NodeId pick(NodeId a, std::size_t index);

    // Black box: forward value computed externally, backward through the
    // supplied Jacobian (rows = output size, cols = input size).
    NodeId external(NodeId input, Tensor value, Matrix jacobian);

    // Convenience compounds (built from primitives above).
    NodeId sub(NodeId a, NodeId b) { return add(a, scale(b, -1.0)); }
    NodeId square_sum(NodeId a) { return sum(mul(a, a)); }

    void backward(NodeId loss);

    const Tensor& value(NodeId id) const;
    const Tensor& grad(NodeId id) const;

    void reset();
    std::size_t node_count() const { return live_; }

private:
    struct Node {
        Op op = Op::leaf;
        NodeId in0 = 0, in1 = 0, in2 = 0;
        std::vector<NodeId> many;  // concat inputs
        Tensor val;                // empty for parameter leaves (read through param)
        Tensor grad;
        double k = 0.0;  // scale factor / cached norm / pick index
        Parameter* param = nullptr;
        Matrix jac;  // external op only
        bool requires_grad = false;
    };

    NodeId alloc();
    template <typename F>
    NodeId unary(Op op, NodeId a, F f);

    std::vector<Node> nodes_;
    std::size_t live_ = 0;
    std::unordered_map<const Parameter*, NodeId> param_memo_;
};

}  // namespace carve::diff
