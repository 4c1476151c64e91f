#include "carve/diff/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace carve::diff {

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a) {
    throw ValidationError(std::string(op) + ": bad input shape " + a.shape_str());
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw ValidationError(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " + b.shape_str());
}

}  // namespace

NodeId Tape::alloc() {
    if (live_ < nodes_.size()) {
        Node& slot = nodes_[live_];
        slot.op = Op::leaf;
        slot.in0 = slot.in1 = slot.in2 = 0;
        slot.many.clear();
        slot.val.shape.clear();
        slot.val.v.clear();
        slot.grad.shape.clear();
        slot.grad.v.clear();
        slot.k = 0.0;
        slot.param = nullptr;
        slot.jac.rows = slot.jac.cols = 0;
        slot.jac.data.clear();
        slot.requires_grad = false;
    } else {
        nodes_.emplace_back();
    }
    return static_cast<NodeId>(live_++);
}

void Tape::reset() {
    live_ = 0;
    param_memo_.clear();
}

const Tensor& Tape::value(NodeId id) const {
    const Node& n = nodes_[id];
    return n.param ? n.param->value : n.val;
}

const Tensor& Tape::grad(NodeId id) const { return nodes_[id].grad; }

NodeId Tape::constant(Tensor t) {
    NodeId id = alloc();
    Node& n = nodes_[id];
    n.val = std::move(t);
    return id;
}

NodeId Tape::variable(Tensor t) {
    NodeId id = alloc();
    Node& n = nodes_[id];
    n.val = std::move(t);
    n.requires_grad = true;
    return id;
}

NodeId Tape::use(Parameter& p) {
    auto it = param_memo_.find(&p);
    if (it != param_memo_.end()) return it->second;
    NodeId id = alloc();
    Node& n = nodes_[id];
    n.param = &p;  // value read through the parameter, no copy
    n.requires_grad = p.trainable;
    param_memo_.emplace(&p, id);
    return id;
}

NodeId Tape::affine(NodeId w, NodeId x, NodeId b) {
    {
        const Tensor& tw = value(w);
        if (tw.shape.size() != 2) shape_error("affine(W)", tw);
        if (value(x).size() != tw.shape[1]) shape_error("affine(W,x)", tw, value(x));
        if (value(b).size() != tw.shape[0]) shape_error("affine(W,b)", tw, value(b));
    }
    NodeId id = alloc();
    Node& n = nodes_[id];
    const Tensor& tw = value(w);
    const Tensor& tx = value(x);
    const Tensor& tb = value(b);
    std::size_t m = tw.shape[0], cols = tw.shape[1];
    n.op = Op::affine;
    n.in0 = w;
    n.in1 = x;
    n.in2 = b;
    n.requires_grad = nodes_[w].requires_grad || nodes_[x].requires_grad || nodes_[b].requires_grad;
    n.val.shape = {m};
    n.val.v.resize(m);
    const double* W = tw.v.data();
    const double* X = tx.v.data();
    for (std::size_t i = 0; i < m; ++i) {
        double acc = tb.v[i];
        const double* row = W + i * cols;
        for (std::size_t j = 0; j < cols; ++j) acc += row[j] * X[j];
        n.val.v[i] = acc;
    }
    return id;
}

NodeId Tape::add(NodeId a, NodeId b) {
    if (value(a).size() != value(b).size()) shape_error("add", value(a), value(b));
    NodeId id = alloc();
    Node& n = nodes_[id];
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    n.op = Op::add;
    n.in0 = a;
    n.in1 = b;
    n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
    n.val.shape = ta.shape;
    n.val.v.resize(ta.size());
    for (std::size_t i = 0; i < ta.size(); ++i) n.val.v[i] = ta.v[i] + tb.v[i];
    return id;
}

NodeId Tape::mul(NodeId a, NodeId b) {
    if (value(a).size() != value(b).size()) shape_error("mul", value(a), value(b));
    NodeId id = alloc();
    Node& n = nodes_[id];
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    n.op = Op::mul;
    n.in0 = a;
    n.in1 = b;
    n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
    n.val.shape = ta.shape;
    n.val.v.resize(ta.size());
    for (std::size_t i = 0; i < ta.size(); ++i) n.val.v[i] = ta.v[i] * tb.v[i];
    return id;
}

template <typename F>
NodeId Tape::unary(Op op, NodeId a, F f) {
    NodeId id = alloc();
    Node& n = nodes_[id];
    const Tensor& ta = value(a);
    n.op = op;
    n.in0 = a;
    n.requires_grad = nodes_[a].requires_grad;
    n.val.shape = ta.shape;
    n.val.v.resize(ta.size());
    for (std::size_t i = 0; i < ta.size(); ++i) n.val.v[i] = f(ta.v[i]);
    return id;
}

NodeId Tape::relu(NodeId a) {
    return unary(Op::relu, a, [](double x) { return x > 0.0 ? x : 0.0; });
}

NodeId Tape::hinge_max0(NodeId a) {
    return unary(Op::hinge_max0, a, [](double x) { return x > 0.0 ? x : 0.0; });
}

NodeId Tape::tanh(NodeId a) {
    return unary(Op::tanh_fn, a, [](double x) { return std::tanh(x); });
}

NodeId Tape::sigmoid(NodeId a) {
    return unary(Op::sigmoid, a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
}

NodeId Tape::exp(NodeId a) {
    return unary(Op::exp_fn, a, [](double x) { return std::exp(x); });
}

NodeId Tape::scale(NodeId a, double k) {
    NodeId id = unary(Op::scale, a, [k](double x) { return k * x; });
    nodes_[id].k = k;
    return id;
}

NodeId Tape::l2norm(NodeId a) {
    NodeId id = alloc();
    Node& n = nodes_[id];
    const Tensor& ta = value(a);
    double acc = 0.0;
    for (double x : ta.v) acc += x * x;
    double norm = std::sqrt(acc);
    n.op = Op::l2norm;
    n.in0 = a;
    n.requires_grad = nodes_[a].requires_grad;
    n.k = norm;
    n.val.shape = {1};
    n.val.v.assign(1, norm);
    return id;
}

NodeId Tape::sum(NodeId a) {
    NodeId id = alloc();
    Node& n = nodes_[id];
    const Tensor& ta = value(a);
    double acc = 0.0;
    for (double x : ta.v) acc += x;
    n.op = Op::sum;
    n.in0 = a;
    n.requires_grad = nodes_[a].requires_grad;
    n.val.shape = {1};
    n.val.v.assign(1, acc);
    return id;
}

NodeId Tape::concat(std::span<const NodeId> parts) {
    if (parts.empty()) throw ValidationError("concat: no inputs");
    NodeId id = alloc();
    Node& n = nodes_[id];
    n.op = Op::concat;
    n.many.assign(parts.begin(), parts.end());
    std::size_t total = 0;
    for (NodeId p : parts) {
        total += value(p).size();
        n.requires_grad = n.requires_grad || nodes_[p].requires_grad;
    }
    n.val.shape = {total};
    n.val.v.resize(total);
    std::size_t off = 0;
    for (NodeId p : parts) {
        const Tensor& t = value(p);
        std::copy(t.v.begin(), t.v.end(), n.val.v.begin() + off);
        off += t.size();
    }
    return id;
}

NodeId Tape::pick(NodeId a, std::size_t index) {
    if (index >= value(a).size())
        throw ValidationError("pick: index " + std::to_string(index) + " out of range for " + value(a).shape_str());
    NodeId id = alloc();
    Node& n = nodes_[id];
    n.op = Op::pick;
    n.in0 = a;
    n.k = static_cast<double>(index);
    n.requires_grad = nodes_[a].requires_grad;
    n.val.shape = {1};
    n.val.v.assign(1, value(a).v[index]);
    return id;
}

NodeId Tape::external(NodeId input, Tensor value_out, Matrix jacobian) {
    if (jacobian.rows != value_out.size() || jacobian.cols != value(input).size()) {
        throw ValidationError("external: jacobian " + std::to_string(jacobian.rows) + "x" +
                              std::to_string(jacobian.cols) + " inconsistent with output size " +
                              std::to_string(value_out.size()) + " and input size " +
                              std::to_string(value(input).size()));
    }
    NodeId id = alloc();
    Node& n = nodes_[id];
    n.op = Op::external;
    n.in0 = input;
    n.requires_grad = nodes_[input].requires_grad;
    n.val = std::move(value_out);
    n.jac = std::move(jacobian);
    return id;
}

void Tape::backward(NodeId loss) {
    if (loss >= live_) throw ValidationError("backward: unknown node id");
    if (value(loss).size() != 1) {
        throw ValidationError("backward: loss must be scalar, got shape " + value(loss).shape_str());
    }

    for (std::size_t i = 0; i <= loss; ++i) {
        Node& n = nodes_[i];
        if (!n.requires_grad) continue;
        const Tensor& v = n.param ? n.param->value : n.val;
        n.grad.shape = v.shape;
        n.grad.v.assign(v.size(), 0.0);
    }
    if (!nodes_[loss].requires_grad) return;  // nothing trainable feeds the loss
    nodes_[loss].grad.v[0] = 1.0;

    // Reverse creation order, each node exactly once.
    for (std::size_t idx = loss + 1; idx-- > 0;) {
        Node& n = nodes_[idx];
        if (!n.requires_grad || n.grad.v.empty()) continue;
        const std::vector<double>& gy = n.grad.v;
        switch (n.op) {
            case Op::leaf:
                break;
            case Op::affine: {
                Node& wn = nodes_[n.in0];
                Node& xn = nodes_[n.in1];
                Node& bn = nodes_[n.in2];
                const Tensor& wv = value(n.in0);
                const Tensor& xv = value(n.in1);
                std::size_t m = wv.shape[0], cols = wv.shape[1];
                const double* W = wv.v.data();
                const double* X = xv.v.data();
                if (wn.requires_grad) {
                    double* gw = wn.grad.v.data();
                    for (std::size_t i = 0; i < m; ++i) {
                        double g = gy[i];
                        double* row = gw + i * cols;
                        for (std::size_t j = 0; j < cols; ++j) row[j] += g * X[j];
                    }
                }
                if (xn.requires_grad) {
                    double* gx = xn.grad.v.data();
                    for (std::size_t i = 0; i < m; ++i) {
                        double g = gy[i];
                        const double* row = W + i * cols;
                        for (std::size_t j = 0; j < cols; ++j) gx[j] += row[j] * g;
                    }
                }
                if (bn.requires_grad) {
                    double* gb = bn.grad.v.data();
                    for (std::size_t i = 0; i < m; ++i) gb[i] += gy[i];
                }
                break;
            }
            case Op::add: {
                Node& an = nodes_[n.in0];
                Node& bn = nodes_[n.in1];
                if (an.requires_grad)
                    for (std::size_t i = 0; i < gy.size(); ++i) an.grad.v[i] += gy[i];
                if (bn.requires_grad)
                    for (std::size_t i = 0; i < gy.size(); ++i) bn.grad.v[i] += gy[i];
                break;
            }
            case Op::mul: {
                Node& an = nodes_[n.in0];
                Node& bn = nodes_[n.in1];
                const Tensor& av = value(n.in0);
                const Tensor& bv = value(n.in1);
                if (an.requires_grad)
                    for (std::size_t i = 0; i < gy.size(); ++i) an.grad.v[i] += gy[i] * bv.v[i];
                if (bn.requires_grad)
                    for (std::size_t i = 0; i < gy.size(); ++i) bn.grad.v[i] += gy[i] * av.v[i];
                break;
            }
            case Op::relu:
            case Op::hinge_max0: {
                Node& an = nodes_[n.in0];
                const Tensor& av = value(n.in0);
                if (an.requires_grad)
                    for (std::size_t i = 0; i < gy.size(); ++i)
                        if (av.v[i] > 0.0) an.grad.v[i] += gy[i];
                break;
            }
            case Op::tanh_fn: {
                Node& an = nodes_[n.in0];
                if (an.requires_grad)
                    for (std::size_t i = 0; i < gy.size(); ++i) an.grad.v[i] += gy[i] * (1.0 - n.val.v[i] * n.val.v[i]);
                break;
            }
            case Op::sigmoid: {
                Node& an = nodes_[n.in0];
                if (an.requires_grad)
                    for (std::size_t i = 0; i < gy.size(); ++i) an.grad.v[i] += gy[i] * n.val.v[i] * (1.0 - n.val.v[i]);
                break;
            }
            case Op::exp_fn: {
                Node& an = nodes_[n.in0];
                if (an.requires_grad)
                    for (std::size_t i = 0; i < gy.size(); ++i) an.grad.v[i] += gy[i] * n.val.v[i];
                break;
            }
            case Op::l2norm: {
                Node& an = nodes_[n.in0];
                const Tensor& av = value(n.in0);
                // Subgradient 0 at the origin.
                if (an.requires_grad && n.k > 0.0) {
                    double g = gy[0] / n.k;
                    for (std::size_t i = 0; i < av.size(); ++i) an.grad.v[i] += g * av.v[i];
                }
                break;
            }
            case Op::sum: {
                Node& an = nodes_[n.in0];
                if (an.requires_grad)
                    for (std::size_t i = 0; i < an.grad.v.size(); ++i) an.grad.v[i] += gy[0];
                break;
            }
            case Op::scale: {
                Node& an = nodes_[n.in0];
                if (an.requires_grad)
                    for (std::size_t i = 0; i < gy.size(); ++i) an.grad.v[i] += gy[i] * n.k;
                break;
            }
            case Op::concat: {
                std::size_t off = 0;
                for (NodeId pid : n.many) {
                    Node& part = nodes_[pid];
                    std::size_t len = value(pid).size();
                    if (part.requires_grad)
                        for (std::size_t i = 0; i < len; ++i) part.grad.v[i] += gy[off + i];
                    off += len;
                }
                break;
            }
            case Op::pick: {
                Node& an = nodes_[n.in0];
                if (an.requires_grad) an.grad.v[static_cast<std::size_t>(n.k)] += gy[0];
                break;
            }
            case Op::external: {
                Node& an = nodes_[n.in0];
                if (an.requires_grad) {
                    std::size_t rows = n.jac.rows, cols = n.jac.cols;
                    for (std::size_t i = 0; i < rows; ++i) {
                        double g = gy[i];
                        if (g == 0.0) continue;
                        const double* row = n.jac.data.data() + i * cols;
                        for (std::size_t j = 0; j < cols; ++j) an.grad.v[j] += g * row[j];
                    }
                }
                break;
            }
        }
    }

    // Fold leaf gradients into their parameters.
    for (std::size_t i = 0; i <= loss; ++i) {
        Node& n = nodes_[i];
        if (n.param != nullptr && n.param->trainable && !n.grad.v.empty()) {
            for (std::size_t j = 0; j < n.grad.v.size(); ++j) n.param->grad.v[j] += n.grad.v[j];
        }
    }
}

}  // namespace carve::diff
