#include "lsr/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "lsr/kernels.hpp"

namespace lsr {

const Tensor& Var::value() const { return g_->value(*this); }
const Tensor& Var::grad() const { return g_->grad(*this); }
double Var::scalar() const {
    const Tensor& t = g_->value(*this);
    if (t.numel() != 1) throw ShapeError("scalar(): tensor has shape " + shape_str(t.shape()));
    return t[0];
}

Graph::Node& Graph::node(Var v) { return nodes_[static_cast<std::size_t>(v.id())]; }
const Graph::Node& Graph::node(Var v) const { return nodes_[static_cast<std::size_t>(v.id())]; }

void Graph::check_same_graph(Var v) const {
    if (!v.valid() || v.graph() != this || v.id() >= static_cast<int>(nodes_.size()))
        throw ShapeError("graph: operand does not belong to this graph");
}

const Tensor& Graph::value(Var v) const {
    check_same_graph(v);
    return node(v).value;
}

const Tensor& Graph::grad(Var v) const {
    check_same_graph(v);
    const Node& n = node(v);
    if (n.adjoint.numel() == 0)
        throw ShapeError("grad(): no gradient recorded for this node (backward not run or node unreachable)");
    return n.adjoint;
}

Var Graph::push(Node n) {
    const bool needs = n.requires_grad ||
                       (n.in[0] >= 0 && nodes_[static_cast<std::size_t>(n.in[0])].needs_grad) ||
                       (n.in[1] >= 0 && nodes_[static_cast<std::size_t>(n.in[1])].needs_grad);
    n.needs_grad = needs;
    eval(n);
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::leaf(Tensor value, bool requires_grad) {
    value.require_finite("leaf");
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    return push(std::move(n));
}

namespace {
void check_binary(const char* op, const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}
} // namespace

Var Graph::add(Var a, Var b) {
    check_same_graph(a);
    check_same_graph(b);
    check_binary("add", node(a).value, node(b).value);
    Node n;
    n.op = Op::Add;
    n.in = {a.id(), b.id()};
    return push(std::move(n));
}

Var Graph::sub(Var a, Var b) {
    check_same_graph(a);
    check_same_graph(b);
    check_binary("sub", node(a).value, node(b).value);
    Node n;
    n.op = Op::Sub;
    n.in = {a.id(), b.id()};
    return push(std::move(n));
}

Var Graph::mul(Var a, Var b) {
    check_same_graph(a);
    check_same_graph(b);
    check_binary("mul", node(a).value, node(b).value);
    Node n;
    n.op = Op::Mul;
    n.in = {a.id(), b.id()};
    return push(std::move(n));
}

Var Graph::div(Var a, Var b) {
    check_same_graph(a);
    check_same_graph(b);
    check_binary("div", node(a).value, node(b).value);
    Node n;
    n.op = Op::Div;
    n.in = {a.id(), b.id()};
    return push(std::move(n));
}

Var Graph::scale(Var a, double c) {
    check_same_graph(a);
    Node n;
    n.op = Op::Scale;
    n.in = {a.id(), -1};
    n.c = c;
    return push(std::move(n));
}

Var Graph::add_const(Var a, double c) {
    check_same_graph(a);
    Node n;
    n.op = Op::AddConst;
    n.in = {a.id(), -1};
    n.c = c;
    return push(std::move(n));
}

Var Graph::relu(Var a) {
    check_same_graph(a);
    Node n;
    n.op = Op::Relu;
    n.in = {a.id(), -1};
    return push(std::move(n));
}

Var Graph::sigmoid(Var a) {
    check_same_graph(a);
    Node n;
    n.op = Op::Sigmoid;
    n.in = {a.id(), -1};
    return push(std::move(n));
}

Var Graph::log(Var a) {
    check_same_graph(a);
    Node n;
    n.op = Op::Log;
    n.in = {a.id(), -1};
    return push(std::move(n));
}

Var Graph::reduce_sum(Var a) {
    check_same_graph(a);
    Node n;
    n.op = Op::ReduceSum;
    n.in = {a.id(), -1};
    return push(std::move(n));
}

Var Graph::reduce_mean(Var a) {
    check_same_graph(a);
    Node n;
    n.op = Op::ReduceMean;
    n.in = {a.id(), -1};
    return push(std::move(n));
}

Var Graph::broadcast(Var a, Shape target) {
    check_same_graph(a);
    const Shape& s = node(a).value.shape();
    const bool scalar_src = node(a).value.numel() == 1;
    const bool chan_src = s.size() == 1 && target.size() == 3 && s[0] == target[0];
    const bool plane_src = s.size() == 3 && target.size() == 3 && s[0] == 1 && s[1] == target[1] &&
                           s[2] == target[2];
    if (!scalar_src && !chan_src && !plane_src)
        throw ShapeError("broadcast: cannot expand " + shape_str(s) + " to " + shape_str(target));
    Node n;
    n.op = Op::Broadcast;
    n.in = {a.id(), -1};
    n.value = Tensor(target);  // shape carrier; eval() fills it
    return push(std::move(n));
}

Var Graph::channel_sum(Var a) {
    check_same_graph(a);
    if (node(a).value.rank() != 3)
        throw ShapeError("channel_sum: want rank-3 input, got " + shape_str(node(a).value.shape()));
    Node n;
    n.op = Op::ChannelSum;
    n.in = {a.id(), -1};
    return push(std::move(n));
}

Var Graph::conv2d(Var x, Var w, Var bias, std::int64_t pad) {
    check_same_graph(x);
    check_same_graph(w);
    const Tensor& xv = node(x).value;
    const Tensor& wv = node(w).value;
    if (xv.rank() != 3 || wv.rank() != 4)
        throw ShapeError("conv2d: want x rank 3 and w rank 4, got " + shape_str(xv.shape()) + " and " +
                         shape_str(wv.shape()));
    if (xv.dim(0) != wv.dim(1))
        throw ShapeError("conv2d: input channels mismatch " + shape_str(xv.shape()) + " vs " +
                         shape_str(wv.shape()));
    if (bias.valid()) {
        check_same_graph(bias);
        const Tensor& bv = node(bias).value;
        if (bv.rank() != 1 || bv.dim(0) != wv.dim(0))
            throw ShapeError("conv2d: bias shape " + shape_str(bv.shape()) + " does not match " +
                             std::to_string(wv.dim(0)) + " output channels");
    }
    kernels::Conv2dDims d{xv.dim(0), xv.dim(1), xv.dim(2), wv.dim(0), wv.dim(2), wv.dim(3), pad};
    if (d.oh() <= 0 || d.ow() <= 0)
        throw ShapeError("conv2d: kernel " + shape_str(wv.shape()) + " too large for input " +
                         shape_str(xv.shape()) + " at pad " + std::to_string(pad));
    Node n;
    n.op = Op::Conv2d;
    n.in = {x.id(), w.id()};
    n.pad = pad;
    n.aux.push_back(bias.valid() ? bias.id() : -1);
    if (bias.valid() && node(bias).needs_grad) n.needs_grad = true;
    return push(std::move(n));
}

Var Graph::maxpool2x2(Var a) {
    check_same_graph(a);
    const Tensor& v = node(a).value;
    if (v.rank() != 3 || v.dim(1) % 2 != 0 || v.dim(2) % 2 != 0)
        throw ShapeError("maxpool2x2: want rank-3 input with even h,w, got " + shape_str(v.shape()));
    Node n;
    n.op = Op::MaxPool2x2;
    n.in = {a.id(), -1};
    return push(std::move(n));
}

Var Graph::upsample2x(Var a) {
    check_same_graph(a);
    if (node(a).value.rank() != 3)
        throw ShapeError("upsample2x: want rank-3 input, got " + shape_str(node(a).value.shape()));
    Node n;
    n.op = Op::Upsample2x;
    n.in = {a.id(), -1};
    return push(std::move(n));
}

Var Graph::concat_channels(Var a, Var b) {
    check_same_graph(a);
    check_same_graph(b);
    const Tensor& av = node(a).value;
    const Tensor& bv = node(b).value;
    if (av.rank() != 3 || bv.rank() != 3 || av.dim(1) != bv.dim(1) || av.dim(2) != bv.dim(2))
        throw ShapeError("concat_channels: incompatible shapes " + shape_str(av.shape()) + " and " +
                         shape_str(bv.shape()));
    Node n;
    n.op = Op::ConcatChannels;
    n.in = {a.id(), b.id()};
    return push(std::move(n));
}

void Graph::eval(Node& n) {
    const Tensor* a = n.in[0] >= 0 ? &nodes_[static_cast<std::size_t>(n.in[0])].value : nullptr;
    const Tensor* b = n.in[1] >= 0 ? &nodes_[static_cast<std::size_t>(n.in[1])].value : nullptr;
    const char* who = "leaf";
    switch (n.op) {
        case Op::Leaf:
            return;  // value already present
        case Op::Add: {
            who = "add";
            if (!n.value.same_shape(*a)) n.value = Tensor(a->shape());
            for (std::int64_t i = 0; i < a->numel(); ++i) n.value[i] = (*a)[i] + (*b)[i];
            break;
        }
        case Op::Sub: {
            who = "sub";
            if (!n.value.same_shape(*a)) n.value = Tensor(a->shape());
            for (std::int64_t i = 0; i < a->numel(); ++i) n.value[i] = (*a)[i] - (*b)[i];
            break;
        }
        case Op::Mul: {
            who = "mul";
            if (!n.value.same_shape(*a)) n.value = Tensor(a->shape());
            for (std::int64_t i = 0; i < a->numel(); ++i) n.value[i] = (*a)[i] * (*b)[i];
            break;
        }
        case Op::Div: {
            who = "div";
            if (!n.value.same_shape(*a)) n.value = Tensor(a->shape());
            for (std::int64_t i = 0; i < a->numel(); ++i) n.value[i] = (*a)[i] / (*b)[i];
            break;
        }
        case Op::Scale: {
            who = "scale";
            if (!n.value.same_shape(*a)) n.value = Tensor(a->shape());
            for (std::int64_t i = 0; i < a->numel(); ++i) n.value[i] = n.c * (*a)[i];
            break;
        }
        case Op::AddConst: {
            who = "add_const";
            if (!n.value.same_shape(*a)) n.value = Tensor(a->shape());
            for (std::int64_t i = 0; i < a->numel(); ++i) n.value[i] = (*a)[i] + n.c;
            break;
        }
        case Op::Relu: {
            who = "relu";
            if (!n.value.same_shape(*a)) n.value = Tensor(a->shape());
            for (std::int64_t i = 0; i < a->numel(); ++i) n.value[i] = (*a)[i] > 0.0 ? (*a)[i] : 0.0;
            break;
        }
        case Op::Sigmoid: {
            who = "sigmoid";
            if (!n.value.same_shape(*a)) n.value = Tensor(a->shape());
            for (std::int64_t i = 0; i < a->numel(); ++i) n.value[i] = 1.0 / (1.0 + std::exp(-(*a)[i]));
            break;
        }
        case Op::Log: {
            who = "log";
            if (!n.value.same_shape(*a)) n.value = Tensor(a->shape());
            for (std::int64_t i = 0; i < a->numel(); ++i) n.value[i] = std::log((*a)[i]);
            break;
        }
        case Op::ReduceSum: {
            who = "reduce_sum";
            double acc = 0.0;
            for (std::int64_t i = 0; i < a->numel(); ++i) acc += (*a)[i];
            n.value = Tensor::scalar(acc);
            break;
        }
        case Op::ReduceMean: {
            who = "reduce_mean";
            double acc = 0.0;
            for (std::int64_t i = 0; i < a->numel(); ++i) acc += (*a)[i];
            n.value = Tensor::scalar(acc / static_cast<double>(a->numel()));
            break;
        }
        case Op::Broadcast: {
            who = "broadcast";
            Tensor& out = n.value;  // target shape fixed at construction
            if (a->numel() == 1) {
                out.fill((*a)[0]);
            } else if (a->rank() == 1) {
                const std::int64_t hw = out.dim(1) * out.dim(2);
                for (std::int64_t c = 0; c < out.dim(0); ++c)
                    for (std::int64_t i = 0; i < hw; ++i) out[c * hw + i] = (*a)[c];
            } else {  // (1,h,w) -> (c,h,w)
                const std::int64_t hw = out.dim(1) * out.dim(2);
                for (std::int64_t c = 0; c < out.dim(0); ++c)
                    for (std::int64_t i = 0; i < hw; ++i) out[c * hw + i] = (*a)[i];
            }
            break;
        }
        case Op::ChannelSum: {
            who = "channel_sum";
            const std::int64_t hw = a->dim(1) * a->dim(2);
            if (n.value.numel() != hw) n.value = Tensor(Shape{1, a->dim(1), a->dim(2)});
            for (std::int64_t i = 0; i < hw; ++i) {
                double acc = 0.0;
                for (std::int64_t c = 0; c < a->dim(0); ++c) acc += (*a)[c * hw + i];
                n.value[i] = acc;
            }
            break;
        }
        case Op::Conv2d: {
            who = "conv2d";
            kernels::Conv2dDims d{a->dim(0), a->dim(1), a->dim(2), b->dim(0), b->dim(2), b->dim(3), n.pad};
            Shape out{d.co, d.oh(), d.ow()};
            if (n.value.shape() != out) n.value = Tensor(out);
            const int bias_id = static_cast<int>(n.aux[0]);
            const double* bias =
                bias_id >= 0 ? nodes_[static_cast<std::size_t>(bias_id)].value.data() : nullptr;
            kernels::conv2d_forward(n.value.data(), a->data(), b->data(), bias, d);
            break;
        }
        case Op::MaxPool2x2: {
            who = "maxpool2x2";
            const std::int64_t c = a->dim(0), h = a->dim(1), w = a->dim(2);
            Shape out{c, h / 2, w / 2};
            if (n.value.shape() != out) n.value = Tensor(out);
            n.aux.assign(static_cast<std::size_t>(n.value.numel()), 0);
            kernels::maxpool2x2_forward(n.value.data(), n.aux.data(), a->data(), c, h, w);
            break;
        }
        case Op::Upsample2x: {
            who = "upsample2x";
            const std::int64_t c = a->dim(0), h = a->dim(1), w = a->dim(2);
            Shape out{c, 2 * h, 2 * w};
            if (n.value.shape() != out) n.value = Tensor(out);
            kernels::upsample2x_forward(n.value.data(), a->data(), c, h, w);
            break;
        }
        case Op::ConcatChannels: {
            who = "concat_channels";
            Shape out{a->dim(0) + b->dim(0), a->dim(1), a->dim(2)};
            if (n.value.shape() != out) n.value = Tensor(out);
            std::copy(a->data(), a->data() + a->numel(), n.value.data());
            std::copy(b->data(), b->data() + b->numel(), n.value.data() + a->numel());
            break;
        }
    }
    n.value.require_finite(who);
}

void Graph::recompute() {
    for (Node& n : nodes_) eval(n);
}

void Graph::set_leaf(Var v, std::span<const double> values) {
    check_same_graph(v);
    Node& n = node(v);
    if (n.op != Op::Leaf) throw ShapeError("set_leaf: node is not a leaf");
    if (static_cast<std::int64_t>(values.size()) != n.value.numel())
        throw ShapeError("set_leaf: " + std::to_string(values.size()) + " values for shape " +
                         shape_str(n.value.shape()));
    std::copy(values.begin(), values.end(), n.value.data());
}

std::vector<std::int64_t> Graph::kink_signature() const {
    std::vector<std::int64_t> sig;
    for (const Node& n : nodes_) {
        if (n.op == Op::Relu) {
            const Tensor& x = nodes_[static_cast<std::size_t>(n.in[0])].value;
            for (std::int64_t i = 0; i < x.numel(); ++i)
                sig.push_back(x[i] > 0.0 ? 1 : (x[i] < 0.0 ? -1 : 0));
        } else if (n.op == Op::MaxPool2x2) {
            sig.insert(sig.end(), n.aux.begin(), n.aux.end());
        }
    }
    return sig;
}

Tensor& Graph::touch_adjoint(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.adjoint.same_shape(n.value)) n.adjoint = Tensor(n.value.shape());
    return n.adjoint;
}

void Graph::backward(Var output) {
    check_same_graph(output);
    if (node(output).value.numel() != 1)
        throw ShapeError("backward: output must be scalar, got " + shape_str(node(output).value.shape()));

    for (Node& n : nodes_) n.adjoint = Tensor();
    touch_adjoint(output.id())[0] = 1.0;

    for (int id = output.id(); id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.needs_grad || n.adjoint.numel() == 0) continue;
        const Tensor& g = n.adjoint;
        Node* an = n.in[0] >= 0 ? &nodes_[static_cast<std::size_t>(n.in[0])] : nullptr;
        Node* bn = n.in[1] >= 0 ? &nodes_[static_cast<std::size_t>(n.in[1])] : nullptr;
        const bool need_a = an && an->needs_grad;
        const bool need_b = bn && bn->needs_grad;

        switch (n.op) {
            case Op::Leaf:
                break;
            case Op::Add: {
                if (need_a) {
                    Tensor& da = touch_adjoint(n.in[0]);
                    for (std::int64_t i = 0; i < g.numel(); ++i) da[i] += g[i];
                }
                if (need_b) {
                    Tensor& db = touch_adjoint(n.in[1]);
                    for (std::int64_t i = 0; i < g.numel(); ++i) db[i] += g[i];
                }
                break;
            }
            case Op::Sub: {
                if (need_a) {
                    Tensor& da = touch_adjoint(n.in[0]);
                    for (std::int64_t i = 0; i < g.numel(); ++i) da[i] += g[i];
                }
                if (need_b) {
                    Tensor& db = touch_adjoint(n.in[1]);
                    for (std::int64_t i = 0; i < g.numel(); ++i) db[i] -= g[i];
                }
                break;
            }
            case Op::Mul: {
                if (need_a) {
                    Tensor& da = touch_adjoint(n.in[0]);
                    for (std::int64_t i = 0; i < g.numel(); ++i) da[i] += g[i] * bn->value[i];
                }
                if (need_b) {
                    Tensor& db = touch_adjoint(n.in[1]);
                    for (std::int64_t i = 0; i < g.numel(); ++i) db[i] += g[i] * an->value[i];
                }
                break;
            }
            case Op::Div: {
                if (need_a) {
                    Tensor& da = touch_adjoint(n.in[0]);
                    for (std::int64_t i = 0; i < g.numel(); ++i) da[i] += g[i] / bn->value[i];
                }
                if (need_b) {
                    Tensor& db = touch_adjoint(n.in[1]);
                    for (std::int64_t i = 0; i < g.numel(); ++i)
                        db[i] -= g[i] * an->value[i] / (bn->value[i] * bn->value[i]);
                }
                break;
            }
            case Op::Scale: {
                if (need_a) {
                    Tensor& da = touch_adjoint(n.in[0]);
                    for (std::int64_t i = 0; i < g.numel(); ++i) da[i] += n.c * g[i];
                }
                break;
            }
            case Op::AddConst: {
                if (need_a) {
                    Tensor& da = touch_adjoint(n.in[0]);
                    for (std::int64_t i = 0; i < g.numel(); ++i) da[i] += g[i];
                }
                break;
            }
            case Op::Relu: {
                if (need_a) {
                    Tensor& da = touch_adjoint(n.in[0]);
                    const Tensor& x = an->value;
                    for (std::int64_t i = 0; i < g.numel(); ++i)
                        if (x[i] > 0.0) da[i] += g[i];
                }
                break;
            }
            case Op::Sigmoid: {
                if (need_a) {
                    Tensor& da = touch_adjoint(n.in[0]);
                    for (std::int64_t i = 0; i < g.numel(); ++i) {
                        const double s = n.value[i];
                        da[i] += g[i] * s * (1.0 - s);
                    }
                }
                break;
            }
            case Op::Log: {
                if (need_a) {
                    Tensor& da = touch_adjoint(n.in[0]);
                    for (std::int64_t i = 0; i < g.numel(); ++i) da[i] += g[i] / an->value[i];
                }
                break;
            }
            case Op::ReduceSum: {
                if (need_a) {
                    Tensor& da = touch_adjoint(n.in[0]);
                    for (std::int64_t i = 0; i < da.numel(); ++i) da[i] += g[0];
                }
                break;
            }
            case Op::ReduceMean: {
                if (need_a) {
                    Tensor& da = touch_adjoint(n.in[0]);
                    const double s = g[0] / static_cast<double>(da.numel());
                    for (std::int64_t i = 0; i < da.numel(); ++i) da[i] += s;
                }
                break;
            }
            case Op::Broadcast: {
                if (need_a) {
                    Tensor& da = touch_adjoint(n.in[0]);
                    if (da.numel() == 1) {
                        double acc = 0.0;
                        for (std::int64_t i = 0; i < g.numel(); ++i) acc += g[i];
                        da[0] += acc;
                    } else if (da.rank() == 1) {
                        const std::int64_t hw = g.dim(1) * g.dim(2);
                        for (std::int64_t c = 0; c < g.dim(0); ++c) {
                            double acc = 0.0;
                            for (std::int64_t i = 0; i < hw; ++i) acc += g[c * hw + i];
                            da[c] += acc;
                        }
                    } else {  // (1,h,w) source
                        const std::int64_t hw = g.dim(1) * g.dim(2);
                        for (std::int64_t i = 0; i < hw; ++i) {
                            double acc = 0.0;
                            for (std::int64_t c = 0; c < g.dim(0); ++c) acc += g[c * hw + i];
                            da[i] += acc;
                        }
                    }
                }
                break;
            }
            case Op::ChannelSum: {
                if (need_a) {
                    Tensor& da = touch_adjoint(n.in[0]);
                    const std::int64_t hw = g.numel();
                    for (std::int64_t c = 0; c < da.dim(0); ++c)
                        for (std::int64_t i = 0; i < hw; ++i) da[c * hw + i] += g[i];
                }
                break;
            }
            case Op::Conv2d: {
                const Tensor& x = an->value;
                const Tensor& w = bn->value;
                kernels::Conv2dDims d{x.dim(0), x.dim(1), x.dim(2), w.dim(0), w.dim(2), w.dim(3), n.pad};
                if (need_a) kernels::conv2d_backward_input(touch_adjoint(n.in[0]).data(), g.data(), w.data(), d);
                const int bias_id = static_cast<int>(n.aux[0]);
                const bool need_bias =
                    bias_id >= 0 && nodes_[static_cast<std::size_t>(bias_id)].needs_grad;
                if (need_b || need_bias) {
                    double* dw = need_b ? touch_adjoint(n.in[1]).data() : nullptr;
                    double* db = need_bias ? touch_adjoint(bias_id).data() : nullptr;
                    if (need_b) {
                        kernels::conv2d_backward_weights(dw, db, g.data(), x.data(), d);
                    } else if (db) {
                        // bias-only path: reuse the kernel with a scratch dw
                        Tensor scratch(w.shape());
                        kernels::conv2d_backward_weights(scratch.data(), db, g.data(), x.data(), d);
                    }
                }
                break;
            }
            case Op::MaxPool2x2: {
                if (need_a) {
                    const Tensor& x = an->value;
                    kernels::maxpool2x2_backward(touch_adjoint(n.in[0]).data(), g.data(), n.aux.data(),
                                                 x.dim(0), x.dim(1), x.dim(2));
                }
                break;
            }
            case Op::Upsample2x: {
                if (need_a) {
                    const Tensor& x = an->value;
                    kernels::upsample2x_backward(touch_adjoint(n.in[0]).data(), g.data(), x.dim(0), x.dim(1),
                                                 x.dim(2));
                }
                break;
            }
            case Op::ConcatChannels: {
                const std::int64_t na = an->value.numel();
                if (need_a) {
                    Tensor& da = touch_adjoint(n.in[0]);
                    for (std::int64_t i = 0; i < na; ++i) da[i] += g[i];
                }
                if (need_b) {
                    Tensor& db = touch_adjoint(n.in[1]);
                    for (std::int64_t i = 0; i < db.numel(); ++i) db[i] += g[na + i];
                }
                break;
            }
        }
    }
}

GradCheckReport grad_check(Graph& g, Var output, std::span<const Var> leaves, double step,
                           const std::function<void()>& pre_eval) {
    if (step <= 0.0) throw ConfigError("grad_check: step must be positive");

    auto eval_out = [&]() {
        if (pre_eval) pre_eval();
        g.recompute();
        return output.scalar();
    };

    // determinism check: two evaluations from the same state must agree bitwise
    const double y0 = eval_out();
    const double y1 = eval_out();
    if (std::memcmp(&y0, &y1, sizeof(double)) != 0)
        throw NumericError("grad_check: non-deterministic function (two forward passes disagree)");

    g.backward(output);
    std::vector<Tensor> analytic;
    analytic.reserve(leaves.size());
    for (Var leaf : leaves) analytic.push_back(leaf.grad());

    const std::vector<std::int64_t> base_sig = g.kink_signature();

    GradCheckReport report;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        Var leaf = leaves[li];
        std::vector<double> base(leaf.value().values());
        std::vector<double> work(base);
        for (std::size_t i = 0; i < base.size(); ++i) {
            work[i] = base[i] + step;
            g.set_leaf(leaf, work);
            const double yp = eval_out();
            const bool kink_p = g.kink_signature() != base_sig;

            work[i] = base[i] - step;
            g.set_leaf(leaf, work);
            const double ym = eval_out();
            const bool kink_m = g.kink_signature() != base_sig;

            work[i] = base[i];
            g.set_leaf(leaf, work);

            if (kink_p || kink_m) {
                ++report.skipped;
                continue;
            }
            const double fd = (yp - ym) / (2.0 * step);
            const double err = std::abs(analytic[li][static_cast<std::int64_t>(i)] - fd) /
                               std::max(1.0, std::abs(fd));
            report.max_rel_err = std::max(report.max_rel_err, err);
            ++report.checked;
        }
    }
    g.recompute();  // restore base values
    return report;
}

} // namespace lsr
