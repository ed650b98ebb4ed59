#ifndef LSR_GRAPH_HPP
#define LSR_GRAPH_HPP

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "lsr/tensor.hpp"

namespace lsr {

class Graph;

// Handle to a node in a Graph. Cheap to copy; valid for the graph lifetime.
class Var {
public:
    Var() = default;
    Graph* graph() const { return g_; }
    int id() const { return id_; }
    bool valid() const { return g_ != nullptr && id_ >= 0; }

    const Tensor& value() const;
    const Tensor& grad() const;
    double scalar() const;

private:
    friend class Graph;
    Var(Graph* g, int id) : g_(g), id_(id) {}
    Graph* g_ = nullptr;
    int id_ = -1;
};

// Tape of primitive tensor operations with reverse-mode differentiation.
// Ops evaluate eagerly on construction; the tape order is the topological
// order, so backward is a single reverse sweep and recompute() a single
// forward sweep. Single-threaded per instance; kernel interiors may use
// OpenMP.
class Graph {
public:
    enum class Op : std::uint8_t {
        Leaf,
        Add,
        Sub,
        Mul,
        Div,
        Scale,     // c * x
        AddConst,  // x + c
        Relu,
        Sigmoid,
        Log,
        ReduceSum,
        ReduceMean,
        Broadcast,
        ChannelSum,
        Conv2d,
        MaxPool2x2,
        Upsample2x,
        ConcatChannels,
    };

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var leaf(Tensor value, bool requires_grad = false);
    Var scalar(double v) { return leaf(Tensor::scalar(v), false); }

    // Elementwise binary ops require identical shapes.
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);

    Var scale(Var a, double c);
    Var add_const(Var a, double c);

    // relu'(0) is taken as 0 (left subgradient).
    Var relu(Var a);
    Var sigmoid(Var a);
    // log requires strictly positive inputs; violations surface as a
    // non-finite-value error.
    Var log(Var a);

    Var reduce_sum(Var a);
    Var reduce_mean(Var a);

    // Supported expansions: (1) -> any shape, (c) -> (c,h,w), (1,h,w) -> (c,h,w).
    // The adjoint sums over the expanded positions (dual of the reduction).
    Var broadcast(Var a, Shape target);

    // (c,h,w) -> (1,h,w), summing over channels.
    Var channel_sum(Var a);

    // x: (ci,h,w), w: (co,ci,kh,kw), bias: (co) or invalid Var for none.
    // Stride 1, zero padding `pad`.
    Var conv2d(Var x, Var w, Var bias, std::int64_t pad);

    // 2x2 stride-2 max pool; ties break to the first element in row-major
    // window order.
    Var maxpool2x2(Var a);
    Var upsample2x(Var a);
    Var concat_channels(Var a, Var b);

    // Reverse sweep from a scalar output; fills grad() on every
    // requires_grad leaf reachable from it. Resets previous adjoints.
    void backward(Var output);

    // Re-evaluates every node in tape order from current leaf values.
    void recompute();

    // Overwrites a leaf's values (shape preserved); used by the gradient
    // checker and by parameter updates between replays.
    void set_leaf(Var leaf, std::span<const double> values);

    // Snapshot of non-smooth-point state (relu input signs, maxpool argmax).
    // Two evaluations with different signatures straddle a kink.
    std::vector<std::int64_t> kink_signature() const;

    const Tensor& value(Var v) const;
    const Tensor& grad(Var v) const;
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Op op = Op::Leaf;
        std::array<int, 2> in{-1, -1};
        Tensor value;
        Tensor adjoint;  // empty until touched by backward
        bool requires_grad = false;
        bool needs_grad = false;
        double c = 0.0;
        std::int64_t pad = 0;
        std::vector<std::int64_t> aux;  // maxpool argmax
    };

    Var push(Node n);
    Node& node(Var v);
    const Node& node(Var v) const;
    void check_same_graph(Var v) const;
    void eval(Node& n);
    Tensor& touch_adjoint(int id);

    std::vector<Node> nodes_;
};

// Operator sugar so loss formulas read the same for double and Var.
inline Var operator+(Var a, Var b) { return a.graph()->add(a, b); }
inline Var operator-(Var a, Var b) { return a.graph()->sub(a, b); }
inline Var operator*(Var a, Var b) { return a.graph()->mul(a, b); }
inline Var operator/(Var a, Var b) { return a.graph()->div(a, b); }
inline Var operator+(Var a, double c) { return a.graph()->add_const(a, c); }
inline Var operator+(double c, Var a) { return a.graph()->add_const(a, c); }
inline Var operator-(Var a, double c) { return a.graph()->add_const(a, -c); }
inline Var operator-(double c, Var a) { return a.graph()->add_const(a.graph()->scale(a, -1.0), c); }
inline Var operator*(Var a, double c) { return a.graph()->scale(a, c); }
inline Var operator*(double c, Var a) { return a.graph()->scale(a, c); }
inline Var operator/(Var a, double c) { return a.graph()->scale(a, 1.0 / c); }
inline Var operator-(Var a) { return a.graph()->scale(a, -1.0); }
inline Var log(Var a) { return a.graph()->log(a); }
inline Var relu(Var a) { return a.graph()->relu(a); }
inline Var sigmoid(Var a) { return a.graph()->sigmoid(a); }

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::int64_t checked = 0;
    std::int64_t skipped = 0;  // elements straddling a non-smooth point
};

// Central-finite-difference check of backward() against replayed forwards.
// Relative error uses |analytic - fd| / max(1, |fd|). Elements whose
// perturbed evaluations cross a relu kink or flip a maxpool argmax are
// skipped. pre_eval, when set, runs before every forward evaluation.
GradCheckReport grad_check(Graph& g, Var output, std::span<const Var> leaves, double step = 1e-5,
                           const std::function<void()>& pre_eval = {});

} // namespace lsr

#endif
