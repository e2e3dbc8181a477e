#pragma once

// Define-by-run reverse-mode differentiation over Tensor.
//
// A Tape records primitive operations as they execute; backward() walks the
// record once in reverse topological order. Graphs are rebuilt per
// evaluation and tensors participating in a live graph are never mutated
// in place.

#include <functional>
#include <vector>

#include "ditto/tensor.hpp"

namespace ditto::ad {

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaves. constant() is shorthand for a non-differentiable leaf.
    Var leaf(Tensor value, bool requires_grad);
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    const Tensor& value(Var v) const { return nodes_[v.id].value; }

    // Elementwise binary ops. Shapes must match, or one operand may be a
    // 1x1 scalar, a 1xC row vector, or an Rx1 column vector broadcast
    // against an RxC matrix.
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var divide(Var a, Var b);

    Var scale(Var a, double c);       // c * a
    Var add_const(Var a, double c);   // a + c

    Var matmul(Var a, Var b);  // (m x k) * (k x n)
    Var transpose(Var a);
    Var reshape(Var a, std::vector<int> shape);  // same element count, row-major

    Var tanh_(Var a);
    Var exp_(Var a);
    Var log_(Var a);
    Var sqrt_(Var a);
    Var pow_(Var a, double p);
    Var clamp_min(Var a, double floor);  // max(a, floor); zero grad where clamped

    Var sum(Var a);       // 1x1
    Var mean(Var a);      // 1x1
    Var row_sum(Var a);   // RxC -> Rx1
    Var col_sum(Var a);   // RxC -> 1xC

    Var concat_rows(Var a, Var b);                 // stack along rows
    Var slice_rows(Var a, int row0, int row1);     // rows [row0, row1)
    Var gather_rows(Var table, std::vector<int> indices);

    // Convenience compositions.
    Var affine(Var x, Var w, Var bias);            // x*w + bias (bias row-broadcast)
    Var sq_dist(Var a, Var b);                     // sum((a-b)^2), 1x1

    // Reverse pass from a scalar output. Gradients accumulate per node;
    // call once per recorded graph.
    void backward(Var out);

    // Gradient of a leaf after backward(). Zero tensor (and *warned set)
    // when the leaf was recorded without requires_grad.
    Tensor grad(Var v, bool* warned = nullptr) const;

    std::size_t node_count() const { return nodes_.size(); }

private:
    enum class Op {
        Leaf, Add, Sub, Mul, Div, Scale, AddConst, MatMul, Transpose,
        Tanh, Exp, Log, Sqrt, Pow, ClampMin, Sum, Mean, RowSum, ColSum,
        ConcatRows, SliceRows, GatherRows, Reshape,
    };

    struct Node {
        Op op = Op::Leaf;
        int a = -1, b = -1;
        double p = 0.0;
        std::vector<int> idx;
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
    };

    int push(Node n);
    Var binary(Op op, Var a, Var b);
    Var unary(Op op, Var a, double p = 0.0);
    void accum(int node, const Tensor& g);
    void accum_bcast(int node, const Tensor& g);  // reduce g to node's shape

    std::vector<Node> nodes_;
    bool ran_backward_ = false;
};

// Max over coordinates of |analytic - central difference| / (|analytic| + 1e-8)
// for a scalar-valued graph function of one tensor input. Throws when the
// function evaluates non-finite at a probe point.
double finite_diff_check(const std::function<Var(Tape&, Var)>& f,
                         const Tensor& point, double step);

}  // namespace ditto::ad
