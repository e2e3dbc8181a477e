#include "ditto/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "ditto/kernels.hpp"
#include "ditto/linalg.hpp"

namespace ditto::ad {

namespace {

enum class Bcast { Same, Scalar, Row, Col };

Bcast bcast_kind(const Tensor& operand, const Tensor& out) {
    if (operand.same_shape(out)) return Bcast::Same;
    if (operand.size() == 1) return Bcast::Scalar;
    if (operand.rows() == 1 && operand.cols() == out.cols()) return Bcast::Row;
    if (operand.cols() == 1 && operand.rows() == out.rows()) return Bcast::Col;
    throw std::invalid_argument("broadcast mismatch: operand " + operand.shape_str() +
                                " vs result " + out.shape_str());
}

// Flat index into a broadcast operand for output cell (r, c).
inline std::size_t bidx(Bcast k, int r, int c, int cols) {
    switch (k) {
        case Bcast::Same: return static_cast<std::size_t>(r) * cols + c;
        case Bcast::Scalar: return 0;
        case Bcast::Row: return static_cast<std::size_t>(c);
        case Bcast::Col: return static_cast<std::size_t>(r);
    }
    return 0;
}

void check_binary_shapes(const char* name, const Tensor& a, const Tensor& b) {
    // Result shape is the larger operand's; validation happens in bcast_kind.
    if (a.empty() || b.empty())
        throw std::invalid_argument(std::string(name) + ": empty operand");
}

}  // namespace

int Tape::push(Node n) {
    if (ran_backward_)
        throw std::logic_error("Tape: cannot record after backward()");
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

Var Tape::leaf(Tensor value, bool requires_grad) {
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    return {push(std::move(n))};
}

Var Tape::binary(Op op, Var a, Var b) {
    const Tensor& av = nodes_[a.id].value;
    const Tensor& bv = nodes_[b.id].value;
    check_binary_shapes("binary op", av, bv);
    const Tensor& big = av.size() >= bv.size() ? av : bv;
    Bcast ka = bcast_kind(av, big);
    Bcast kb = bcast_kind(bv, big);

    Tensor out(big.shape());
    const int R = big.rows(), C = big.cols();
    if (ka == Bcast::Same && kb == Bcast::Same) {
        switch (op) {
            case Op::Add: kernels::add(av.data(), bv.data(), out.data(), out.size()); break;
            case Op::Sub: kernels::sub(av.data(), bv.data(), out.data(), out.size()); break;
            case Op::Mul: kernels::mul(av.data(), bv.data(), out.data(), out.size()); break;
            case Op::Div: kernels::div(av.data(), bv.data(), out.data(), out.size()); break;
            default: throw std::logic_error("binary: bad op");
        }
    } else {
        for (int r = 0; r < R; ++r)
            for (int c = 0; c < C; ++c) {
                double x = av[bidx(ka, r, c, C)];
                double y = bv[bidx(kb, r, c, C)];
                double z;
                switch (op) {
                    case Op::Add: z = x + y; break;
                    case Op::Sub: z = x - y; break;
                    case Op::Mul: z = x * y; break;
                    case Op::Div: z = x / y; break;
                    default: throw std::logic_error("binary: bad op");
                }
                out[static_cast<std::size_t>(r) * C + c] = z;
            }
    }

    Node n;
    n.op = op;
    n.a = a.id;
    n.b = b.id;
    n.value = std::move(out);
    n.requires_grad = nodes_[a.id].requires_grad || nodes_[b.id].requires_grad;
    return {push(std::move(n))};
}

Var Tape::add(Var a, Var b) { return binary(Op::Add, a, b); }
Var Tape::sub(Var a, Var b) { return binary(Op::Sub, a, b); }
Var Tape::mul(Var a, Var b) { return binary(Op::Mul, a, b); }
Var Tape::divide(Var a, Var b) { return binary(Op::Div, a, b); }

Var Tape::unary(Op op, Var a, double p) {
    const Tensor& av = nodes_[a.id].value;
    Tensor out(av.shape());
    const std::size_t n = av.size();
    switch (op) {
        case Op::Scale: kernels::scale(av.data(), p, out.data(), n); break;
        case Op::AddConst:
            for (std::size_t i = 0; i < n; ++i) out[i] = av[i] + p;
            break;
        case Op::Tanh:
            for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(av[i]);
            break;
        case Op::Exp:
            for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(av[i]);
            break;
        case Op::Log:
            for (std::size_t i = 0; i < n; ++i) out[i] = std::log(av[i]);
            break;
        case Op::Sqrt:
            for (std::size_t i = 0; i < n; ++i) out[i] = std::sqrt(av[i]);
            break;
        case Op::Pow:
            for (std::size_t i = 0; i < n; ++i) out[i] = std::pow(av[i], p);
            break;
        case Op::ClampMin:
            for (std::size_t i = 0; i < n; ++i) out[i] = av[i] > p ? av[i] : p;
            break;
        default: throw std::logic_error("unary: bad op");
    }
    Node node;
    node.op = op;
    node.a = a.id;
    node.p = p;
    node.value = std::move(out);
    node.requires_grad = nodes_[a.id].requires_grad;
    return {push(std::move(node))};
}

Var Tape::scale(Var a, double c) { return unary(Op::Scale, a, c); }
Var Tape::add_const(Var a, double c) { return unary(Op::AddConst, a, c); }
Var Tape::tanh_(Var a) { return unary(Op::Tanh, a); }
Var Tape::exp_(Var a) { return unary(Op::Exp, a); }
Var Tape::log_(Var a) { return unary(Op::Log, a); }
Var Tape::sqrt_(Var a) { return unary(Op::Sqrt, a); }
Var Tape::pow_(Var a, double p) { return unary(Op::Pow, a, p); }
Var Tape::clamp_min(Var a, double floor) { return unary(Op::ClampMin, a, floor); }

Var Tape::matmul(Var a, Var b) {
    const Tensor& av = nodes_[a.id].value;
    const Tensor& bv = nodes_[b.id].value;
    if (av.cols() != bv.rows())
        throw std::invalid_argument("matmul: inner extents differ, " + av.shape_str() +
                                    " * " + bv.shape_str());
    Node n;
    n.op = Op::MatMul;
    n.a = a.id;
    n.b = b.id;
    n.value = linalg::matmul_nn(av, bv);
    n.requires_grad = nodes_[a.id].requires_grad || nodes_[b.id].requires_grad;
    return {push(std::move(n))};
}

Var Tape::transpose(Var a) {
    Node n;
    n.op = Op::Transpose;
    n.a = a.id;
    n.value = linalg::transpose(nodes_[a.id].value);
    n.requires_grad = nodes_[a.id].requires_grad;
    return {push(std::move(n))};
}

Var Tape::sum(Var a) {
    Node n;
    n.op = Op::Sum;
    n.a = a.id;
    n.value = Tensor::scalar(kernels::sum(nodes_[a.id].value.data(), nodes_[a.id].value.size()));
    n.requires_grad = nodes_[a.id].requires_grad;
    return {push(std::move(n))};
}

Var Tape::mean(Var a) {
    const Tensor& av = nodes_[a.id].value;
    Node n;
    n.op = Op::Mean;
    n.a = a.id;
    n.value = Tensor::scalar(kernels::sum(av.data(), av.size()) / static_cast<double>(av.size()));
    n.requires_grad = nodes_[a.id].requires_grad;
    return {push(std::move(n))};
}

Var Tape::row_sum(Var a) {
    const Tensor& av = nodes_[a.id].value;
    Tensor out({av.rows(), 1});
    for (int r = 0; r < av.rows(); ++r)
        out[r] = kernels::sum(av.data() + static_cast<std::size_t>(r) * av.cols(), av.cols());
    Node n;
    n.op = Op::RowSum;
    n.a = a.id;
    n.value = std::move(out);
    n.requires_grad = nodes_[a.id].requires_grad;
    return {push(std::move(n))};
}

Var Tape::col_sum(Var a) {
    const Tensor& av = nodes_[a.id].value;
    Tensor out({1, av.cols()});
    for (int r = 0; r < av.rows(); ++r)
        kernels::add(out.data(), av.data() + static_cast<std::size_t>(r) * av.cols(),
                     out.data(), av.cols());
    Node n;
    n.op = Op::ColSum;
    n.a = a.id;
    n.value = std::move(out);
    n.requires_grad = nodes_[a.id].requires_grad;
    return {push(std::move(n))};
}

Var Tape::concat_rows(Var a, Var b) {
    const Tensor& av = nodes_[a.id].value;
    const Tensor& bv = nodes_[b.id].value;
    if (av.cols() != bv.cols())
        throw std::invalid_argument("concat_rows: column mismatch, " + av.shape_str() +
                                    " vs " + bv.shape_str());
    Tensor out({av.rows() + bv.rows(), av.cols()});
    std::copy(av.data(), av.data() + av.size(), out.data());
    std::copy(bv.data(), bv.data() + bv.size(), out.data() + av.size());
    Node n;
    n.op = Op::ConcatRows;
    n.a = a.id;
    n.b = b.id;
    n.value = std::move(out);
    n.requires_grad = nodes_[a.id].requires_grad || nodes_[b.id].requires_grad;
    return {push(std::move(n))};
}

Var Tape::slice_rows(Var a, int row0, int row1) {
    const Tensor& av = nodes_[a.id].value;
    if (row0 < 0 || row1 > av.rows() || row0 >= row1)
        throw std::invalid_argument("slice_rows: bad range");
    const int C = av.cols();
    Tensor out({row1 - row0, C});
    std::copy(av.data() + static_cast<std::size_t>(row0) * C,
              av.data() + static_cast<std::size_t>(row1) * C, out.data());
    Node n;
    n.op = Op::SliceRows;
    n.a = a.id;
    n.p = row0;
    n.value = std::move(out);
    n.requires_grad = nodes_[a.id].requires_grad;
    return {push(std::move(n))};
}

Var Tape::gather_rows(Var table, std::vector<int> indices) {
    const Tensor& tv = nodes_[table.id].value;
    const int C = tv.cols();
    Tensor out({static_cast<int>(indices.size()), C});
    for (std::size_t i = 0; i < indices.size(); ++i) {
        int r = indices[i];
        if (r < 0 || r >= tv.rows())
            throw std::invalid_argument("gather_rows: index " + std::to_string(r) +
                                        " out of range for " + tv.shape_str());
        std::copy(tv.data() + static_cast<std::size_t>(r) * C,
                  tv.data() + static_cast<std::size_t>(r + 1) * C,
                  out.data() + i * C);
    }
    Node n;
    n.op = Op::GatherRows;
    n.a = table.id;
    n.idx = std::move(indices);
    n.value = std::move(out);
    n.requires_grad = nodes_[table.id].requires_grad;
    return {push(std::move(n))};
}

Var Tape::reshape(Var a, std::vector<int> shape) {
    const Tensor& av = nodes_[a.id].value;
    Tensor out(shape);
    if (out.size() != av.size())
        throw std::invalid_argument("reshape: element count mismatch, " + av.shape_str() +
                                    " -> " + out.shape_str());
    std::copy(av.data(), av.data() + av.size(), out.data());
    Node n;
    n.op = Op::Reshape;
    n.a = a.id;
    n.value = std::move(out);
    n.requires_grad = nodes_[a.id].requires_grad;
    return {push(std::move(n))};
}

Var Tape::affine(Var x, Var w, Var bias) { return add(matmul(x, w), bias); }

Var Tape::sq_dist(Var a, Var b) {
    Var d = sub(a, b);
    return sum(mul(d, d));
}

void Tape::accum(int node, const Tensor& g) {
    Node& n = nodes_[node];
    if (!n.requires_grad) return;
    if (n.grad.empty()) {
        n.grad = g;
    } else {
        kernels::add(n.grad.data(), g.data(), n.grad.data(), g.size());
    }
}

Tensor& grad_buf(Tensor& grad, const Tensor& like) {
    if (grad.empty()) grad = Tensor(like.shape());
    return grad;
}

void Tape::backward(Var out) {
    if (ran_backward_) throw std::logic_error("Tape: backward() already ran");
    if (nodes_[out.id].value.size() != 1)
        throw std::invalid_argument("backward: output is not scalar, shape " +
                                    nodes_[out.id].value.shape_str());
    ran_backward_ = true;
    nodes_[out.id].grad = Tensor::scalar(1.0);

    for (int i = out.id; i >= 0; --i) {
        Node& n = nodes_[i];
        if (n.grad.empty() || !n.requires_grad || n.op == Op::Leaf) continue;
        const Tensor& g = n.grad;
        const Tensor& y = n.value;
        const int C = y.cols(), R = y.rows();

        auto accum_elemwise = [&](int parent, auto factor) {
            // d(out)/d(parent) accumulated cell by cell, folding broadcast.
            Node& pn = nodes_[parent];
            if (!pn.requires_grad) return;
            Bcast k = bcast_kind(pn.value, y);
            Tensor& pg = grad_buf(pn.grad, pn.value);
            for (int r = 0; r < R; ++r)
                for (int c = 0; c < C; ++c) {
                    std::size_t oi = static_cast<std::size_t>(r) * C + c;
                    pg[bidx(k, r, c, C)] += factor(oi) * g[oi];
                }
        };

        switch (n.op) {
            case Op::Add:
                accum_elemwise(n.a, [](std::size_t) { return 1.0; });
                accum_elemwise(n.b, [](std::size_t) { return 1.0; });
                break;
            case Op::Sub:
                accum_elemwise(n.a, [](std::size_t) { return 1.0; });
                accum_elemwise(n.b, [](std::size_t) { return -1.0; });
                break;
            case Op::Mul: {
                const Tensor& av = nodes_[n.a].value;
                const Tensor& bv = nodes_[n.b].value;
                Bcast ka = bcast_kind(av, y), kb = bcast_kind(bv, y);
                accum_elemwise(n.a, [&](std::size_t oi) {
                    return bv[bidx(kb, static_cast<int>(oi) / C, static_cast<int>(oi) % C, C)];
                });
                accum_elemwise(n.b, [&](std::size_t oi) {
                    return av[bidx(ka, static_cast<int>(oi) / C, static_cast<int>(oi) % C, C)];
                });
                break;
            }
            case Op::Div: {
                const Tensor& av = nodes_[n.a].value;
                const Tensor& bv = nodes_[n.b].value;
                Bcast ka = bcast_kind(av, y), kb = bcast_kind(bv, y);
                accum_elemwise(n.a, [&](std::size_t oi) {
                    return 1.0 / bv[bidx(kb, static_cast<int>(oi) / C, static_cast<int>(oi) % C, C)];
                });
                accum_elemwise(n.b, [&](std::size_t oi) {
                    int r = static_cast<int>(oi) / C, c = static_cast<int>(oi) % C;
                    double bval = bv[bidx(kb, r, c, C)];
                    return -av[bidx(ka, r, c, C)] / (bval * bval);
                });
                break;
            }
            case Op::Scale:
                if (nodes_[n.a].requires_grad) {
                    Tensor& pg = grad_buf(nodes_[n.a].grad, nodes_[n.a].value);
                    kernels::axpy(n.p, g.data(), pg.data(), g.size());
                }
                break;
            case Op::AddConst:
                accum(n.a, g);
                break;
            case Op::MatMul: {
                const Tensor& av = nodes_[n.a].value;
                const Tensor& bv = nodes_[n.b].value;
                if (nodes_[n.a].requires_grad) accum(n.a, linalg::matmul_nt(g, bv));
                if (nodes_[n.b].requires_grad) accum(n.b, linalg::matmul_tn(av, g));
                break;
            }
            case Op::Transpose:
                accum(n.a, linalg::transpose(g));
                break;
            case Op::Tanh: {
                Tensor pg(y.shape());
                for (std::size_t j = 0; j < y.size(); ++j) pg[j] = g[j] * (1.0 - y[j] * y[j]);
                accum(n.a, pg);
                break;
            }
            case Op::Exp: {
                Tensor pg(y.shape());
                kernels::mul(g.data(), y.data(), pg.data(), y.size());
                accum(n.a, pg);
                break;
            }
            case Op::Log: {
                const Tensor& av = nodes_[n.a].value;
                Tensor pg(y.shape());
                kernels::div(g.data(), av.data(), pg.data(), y.size());
                accum(n.a, pg);
                break;
            }
            case Op::Sqrt: {
                Tensor pg(y.shape());
                for (std::size_t j = 0; j < y.size(); ++j) pg[j] = g[j] * 0.5 / y[j];
                accum(n.a, pg);
                break;
            }
            case Op::Pow: {
                const Tensor& av = nodes_[n.a].value;
                Tensor pg(y.shape());
                for (std::size_t j = 0; j < y.size(); ++j)
                    pg[j] = g[j] * n.p * std::pow(av[j], n.p - 1.0);
                accum(n.a, pg);
                break;
            }
            case Op::ClampMin: {
                const Tensor& av = nodes_[n.a].value;
                Tensor pg(y.shape());
                for (std::size_t j = 0; j < y.size(); ++j) pg[j] = av[j] > n.p ? g[j] : 0.0;
                accum(n.a, pg);
                break;
            }
            case Op::Sum: {
                Node& pn = nodes_[n.a];
                if (pn.requires_grad) {
                    Tensor& pg = grad_buf(pn.grad, pn.value);
                    for (std::size_t j = 0; j < pg.size(); ++j) pg[j] += g[0];
                }
                break;
            }
            case Op::Mean: {
                Node& pn = nodes_[n.a];
                if (pn.requires_grad) {
                    Tensor& pg = grad_buf(pn.grad, pn.value);
                    double s = g[0] / static_cast<double>(pg.size());
                    for (std::size_t j = 0; j < pg.size(); ++j) pg[j] += s;
                }
                break;
            }
            case Op::RowSum: {
                Node& pn = nodes_[n.a];
                if (pn.requires_grad) {
                    Tensor& pg = grad_buf(pn.grad, pn.value);
                    const int pc = pn.value.cols();
                    for (int r = 0; r < pn.value.rows(); ++r)
                        for (int c = 0; c < pc; ++c)
                            pg[static_cast<std::size_t>(r) * pc + c] += g[r];
                }
                break;
            }
            case Op::ColSum: {
                Node& pn = nodes_[n.a];
                if (pn.requires_grad) {
                    Tensor& pg = grad_buf(pn.grad, pn.value);
                    const int pc = pn.value.cols();
                    for (int r = 0; r < pn.value.rows(); ++r)
                        kernels::add(pg.data() + static_cast<std::size_t>(r) * pc, g.data(),
                                     pg.data() + static_cast<std::size_t>(r) * pc, pc);
                }
                break;
            }
            case Op::ConcatRows: {
                Node& pa = nodes_[n.a];
                Node& pb = nodes_[n.b];
                if (pa.requires_grad) {
                    Tensor& pg = grad_buf(pa.grad, pa.value);
                    kernels::add(pg.data(), g.data(), pg.data(), pa.value.size());
                }
                if (pb.requires_grad) {
                    Tensor& pg = grad_buf(pb.grad, pb.value);
                    kernels::add(pg.data(), g.data() + pa.value.size(), pg.data(), pb.value.size());
                }
                break;
            }
            case Op::Reshape: {
                Node& pn = nodes_[n.a];
                if (pn.requires_grad) {
                    Tensor& pg = grad_buf(pn.grad, pn.value);
                    kernels::add(pg.data(), g.data(), pg.data(), g.size());
                }
                break;
            }
            case Op::SliceRows: {
                Node& pn = nodes_[n.a];
                if (pn.requires_grad) {
                    Tensor& pg = grad_buf(pn.grad, pn.value);
                    std::size_t off = static_cast<std::size_t>(n.p) * pn.value.cols();
                    kernels::add(pg.data() + off, g.data(), pg.data() + off, g.size());
                }
                break;
            }
            case Op::GatherRows: {
                Node& pn = nodes_[n.a];
                if (pn.requires_grad) {
                    Tensor& pg = grad_buf(pn.grad, pn.value);
                    const int pc = pn.value.cols();
                    for (std::size_t j = 0; j < n.idx.size(); ++j) {
                        double* dst = pg.data() + static_cast<std::size_t>(n.idx[j]) * pc;
                        kernels::add(dst, g.data() + j * pc, dst, pc);
                    }
                }
                break;
            }
            case Op::Leaf:
                break;
        }
    }
}

Tensor Tape::grad(Var v, bool* warned) const {
    const Node& n = nodes_[v.id];
    if (!n.requires_grad) {
        if (warned) *warned = true;
        return Tensor(n.value.shape());
    }
    if (warned) *warned = false;
    if (n.grad.empty()) return Tensor(n.value.shape());
    return n.grad;
}

double finite_diff_check(const std::function<Var(Tape&, Var)>& f,
                         const Tensor& point, double step) {
    Tensor analytic;
    {
        Tape tape;
        Var x = tape.leaf(point, true);
        Var out = f(tape, x);
        if (tape.value(out).size() != 1)
            throw std::invalid_argument("finite_diff_check: function is not scalar-valued");
        tape.backward(out);
        analytic = tape.grad(x);
    }

    auto eval = [&](const Tensor& p, std::size_t coord) {
        Tape tape;
        Var x = tape.leaf(p, false);
        double v = tape.value(f(tape, x))[0];
        if (!std::isfinite(v))
            throw std::runtime_error("finite_diff_check: non-finite evaluation at coordinate " +
                                     std::to_string(coord));
        return v;
    };

    double max_err = 0.0;
    Tensor probe = point;
    for (std::size_t i = 0; i < point.size(); ++i) {
        probe[i] = point[i] + step;
        double fp = eval(probe, i);
        probe[i] = point[i] - step;
        double fm = eval(probe, i);
        probe[i] = point[i];
        double central = (fp - fm) / (2.0 * step);
        double err = std::fabs(analytic[i] - central) / (std::fabs(analytic[i]) + 1e-8);
        if (err > max_err) max_err = err;
    }
    return max_err;
}

}  // namespace ditto::ad
