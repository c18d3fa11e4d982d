#include "sag/tape.hpp"

#include <cmath>

#include "sag/errors.hpp"

namespace sag {

namespace {

void check_finite(const Tensor& t, const char* op) {
    if (!t.all_finite()) {
        throw NonFiniteValue(std::string(op) + " produced a non-finite value");
    }
}

bool broadcast_ok(const Tensor& a, const Tensor& b) {
    return a.same_shape(b) || a.is_scalar() || b.is_scalar();
}

/// Shape of a broadcast elementwise result (the non-scalar operand wins).
const Tensor& broadcast_shape(const Tensor& a, const Tensor& b) {
    return a.is_scalar() ? b : a;
}

double at_broadcast(const Tensor& t, std::size_t flat) {
    return t.is_scalar() ? t[0] : t[flat];
}

}  // namespace

Var Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size() - 1);
}

void Tape::check_open(const char* op) const {
    if (consumed_) {
        throw Error(std::string(op) +
                    ": tape already consumed by backward(); call reset()");
    }
}

void Tape::check_var(Var v, const char* op) const {
    if (v < 0 || static_cast<std::size_t>(v) >= nodes_.size()) {
        throw Error(std::string(op) + ": invalid tape handle");
    }
}

Var Tape::constant(Tensor value) {
    check_open("constant");
    Node n;
    n.op = Op::kLeaf;
    n.value = std::move(value);
    n.needs_grad = false;
    return push(std::move(n));
}

Var Tape::param(Parameter& p) {
    check_open("param");
    for (const auto& [bound, var] : bound_params_) {
        if (bound == &p) return var;
    }
    Node n;
    n.op = Op::kLeaf;
    n.value = p.value;
    n.bound = &p;
    n.needs_grad = true;
    Var v = push(std::move(n));
    bound_params_.emplace_back(&p, v);
    return v;
}

Var Tape::matmul(Var a, Var b) {
    check_open("matmul");
    check_var(a, "matmul");
    check_var(b, "matmul");
    Node n;
    n.op = Op::kMatMul;
    n.lhs = a;
    n.rhs = b;
    n.value = sag::matmul(node(a).value, node(b).value);
    check_finite(n.value, "matmul");
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
    check_open("add");
    check_var(a, "add");
    check_var(b, "add");
    const Tensor& va = node(a).value;
    const Tensor& vb = node(b).value;
    if (!broadcast_ok(va, vb)) {
        throw ShapeMismatch("add: " + va.shape_str() + " vs " + vb.shape_str());
    }
    Node n;
    n.op = Op::kAdd;
    n.lhs = a;
    n.rhs = b;
    const Tensor& shape = broadcast_shape(va, vb);
    n.value = Tensor(shape.rows(), shape.cols());
    for (std::size_t i = 0; i < n.value.size(); ++i) {
        n.value[i] = at_broadcast(va, i) + at_broadcast(vb, i);
    }
    check_finite(n.value, "add");
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    return push(std::move(n));
}

Var Tape::subtract(Var a, Var b) {
    check_open("subtract");
    check_var(a, "subtract");
    check_var(b, "subtract");
    const Tensor& va = node(a).value;
    const Tensor& vb = node(b).value;
    if (!broadcast_ok(va, vb)) {
        throw ShapeMismatch("subtract: " + va.shape_str() + " vs " +
                            vb.shape_str());
    }
    Node n;
    n.op = Op::kSub;
    n.lhs = a;
    n.rhs = b;
    const Tensor& shape = broadcast_shape(va, vb);
    n.value = Tensor(shape.rows(), shape.cols());
    for (std::size_t i = 0; i < n.value.size(); ++i) {
        n.value[i] = at_broadcast(va, i) - at_broadcast(vb, i);
    }
    check_finite(n.value, "subtract");
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    return push(std::move(n));
}

Var Tape::elementwise_mul(Var a, Var b) {
    check_open("elementwise_mul");
    check_var(a, "elementwise_mul");
    check_var(b, "elementwise_mul");
    const Tensor& va = node(a).value;
    const Tensor& vb = node(b).value;
    if (!broadcast_ok(va, vb)) {
        throw ShapeMismatch("elementwise_mul: " + va.shape_str() + " vs " +
                            vb.shape_str());
    }
    Node n;
    n.op = Op::kMul;
    n.lhs = a;
    n.rhs = b;
    const Tensor& shape = broadcast_shape(va, vb);
    n.value = Tensor(shape.rows(), shape.cols());
    for (std::size_t i = 0; i < n.value.size(); ++i) {
        n.value[i] = at_broadcast(va, i) * at_broadcast(vb, i);
    }
    check_finite(n.value, "elementwise_mul");
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    return push(std::move(n));
}

Var Tape::tanh(Var a) {
    check_open("tanh");
    check_var(a, "tanh");
    Node n;
    n.op = Op::kTanh;
    n.lhs = a;
    n.value = node(a).value;
    for (std::size_t i = 0; i < n.value.size(); ++i) {
        n.value[i] = std::tanh(n.value[i]);
    }
    check_finite(n.value, "tanh");
    n.needs_grad = node(a).needs_grad;
    return push(std::move(n));
}

Var Tape::sigmoid(Var a) {
    check_open("sigmoid");
    check_var(a, "sigmoid");
    Node n;
    n.op = Op::kSigmoid;
    n.lhs = a;
    n.value = node(a).value;
    for (std::size_t i = 0; i < n.value.size(); ++i) {
        n.value[i] = 1.0 / (1.0 + std::exp(-n.value[i]));
    }
    check_finite(n.value, "sigmoid");
    n.needs_grad = node(a).needs_grad;
    return push(std::move(n));
}

Var Tape::concat_rows(Var top, Var bottom) {
    check_open("concat_rows");
    check_var(top, "concat_rows");
    check_var(bottom, "concat_rows");
    const Tensor& vt = node(top).value;
    const Tensor& vb = node(bottom).value;
    if (vt.cols() != vb.cols()) {
        throw ShapeMismatch("concat_rows: " + vt.shape_str() + " over " +
                            vb.shape_str());
    }
    Node n;
    n.op = Op::kConcatRows;
    n.lhs = top;
    n.rhs = bottom;
    n.value = Tensor(vt.rows() + vb.rows(), vt.cols());
    for (std::size_t i = 0; i < vt.size(); ++i) n.value[i] = vt[i];
    for (std::size_t i = 0; i < vb.size(); ++i) n.value[vt.size() + i] = vb[i];
    n.needs_grad = node(top).needs_grad || node(bottom).needs_grad;
    return push(std::move(n));
}

Var Tape::sum(Var a) {
    check_open("sum");
    check_var(a, "sum");
    Node n;
    n.op = Op::kSum;
    n.lhs = a;
    double total = 0.0;
    for (double v : node(a).value.data()) total += v;
    n.value = Tensor::scalar(total);
    check_finite(n.value, "sum");
    n.needs_grad = node(a).needs_grad;
    return push(std::move(n));
}

Var Tape::mean(Var a) {
    check_open("mean");
    check_var(a, "mean");
    const Tensor& va = node(a).value;
    if (va.empty()) throw Error("mean: empty tensor");
    Node n;
    n.op = Op::kMean;
    n.lhs = a;
    double total = 0.0;
    for (double v : va.data()) total += v;
    n.value = Tensor::scalar(total / static_cast<double>(va.size()));
    check_finite(n.value, "mean");
    n.needs_grad = node(a).needs_grad;
    return push(std::move(n));
}

Var Tape::square(Var a) {
    check_open("square");
    check_var(a, "square");
    Node n;
    n.op = Op::kSquare;
    n.lhs = a;
    n.value = node(a).value;
    for (std::size_t i = 0; i < n.value.size(); ++i) {
        n.value[i] *= n.value[i];
    }
    check_finite(n.value, "square");
    n.needs_grad = node(a).needs_grad;
    return push(std::move(n));
}

void Tape::accumulate(Var target, const Tensor& delta) {
    Node& t = node(target);
    if (!t.needs_grad) return;
    check_finite(delta, "backward");
    if (t.adjoint.empty()) {
        t.adjoint = Tensor(t.value.rows(), t.value.cols());
    }
    if (t.value.same_shape(delta)) {
        for (std::size_t i = 0; i < delta.size(); ++i) t.adjoint[i] += delta[i];
    } else if (t.value.is_scalar()) {
        // Broadcast in the forward pass reduces to a sum in the reverse pass.
        double total = 0.0;
        for (double v : delta.data()) total += v;
        t.adjoint[0] += total;
    } else {
        throw ShapeMismatch("backward: adjoint " + delta.shape_str() +
                            " for node of shape " + t.value.shape_str());
    }
}

void Tape::backward(Var loss, bool strict) {
    check_open("backward");
    check_var(loss, "backward");
    if (!node(loss).value.is_scalar()) {
        throw NotScalar("backward: loss has shape " +
                        node(loss).value.shape_str());
    }
    consumed_ = true;
    node(loss).adjoint = Tensor::scalar(1.0);

    for (Var v = loss; v >= 0; --v) {
        Node& n = node(v);
        if (!n.needs_grad || n.adjoint.empty()) continue;
        const Tensor& g = n.adjoint;
        switch (n.op) {
        case Op::kLeaf:
            break;
        case Op::kMatMul: {
            const Tensor& va = node(n.lhs).value;
            const Tensor& vb = node(n.rhs).value;
            const std::size_t m = va.rows(), k = va.cols(), cols = vb.cols();
            if (node(n.lhs).needs_grad) {
                Tensor da(m, k);
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t kk = 0; kk < k; ++kk) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < cols; ++j) {
                            acc += g(i, j) * vb(kk, j);
                        }
                        da(i, kk) = acc;
                    }
                }
                accumulate(n.lhs, da);
            }
            if (node(n.rhs).needs_grad) {
                Tensor db(k, cols);
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t kk = 0; kk < k; ++kk) {
                        const double aik = va(i, kk);
                        if (aik == 0.0) continue;
                        for (std::size_t j = 0; j < cols; ++j) {
                            db(kk, j) += aik * g(i, j);
                        }
                    }
                }
                accumulate(n.rhs, db);
            }
            break;
        }
        case Op::kAdd:
            accumulate(n.lhs, g);
            accumulate(n.rhs, g);
            break;
        case Op::kSub: {
            accumulate(n.lhs, g);
            if (node(n.rhs).needs_grad) {
                Tensor neg = g;
                for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -neg[i];
                accumulate(n.rhs, neg);
            }
            break;
        }
        case Op::kMul: {
            const Tensor& va = node(n.lhs).value;
            const Tensor& vb = node(n.rhs).value;
            if (node(n.lhs).needs_grad) {
                Tensor da(g.rows(), g.cols());
                for (std::size_t i = 0; i < da.size(); ++i) {
                    da[i] = g[i] * at_broadcast(vb, i);
                }
                accumulate(n.lhs, da);
            }
            if (node(n.rhs).needs_grad) {
                Tensor db(g.rows(), g.cols());
                for (std::size_t i = 0; i < db.size(); ++i) {
                    db[i] = g[i] * at_broadcast(va, i);
                }
                accumulate(n.rhs, db);
            }
            break;
        }
        case Op::kTanh: {
            Tensor d(g.rows(), g.cols());
            const double skew = 1.0 + backward_skew_;
            for (std::size_t i = 0; i < d.size(); ++i) {
                const double y = n.value[i];
                d[i] = g[i] * (1.0 - y * y) * skew;
            }
            accumulate(n.lhs, d);
            break;
        }
        case Op::kSigmoid: {
            Tensor d(g.rows(), g.cols());
            for (std::size_t i = 0; i < d.size(); ++i) {
                const double y = n.value[i];
                d[i] = g[i] * y * (1.0 - y);
            }
            accumulate(n.lhs, d);
            break;
        }
        case Op::kConcatRows: {
            const Tensor& vt = node(n.lhs).value;
            const Tensor& vb = node(n.rhs).value;
            if (node(n.lhs).needs_grad) {
                Tensor dt(vt.rows(), vt.cols());
                for (std::size_t i = 0; i < dt.size(); ++i) dt[i] = g[i];
                accumulate(n.lhs, dt);
            }
            if (node(n.rhs).needs_grad) {
                Tensor db(vb.rows(), vb.cols());
                for (std::size_t i = 0; i < db.size(); ++i) {
                    db[i] = g[vt.size() + i];
                }
                accumulate(n.rhs, db);
            }
            break;
        }
        case Op::kSum: {
            const Tensor& vi = node(n.lhs).value;
            Tensor d(vi.rows(), vi.cols(), g[0]);
            accumulate(n.lhs, d);
            break;
        }
        case Op::kMean: {
            const Tensor& vi = node(n.lhs).value;
            Tensor d(vi.rows(), vi.cols(),
                     g[0] / static_cast<double>(vi.size()));
            accumulate(n.lhs, d);
            break;
        }
        case Op::kSquare: {
            const Tensor& vi = node(n.lhs).value;
            Tensor d(g.rows(), g.cols());
            for (std::size_t i = 0; i < d.size(); ++i) {
                d[i] = g[i] * 2.0 * vi[i];
            }
            accumulate(n.lhs, d);
            break;
        }
        }
    }

    for (const auto& [p, v] : bound_params_) {
        const Tensor& adj = node(v).adjoint;
        if (adj.empty()) {
            if (strict) {
                throw DisconnectedParameter(
                    "parameter '" + p->name + "' does not influence the loss");
            }
            continue;
        }
        for (std::size_t i = 0; i < adj.size(); ++i) p->grad[i] += adj[i];
    }
}

void Tape::reset() {
    nodes_.clear();
    bound_params_.clear();
    consumed_ = false;
}

}  // namespace sag
