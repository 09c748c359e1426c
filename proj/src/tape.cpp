#include "tabuq/tape.hpp"

#include <atomic>
#include <cmath>

namespace tabuq {

namespace {
std::atomic<std::uint64_t> next_tape_id{1};

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    detail::require(a.same_shape(b), std::string(op) + ": shape mismatch");
}
}  // namespace

Tape::Tape() : id_(next_tape_id.fetch_add(1)) {}

const Tape::Node& Tape::resolve(Var v) const {
    detail::require(v.tape_id == id_ && v.node < nodes_.size(),
                    "Tape: variable was not recorded on this tape");
    return nodes_[v.node];
}

Var Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{id_, nodes_.size() - 1};
}

Var Tape::leaf(Matrix value) {
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(value);
    n.needs_grad = true;
    return push(std::move(n));
}

Var Tape::constant(Matrix value) {
    Node n;
    n.op = Op::Const;
    n.value = std::move(value);
    return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
    const Node& na = resolve(a);
    const Node& nb = resolve(b);
    Node n;
    n.op = Op::MatMul;
    n.a = a.node;
    n.b = b.node;
    n.value = tabuq::matmul(na.value, nb.value);
    n.needs_grad = na.needs_grad || nb.needs_grad;
    return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
    const Node& na = resolve(a);
    const Node& nb = resolve(b);
    check_same_shape(na.value, nb.value, "add");
    Node n;
    n.op = Op::Add;
    n.a = a.node;
    n.b = b.node;
    n.value = na.value;
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] += nb.value[i];
    n.needs_grad = na.needs_grad || nb.needs_grad;
    return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
    const Node& na = resolve(a);
    const Node& nb = resolve(b);
    check_same_shape(na.value, nb.value, "sub");
    Node n;
    n.op = Op::Sub;
    n.a = a.node;
    n.b = b.node;
    n.value = na.value;
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] -= nb.value[i];
    n.needs_grad = na.needs_grad || nb.needs_grad;
    return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
    const Node& na = resolve(a);
    const Node& nb = resolve(b);
    check_same_shape(na.value, nb.value, "mul");
    Node n;
    n.op = Op::Mul;
    n.a = a.node;
    n.b = b.node;
    n.value = na.value;
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] *= nb.value[i];
    n.needs_grad = na.needs_grad || nb.needs_grad;
    return push(std::move(n));
}

Var Tape::div(Var a, Var b) {
    const Node& na = resolve(a);
    const Node& nb = resolve(b);
    check_same_shape(na.value, nb.value, "div");
    Node n;
    n.op = Op::Div;
    n.a = a.node;
    n.b = b.node;
    n.value = na.value;
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] /= nb.value[i];
    n.needs_grad = na.needs_grad || nb.needs_grad;
    return push(std::move(n));
}

Var Tape::add_rowvec(Var a, Var v) {
    const Node& na = resolve(a);
    const Node& nv = resolve(v);
    detail::require(nv.value.rows() == 1 && nv.value.cols() == na.value.cols(),
                    "add_rowvec: vector must be 1 x cols");
    Node n;
    n.op = Op::AddRowVec;
    n.a = a.node;
    n.b = v.node;
    n.value = na.value;
    for (std::size_t r = 0; r < n.value.rows(); ++r) {
        double* row = n.value.row_ptr(r);
        for (std::size_t c = 0; c < n.value.cols(); ++c) row[c] += nv.value[c];
    }
    n.needs_grad = na.needs_grad || nv.needs_grad;
    return push(std::move(n));
}

Var Tape::scale(Var a, double c) {
    const Node& na = resolve(a);
    Node n;
    n.op = Op::Scale;
    n.a = a.node;
    n.c = c;
    n.value = na.value;
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] *= c;
    n.needs_grad = na.needs_grad;
    return push(std::move(n));
}

Var Tape::add_scalar(Var a, double c) {
    const Node& na = resolve(a);
    Node n;
    n.op = Op::AddScalar;
    n.a = a.node;
    n.c = c;
    n.value = na.value;
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] += c;
    n.needs_grad = na.needs_grad;
    return push(std::move(n));
}

Var Tape::relu(Var a) {
    const Node& na = resolve(a);
    Node n;
    n.op = Op::Relu;
    n.a = a.node;
    n.value = tabuq::relu(na.value);
    n.needs_grad = na.needs_grad;
    return push(std::move(n));
}

Var Tape::sigmoid(Var a) {
    const Node& na = resolve(a);
    Node n;
    n.op = Op::Sigmoid;
    n.a = a.node;
    n.value = tabuq::sigmoid(na.value);
    n.needs_grad = na.needs_grad;
    return push(std::move(n));
}

Var Tape::softplus(Var a) {
    const Node& na = resolve(a);
    Node n;
    n.op = Op::Softplus;
    n.a = a.node;
    n.value = tabuq::softplus(na.value);
    n.needs_grad = na.needs_grad;
    return push(std::move(n));
}

Var Tape::log(Var a) {
    const Node& na = resolve(a);
    Node n;
    n.op = Op::Log;
    n.a = a.node;
    n.value = na.value;
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = std::log(n.value[i]);
    n.needs_grad = na.needs_grad;
    return push(std::move(n));
}

Var Tape::square(Var a) {
    const Node& na = resolve(a);
    Node n;
    n.op = Op::Square;
    n.a = a.node;
    n.value = na.value;
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] *= n.value[i];
    n.needs_grad = na.needs_grad;
    return push(std::move(n));
}

Var Tape::logaddexp(Var a, Var b) {
    const Node& na = resolve(a);
    const Node& nb = resolve(b);
    check_same_shape(na.value, nb.value, "logaddexp");
    Node n;
    n.op = Op::LogAddExp;
    n.a = a.node;
    n.b = b.node;
    n.value = Matrix(na.value.rows(), na.value.cols());
    for (std::size_t i = 0; i < n.value.size(); ++i) {
        const double x = na.value[i], y = nb.value[i];
        const double m = x > y ? x : y;
        if (std::isinf(m) && m < 0) {
            n.value[i] = m;  // both -inf
        } else {
            n.value[i] = m + std::log1p(std::exp(-std::fabs(x - y)));
        }
    }
    n.needs_grad = na.needs_grad || nb.needs_grad;
    return push(std::move(n));
}

Var Tape::sum(Var a) {
    const Node& na = resolve(a);
    Node n;
    n.op = Op::Sum;
    n.a = a.node;
    double acc = 0.0;
    for (std::size_t i = 0; i < na.value.size(); ++i) acc += na.value[i];
    n.value = Matrix(1, 1, acc);
    n.needs_grad = na.needs_grad;
    return push(std::move(n));
}

Var Tape::bce_with_logits(Var logits, const Matrix& labels) {
    const Node& nz = resolve(logits);
    check_same_shape(nz.value, labels, "bce_with_logits");
    for (std::size_t i = 0; i < labels.size(); ++i)
        detail::require(labels[i] == 0.0 || labels[i] == 1.0,
                        "bce_with_logits: labels must be 0 or 1");
    Node n;
    n.op = Op::BceWithLogits;
    n.a = logits.node;
    n.aux = labels;
    n.value = Matrix(nz.value.rows(), nz.value.cols());
    for (std::size_t i = 0; i < n.value.size(); ++i)
        n.value[i] = softplus_scalar(nz.value[i]) - labels[i] * nz.value[i];
    n.needs_grad = nz.needs_grad;
    return push(std::move(n));
}

const Matrix& Tape::value(Var v) const { return resolve(v).value; }

double Tape::scalar(Var v) const {
    const Node& n = resolve(v);
    detail::require(n.value.rows() == 1 && n.value.cols() == 1, "scalar: node is not 1x1");
    return n.value[0];
}

void Tape::accumulate(std::size_t node, const Matrix& g) {
    Node& n = nodes_[node];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) n.grad = Matrix(n.value.rows(), n.value.cols(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
}

void Tape::backward(Var loss) {
    const Node& ln = resolve(loss);
    detail::require(ln.value.rows() == 1 && ln.value.cols() == 1,
                    "backward: loss must be a 1x1 scalar node");
    detail::require(!ran_backward_, "backward: tape already differentiated");
    ran_backward_ = true;
    accumulate(loss.node, Matrix(1, 1, 1.0));

    for (std::size_t idx = loss.node + 1; idx-- > 0;) {
        Node& n = nodes_[idx];
        if (!n.needs_grad || n.grad.size() == 0) continue;
        const Matrix& g = n.grad;
        switch (n.op) {
            case Op::Leaf:
            case Op::Const:
                break;
            case Op::MatMul: {
                const Node& na = nodes_[n.a];
                const Node& nb = nodes_[n.b];
                if (na.needs_grad) accumulate(n.a, matmul_nt(g, nb.value));
                if (nb.needs_grad) accumulate(n.b, matmul_tn(na.value, g));
                break;
            }
            case Op::Add:
                accumulate(n.a, g);
                accumulate(n.b, g);
                break;
            case Op::Sub: {
                accumulate(n.a, g);
                if (nodes_[n.b].needs_grad) {
                    Matrix neg = g;
                    for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -neg[i];
                    accumulate(n.b, neg);
                }
                break;
            }
            case Op::Mul: {
                const Node& na = nodes_[n.a];
                const Node& nb = nodes_[n.b];
                if (na.needs_grad) {
                    Matrix da = g;
                    for (std::size_t i = 0; i < da.size(); ++i) da[i] *= nb.value[i];
                    accumulate(n.a, da);
                }
                if (nb.needs_grad) {
                    Matrix db = g;
                    for (std::size_t i = 0; i < db.size(); ++i) db[i] *= na.value[i];
                    accumulate(n.b, db);
                }
                break;
            }
            case Op::Div: {
                const Node& na = nodes_[n.a];
                const Node& nb = nodes_[n.b];
                if (na.needs_grad) {
                    Matrix da = g;
                    for (std::size_t i = 0; i < da.size(); ++i) da[i] /= nb.value[i];
                    accumulate(n.a, da);
                }
                if (nb.needs_grad) {
                    Matrix db = g;
                    for (std::size_t i = 0; i < db.size(); ++i)
                        db[i] *= -n.value[i] / nb.value[i];
                    accumulate(n.b, db);
                }
                break;
            }
            case Op::AddRowVec: {
                accumulate(n.a, g);
                if (nodes_[n.b].needs_grad) {
                    Matrix dv(1, g.cols(), 0.0);
                    for (std::size_t r = 0; r < g.rows(); ++r) {
                        const double* row = g.row_ptr(r);
                        for (std::size_t c = 0; c < g.cols(); ++c) dv[c] += row[c];
                    }
                    accumulate(n.b, dv);
                }
                break;
            }
            case Op::Scale: {
                Matrix da = g;
                for (std::size_t i = 0; i < da.size(); ++i) da[i] *= n.c;
                accumulate(n.a, da);
                break;
            }
            case Op::AddScalar:
                accumulate(n.a, g);
                break;
            case Op::Relu: {
                const Node& na = nodes_[n.a];
                Matrix da = g;
                for (std::size_t i = 0; i < da.size(); ++i)
                    if (na.value[i] <= 0.0) da[i] = 0.0;
                accumulate(n.a, da);
                break;
            }
            case Op::Sigmoid: {
                Matrix da = g;
                for (std::size_t i = 0; i < da.size(); ++i) {
                    const double s = n.value[i];
                    da[i] *= s * (1.0 - s);
                }
                accumulate(n.a, da);
                break;
            }
            case Op::Softplus: {
                const Node& na = nodes_[n.a];
                Matrix da = g;
                for (std::size_t i = 0; i < da.size(); ++i)
                    da[i] *= sigmoid_scalar(na.value[i]);
                accumulate(n.a, da);
                break;
            }
            case Op::Log: {
                const Node& na = nodes_[n.a];
                Matrix da = g;
                for (std::size_t i = 0; i < da.size(); ++i) da[i] /= na.value[i];
                accumulate(n.a, da);
                break;
            }
            case Op::Square: {
                const Node& na = nodes_[n.a];
                Matrix da = g;
                for (std::size_t i = 0; i < da.size(); ++i) da[i] *= 2.0 * na.value[i];
                accumulate(n.a, da);
                break;
            }
            case Op::LogAddExp: {
                const Node& na = nodes_[n.a];
                const Node& nb = nodes_[n.b];
                if (na.needs_grad) {
                    Matrix da = g;
                    for (std::size_t i = 0; i < da.size(); ++i)
                        da[i] *= sigmoid_scalar(na.value[i] - nb.value[i]);
                    accumulate(n.a, da);
                }
                if (nb.needs_grad) {
                    Matrix db = g;
                    for (std::size_t i = 0; i < db.size(); ++i)
                        db[i] *= sigmoid_scalar(nb.value[i] - na.value[i]);
                    accumulate(n.b, db);
                }
                break;
            }
            case Op::Sum: {
                const Node& na = nodes_[n.a];
                accumulate(n.a, Matrix(na.value.rows(), na.value.cols(), g[0]));
                break;
            }
            case Op::BceWithLogits: {
                const Node& nz = nodes_[n.a];
                Matrix dz = g;
                for (std::size_t i = 0; i < dz.size(); ++i)
                    dz[i] *= sigmoid_scalar(nz.value[i]) - n.aux[i];
                accumulate(n.a, dz);
                break;
            }
        }
    }

    // A recorded parameter that never influenced the loss has a zero gradient.
    for (Node& n : nodes_) {
        if (n.needs_grad && n.grad.size() == 0)
            n.grad = Matrix(n.value.rows(), n.value.cols(), 0.0);
    }
}

const Matrix& Tape::grad(Var v) const {
    const Node& n = resolve(v);
    detail::require(ran_backward_, "grad: backward() has not been run");
    detail::require(n.needs_grad, "grad: node does not carry a gradient");
    return n.grad;
}

}  // namespace tabuq
