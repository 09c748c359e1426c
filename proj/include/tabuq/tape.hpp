#pragma once

#include <cstdint>
#include <vector>

#include "tabuq/matrix.hpp"

namespace tabuq {

// Handle to a recorded node. Carries the owning tape's serial number so a
// handle from a different tape is rejected instead of silently misread.
struct Var {
    std::uint64_t tape_id = 0;
    std::size_t node = static_cast<std::size_t>(-1);
};

// Reverse-mode gradient tape over Matrix-valued primitives.
//
// The op set is small on purpose: a fixed two-hidden-layer architecture plus
// the reparameterized KL term needs nothing more. The contract is behavioral,
// not structural: the gradient of any recorded scalar matches central finite
// differences on every parameter.
class Tape {
public:
    Tape();

    // Parameter node: gradients are tracked and queryable.
    Var leaf(Matrix value);
    // Data/noise node: participates in values, contributes no gradient.
    Var constant(Matrix value);

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);
    // v is 1 x cols, added to every row of a.
    Var add_rowvec(Var a, Var v);
    Var scale(Var a, double c);
    Var add_scalar(Var a, double c);
    Var relu(Var a);
    Var sigmoid(Var a);
    Var softplus(Var a);
    Var log(Var a);
    Var square(Var a);
    // Elementwise log(exp(a) + exp(b)), stable, tolerates -inf entries.
    Var logaddexp(Var a, Var b);
    // Sum of all entries as a 1x1 node.
    Var sum(Var a);
    // Elementwise binary cross-entropy of sigmoid(logits) against labels
    // in {0,1}: softplus(z) - y*z. Stable for any finite logit.
    Var bce_with_logits(Var logits, const Matrix& labels);

    const Matrix& value(Var v) const;
    double scalar(Var v) const;

    // Reverse accumulation from a 1x1 loss node. May be called once per tape.
    void backward(Var loss);
    // Gradient of the last backward() target w.r.t. a recorded node.
    // Rejects handles from other tapes and nodes without gradients.
    const Matrix& grad(Var v) const;

    std::size_t node_count() const { return nodes_.size(); }

private:
    enum class Op {
        Leaf,
        Const,
        MatMul,
        Add,
        Sub,
        Mul,
        Div,
        AddRowVec,
        Scale,
        AddScalar,
        Relu,
        Sigmoid,
        Softplus,
        Log,
        Square,
        LogAddExp,
        Sum,
        BceWithLogits,
    };

    struct Node {
        Op op;
        std::size_t a = 0;
        std::size_t b = 0;
        double c = 0.0;
        Matrix value;
        Matrix aux;   // labels for BceWithLogits
        Matrix grad;  // allocated during backward for nodes that need it
        bool needs_grad = false;
    };

    const Node& resolve(Var v) const;
    Var push(Node n);
    void accumulate(std::size_t node, const Matrix& g);

    std::vector<Node> nodes_;
    std::uint64_t id_;
    bool ran_backward_ = false;
};

}  // namespace tabuq
