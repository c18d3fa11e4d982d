#ifndef SAG_TAPE_HPP
#define SAG_TAPE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "sag/tensor.hpp"

namespace sag {

/// Handle to a node on the tape.  Kept small so expression code stays cheap.
using Var = std::int32_t;
inline constexpr Var kNoVar = -1;

/**
 * A named trainable tensor with an accumulated gradient.
 *
 * Parameters live outside the tape and survive across recording episodes;
 * backward() adds into grad so shared use across time steps accumulates.
 */
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter() = default;
    Parameter(std::string n, Tensor v)
        : name(std::move(n)), value(std::move(v)),
          grad(value.rows(), value.cols()) {}

    void zero_grad() { grad.fill(0.0); }
};

/**
 * Reverse-mode differentiation tape.
 *
 * Recording builds a linear program of primitive ops; backward() walks it
 * once in reverse, pushing adjoints into each node's inputs.  Because nodes
 * are appended in evaluation order, a reverse index sweep is a valid
 * topological order and no graph search is needed.
 *
 * Broadcasting is deliberately minimal: add, subtract and elementwise_mul
 * accept one 1x1 operand against any shape; everything else wants exact
 * shapes.  matmul enforces the usual inner-dimension rule.
 */
class Tape {
public:
    // ---- leaves -----------------------------------------------------------

    /// Constant input; no gradient flows into it.
    Var constant(Tensor value);

    /// Bind a parameter.  One leaf per parameter per tape; repeated calls
    /// return the same node so time-shared weights accumulate gradient.
    Var param(Parameter& p);

    // ---- recorded primitives ---------------------------------------------

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var subtract(Var a, Var b);
    Var elementwise_mul(Var a, Var b);
    Var tanh(Var a);
    Var sigmoid(Var a);
    /// Stack two blocks vertically; column counts must agree.
    Var concat_rows(Var top, Var bottom);
    Var sum(Var a);
    Var mean(Var a);
    Var square(Var a);

    // ---- inspection -------------------------------------------------------

    const Tensor& value(Var v) const { return node(v).value; }
    double scalar_value(Var v) const { return node(v).value.scalar_value(); }
    std::size_t node_count() const { return nodes_.size(); }

    // ---- reverse pass -----------------------------------------------------

    /**
     * Seed d(loss)/d(loss) = 1 and sweep the tape in reverse, adding each
     * parameter's adjoint into Parameter::grad.  `loss` must be 1x1.
     *
     * With strict = true, a bound parameter whose adjoint never materialized
     * (it cannot influence the loss) raises DisconnectedParameter.
     *
     * The tape is single-shot: after backward() it must be reset() before
     * recording again.
     */
    void backward(Var loss, bool strict = false);

    /// Drop all nodes and parameter bindings; capacity is kept.
    void reset();

    /**
     * Test hook: scale the tanh backward rule by (1 + f).  Lets tests prove
     * that the finite-difference check actually catches a wrong derivative.
     * Never set outside tests.
     */
    void set_test_backward_skew(double f) { backward_skew_ = f; }

private:
    enum class Op : std::uint8_t {
        kLeaf, kMatMul, kAdd, kSub, kMul, kTanh, kSigmoid,
        kConcatRows, kSum, kMean, kSquare,
    };

    struct Node {
        Op op = Op::kLeaf;
        Var lhs = kNoVar;
        Var rhs = kNoVar;
        Tensor value;
        Tensor adjoint;            // empty until backward touches the node
        Parameter* bound = nullptr;
        bool needs_grad = false;
    };

    Node& node(Var v) { return nodes_[static_cast<std::size_t>(v)]; }
    const Node& node(Var v) const { return nodes_[static_cast<std::size_t>(v)]; }

    Var push(Node n);
    void check_open(const char* op) const;
    void check_var(Var v, const char* op) const;

    /// adjoint(target) += delta, honoring scalar-broadcast reduction.
    void accumulate(Var target, const Tensor& delta);

    std::vector<Node> nodes_;
    std::vector<std::pair<Parameter*, Var>> bound_params_;
    bool consumed_ = false;
    double backward_skew_ = 0.0;
};

}  // namespace sag

#endif  // SAG_TAPE_HPP
