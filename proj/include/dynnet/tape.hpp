#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dynnet/errors.hpp"

namespace dynnet {

// Row-major dense array. Scalars are {1,1}, vectors of length n are {n,1}.
struct Shape {
    int rows = 0;
    int cols = 1;
    int size() const { return rows * cols; }
    bool operator==(const Shape&) const = default;
    bool is_scalar() const { return rows == 1 && cols == 1; }
    bool is_vector() const { return cols == 1; }
};

using NodeId = std::int32_t;

// Reverse-mode tape over dense 64-bit arrays. Nodes live in an append-only
// arena; their append order is the topological order used by backward().
// One tape per forward/backward pair: a second backward() throws TapeReused.
// Gradients accumulate additively across fan-out.
class Tape {
  public:
    Tape() = default;

    // ---- leaves ----------------------------------------------------------
    NodeId parameter(std::span<const double> values, Shape shape);
    NodeId parameter(std::span<const double> values);  // column vector
    NodeId parameter(std::initializer_list<double> values) {
        return parameter(std::span<const double>(values.begin(), values.size()));
    }
    NodeId parameter(std::initializer_list<double> values, Shape shape) {
        return parameter(std::span<const double>(values.begin(), values.size()), shape);
    }
    NodeId scalar_parameter(double v) { return parameter({&v, 1}, Shape{1, 1}); }

    NodeId constant(std::span<const double> values, Shape shape);
    NodeId constant(std::span<const double> values);
    NodeId constant(std::initializer_list<double> values) {
        return constant(std::span<const double>(values.begin(), values.size()));
    }
    NodeId constant(std::initializer_list<double> values, Shape shape) {
        return constant(std::span<const double>(values.begin(), values.size()), shape);
    }
    NodeId scalar_constant(double v) { return constant({&v, 1}, Shape{1, 1}); }

    // ---- elementwise ops (same shape, or one side scalar) ----------------
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);

    // a*x + b, elementwise with compile-time constants
    NodeId axpb(NodeId x, double a, double b);
    NodeId scale(NodeId x, double c) { return axpb(x, c, 0.0); }
    // x + c*y (the Euler update pattern); shapes must match exactly
    NodeId add_scaled(NodeId x, NodeId y, double c);

    // ---- structured ops ---------------------------------------------------
    NodeId affine(NodeId w, NodeId b, NodeId x);  // w:{m,n} b:{m} x:{n} -> {m}
    NodeId layer_norm(NodeId x, NodeId gain, NodeId bias, double eps);
    NodeId silu(NodeId x);
    NodeId tanh(NodeId x);
    NodeId sum(NodeId x);                       // -> scalar
    NodeId slice(NodeId x, int start, int len);  // vectors only
    NodeId concat(NodeId a, NodeId b);           // vectors only
    NodeId reshape(NodeId x, Shape shape);
    NodeId mse_loss(NodeId pred, std::span<const double> target);

    // ---- access -----------------------------------------------------------
    std::span<const double> value(NodeId id) const;
    std::span<const double> grad(NodeId id) const;  // valid after backward()
    double scalar_value(NodeId id) const { return value(id)[0]; }
    Shape shape(NodeId id) const { return nodes_[id].shape; }
    bool requires_grad(NodeId id) const { return nodes_[id].requires_grad; }
    std::size_t node_count() const { return nodes_.size(); }
    bool all_finite(NodeId id) const;

    // ---- backward ----------------------------------------------------------
    void backward(NodeId loss);
    bool backward_done() const { return backward_done_; }

    void clear();

  private:
    enum class Op : std::uint8_t {
        Leaf,
        Add,
        Sub,
        Mul,
        Axpb,
        AddScaled,
        Affine,
        LayerNorm,
        Silu,
        Tanh,
        Sum,
        Slice,
        Concat,
        Reshape,
        MseLoss,
    };

    struct Node {
        Shape shape;
        Op op = Op::Leaf;
        NodeId a = -1, b = -1, c = -1;
        std::uint32_t offset = 0;      // into values_/grads_
        std::uint32_t aux_offset = 0;  // into aux_ (op-specific stash)
        double p0 = 0.0, p1 = 0.0;     // op-specific constants
        bool requires_grad = false;
    };

    NodeId push(Shape shape, Op op, NodeId a, NodeId b, NodeId c, double p0, double p1,
                bool requires_grad);
    std::span<double> value_mut(NodeId id);
    std::span<double> grad_mut(NodeId id);
    NodeId binary_elementwise(Op op, NodeId a, NodeId b);
    void check_node(NodeId id) const;

    std::vector<Node> nodes_;
    std::vector<double> values_;
    std::vector<double> grads_;
    std::vector<double> aux_;
    bool backward_done_ = false;
};

// Central-difference gradient oracle. `build` writes the loss graph for a
// given flat parameter node; the analytic gradient comes from one tape
// backward and is compared per coordinate against (f(t+h e_i) - f(t-h e_i)) / 2h.
// Returns |analytic - fd| / max(1, |analytic|) per coordinate.
using LossBuilder = std::function<NodeId(Tape&, NodeId theta)>;

std::vector<double> finite_difference_errors(const LossBuilder& build,
                                             std::span<const double> theta0, double h);
double finite_difference_check(const LossBuilder& build, std::span<const double> theta0,
                               double h);

}  // namespace dynnet
