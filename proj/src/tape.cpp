#include "dynnet/tape.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

namespace dynnet {

namespace {

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

NodeId Tape::push(Shape shape, Op op, NodeId a, NodeId b, NodeId c, double p0, double p1,
                  bool requires_grad) {
    Node n;
    n.shape = shape;
    n.op = op;
    n.a = a;
    n.b = b;
    n.c = c;
    n.p0 = p0;
    n.p1 = p1;
    n.offset = static_cast<std::uint32_t>(values_.size());
    n.requires_grad = requires_grad;
    values_.resize(values_.size() + static_cast<std::size_t>(shape.size()), 0.0);
    nodes_.push_back(n);
    return static_cast<NodeId>(nodes_.size() - 1);
}

std::span<double> Tape::value_mut(NodeId id) {
    const Node& n = nodes_[id];
    return {values_.data() + n.offset, static_cast<std::size_t>(n.shape.size())};
}

std::span<const double> Tape::value(NodeId id) const {
    check_node(id);
    const Node& n = nodes_[id];
    return {values_.data() + n.offset, static_cast<std::size_t>(n.shape.size())};
}

std::span<double> Tape::grad_mut(NodeId id) {
    const Node& n = nodes_[id];
    return {grads_.data() + n.offset, static_cast<std::size_t>(n.shape.size())};
}

std::span<const double> Tape::grad(NodeId id) const {
    check_node(id);
    if (!backward_done_) {
        throw Error("gradient requested before backward()");
    }
    const Node& n = nodes_[id];
    return {grads_.data() + n.offset, static_cast<std::size_t>(n.shape.size())};
}

void Tape::check_node(NodeId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
        throw Error("invalid node id");
    }
}

bool Tape::all_finite(NodeId id) const {
    for (double v : value(id)) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

NodeId Tape::parameter(std::span<const double> values, Shape shape) {
    if (static_cast<int>(values.size()) != shape.size() || shape.size() < 1) {
        throw ShapeError("parameter: value count does not match shape");
    }
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw NonFiniteInput("parameter: non-finite entry");
        }
    }
    NodeId id = push(shape, Op::Leaf, -1, -1, -1, 0.0, 0.0, true);
    std::copy(values.begin(), values.end(), value_mut(id).begin());
    return id;
}

NodeId Tape::parameter(std::span<const double> values) {
    return parameter(values, Shape{static_cast<int>(values.size()), 1});
}

NodeId Tape::constant(std::span<const double> values, Shape shape) {
    if (static_cast<int>(values.size()) != shape.size() || shape.size() < 1) {
        throw ShapeError("constant: value count does not match shape");
    }
    NodeId id = push(shape, Op::Leaf, -1, -1, -1, 0.0, 0.0, false);
    std::copy(values.begin(), values.end(), value_mut(id).begin());
    return id;
}

NodeId Tape::constant(std::span<const double> values) {
    return constant(values, Shape{static_cast<int>(values.size()), 1});
}

NodeId Tape::binary_elementwise(Op op, NodeId a, NodeId b) {
    check_node(a);
    check_node(b);
    const Shape sa = nodes_[a].shape;
    const Shape sb = nodes_[b].shape;
    Shape out;
    if (sa == sb) {
        out = sa;
    } else if (sa.is_scalar()) {
        out = sb;
    } else if (sb.is_scalar()) {
        out = sa;
    } else {
        throw ShapeError("elementwise op: shapes differ and neither is scalar");
    }
    const bool rg = nodes_[a].requires_grad || nodes_[b].requires_grad;
    NodeId id = push(out, op, a, b, -1, 0.0, 0.0, rg);
    auto va = value(a);
    auto vb = value(b);
    auto vo = value_mut(id);
    const int n = out.size();
    for (int i = 0; i < n; ++i) {
        const double x = sa.is_scalar() ? va[0] : va[i];
        const double y = sb.is_scalar() ? vb[0] : vb[i];
        switch (op) {
            case Op::Add: vo[i] = x + y; break;
            case Op::Sub: vo[i] = x - y; break;
            case Op::Mul: vo[i] = x * y; break;
            default: assert(false);
        }
    }
    return id;
}

NodeId Tape::add(NodeId a, NodeId b) { return binary_elementwise(Op::Add, a, b); }
NodeId Tape::sub(NodeId a, NodeId b) { return binary_elementwise(Op::Sub, a, b); }
NodeId Tape::mul(NodeId a, NodeId b) { return binary_elementwise(Op::Mul, a, b); }

NodeId Tape::axpb(NodeId x, double a, double b) {
    check_node(x);
    NodeId id = push(nodes_[x].shape, Op::Axpb, x, -1, -1, a, b, nodes_[x].requires_grad);
    auto vx = value(x);
    auto vo = value_mut(id);
    for (std::size_t i = 0; i < vx.size(); ++i) vo[i] = a * vx[i] + b;
    return id;
}

NodeId Tape::add_scaled(NodeId x, NodeId y, double c) {
    check_node(x);
    check_node(y);
    if (!(nodes_[x].shape == nodes_[y].shape)) {
        throw ShapeError("add_scaled: shapes must match");
    }
    const bool rg = nodes_[x].requires_grad || nodes_[y].requires_grad;
    NodeId id = push(nodes_[x].shape, Op::AddScaled, x, y, -1, c, 0.0, rg);
    auto vx = value(x);
    auto vy = value(y);
    auto vo = value_mut(id);
    for (std::size_t i = 0; i < vx.size(); ++i) vo[i] = vx[i] + c * vy[i];
    return id;
}

NodeId Tape::affine(NodeId w, NodeId b, NodeId x) {
    check_node(w);
    check_node(b);
    check_node(x);
    const Shape sw = nodes_[w].shape;
    const Shape sb = nodes_[b].shape;
    const Shape sx = nodes_[x].shape;
    if (!sb.is_vector() || !sx.is_vector() || sw.rows != sb.rows || sw.cols != sx.rows) {
        throw ShapeError("affine: shapes do not conform");
    }
    const int m = sw.rows;
    const int n = sw.cols;
    const bool rg =
        nodes_[w].requires_grad || nodes_[b].requires_grad || nodes_[x].requires_grad;
    NodeId id = push(Shape{m, 1}, Op::Affine, w, b, x, 0.0, 0.0, rg);
    auto vw = value(w);
    auto vb = value(b);
    auto vx = value(x);
    auto vo = value_mut(id);
    for (int i = 0; i < m; ++i) {
        double acc = vb[i];
        const double* row = vw.data() + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) acc += row[j] * vx[j];
        vo[i] = acc;
    }
    return id;
}

NodeId Tape::layer_norm(NodeId x, NodeId gain, NodeId bias, double eps) {
    check_node(x);
    check_node(gain);
    check_node(bias);
    const Shape sx = nodes_[x].shape;
    if (!sx.is_vector() || !(nodes_[gain].shape == sx) || !(nodes_[bias].shape == sx)) {
        throw ShapeError("layer_norm: x, gain, bias must be vectors of one length");
    }
    if (eps <= 0.0) {
        throw Error("layer_norm: eps must be positive");
    }
    const bool rg = nodes_[x].requires_grad || nodes_[gain].requires_grad ||
                    nodes_[bias].requires_grad;
    NodeId id = push(sx, Op::LayerNorm, x, gain, bias, eps, 0.0, rg);
    auto vx = value(x);
    auto vg = value(gain);
    auto vb = value(bias);
    auto vo = value_mut(id);
    const int d = sx.rows;
    double mu = 0.0;
    for (int i = 0; i < d; ++i) mu += vx[i];
    mu /= d;
    double var = 0.0;  // population variance
    for (int i = 0; i < d; ++i) var += (vx[i] - mu) * (vx[i] - mu);
    var /= d;
    const double inv = 1.0 / std::sqrt(var + eps);
    // stash mu and inv for backward
    nodes_[id].aux_offset = static_cast<std::uint32_t>(aux_.size());
    aux_.push_back(mu);
    aux_.push_back(inv);
    for (int i = 0; i < d; ++i) vo[i] = vg[i] * (vx[i] - mu) * inv + vb[i];
    return id;
}

NodeId Tape::silu(NodeId x) {
    check_node(x);
    NodeId id = push(nodes_[x].shape, Op::Silu, x, -1, -1, 0.0, 0.0, nodes_[x].requires_grad);
    auto vx = value(x);
    auto vo = value_mut(id);
    for (std::size_t i = 0; i < vx.size(); ++i) vo[i] = vx[i] * sigmoid(vx[i]);
    return id;
}

NodeId Tape::tanh(NodeId x) {
    check_node(x);
    NodeId id = push(nodes_[x].shape, Op::Tanh, x, -1, -1, 0.0, 0.0, nodes_[x].requires_grad);
    auto vx = value(x);
    auto vo = value_mut(id);
    for (std::size_t i = 0; i < vx.size(); ++i) vo[i] = std::tanh(vx[i]);
    return id;
}

NodeId Tape::sum(NodeId x) {
    check_node(x);
    NodeId id = push(Shape{1, 1}, Op::Sum, x, -1, -1, 0.0, 0.0, nodes_[x].requires_grad);
    double acc = 0.0;
    for (double v : value(x)) acc += v;
    value_mut(id)[0] = acc;
    return id;
}

NodeId Tape::slice(NodeId x, int start, int len) {
    check_node(x);
    const Shape sx = nodes_[x].shape;
    if (!sx.is_vector()) {
        throw ShapeError("slice: vector input required");
    }
    if (start < 0 || len < 1 || start + len > sx.rows) {
        throw ShapeError("slice: range out of bounds");
    }
    NodeId id = push(Shape{len, 1}, Op::Slice, x, -1, -1, static_cast<double>(start), 0.0,
                     nodes_[x].requires_grad);
    auto vx = value(x);
    auto vo = value_mut(id);
    for (int i = 0; i < len; ++i) vo[i] = vx[start + i];
    return id;
}

NodeId Tape::concat(NodeId a, NodeId b) {
    check_node(a);
    check_node(b);
    const Shape sa = nodes_[a].shape;
    const Shape sb = nodes_[b].shape;
    if (!sa.is_vector() || !sb.is_vector()) {
        throw ShapeError("concat: vector inputs required");
    }
    const bool rg = nodes_[a].requires_grad || nodes_[b].requires_grad;
    NodeId id = push(Shape{sa.rows + sb.rows, 1}, Op::Concat, a, b, -1, 0.0, 0.0, rg);
    auto va = value(a);
    auto vb = value(b);
    auto vo = value_mut(id);
    std::copy(va.begin(), va.end(), vo.begin());
    std::copy(vb.begin(), vb.end(), vo.begin() + sa.rows);
    return id;
}

NodeId Tape::reshape(NodeId x, Shape shape) {
    check_node(x);
    if (shape.size() != nodes_[x].shape.size()) {
        throw ShapeError("reshape: element count must be preserved");
    }
    NodeId id = push(shape, Op::Reshape, x, -1, -1, 0.0, 0.0, nodes_[x].requires_grad);
    auto vx = value(x);
    auto vo = value_mut(id);
    std::copy(vx.begin(), vx.end(), vo.begin());
    return id;
}

NodeId Tape::mse_loss(NodeId pred, std::span<const double> target) {
    check_node(pred);
    const Shape sp = nodes_[pred].shape;
    if (!sp.is_vector() || sp.rows < 1 ||
        static_cast<std::size_t>(sp.rows) != target.size()) {
        throw ShapeError("mse_loss: prediction/target length mismatch");
    }
    NodeId id = push(Shape{1, 1}, Op::MseLoss, pred, -1, -1, 0.0, 0.0,
                     nodes_[pred].requires_grad);
    nodes_[id].aux_offset = static_cast<std::uint32_t>(aux_.size());
    aux_.insert(aux_.end(), target.begin(), target.end());
    auto vp = value(pred);
    double acc = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double d = vp[i] - target[i];
        acc += d * d;
    }
    value_mut(id)[0] = acc / static_cast<double>(target.size());
    return id;
}

void Tape::backward(NodeId loss) {
    check_node(loss);
    if (backward_done_) {
        throw TapeReused("backward() already ran on this tape");
    }
    if (!nodes_[loss].shape.is_scalar()) {
        throw NonScalarLoss("backward: loss must be scalar");
    }
    grads_.assign(values_.size(), 0.0);
    backward_done_ = true;
    grads_[nodes_[loss].offset] = 1.0;

    for (NodeId id = loss; id >= 0; --id) {
        const Node& n = nodes_[id];
        if (!n.requires_grad || n.op == Op::Leaf) continue;
        auto g = grad_mut(id);
        switch (n.op) {
            case Op::Add:
            case Op::Sub:
            case Op::Mul: {
                const Shape sa = nodes_[n.a].shape;
                const Shape sb = nodes_[n.b].shape;
                auto va = value(n.a);
                auto vb = value(n.b);
                auto ga = grad_mut(n.a);
                auto gb = grad_mut(n.b);
                const int len = n.shape.size();
                for (int i = 0; i < len; ++i) {
                    const int ia = sa.is_scalar() ? 0 : i;
                    const int ib = sb.is_scalar() ? 0 : i;
                    switch (n.op) {
                        case Op::Add:
                            if (nodes_[n.a].requires_grad) ga[ia] += g[i];
                            if (nodes_[n.b].requires_grad) gb[ib] += g[i];
                            break;
                        case Op::Sub:
                            if (nodes_[n.a].requires_grad) ga[ia] += g[i];
                            if (nodes_[n.b].requires_grad) gb[ib] -= g[i];
                            break;
                        case Op::Mul:
                            if (nodes_[n.a].requires_grad) ga[ia] += g[i] * vb[ib];
                            if (nodes_[n.b].requires_grad) gb[ib] += g[i] * va[ia];
                            break;
                        default: break;
                    }
                }
                break;
            }
            case Op::Axpb: {
                auto ga = grad_mut(n.a);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += n.p0 * g[i];
                break;
            }
            case Op::AddScaled: {
                auto ga = grad_mut(n.a);
                auto gb = grad_mut(n.b);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    if (nodes_[n.a].requires_grad) ga[i] += g[i];
                    if (nodes_[n.b].requires_grad) gb[i] += n.p0 * g[i];
                }
                break;
            }
            case Op::Affine: {
                const int m = n.shape.rows;
                const int cols = nodes_[n.a].shape.cols;
                auto vw = value(n.a);
                auto vx = value(n.c);
                auto gw = grad_mut(n.a);
                auto gb = grad_mut(n.b);
                auto gx = grad_mut(n.c);
                const bool need_w = nodes_[n.a].requires_grad;
                const bool need_b = nodes_[n.b].requires_grad;
                const bool need_x = nodes_[n.c].requires_grad;
                for (int i = 0; i < m; ++i) {
                    const double gi = g[i];
                    if (need_b) gb[i] += gi;
                    const std::size_t row = static_cast<std::size_t>(i) * cols;
                    for (int j = 0; j < cols; ++j) {
                        if (need_w) gw[row + j] += gi * vx[j];
                        if (need_x) gx[j] += vw[row + j] * gi;
                    }
                }
                break;
            }
            case Op::LayerNorm: {
                const int d = n.shape.rows;
                const double mu = aux_[n.aux_offset];
                const double inv = aux_[n.aux_offset + 1];
                auto vx = value(n.a);
                auto vg = value(n.b);
                auto gx = grad_mut(n.a);
                auto gg = grad_mut(n.b);
                auto gb = grad_mut(n.c);
                // xhat_i = (x_i - mu) * inv
                double mean_h = 0.0;
                double mean_hx = 0.0;
                for (int i = 0; i < d; ++i) {
                    const double xhat = (vx[i] - mu) * inv;
                    const double h = g[i] * vg[i];
                    if (nodes_[n.b].requires_grad) gg[i] += g[i] * xhat;
                    if (nodes_[n.c].requires_grad) gb[i] += g[i];
                    mean_h += h;
                    mean_hx += h * xhat;
                }
                mean_h /= d;
                mean_hx /= d;
                if (nodes_[n.a].requires_grad) {
                    for (int i = 0; i < d; ++i) {
                        const double xhat = (vx[i] - mu) * inv;
                        const double h = g[i] * vg[i];
                        gx[i] += inv * (h - mean_h - xhat * mean_hx);
                    }
                }
                break;
            }
            case Op::Silu: {
                auto vx = value(n.a);
                auto gx = grad_mut(n.a);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const double s = sigmoid(vx[i]);
                    gx[i] += g[i] * s * (1.0 + vx[i] * (1.0 - s));
                }
                break;
            }
            case Op::Tanh: {
                auto vo = value(id);
                auto gx = grad_mut(n.a);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    gx[i] += g[i] * (1.0 - vo[i] * vo[i]);
                }
                break;
            }
            case Op::Sum: {
                auto gx = grad_mut(n.a);
                for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0];
                break;
            }
            case Op::Slice: {
                const int start = static_cast<int>(n.p0);
                auto gx = grad_mut(n.a);
                for (std::size_t i = 0; i < g.size(); ++i) gx[start + i] += g[i];
                break;
            }
            case Op::Concat: {
                auto ga = grad_mut(n.a);
                auto gb = grad_mut(n.b);
                const std::size_t na = ga.size();
                if (nodes_[n.a].requires_grad) {
                    for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
                }
                if (nodes_[n.b].requires_grad) {
                    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
                }
                break;
            }
            case Op::Reshape: {
                auto gx = grad_mut(n.a);
                for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                break;
            }
            case Op::MseLoss: {
                auto vp = value(n.a);
                auto gp = grad_mut(n.a);
                const double* target = aux_.data() + n.aux_offset;
                const double len = static_cast<double>(vp.size());
                for (std::size_t i = 0; i < vp.size(); ++i) {
                    gp[i] += g[0] * 2.0 * (vp[i] - target[i]) / len;
                }
                break;
            }
            case Op::Leaf: break;
        }
    }
}

void Tape::clear() {
    nodes_.clear();
    values_.clear();
    grads_.clear();
    aux_.clear();
    backward_done_ = false;
}

std::vector<double> finite_difference_errors(const LossBuilder& build,
                                             std::span<const double> theta0, double h) {
    if (h <= 0.0) {
        throw Error("finite_difference_errors: h must be positive");
    }
    std::vector<double> analytic(theta0.size(), 0.0);
    {
        Tape tape;
        NodeId theta = tape.parameter(theta0);
        NodeId loss = build(tape, theta);
        tape.backward(loss);
        auto g = tape.grad(theta);
        std::copy(g.begin(), g.end(), analytic.begin());
    }
    std::vector<double> perturbed(theta0.begin(), theta0.end());
    std::vector<double> errors(theta0.size(), 0.0);
    for (std::size_t i = 0; i < theta0.size(); ++i) {
        perturbed[i] = theta0[i] + h;
        Tape tp;
        const double fp = tp.scalar_value(build(tp, tp.parameter(perturbed)));
        perturbed[i] = theta0[i] - h;
        Tape tm;
        const double fm = tm.scalar_value(build(tm, tm.parameter(perturbed)));
        perturbed[i] = theta0[i];
        const double fd = (fp - fm) / (2.0 * h);
        errors[i] = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(analytic[i]));
    }
    return errors;
}

double finite_difference_check(const LossBuilder& build, std::span<const double> theta0,
                               double h) {
    const auto errors = finite_difference_errors(build, theta0, h);
    double worst = 0.0;
    for (double e : errors) worst = std::max(worst, e);
    return worst;
}

}  // namespace dynnet
