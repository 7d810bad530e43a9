#include "dynnet/dynamics.hpp"

#include <cmath>
#include <string>

namespace dynnet {

IntegrationGrid::IntegrationGrid(double t_start_, double t_end_, double dt_)
    : t_start(t_start_), t_end(t_end_), dt(dt_) {
    if (!(t_start >= 0.0)) throw ConfigError("grid: t_start must be >= 0");
    if (!(t_end > t_start)) throw ConfigError("grid: t_end must exceed t_start");
    if (!(dt > 0.0)) throw ConfigError("grid: dt must be positive");
    const double span = t_end - t_start;
    steps = std::llround(span / dt);
    if (steps < 1 || std::abs(static_cast<double>(steps) * dt - span) >
                         1e-9 * std::max(1.0, std::abs(span))) {
        throw ConfigError("grid: (t_end - t_start) / dt must be a whole number >= 1");
    }
}

bool IntegrationGrid::divides(double t_start_, double t_end_, double dt_) {
    if (!(t_start_ >= 0.0) || !(t_end_ > t_start_) || !(dt_ > 0.0)) return false;
    const double span = t_end_ - t_start_;
    const long steps = std::llround(span / dt_);
    return steps >= 1 && std::abs(static_cast<double>(steps) * dt_ - span) <=
                             1e-9 * std::max(1.0, std::abs(span));
}

void fhn_rate(std::span<const double> v, std::span<const double> w, const FhnParams& params,
              std::span<double> dv, std::span<double> dw) {
    if (v.size() != w.size() || dv.size() != v.size() || dw.size() != v.size() ||
        v.empty()) {
        throw ShapeError("fhn_rate: v and w must be equal-length, non-empty");
    }
    for (std::size_t i = 0; i < v.size(); ++i) {
        dv[i] = params.I - v[i] * (v[i] - params.a) * (v[i] - 1.0) - w[i];
        dw[i] = params.b * (v[i] - params.g * w[i]);
    }
}

void FhnField::eval(double, std::span<const double> state, std::span<double> deriv) const {
    const std::size_t k = static_cast<std::size_t>(units_);
    fhn_rate(state.first(k), state.subspan(k, k), params_, deriv.first(k),
             deriv.subspan(k, k));
}

std::vector<double> euler_step(std::span<const double> state, const VectorField& field,
                               double dt, double t) {
    if (dt < 0.0) throw ConfigError("euler_step: dt must be >= 0");
    std::vector<double> deriv(state.size(), 0.0);
    field.eval(t, state, deriv);
    std::vector<double> next(state.begin(), state.end());
    for (std::size_t i = 0; i < next.size(); ++i) next[i] += dt * deriv[i];
    return next;
}

Trajectory integrate(std::span<const double> state0, const VectorField& field,
                     const IntegrationGrid& grid) {
    if (static_cast<int>(state0.size()) != field.state_dim()) {
        throw ShapeError("integrate: state size does not match field dimension");
    }
    Trajectory traj;
    traj.times.reserve(grid.steps + 1);
    traj.states.reserve(grid.steps + 1);
    traj.times.push_back(grid.t_start);
    traj.states.emplace_back(state0.begin(), state0.end());
    for (long k = 1; k <= grid.steps; ++k) {
        const double t_prev = grid.t_start + static_cast<double>(k - 1) * grid.dt;
        auto next = euler_step(traj.states.back(), field, grid.dt, t_prev);
        for (double x : next) {
            if (!std::isfinite(x)) {
                throw NonFinite("integrate: non-finite state at step " + std::to_string(k),
                                k);
            }
        }
        traj.times.push_back(grid.t_start + static_cast<double>(k) * grid.dt);
        traj.states.push_back(std::move(next));
    }
    return traj;
}

namespace {

// One classical RK4 update, deliberately not sharing code with euler_step.
void rk4_step(std::vector<double>& state, const VectorField& field, double t, double dt,
              std::vector<double>& k1, std::vector<double>& k2, std::vector<double>& k3,
              std::vector<double>& k4, std::vector<double>& scratch) {
    const std::size_t n = state.size();
    field.eval(t, state, k1);
    for (std::size_t i = 0; i < n; ++i) scratch[i] = state[i] + 0.5 * dt * k1[i];
    field.eval(t + 0.5 * dt, scratch, k2);
    for (std::size_t i = 0; i < n; ++i) scratch[i] = state[i] + 0.5 * dt * k2[i];
    field.eval(t + 0.5 * dt, scratch, k3);
    for (std::size_t i = 0; i < n; ++i) scratch[i] = state[i] + dt * k3[i];
    field.eval(t + dt, scratch, k4);
    for (std::size_t i = 0; i < n; ++i) {
        state[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

}  // namespace

Trajectory reference_trajectory(std::span<const double> state0, const VectorField& field,
                                double t_end, double oracle_dt) {
    if (static_cast<int>(state0.size()) != field.state_dim()) {
        throw ShapeError("reference_trajectory: state size does not match field dimension");
    }
    if (!(oracle_dt > 0.0) || !(t_end > 0.0)) {
        throw ConfigError("reference_trajectory: t_end and oracle_dt must be positive");
    }
    const long steps = std::max<long>(1, std::llround(t_end / oracle_dt));
    const double dt = t_end / static_cast<double>(steps);  // land exactly on t_end
    const std::size_t n = state0.size();
    std::vector<double> k1(n), k2(n), k3(n), k4(n), scratch(n);
    Trajectory traj;
    traj.times.reserve(steps + 1);
    traj.states.reserve(steps + 1);
    traj.times.push_back(0.0);
    traj.states.emplace_back(state0.begin(), state0.end());
    std::vector<double> state(state0.begin(), state0.end());
    for (long k = 1; k <= steps; ++k) {
        rk4_step(state, field, static_cast<double>(k - 1) * dt, dt, k1, k2, k3, k4, scratch);
        for (double x : state) {
            if (!std::isfinite(x)) {
                throw NonFinite(
                    "reference_trajectory: non-finite state at step " + std::to_string(k), k);
            }
        }
        traj.times.push_back(static_cast<double>(k) * dt);
        traj.states.push_back(state);
    }
    return traj;
}

std::vector<double> reference_solve(std::span<const double> state0, const VectorField& field,
                                    double t_end, double oracle_dt) {
    return reference_trajectory(state0, field, t_end, oracle_dt).states.back();
}

std::pair<NodeId, NodeId> fhn_field_tape(Tape& tape, NodeId v, NodeId w,
                                         const FhnParams& params) {
    // cubic = v (v - a)(v - 1)
    NodeId v_minus_a = tape.axpb(v, 1.0, -params.a);
    NodeId v_minus_1 = tape.axpb(v, 1.0, -1.0);
    NodeId cubic = tape.mul(tape.mul(v, v_minus_a), v_minus_1);
    NodeId dv = tape.sub(tape.axpb(cubic, -1.0, params.I), w);
    NodeId dw = tape.scale(tape.sub(v, tape.scale(w, params.g)), params.b);
    return {dv, dw};
}

std::pair<NodeId, NodeId> fhn_field_tape(Tape& tape, NodeId v, NodeId w,
                                         const FhnParamNodes& p) {
    NodeId v_minus_a = tape.sub(v, p.a);
    NodeId v_minus_1 = tape.axpb(v, 1.0, -1.0);
    NodeId cubic = tape.mul(tape.mul(v, v_minus_a), v_minus_1);
    NodeId dv = tape.sub(tape.sub(p.I, cubic), w);
    NodeId dw = tape.mul(p.b, tape.sub(v, tape.mul(p.g, w)));
    return {dv, dw};
}

TapeField make_fhn_tape_field(const FhnParams& params) {
    params.validate();
    return [params](Tape& tape, NodeId state, double) -> NodeId {
        const Shape s = tape.shape(state);
        if (!s.is_vector() || s.rows % 2 != 0 || s.rows < 2) {
            throw ShapeError("fhn field: state must be a vector of even length");
        }
        const int k = s.rows / 2;
        NodeId v = tape.slice(state, 0, k);
        NodeId w = tape.slice(state, k, k);
        auto [dv, dw] = fhn_field_tape(tape, v, w, params);
        return tape.concat(dv, dw);
    };
}

NodeId euler_step_tape(Tape& tape, NodeId state, const TapeField& field, double dt,
                       double t) {
    if (dt < 0.0) throw ConfigError("euler_step_tape: dt must be >= 0");
    return tape.add_scaled(state, field(tape, state, t), dt);
}

NodeId euler_block_tape(Tape& tape, NodeId state0, const TapeField& field, long steps,
                        double dt, double t_start, Trajectory* capture) {
    NodeId state = state0;
    if (capture) {
        capture->times.push_back(t_start);
        auto v = tape.value(state);
        capture->states.emplace_back(v.begin(), v.end());
    }
    for (long k = 1; k <= steps; ++k) {
        const double t_prev = t_start + static_cast<double>(k - 1) * dt;
        state = euler_step_tape(tape, state, field, dt, t_prev);
        if (!tape.all_finite(state)) {
            throw NonFinite("euler block: non-finite state at step " + std::to_string(k), k);
        }
        if (capture) {
            capture->times.push_back(t_start + static_cast<double>(k) * dt);
            auto v = tape.value(state);
            capture->states.emplace_back(v.begin(), v.end());
        }
    }
    return state;
}

std::pair<NodeId, NodeId> euler_block_fhn(Tape& tape, NodeId v0, NodeId w0,
                                          const FhnParams& params, long steps, double dt,
                                          Trajectory* capture, double t_start) {
    params.validate();
    if (dt < 0.0) throw ConfigError("euler_block_fhn: dt must be >= 0");
    NodeId v = v0;
    NodeId w = w0;
    auto record = [&](long k) {
        if (!capture) return;
        capture->times.push_back(t_start + static_cast<double>(k) * dt);
        auto vv = tape.value(v);
        auto vw = tape.value(w);
        std::vector<double> state(vv.begin(), vv.end());
        state.insert(state.end(), vw.begin(), vw.end());
        capture->states.push_back(std::move(state));
    };
    record(0);
    for (long k = 1; k <= steps; ++k) {
        auto [dv, dw] = fhn_field_tape(tape, v, w, params);
        v = tape.add_scaled(v, dv, dt);
        w = tape.add_scaled(w, dw, dt);
        if (!tape.all_finite(v) || !tape.all_finite(w)) {
            throw NonFinite("euler block: non-finite state at step " + std::to_string(k), k);
        }
        record(k);
    }
    return {v, w};
}

std::vector<std::pair<double, double>> v_nullcline(const FhnParams& params, double v_min,
                                                   double v_max, int points) {
    std::vector<std::pair<double, double>> out;
    out.reserve(points);
    for (int i = 0; i < points; ++i) {
        const double v =
            v_min + (v_max - v_min) * static_cast<double>(i) / std::max(1, points - 1);
        out.emplace_back(v, params.I - v * (v - params.a) * (v - 1.0));
    }
    return out;
}

std::vector<std::pair<double, double>> w_nullcline(const FhnParams& params, double v_min,
                                                   double v_max, int points) {
    if (!(params.g > 0.0)) {
        throw ConfigError("w_nullcline: undefined for g = 0");
    }
    std::vector<std::pair<double, double>> out;
    out.reserve(points);
    for (int i = 0; i < points; ++i) {
        const double v =
            v_min + (v_max - v_min) * static_cast<double>(i) / std::max(1, points - 1);
        out.emplace_back(v, v / params.g);
    }
    return out;
}

}  // namespace dynnet
