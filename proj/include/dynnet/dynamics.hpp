#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "dynnet/errors.hpp"
#include "dynnet/tape.hpp"

namespace dynnet {

// FitzHugh-Nagumo coefficients, dimensionless:
//   dv/dt = I - v(v - a)(v - 1) - w
//   dw/dt = b(v - g w)
struct FhnParams {
    double a = 0.25;
    double b = 0.002;
    double g = 2.5;
    double I = 0.0;

    void validate() const {
        if (!(a > 0.0 && a < 1.0)) throw ConfigError("fhn: a must be in (0, 1)");
        if (!(b > 0.0)) throw ConfigError("fhn: b must be positive");
        if (!(g >= 0.0)) throw ConfigError("fhn: g must be non-negative");
        if (!(I >= 0.0)) throw ConfigError("fhn: I must be non-negative");
    }
};

// Right-hand side of an ODE dx/dt = f(t, x). Implementations must be pure.
class VectorField {
  public:
    virtual ~VectorField() = default;
    virtual int state_dim() const = 0;
    virtual void eval(double t, std::span<const double> state,
                      std::span<double> deriv) const = 0;
};

// K independent FHN units; state layout is [v_1..v_K, w_1..w_K].
class FhnField final : public VectorField {
  public:
    FhnField(FhnParams params, int units) : params_(params), units_(units) {
        params_.validate();
        if (units < 1) throw ConfigError("fhn: units must be >= 1");
    }
    int state_dim() const override { return 2 * units_; }
    void eval(double t, std::span<const double> state,
              std::span<double> deriv) const override;
    const FhnParams& params() const { return params_; }

  private:
    FhnParams params_;
    int units_;
};

// dx/dt = c * x, elementwise. Test workhorse: closed form x0 * exp(c t).
class LinearField final : public VectorField {
  public:
    LinearField(double coefficient, int dim) : c_(coefficient), dim_(dim) {}
    int state_dim() const override { return dim_; }
    void eval(double, std::span<const double> state, std::span<double> deriv) const override {
        for (std::size_t i = 0; i < state.size(); ++i) deriv[i] = c_ * state[i];
    }

  private:
    double c_;
    int dim_;
};

class ZeroField final : public VectorField {
  public:
    explicit ZeroField(int dim) : dim_(dim) {}
    int state_dim() const override { return dim_; }
    void eval(double, std::span<const double>, std::span<double> deriv) const override {
        for (double& d : deriv) d = 0.0;
    }

  private:
    int dim_;
};

// Uniform grid t_start + k*dt, k = 0..steps. The step count must divide the
// span exactly (up to 1e-9 relative slack for binary rounding); fractional
// remainders are rejected so step counts stay reproducible.
struct IntegrationGrid {
    double t_start = 0.0;
    double t_end = 0.0;
    double dt = 0.0;
    long steps = 0;

    IntegrationGrid() = default;
    IntegrationGrid(double t_start_, double t_end_, double dt_);

    // True when (t_end - t_start) / dt is a whole number >= 1.
    static bool divides(double t_start_, double t_end_, double dt_);
};

// The elementwise FHN rate, usable on raw vectors. v and w must have equal
// length; dv and dw receive the derivatives.
void fhn_rate(std::span<const double> v, std::span<const double> w, const FhnParams& params,
              std::span<double> dv, std::span<double> dw);

// ---- explicit Euler (the integrator embedded in the networks) -------------

std::vector<double> euler_step(std::span<const double> state, const VectorField& field,
                               double dt, double t = 0.0);

struct Trajectory {
    std::vector<double> times;
    std::vector<std::vector<double>> states;
};

// Forward Euler over the grid. Throws NonFinite with the 1-based step index
// at which a non-finite entry first appears.
Trajectory integrate(std::span<const double> state0, const VectorField& field,
                     const IntegrationGrid& grid);

// ---- classical RK4 (test oracle; independent code path from euler) --------

std::vector<double> reference_solve(std::span<const double> state0, const VectorField& field,
                                    double t_end, double oracle_dt);

Trajectory reference_trajectory(std::span<const double> state0, const VectorField& field,
                                double t_end, double oracle_dt);

// ---- tape-side (differentiable) versions -----------------------------------

// Derivative of the full state vector at time t, built on the tape.
using TapeField = std::function<NodeId(Tape&, NodeId state, double t)>;

// FHN rate on (v, w) tape nodes with fixed coefficients.
std::pair<NodeId, NodeId> fhn_field_tape(Tape& tape, NodeId v, NodeId w,
                                         const FhnParams& params);

// FHN rate with the coefficients as tape nodes (for sensitivity checks).
struct FhnParamNodes {
    NodeId a, b, g, I;
};
std::pair<NodeId, NodeId> fhn_field_tape(Tape& tape, NodeId v, NodeId w,
                                         const FhnParamNodes& params);

// Full-state-vector FHN field ([v, w] layout), for the generic Euler block.
TapeField make_fhn_tape_field(const FhnParams& params);

NodeId euler_step_tape(Tape& tape, NodeId state, const TapeField& field, double dt,
                       double t = 0.0);

// Unrolled Euler block; the additive state term at each step is the residual
// connection. Throws NonFinite (1-based step) if the state leaves the finite
// range. When `capture` is non-null it receives the state after every step.
NodeId euler_block_tape(Tape& tape, NodeId state0, const TapeField& field, long steps,
                        double dt, double t_start = 0.0, Trajectory* capture = nullptr);

// Same block on a (v, w) pair without per-step slicing; the training path for
// FHN-driven layers. Any vector length works as long as v and w match.
std::pair<NodeId, NodeId> euler_block_fhn(Tape& tape, NodeId v0, NodeId w0,
                                          const FhnParams& params, long steps, double dt,
                                          Trajectory* capture = nullptr,
                                          double t_start = 0.0);

// Nullclines for phase-plane plots: v-nullcline w = I - v(v-a)(v-1); the
// w-nullcline w = v/g exists only for g > 0.
std::vector<std::pair<double, double>> v_nullcline(const FhnParams& params, double v_min,
                                                   double v_max, int points);
std::vector<std::pair<double, double>> w_nullcline(const FhnParams& params, double v_min,
                                                   double v_max, int points);

}  // namespace dynnet
