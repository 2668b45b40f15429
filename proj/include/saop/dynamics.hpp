#pragma once

// Closed-loop simulation of continuous-time systems x' = f(x, u) and the
// finite-horizon cost functional evaluated along a rollout.

#include "saop/common.hpp"
#include "saop/io.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace saop {

/// Cost assigned to rollouts whose state stops being finite.
inline constexpr double kPenaltyDiverged = 1e12;

class IntegrationDiverged : public std::runtime_error {
public:
    explicit IntegrationDiverged(double t)
        : std::runtime_error("integration diverged at t=" + io::format_double(t)), time_(t) {}

    double time() const noexcept { return time_; }

private:
    double time_;
};

using VectorField = std::function<Vector(const Vector& x, const Vector& u)>;
using JacobianFn = std::function<Matrix(const Vector& x, const Vector& u)>;
using StageCost = std::function<double(const Vector& x, const Vector& u)>;
using StatePredicate = std::function<bool(const Vector& x)>;

struct SystemModel {
    int state_dim = 0;
    int input_dim = 0;
    VectorField field;
    Box inputs;  // the admissible input set U

    // Optional analytic partials. When both are present the closed-loop
    // Jacobian is assembled analytically, otherwise by finite differences.
    JacobianFn state_jacobian;  // df/dx, n x n
    JacobianFn input_jacobian;  // df/du, n x m

    void validate() const {
        if (state_dim < 1 || input_dim < 1) {
            throw std::invalid_argument("SystemModel: dimensions must be positive");
        }
        if (!field) {
            throw std::invalid_argument("SystemModel: vector field missing");
        }
        if (inputs.dim() != input_dim) {
            throw std::invalid_argument("SystemModel: input box dimension mismatch");
        }
        inputs.validate("SystemModel inputs");
    }

    bool has_analytic_jacobian() const { return static_cast<bool>(state_jacobian) && static_cast<bool>(input_jacobian); }
};

struct CostFunctional {
    StageCost running;   // l(x, u) >= 0
    StageCost terminal;  // g(x, u) >= 0
    double horizon = 1.0;

    // Goal test. When it fires the rollout halts and the terminal cost is
    // charged at the stopping state.
    StatePredicate early_stop;

    // Constraint test (e.g. collision). When it fires the rollout halts and
    // violation_penalty is added on top of the terminal cost.
    StatePredicate violation;
    double violation_penalty = 0.0;
};

enum class StopReason { Horizon, Goal, Violation, Diverged };

inline const char* to_string(StopReason r) {
    switch (r) {
        case StopReason::Horizon: return "horizon";
        case StopReason::Goal: return "goal";
        case StopReason::Violation: return "violation";
        case StopReason::Diverged: return "diverged";
    }
    return "unknown";
}

struct Trajectory {
    double dt = 0.0;
    std::vector<double> times;  // K + 1 grid points
    Matrix states;              // (K + 1) x n
    Matrix inputs;              // K x m, input applied over [t_k, t_k+1)
    Vector final_input;         // policy evaluated at the last state
    std::optional<std::size_t> truncated_at;
    StopReason stop = StopReason::Horizon;

    std::size_t size() const { return times.size(); }
    Vector state(std::size_t k) const { return states.row(static_cast<Eigen::Index>(k)).transpose(); }
    Vector input(std::size_t k) const {
        if (k + 1 == times.size()) return final_input;
        return inputs.row(static_cast<Eigen::Index>(k)).transpose();
    }
    Vector final_state() const { return state(times.size() - 1); }
};

/// Bounded additive disturbance w(t). Every evaluation is checked against the
/// bound so a realization can never silently exceed it.
struct Disturbance {
    double bound = 0.0;
    std::function<Vector(double t)> realization;

    Vector operator()(double t) const {
        Vector w = realization(t);
        if (!(w.norm() <= bound * (1.0 + 1e-12))) {
            throw std::logic_error("disturbance exceeds its bound at t=" + io::format_double(t));
        }
        return w;
    }
};

/// Piecewise-constant disturbance: a fresh value drawn uniformly from the
/// ball of radius `bound` every `hold` seconds on [0, horizon].
inline Disturbance random_disturbance(int dim, double bound, double hold, double horizon, std::uint64_t seed) {
    if (bound < 0.0 || hold <= 0.0) {
        throw std::invalid_argument("random_disturbance: need bound >= 0 and hold > 0");
    }
    Rng rng(seed);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unit;
    const auto segments = static_cast<std::size_t>(std::ceil(horizon / hold)) + 1;
    std::vector<Vector> values;
    values.reserve(segments);
    for (std::size_t s = 0; s < segments; ++s) {
        Vector dir(dim);
        for (int i = 0; i < dim; ++i) dir[i] = normal(rng);
        const double n = dir.norm();
        const double radius = bound * std::pow(unit(rng), 1.0 / dim);
        values.push_back(n > 0.0 ? Vector(dir * (radius / n)) : Vector::Zero(dim));
    }
    return Disturbance{bound, [values = std::move(values), hold](double t) -> Vector {
                           auto idx = static_cast<std::size_t>(std::max(0.0, t) / hold);
                           idx = std::min(idx, values.size() - 1);
                           return values[idx];
                       }};
}

/// One classical fourth-order Runge-Kutta step of x' = f(x, policy(x)) + w(t).
/// The policy is re-evaluated at every stage.
template <class Policy>
Vector rk4_step(const SystemModel& model, const Policy& policy, const Vector& x, double dt,
                const Disturbance* disturbance = nullptr, double t = 0.0) {
    if (!(dt > 0.0)) {
        throw std::invalid_argument("rk4_step: dt must be positive");
    }
    auto rhs = [&](const Vector& s, double time) -> Vector {
        Vector d = model.field(s, policy(s));
        if (disturbance != nullptr) d += (*disturbance)(time);
        return d;
    };
    const Vector k1 = rhs(x, t);
    const Vector k2 = rhs(x + 0.5 * dt * k1, t + 0.5 * dt);
    const Vector k3 = rhs(x + 0.5 * dt * k2, t + 0.5 * dt);
    const Vector k4 = rhs(x + dt * k3, t + dt);
    Vector next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!next.allFinite()) {
        throw IntegrationDiverged(t + dt);
    }
    return next;
}

struct Rollout {
    Trajectory trajectory;
    double cost = 0.0;

    bool diverged() const { return trajectory.stop == StopReason::Diverged; }
};

inline std::size_t horizon_steps(double horizon, double dt) {
    if (!(dt > 0.0) || !(horizon > 0.0)) {
        throw std::invalid_argument("simulate: horizon and dt must be positive");
    }
    const double ratio = horizon / dt;
    const auto steps = static_cast<std::size_t>(std::llround(ratio));
    if (steps == 0 || std::abs(static_cast<double>(steps) - ratio) > 1e-6 * std::max(1.0, ratio)) {
        throw std::invalid_argument("simulate: dt does not divide the horizon");
    }
    return steps;
}

/// Rolls the closed loop out from x0 and accumulates
///   J = sum_k l(x_k, u_k) dt + g(x_end, u_end)
/// on a uniform grid (left-endpoint quadrature of the running cost).
/// A diverged rollout reports J = kPenaltyDiverged.
template <class Policy>
Rollout simulate(const SystemModel& model, const Policy& policy, const Vector& x0, const CostFunctional& cost,
                 double dt, const Disturbance* disturbance = nullptr) {
    const std::size_t steps = horizon_steps(cost.horizon, dt);
    const auto n = static_cast<Eigen::Index>(model.state_dim);
    const auto m = static_cast<Eigen::Index>(model.input_dim);
    if (x0.size() != n || !x0.allFinite()) {
        throw std::invalid_argument("simulate: initial state has wrong size or is not finite");
    }

    Rollout out;
    Trajectory& traj = out.trajectory;
    traj.dt = dt;
    traj.times.reserve(steps + 1);
    traj.states.resize(static_cast<Eigen::Index>(steps + 1), n);
    traj.inputs.resize(static_cast<Eigen::Index>(steps), m);

    Vector x = x0;
    traj.times.push_back(0.0);
    traj.states.row(0) = x.transpose();

    double running = 0.0;
    std::size_t k = 0;
    auto halted = [&](const Vector& s) {
        if (cost.violation && cost.violation(s)) {
            traj.stop = StopReason::Violation;
            return true;
        }
        if (cost.early_stop && cost.early_stop(s)) {
            traj.stop = StopReason::Goal;
            return true;
        }
        return false;
    };

    bool stopped = halted(x);
    try {
        for (; k < steps && !stopped; ++k) {
            const double t = static_cast<double>(k) * dt;
            const Vector u = policy(x);
            traj.inputs.row(static_cast<Eigen::Index>(k)) = u.transpose();
            running += cost.running(x, u) * dt;
            x = rk4_step(model, policy, x, dt, disturbance, t);
            traj.times.push_back(static_cast<double>(k + 1) * dt);
            traj.states.row(static_cast<Eigen::Index>(k + 1)) = x.transpose();
            stopped = halted(x);
        }
    } catch (const IntegrationDiverged&) {
        traj.stop = StopReason::Diverged;
    }

    const std::size_t points = traj.times.size();
    traj.states.conservativeResize(static_cast<Eigen::Index>(points), n);
    traj.inputs.conservativeResize(static_cast<Eigen::Index>(points - 1), m);
    if (points != steps + 1) traj.truncated_at = points - 1;

    if (traj.stop == StopReason::Diverged) {
        traj.final_input = Vector::Zero(m);
        out.cost = kPenaltyDiverged;
        return out;
    }

    const Vector x_end = traj.final_state();
    traj.final_input = policy(x_end);
    double j = running + cost.terminal(x_end, traj.final_input);
    if (traj.stop == StopReason::Violation) j += cost.violation_penalty;
    out.cost = std::isfinite(j) ? std::min(j, kPenaltyDiverged) : kPenaltyDiverged;
    return out;
}

/// CSV with header t,x1..xn,u1..um and one row per grid point.
inline void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
    const auto n = traj.states.cols();
    const auto m = traj.final_input.size();
    std::vector<std::string> cells{"t"};
    for (Eigen::Index i = 0; i < n; ++i) cells.push_back("x" + std::to_string(i + 1));
    for (Eigen::Index j = 0; j < m; ++j) cells.push_back("u" + std::to_string(j + 1));
    io::write_row(out, cells);
    for (std::size_t k = 0; k < traj.size(); ++k) {
        cells.clear();
        cells.push_back(io::format_double(traj.times[k]));
        const Vector x = traj.state(k);
        const Vector u = traj.input(k);
        for (Eigen::Index i = 0; i < n; ++i) cells.push_back(io::format_double(x[i]));
        for (Eigen::Index j = 0; j < m; ++j) cells.push_back(io::format_double(u[j]));
        io::write_row(out, cells);
    }
}

}  // namespace saop
