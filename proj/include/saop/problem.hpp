#pragma once

#include "saop/basis.hpp"
#include "saop/contraction.hpp"
#include "saop/dynamics.hpp"

#include <functional>
#include <optional>
#include <string>

namespace saop {

struct PlanningProblem {
    std::string name;
    SystemModel model;
    CostFunctional cost;
    BasisSet basis;
    Vector x0;
    double dt = 0.01;
    Box weight_support;
    std::optional<ContractionSpec> contraction;
    std::optional<double> disturbance_bound;

    // When set, J(w) is this function and no simulation happens.
    std::function<double(const Vector&)> static_objective;

    // Goal region used only for reporting (e.g. "did the car get there").
    StatePredicate goal;

    Eigen::Index weight_dim() const {
        if (static_objective) return weight_support.dim();
        return basis.size() * model.input_dim;
    }

    bool is_static() const { return static_cast<bool>(static_objective); }

    void validate() const {
        weight_support.validate("weight support");
        if (weight_support.dim() < 1) throw std::invalid_argument("PlanningProblem: empty weight space");
        if (is_static()) return;
        model.validate();
        if (basis.empty()) throw std::invalid_argument("PlanningProblem: empty basis");
        if (x0.size() != model.state_dim) throw std::invalid_argument("PlanningProblem: x0 dimension mismatch");
        if (weight_support.dim() != weight_dim()) {
            throw std::invalid_argument("PlanningProblem: weight support must have m*N entries");
        }
        if (!cost.running || !cost.terminal) throw std::invalid_argument("PlanningProblem: cost functional incomplete");
        if (!(dt > 0.0)) throw std::invalid_argument("PlanningProblem: dt must be positive");
        if (contraction) {
            contraction->validate();
            if (contraction->metric.rows() != model.state_dim) {
                throw std::invalid_argument("PlanningProblem: contraction metric dimension mismatch");
            }
        }
    }

    Policy policy(const Vector& w) const { return Policy(basis, w, model.inputs); }

    Rollout rollout(const Vector& w, const Disturbance* disturbance = nullptr) const {
        if (is_static()) throw std::logic_error("rollout: static problem has no dynamics");
        return simulate(model, policy(w), x0, cost, dt, disturbance);
    }
};

/// Result of evaluating one weight vector.
struct Evaluation {
    double cost = 0.0;
    bool verified = true;  // contraction filter outcome (true when unused)
    StopReason stop = StopReason::Horizon;
};

inline Evaluation evaluate(const PlanningProblem& problem, const Vector& w, const ContractionSpec* robust = nullptr) {
    if (problem.is_static()) {
        const double j = problem.static_objective(w);
        return {std::isfinite(j) ? j : kPenaltyDiverged, true, StopReason::Horizon};
    }
    const Rollout r = problem.rollout(w);
    Evaluation e{r.cost, true, r.trajectory.stop};
    if (robust != nullptr) {
        e.verified = !r.diverged() &&
                     verify_tube(problem.model, problem.basis, w, r.trajectory, *robust, /*exhaustive=*/false).pass;
    }
    return e;
}

}  // namespace saop
