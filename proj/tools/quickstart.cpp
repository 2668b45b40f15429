// Library walkthrough: a damped pendulum with a linear feedback law, searched
// with a small improvement step and then checked for contraction in a
// quadratic metric.

#include "saop/mras.hpp"

#include <cmath>
#include <iostream>

using namespace saop;

int main() {
    PlanningProblem p;
    p.name = "pendulum";
    p.model.state_dim = 2;
    p.model.input_dim = 1;
    p.model.field = [](const Vector& x, const Vector& u) -> Vector {
        Vector d(2);
        d << x[1], -std::sin(x[0]) - 0.1 * x[1] + u[0];
        return d;
    };
    p.model.inputs = Box::uniform(1, -5.0, 5.0);
    p.cost.running = [](const Vector& x, const Vector& u) { return x.squaredNorm() + 0.1 * u.squaredNorm(); };
    p.cost.terminal = [](const Vector& x, const Vector&) { return 10.0 * x.squaredNorm(); };
    p.cost.horizon = 8.0;
    p.basis = make_polynomial({{0}, {1}}, 2);
    p.x0 = (Vector(2) << 1.0, 0.0).finished();
    p.dt = 0.02;
    p.weight_support = Box::uniform(p.weight_dim(), -10.0, 10.0);

    SaopConfig config;
    config.seed = 1;
    config.epsilon = 1e-4;
    config.max_samples = 20000;
    const SaopResult r = run(p, config);
    std::cout << "status " << to_string(r.status) << " after " << r.iterations << " iterations, " << r.total_samples
              << " samples\n";
    std::cout << "w* = " << r.w_star.transpose() << "\nJ* = " << r.j_star << '\n';

    ContractionSpec spec;
    spec.metric = (Matrix(2, 2) << 2.0, 0.2, 0.2, 0.3).finished();
    spec.beta = 0.1;
    spec.tube_radius = 0.2;
    spec.disturbance_bound = 0.1;
    spec.mode = ContractionCheck::Loewner;
    const TubeReport tube = verify_tube(p.model, p.basis, r.w_star, p.rollout(r.w_star).trajectory, spec);
    std::cout << "tube " << (tube.pass ? "PASS" : "FAIL") << ", worst margin " << tube.worst_margin()
              << ", ultimate bound " << ultimate_bound(spec) << '\n';
    return r.converged() ? 0 : 1;
}
