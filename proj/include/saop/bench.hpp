#pragma once

// Benchmark problems: an LTI plant with a non-quadratic cost, a Dubins car
// reaching a goal around an obstacle, and a static quadratic used as an
// oracle for the search itself.

#include "saop/problem.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace saop::bench {

struct LtiOptions {
    double horizon = 10.0;
    double dt = 0.01;
    Vector x0 = (Vector(2) << 5.0, 5.0).finished();
    double weight_bound = 10.0;
    bool linear_only = false;  // basis [x1, x2] instead of the cubic one
};

inline Matrix lti_a() { return (Matrix(2, 2) << -1.0, 1.0, 0.0, 0.0).finished(); }
inline Matrix lti_b() { return (Matrix(2, 1) << 0.0, 1.0).finished(); }

/// |x|^2 + |u|^2 + 0.5 |x|^4 + 0.8 |x|^6
inline double lti_running_cost(const Vector& x, const Vector& u) {
    const double r2 = x.squaredNorm();
    return r2 + u.squaredNorm() + 0.5 * r2 * r2 + 0.8 * r2 * r2 * r2;
}

inline ContractionSpec lti_contraction() {
    ContractionSpec spec;
    spec.metric = Matrix::Identity(2, 2);
    spec.beta = 2.0;
    spec.tube_radius = 1.0;
    spec.disturbance_bound = 0.5;
    return spec;
}

inline PlanningProblem lti_nonquadratic(const LtiOptions& opt = {}) {
    const Matrix a = lti_a();
    const Matrix b = lti_b();
    PlanningProblem p;
    p.name = opt.linear_only ? "lti_linear" : "lti_nonquadratic";
    p.model.state_dim = 2;
    p.model.input_dim = 1;
    p.model.field = [a, b](const Vector& x, const Vector& u) -> Vector { return a * x + b * u; };
    p.model.inputs = Box::unbounded(1);
    p.model.state_jacobian = [a](const Vector&, const Vector&) -> Matrix { return a; };
    p.model.input_jacobian = [b](const Vector&, const Vector&) -> Matrix { return b; };
    p.cost.running = lti_running_cost;
    p.cost.terminal = [](const Vector& x, const Vector&) { return x.squaredNorm(); };
    p.cost.horizon = opt.horizon;
    if (opt.linear_only) {
        p.basis = make_polynomial({{0}, {1}}, 2);
    } else {
        p.basis = make_polynomial({{0}, {1}, {0, 0}, {1, 1}, {0, 0, 0}, {1, 1, 1}}, 2);
    }
    p.x0 = opt.x0;
    p.dt = opt.dt;
    p.weight_support = Box::uniform(p.basis.size(), -opt.weight_bound, opt.weight_bound);
    p.contraction = lti_contraction();
    p.disturbance_bound = 0.5;
    return p;
}

struct Rect {
    double x_min = 8.0;
    double y_min = 8.0;
    double x_max = 14.0;
    double y_max = 14.0;

    bool contains(double x, double y) const { return x >= x_min && x <= x_max && y >= y_min && y <= y_max; }
};

/// `count` points spaced evenly along the rectangle boundary, starting at
/// (x_min, y_min) and walking counter-clockwise.
inline Matrix boundary_points(const Rect& r, int count) {
    const double w = r.x_max - r.x_min;
    const double h = r.y_max - r.y_min;
    const double perimeter = 2.0 * (w + h);
    Matrix pts(count, 2);
    for (int i = 0; i < count; ++i) {
        double s = perimeter * i / count;
        double x = r.x_min;
        double y = r.y_min;
        if (s < w) {
            x += s;
        } else if ((s -= w) < h) {
            x = r.x_max;
            y += s;
        } else if ((s -= h) < w) {
            x = r.x_max - s;
            y = r.y_max;
        } else {
            s -= w;
            y = r.y_max - s;
        }
        pts(i, 0) = x;
        pts(i, 1) = y;
    }
    return pts;
}

struct DubinsOptions {
    double horizon = 100.0;
    double dt = 0.05;
    Vector x0 = Vector::Zero(3);
    double goal_x = 20.0;
    double goal_y = 20.0;
    double goal_tolerance = 0.5;
    bool early_stop = true;
    double speed_bound = 10.0;  // |u|
    double turn_bound = 5.0;    // |v|
    double grid_min = -5.0;
    double grid_max = 30.0;
    double grid_step = 5.0;
    double sigma = 5.0;
    Rect obstacle{};
    int obstacle_centers = 13;
    double collision_penalty = 1e6;
    double weight_bound = 10.0;
};

inline Matrix grid_centers(double lo, double hi, double step) {
    std::vector<double> ticks;
    for (double v = lo; v <= hi + 1e-9; v += step) ticks.push_back(v);
    const auto n = static_cast<Eigen::Index>(ticks.size());
    Matrix c(n * n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            c(i * n + j, 0) = ticks[static_cast<std::size_t>(i)];
            c(i * n + j, 1) = ticks[static_cast<std::size_t>(j)];
        }
    }
    return c;
}

inline PlanningProblem dubins_car(const DubinsOptions& opt = {}) {
    PlanningProblem p;
    p.name = "dubins_car";
    p.model.state_dim = 3;
    p.model.input_dim = 2;
    p.model.field = [](const Vector& s, const Vector& u) -> Vector {
        Vector d(3);
        d << u[0] * std::cos(s[2]), u[0] * std::sin(s[2]), u[1];
        return d;
    };
    p.model.inputs = Box{(Vector(2) << -opt.speed_bound, -opt.turn_bound).finished(),
                         (Vector(2) << opt.speed_bound, opt.turn_bound).finished()};
    p.model.state_jacobian = [](const Vector& s, const Vector& u) -> Matrix {
        Matrix j = Matrix::Zero(3, 3);
        j(0, 2) = -u[0] * std::sin(s[2]);
        j(1, 2) = u[0] * std::cos(s[2]);
        return j;
    };
    p.model.input_jacobian = [](const Vector& s, const Vector&) -> Matrix {
        Matrix j = Matrix::Zero(3, 2);
        j(0, 0) = std::cos(s[2]);
        j(1, 0) = std::sin(s[2]);
        j(2, 1) = 1.0;
        return j;
    };

    const double gx = opt.goal_x;
    const double gy = opt.goal_y;
    p.cost.running = [](const Vector& s, const Vector& u) { return 0.1 * (s.norm() + u.norm()); };
    p.cost.terminal = [gx, gy](const Vector& s, const Vector&) { return 1000.0 * std::hypot(s[0] - gx, s[1] - gy); };
    p.cost.horizon = opt.horizon;
    const double tol = opt.goal_tolerance;
    p.goal = [gx, gy, tol](const Vector& s) { return std::hypot(s[0] - gx, s[1] - gy) <= tol; };
    if (opt.early_stop) p.cost.early_stop = p.goal;
    const Rect obstacle = opt.obstacle;
    p.cost.violation = [obstacle](const Vector& s) { return obstacle.contains(s[0], s[1]); };
    p.cost.violation_penalty = opt.collision_penalty;

    p.basis = make_rbf(grid_centers(opt.grid_min, opt.grid_max, opt.grid_step), opt.sigma, {0, 1});
    if (opt.obstacle_centers > 0) {
        p.basis.append(make_rbf(boundary_points(opt.obstacle, opt.obstacle_centers), opt.sigma, {0, 1}));
    }
    p.basis.append(make_linear({0, 1, 2}, (Vector(3) << gx, gy, 0.0).finished()));

    p.x0 = opt.x0;
    p.dt = opt.dt;
    p.weight_support = Box::uniform(p.weight_dim(), -opt.weight_bound, opt.weight_bound);
    return p;
}

/// J(w) = |w - w_star|^2, no simulation.
inline PlanningProblem static_quadratic(const Vector& w_star, double weight_bound = 10.0) {
    if (w_star.size() < 1) throw std::invalid_argument("static_quadratic: need D >= 1");
    PlanningProblem p;
    p.name = "static_quadratic";
    p.static_objective = [w_star](const Vector& w) { return (w - w_star).squaredNorm(); };
    p.weight_support = Box::uniform(w_star.size(), -weight_bound, weight_bound);
    return p;
}

}  // namespace saop::bench
