#pragma once

// Contraction checks for closed loops x' = f(x, u(x)) with a constant metric M.
//
// The sufficient condition checked along a nominal trajectory xbar(t) is,
// with G(x) = J(x)^T M + M J(x) and J the closed-loop Jacobian,
//
//   max_{|x - xbar(t)|_M <= ell} G_ij(x) <= -beta m_ij   for all i, j
//
// (entrywise mode). Loewner mode instead requires G(x) + 2 beta M <= 0 in the
// matrix sense, i.e. the rate-beta contraction inequality itself.

#include "saop/basis.hpp"
#include "saop/dynamics.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Eigenvalues>

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

namespace saop {

enum class ContractionCheck { Entrywise, Loewner };

struct ContractionSpec {
    Matrix metric;                // M, symmetric positive definite
    double beta = 1.0;            // contraction rate
    double tube_radius = 1.0;     // ell, in the M-norm
    double disturbance_bound = 0.0;  // rho_max
    int ball_samples = 64;
    int check_stride = 10;
    ContractionCheck mode = ContractionCheck::Entrywise;
    double tolerance = 1e-9;  // slack on each inequality, absorbs roundoff

    void validate() const {
        if (metric.rows() < 1 || metric.rows() != metric.cols()) {
            throw std::invalid_argument("ContractionSpec: metric must be square");
        }
        if ((metric - metric.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, metric.cwiseAbs().maxCoeff())) {
            throw std::invalid_argument("ContractionSpec: metric must be symmetric");
        }
        Eigen::LLT<Matrix> llt(metric);
        if (llt.info() != Eigen::Success) throw std::invalid_argument("ContractionSpec: metric must be positive definite");
        if (!(beta > 0.0)) throw std::invalid_argument("ContractionSpec: beta must be positive");
        if (!(tube_radius > 0.0)) throw std::invalid_argument("ContractionSpec: tube radius must be positive");
        if (!(disturbance_bound >= 0.0)) throw std::invalid_argument("ContractionSpec: rho_max must be nonnegative");
        if (ball_samples < 0 || check_stride < 1) {
            throw std::invalid_argument("ContractionSpec: ball_samples >= 0 and check_stride >= 1 required");
        }
    }
};

/// d/dx f(x, u(x)) for the saturated policy u = clip(W phi(x)).
inline Matrix closed_loop_jacobian(const SystemModel& model, const BasisSet& basis, const Vector& w, const Vector& x) {
    const Policy policy(basis, w, model.inputs);
    if (model.has_analytic_jacobian() && basis.has_gradients()) {
        const Vector u = policy(x);
        return model.state_jacobian(x, u) + model.input_jacobian(x, u) * policy.gradient(x);
    }
    const Eigen::Index n = x.size();
    Matrix jac(n, n);
    Vector xp = x;
    Vector xm = x;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double h = 1e-5 * (1.0 + std::abs(x[i]));
        xp[i] = x[i] + h;
        xm[i] = x[i] - h;
        jac.col(i) = (model.field(xp, policy(xp)) - model.field(xm, policy(xm))) / (2.0 * h);
        xp[i] = x[i];
        xm[i] = x[i];
    }
    return jac;
}

/// G = J^T M + M J.
inline Matrix contraction_matrix(const Matrix& jacobian, const Matrix& metric) {
    return jacobian.transpose() * metric + metric * jacobian;
}

namespace detail {

inline double radical_inverse(std::size_t index, int base) {
    double result = 0.0;
    double f = 1.0 / base;
    while (index > 0) {
        result += f * static_cast<double>(index % static_cast<std::size_t>(base));
        index /= static_cast<std::size_t>(base);
        f /= base;
    }
    return result;
}

inline int nth_prime(int k) {
    static constexpr std::array<int, 24> primes{2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31, 37,
                                                41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89};
    if (k >= static_cast<int>(primes.size())) throw std::invalid_argument("ball_points: dimension too large");
    return primes[static_cast<std::size_t>(k)];
}

}  // namespace detail

/// Deterministic points z with |z| <= 1 in R^n from a Halton sequence.
/// Directions come from Box-Muller on Halton pairs; the first half of the
/// points sit on the unit sphere and the rest are spread through the ball.
/// The center is not included.
inline std::vector<Vector> unit_ball_points(int n, int count) {
    std::vector<Vector> points;
    points.reserve(static_cast<std::size_t>(count));
    const int pairs = (n + 1) / 2;
    for (int s = 0; s < count; ++s) {
        const auto idx = static_cast<std::size_t>(s + 1);
        Vector g(2 * pairs);
        for (int p = 0; p < pairs; ++p) {
            const double u1 = std::max(detail::radical_inverse(idx, detail::nth_prime(2 * p)), 1e-12);
            const double u2 = detail::radical_inverse(idx, detail::nth_prime(2 * p + 1));
            const double r = std::sqrt(-2.0 * std::log(u1));
            g[2 * p] = r * std::cos(2.0 * std::numbers::pi * u2);
            g[2 * p + 1] = r * std::sin(2.0 * std::numbers::pi * u2);
        }
        Vector dir = g.head(n);
        const double norm = dir.norm();
        if (norm == 0.0) {
            dir = Vector::Unit(n, 0);
        } else {
            dir /= norm;
        }
        double radius = 1.0;
        if (s >= count / 2) {
            radius = std::pow(detail::radical_inverse(idx, detail::nth_prime(2 * pairs)), 1.0 / n);
        }
        points.push_back(radius * dir);
    }
    return points;
}

/// Offsets d with d^T M d <= ell^2 (center first, then the ball points).
inline std::vector<Vector> metric_ball_offsets(const ContractionSpec& spec) {
    const auto n = static_cast<int>(spec.metric.rows());
    Eigen::LLT<Matrix> llt(spec.metric);
    const Matrix lower = llt.matrixL();
    std::vector<Vector> offsets{Vector::Zero(n)};
    for (const Vector& z : unit_ball_points(n, spec.ball_samples)) {
        // M = L L^T, d = ell L^{-T} z gives d^T M d = ell^2 |z|^2.
        offsets.push_back(spec.tube_radius * lower.transpose().triangularView<Eigen::Upper>().solve(z));
    }
    return offsets;
}

/// Margin of the checked inequality at one state; >= 0 means satisfied.
/// Entrywise: min_ij (-beta m_ij - G_ij). Loewner: -lambda_max of
/// L^{-1} (G + 2 beta M) L^{-T}.
inline double contraction_margin(const Matrix& g, const ContractionSpec& spec, Eigen::Index* worst_i = nullptr,
                                 Eigen::Index* worst_j = nullptr) {
    if (spec.mode == ContractionCheck::Entrywise) {
        const Matrix slack = -spec.beta * spec.metric - g;
        Eigen::Index i = 0;
        Eigen::Index j = 0;
        const double m = slack.minCoeff(&i, &j);
        if (worst_i != nullptr) *worst_i = i;
        if (worst_j != nullptr) *worst_j = j;
        return m;
    }
    Eigen::LLT<Matrix> llt(spec.metric);
    const Matrix lower = llt.matrixL();
    Matrix s = g + 2.0 * spec.beta * spec.metric;
    s = lower.triangularView<Eigen::Lower>().solve(s);
    s = lower.triangularView<Eigen::Lower>().solve(s.transpose()).transpose();
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (s + s.transpose()), Eigen::EigenvaluesOnly);
    if (worst_i != nullptr) *worst_i = 0;
    if (worst_j != nullptr) *worst_j = 0;
    return -es.eigenvalues().maxCoeff();
}

struct TubeViolation {
    double time = 0.0;
    Eigen::Index i = 0;
    Eigen::Index j = 0;
    double margin = 0.0;
};

struct TubeCheckpoint {
    double time = 0.0;
    double worst_margin = 0.0;
};

struct TubeReport {
    bool pass = true;
    std::optional<TubeViolation> first_violation;
    std::vector<TubeCheckpoint> checkpoints;

    double worst_margin() const {
        double m = std::numeric_limits<double>::infinity();
        for (const auto& c : checkpoints) m = std::min(m, c.worst_margin);
        return m;
    }

    nlohmann::json to_json() const {
        nlohmann::json cps = nlohmann::json::array();
        for (const auto& c : checkpoints) cps.push_back({{"t", c.time}, {"worst_margin", c.worst_margin}});
        nlohmann::json j{{"pass", pass}, {"checkpoints", cps}};
        j["worst_margin"] = checkpoints.empty() ? nlohmann::json(nullptr) : nlohmann::json(worst_margin());
        if (first_violation) {
            j["first_violation"] = {{"t", first_violation->time},
                                    {"i", first_violation->i + 1},
                                    {"j", first_violation->j + 1},
                                    {"margin", first_violation->margin}};
        } else {
            j["first_violation"] = nullptr;
        }
        return j;
    }
};

/// Checks the contraction condition on the M-ball of radius ell around every
/// check_stride-th point of the nominal trajectory (and its last point). The
/// ball maximum is estimated on a fixed point set, so it under-approximates
/// the true maximum. With `exhaustive` false the check returns at the first
/// violating checkpoint.
inline TubeReport verify_tube(const SystemModel& model, const BasisSet& basis, const Vector& w,
                              const Trajectory& nominal, const ContractionSpec& spec, bool exhaustive = true) {
    spec.validate();
    if (spec.metric.rows() != model.state_dim) throw std::invalid_argument("verify_tube: metric dimension mismatch");
    const std::vector<Vector> offsets = metric_ball_offsets(spec);

    TubeReport report;
    const std::size_t last = nominal.size() - 1;
    const auto stride = static_cast<std::size_t>(spec.check_stride);
    for (std::size_t k = 0; k <= last; k = (k == last) ? last + 1 : std::min(k + stride, last)) {
        const Vector center = nominal.state(k);
        if (!center.allFinite()) throw std::invalid_argument("verify_tube: nominal trajectory is not finite");

        // Per-entry maximum of G over the sampled ball.
        Matrix g_max = Matrix::Constant(model.state_dim, model.state_dim, -std::numeric_limits<double>::infinity());
        double loewner_margin = std::numeric_limits<double>::infinity();
        for (const Vector& d : offsets) {
            const Matrix g = contraction_matrix(closed_loop_jacobian(model, basis, w, center + d), spec.metric);
            if (spec.mode == ContractionCheck::Entrywise) {
                g_max = g_max.cwiseMax(g);
            } else {
                loewner_margin = std::min(loewner_margin, contraction_margin(g, spec));
            }
        }
        Eigen::Index wi = 0;
        Eigen::Index wj = 0;
        const double margin =
            spec.mode == ContractionCheck::Entrywise ? contraction_margin(g_max, spec, &wi, &wj) : loewner_margin;
        const double t = nominal.times[k];
        report.checkpoints.push_back({t, margin});
        if (margin < -spec.tolerance * std::max(1.0, spec.beta * spec.metric.cwiseAbs().maxCoeff())) {
            if (!report.first_violation) report.first_violation = TubeViolation{t, wi, wj, margin};
            report.pass = false;
            if (!exhaustive) break;
        }
    }
    return report;
}

/// Asymptotic bound 2 ell rho_max / beta on |x - xbar|_M^2.
inline double ultimate_bound(const ContractionSpec& spec) {
    if (!(spec.beta > 0.0)) throw std::invalid_argument("ultimate_bound: beta must be positive");
    return 2.0 * spec.tube_radius * spec.disturbance_bound / spec.beta;
}

/// Transient bound (2 ell rho_max / beta)(1 - exp(-beta t)) for a matched
/// initial state.
inline double bound_envelope(const ContractionSpec& spec, double t) {
    if (t < 0.0) throw std::invalid_argument("bound_envelope: t must be nonnegative");
    return ultimate_bound(spec) * -std::expm1(-spec.beta * t);
}

}  // namespace saop
