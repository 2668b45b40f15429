#include "saop/bench.hpp"
#include "saop/contraction.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace saop;

namespace {

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

Vector reference_weights() { return vec({-1.0629, -2.7517, 0.0, -1.7939, -0.0987, -2.1474}); }

struct LinearLoop {
    SystemModel model;
    BasisSet basis;
};

// x' = A x + B u with u = K x through a linear basis; no input saturation.
LinearLoop linear_loop(const Matrix& a, const Matrix& b, bool analytic) {
    LinearLoop l;
    l.model.state_dim = static_cast<int>(a.rows());
    l.model.input_dim = static_cast<int>(b.cols());
    l.model.field = [a, b](const Vector& x, const Vector& u) -> Vector { return a * x + b * u; };
    l.model.inputs = Box::unbounded(static_cast<int>(b.cols()));
    if (analytic) {
        l.model.state_jacobian = [a](const Vector&, const Vector&) -> Matrix { return a; };
        l.model.input_jacobian = [b](const Vector&, const Vector&) -> Matrix { return b; };
    }
    std::vector<int> coords;
    for (int i = 0; i < a.rows(); ++i) coords.push_back(i);
    l.basis = make_linear(coords, Vector::Zero(a.rows()));
    return l;
}

Vector flatten(const Matrix& k) {
    Vector w(k.size());
    for (Eigen::Index r = 0; r < k.rows(); ++r) w.segment(r * k.cols(), k.cols()) = k.row(r).transpose();
    return w;
}

Trajectory grid_trajectory(const SystemModel& model, const BasisSet& basis, const Vector& w, const Vector& x0,
                           double horizon, double dt) {
    CostFunctional c;
    c.running = [](const Vector&, const Vector&) { return 0.0; };
    c.terminal = [](const Vector&, const Vector&) { return 0.0; };
    c.horizon = horizon;
    return simulate(model, Policy(basis, w, model.inputs), x0, c, dt).trajectory;
}

ContractionSpec spec_for(const Matrix& metric, double beta, double ell, ContractionCheck mode) {
    ContractionSpec s;
    s.metric = metric;
    s.beta = beta;
    s.tube_radius = ell;
    s.mode = mode;
    return s;
}

SystemModel scalar_linear(double a) {
    SystemModel m;
    m.state_dim = 1;
    m.input_dim = 1;
    m.field = [a](const Vector& x, const Vector&) -> Vector { return a * x; };
    m.inputs = Box::unbounded(1);
    return m;
}

}  // namespace

TEST(ClosedLoopJacobian, LinearPolicyGivesAPlusBK) {
    const Matrix a = (Matrix(2, 2) << 0.5, 1.0, -2.0, -0.3).finished();
    const Matrix b = (Matrix(2, 1) << 0.0, 1.0).finished();
    const Matrix k = (Matrix(1, 2) << -1.5, -0.7).finished();
    const Vector x = vec({0.4, -1.1});
    const LinearLoop exact = linear_loop(a, b, true);
    const LinearLoop fd = linear_loop(a, b, false);
    EXPECT_LE((closed_loop_jacobian(exact.model, exact.basis, flatten(k), x) - (a + b * k)).cwiseAbs().maxCoeff(),
              1e-15);
    EXPECT_LE((closed_loop_jacobian(fd.model, fd.basis, flatten(k), x) - (a + b * k)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(ClosedLoopJacobian, LtiSymmetrizedCornerIsMinusTwo) {
    const PlanningProblem p = bench::lti_nonquadratic();
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> unit(-10.0, 10.0);
    for (int trial = 0; trial < 50; ++trial) {
        Vector w(6);
        for (auto& v : w) v = unit(rng);
        const Vector x = vec({unit(rng) / 2, unit(rng) / 2});
        const Matrix j = closed_loop_jacobian(p.model, p.basis, w, x);
        EXPECT_DOUBLE_EQ((j + j.transpose())(0, 0), -2.0);
    }
}

TEST(ClosedLoopJacobian, ZeroField) {
    SystemModel m;
    m.state_dim = 3;
    m.input_dim = 1;
    m.field = [](const Vector& x, const Vector&) -> Vector { return Vector::Zero(x.size()); };
    m.inputs = Box::unbounded(1);
    const BasisSet b = make_linear({0, 1, 2}, Vector::Zero(3));
    EXPECT_EQ(closed_loop_jacobian(m, b, vec({1.0, 2.0, 3.0}), vec({0.1, 0.2, 0.3})), Matrix::Zero(3, 3));
}

TEST(ClosedLoopJacobian, SaturatedChannelContributesNothing) {
    const LinearLoop l = linear_loop(Matrix::Zero(1, 1), Matrix::Ones(1, 1), false);
    SystemModel model = l.model;
    model.inputs = Box::uniform(1, -1.0, 1.0);
    EXPECT_NEAR(closed_loop_jacobian(model, l.basis, vec({-2.0}), vec({5.0}))(0, 0), 0.0, 1e-12);
    EXPECT_NEAR(closed_loop_jacobian(model, l.basis, vec({-2.0}), vec({0.1}))(0, 0), -2.0, 1e-6);
}

TEST(VerifyTube, ScalarDecayPasses) {
    const SystemModel m = scalar_linear(-1.0);
    const BasisSet b = make_linear({0}, Vector::Zero(1));
    const Trajectory t = grid_trajectory(m, b, vec({0.0}), vec({1.0}), 1.0, 0.01);
    for (double ell : {0.1, 1.0, 10.0}) {
        const TubeReport r = verify_tube(m, b, vec({0.0}), t, spec_for(Matrix::Identity(1, 1), 0.5, ell, {}));
        EXPECT_TRUE(r.pass);
        EXPECT_NEAR(r.worst_margin(), 1.5, 1e-9);
    }
}

TEST(VerifyTube, ScalarGrowthFailsAtFirstCheck) {
    const SystemModel m = scalar_linear(1.0);
    const BasisSet b = make_linear({0}, Vector::Zero(1));
    const Trajectory t = grid_trajectory(m, b, vec({0.0}), vec({1.0}), 1.0, 0.01);
    const TubeReport r = verify_tube(m, b, vec({0.0}), t, spec_for(Matrix::Identity(1, 1), 0.5, 1.0, {}));
    EXPECT_FALSE(r.pass);
    ASSERT_TRUE(r.first_violation.has_value());
    EXPECT_EQ(r.first_violation->time, 0.0);
    EXPECT_NEAR(r.first_violation->margin, -2.5, 1e-9);
    EXPECT_EQ(r.checkpoints.size(), 11u);
}

TEST(VerifyTube, CheckpointsFollowStrideAndIncludeEnd) {
    const SystemModel m = scalar_linear(-1.0);
    const BasisSet b = make_linear({0}, Vector::Zero(1));
    const Trajectory t = grid_trajectory(m, b, vec({0.0}), vec({1.0}), 0.25, 0.01);
    ContractionSpec s = spec_for(Matrix::Identity(1, 1), 0.5, 1.0, {});
    s.check_stride = 10;
    const TubeReport r = verify_tube(m, b, vec({0.0}), t, s);
    ASSERT_EQ(r.checkpoints.size(), 4u);
    EXPECT_NEAR(r.checkpoints[2].time, 0.2, 1e-12);
    EXPECT_NEAR(r.checkpoints[3].time, 0.25, 1e-12);
}

TEST(VerifyTube, ReferenceWeightsPassOnLti) {
    const PlanningProblem p = bench::lti_nonquadratic();
    const Vector w = reference_weights();
    const TubeReport r = verify_tube(p.model, p.basis, w, p.rollout(w).trajectory, *p.contraction);
    EXPECT_TRUE(r.pass);
    EXPECT_GE(r.worst_margin(), -1e-9);
}

TEST(VerifyTube, PositiveLinearWeightsFailOnLti) {
    const PlanningProblem p = bench::lti_nonquadratic();
    Vector w = reference_weights();
    w[0] = 1.0;
    w[1] = 1.0;
    const TubeReport r = verify_tube(p.model, p.basis, w, p.rollout(w).trajectory, *p.contraction);
    EXPECT_FALSE(r.pass);
}

TEST(VerifyTube, AgreesWithClosedFormOnRandomLinearSystems) {
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> beta_dist(0.2, 2.0);
    int stable = 0;
    int unstable = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 2 + trial % 2;
        Matrix a(n, n);
        for (auto& v : a.reshaped()) v = normal(rng);
        a.diagonal().array() -= 1.5 * std::abs(normal(rng));
        Matrix b(n, 1);
        for (auto& v : b.reshaped()) v = normal(rng);
        Matrix k(1, n);
        for (auto& v : k.reshaped()) v = normal(rng);
        const double beta = beta_dist(rng);
        const Matrix cl = a + b * k;
        const Matrix g = cl + cl.transpose();
        const double lambda_max = Eigen::SelfAdjointEigenSolver<Matrix>(g).eigenvalues().maxCoeff();
        if (std::abs(lambda_max + 2.0 * beta) < 1e-6) continue;
        const bool loewner_expected = lambda_max <= -2.0 * beta;
        const bool entrywise_expected = ((g + beta * Matrix::Identity(n, n)).array() <= 0.0).all();
        (loewner_expected ? stable : unstable)++;

        const LinearLoop l = linear_loop(a, b, trial % 3 != 0);
        const Vector w = flatten(k);
        const Trajectory t = grid_trajectory(l.model, l.basis, w, Vector::Constant(n, 0.5), 0.5, 0.05);
        const ContractionSpec loewner = spec_for(Matrix::Identity(n, n), beta, 1.0, ContractionCheck::Loewner);
        const ContractionSpec entrywise = spec_for(Matrix::Identity(n, n), beta, 1.0, ContractionCheck::Entrywise);
        EXPECT_EQ(verify_tube(l.model, l.basis, w, t, loewner).pass, loewner_expected) << "trial " << trial;
        EXPECT_EQ(verify_tube(l.model, l.basis, w, t, entrywise).pass, entrywise_expected) << "trial " << trial;
    }
    EXPECT_GT(stable, 5);
    EXPECT_GT(unstable, 5);
}

TEST(VerifyTube, MonotoneInBeta) {
    const PlanningProblem p = bench::lti_nonquadratic();
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> unit(-4.0, 0.5);
    for (int trial = 0; trial < 20; ++trial) {
        Vector w(6);
        for (auto& v : w) v = unit(rng);
        const Trajectory t = p.rollout(w).trajectory;
        ContractionSpec s = *p.contraction;
        s.check_stride = 50;
        for (ContractionCheck mode : {ContractionCheck::Entrywise, ContractionCheck::Loewner}) {
            s.mode = mode;
            bool passed_before = false;
            for (double beta : {4.0, 2.0, 1.0, 0.5, 0.1}) {
                s.beta = beta;
                const bool pass = verify_tube(p.model, p.basis, w, t, s).pass;
                if (passed_before) {
                    EXPECT_TRUE(pass) << "beta " << beta;
                }
                passed_before = passed_before || pass;
            }
        }
    }
}

TEST(VerifyTube, ReportSerializes) {
    const SystemModel m = scalar_linear(1.0);
    const BasisSet b = make_linear({0}, Vector::Zero(1));
    const Trajectory t = grid_trajectory(m, b, vec({0.0}), vec({1.0}), 0.1, 0.01);
    const nlohmann::json j = verify_tube(m, b, vec({0.0}), t, spec_for(Matrix::Identity(1, 1), 0.5, 1.0, {})).to_json();
    EXPECT_EQ(j["pass"], false);
    EXPECT_EQ(j["checkpoints"].size(), 2u);
    EXPECT_TRUE(j["checkpoints"][0].contains("worst_margin"));
}

TEST(BallPoints, InsideUnitBallWithBoundaryHalf) {
    for (int n : {1, 2, 3, 5}) {
        const auto pts = unit_ball_points(n, 64);
        ASSERT_EQ(pts.size(), 64u);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            EXPECT_LE(pts[i].norm(), 1.0 + 1e-12);
            if (i < 32) {
                EXPECT_NEAR(pts[i].norm(), 1.0, 1e-12);
            }
        }
    }
}

TEST(BallPoints, MetricOffsetsLieInEllipsoid) {
    ContractionSpec s = spec_for((Matrix(2, 2) << 2.0, 0.5, 0.5, 1.0).finished(), 1.0, 0.7, {});
    const auto offsets = metric_ball_offsets(s);
    ASSERT_EQ(offsets.size(), 65u);
    EXPECT_EQ(offsets.front(), Vector::Zero(2));
    for (const Vector& d : offsets) EXPECT_LE(d.dot(s.metric * d), 0.49 + 1e-12);
}

TEST(UltimateBound, LtiSettings) {
    EXPECT_EQ(ultimate_bound(bench::lti_contraction()), 0.5);
}

TEST(UltimateBound, Arithmetic) {
    ContractionSpec s = spec_for(Matrix::Identity(1, 1), 1.5, 3.0, {});
    s.disturbance_bound = 1.0;
    EXPECT_DOUBLE_EQ(ultimate_bound(s), 4.0);
    s.disturbance_bound = 0.0;
    EXPECT_EQ(ultimate_bound(s), 0.0);
}

TEST(BoundEnvelope, Values) {
    const ContractionSpec s = bench::lti_contraction();
    EXPECT_EQ(bound_envelope(s, 0.0), 0.0);
    EXPECT_NEAR(bound_envelope(s, 1.0), 0.43233, 1e-5);
    EXPECT_NEAR(bound_envelope(s, 1e3), ultimate_bound(s), 1e-15);
    EXPECT_THROW(bound_envelope(s, -1.0), std::invalid_argument);
}

TEST(BoundEnvelope, DisturbedVerifiedLoopStaysInside) {
    const PlanningProblem p = bench::lti_nonquadratic();
    const Vector w = reference_weights();
    const ContractionSpec s = *p.contraction;
    const Trajectory nominal = p.rollout(w).trajectory;
    ASSERT_TRUE(verify_tube(p.model, p.basis, w, nominal, s).pass);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Disturbance d = random_disturbance(2, s.disturbance_bound, 0.1, p.cost.horizon, seed);
        const Trajectory disturbed = p.rollout(w, &d).trajectory;
        for (std::size_t k = 0; k < nominal.size(); ++k) {
            const Vector e = disturbed.state(k) - nominal.state(k);
            EXPECT_LE(e.dot(s.metric * e), bound_envelope(s, nominal.times[k]) * 1.05) << "seed " << seed << " k " << k;
        }
    }
}

TEST(ContractionSpec, Validation) {
    ContractionSpec s = spec_for(Matrix::Identity(2, 2), 1.0, 1.0, {});
    EXPECT_NO_THROW(s.validate());
    s.metric(0, 1) = 0.3;
    EXPECT_THROW(s.validate(), std::invalid_argument);
    s = spec_for(-Matrix::Identity(2, 2), 1.0, 1.0, {});
    EXPECT_THROW(s.validate(), std::invalid_argument);
    s = spec_for(Matrix::Identity(2, 2), 0.0, 1.0, {});
    EXPECT_THROW(s.validate(), std::invalid_argument);
}
