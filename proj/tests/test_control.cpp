// PID / FBL+PD / LQR laws, CARE solves, hover linearization against a
// finite-difference oracle, outer loop, and step metrics.

#include "quadsim/control.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace quadsim;

namespace {
QuadParams params() { return QuadParams{}; }
}  // namespace

// ============================================================================
// PID
// ============================================================================

TEST(PidAttitude, ZeroErrorGivesZeroTorque) {
    PidGains g;
    PidState mem;
    for (int i = 0; i < 100; ++i) {
        Vec3 tau = pid_attitude(Vec3::Zero(), 0.01, g, mem);
        EXPECT_DOUBLE_EQ(tau.norm(), 0.0);
    }
}

TEST(PidAttitude, ProportionalOnly) {
    PidGains g;
    g.ki.setZero();
    g.kd.setZero();
    PidState mem;
    const Vec3 e(0.2, -0.1, 0.05);
    for (int i = 0; i < 5; ++i) {
        Vec3 tau = pid_attitude(e, 0.01, g, mem);
        EXPECT_NEAR(tau.x(), g.kp.x() * e.x(), 1e-15);
        EXPECT_NEAR(tau.y(), g.kp.y() * e.y(), 1e-15);
        EXPECT_NEAR(tau.z(), g.kp.z() * e.z(), 1e-15);
    }
}

// Roll gains kp=2.5, ki=0.3, kd=0.6 with e=0.1 rad held 1 s at dt=0.01:
// torque -> 2.5*0.1 + 0.3*(0.1*1) = 0.28.
TEST(PidAttitude, ConstantErrorIntegralValue) {
    PidGains g;  // defaults carry the roll gains
    PidState mem;
    Vec3 tau = Vec3::Zero();
    const Vec3 e(0.1, 0.0, 0.0);
    for (int i = 0; i < 100; ++i) tau = pid_attitude(e, 0.01, g, mem);
    EXPECT_NEAR(tau.x(), 0.28, 1e-3);
}

TEST(PidAttitude, IntegralChannelMemorylessWhenKiZero) {
    PidGains g;
    g.ki.setZero();

    // Two different histories ending with the same (prev_error, error) pair.
    PidState mem_a, mem_b;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> err(-0.5, 0.5);
    for (int i = 0; i < 50; ++i) pid_attitude(Vec3(err(rng), err(rng), err(rng)), 0.01, g, mem_a);
    for (int i = 0; i < 7; ++i) pid_attitude(Vec3(err(rng), err(rng), err(rng)), 0.01, g, mem_b);

    const Vec3 prev(0.1, 0.2, -0.3);
    const Vec3 cur(0.15, 0.1, -0.25);
    pid_attitude(prev, 0.01, g, mem_a);
    pid_attitude(prev, 0.01, g, mem_b);
    Vec3 ta = pid_attitude(cur, 0.01, g, mem_a);
    Vec3 tb = pid_attitude(cur, 0.01, g, mem_b);
    EXPECT_NEAR((ta - tb).norm(), 0.0, 1e-12);
}

// ============================================================================
// Feedback linearization + PD
// ============================================================================

TEST(FblPd, ZeroErrorZeroRatesGiveZeroTorque) {
    RigidBodyState s;
    Vec3 tau = fbl_pd_attitude(s, Vec3::Zero(), FblGains{}, params());
    EXPECT_DOUBLE_EQ(tau.norm(), 0.0);
}

TEST(FblPd, PureCancellationTerm) {
    const auto p = params();
    RigidBodyState s;
    s.attitude_rate = Vec3(0.0, 1.0, 1.0);
    FblGains g;
    g.kp.setZero();
    g.kd.setZero();
    Vec3 tau = fbl_pd_attitude(s, Vec3::Zero(), g, p);
    EXPECT_DOUBLE_EQ(tau.x(), (p.inertia_diag.y() - p.inertia_diag.z()) * 1.0 * 1.0);
}

TEST(FblPd, RollErrorFormula) {
    const auto p = params();
    RigidBodyState s;
    FblGains g;
    g.kp = Vec3(30.0, 30.0, 30.0);
    g.kd = Vec3(8.0, 8.0, 8.0);
    const double e_phi = 0.0873;  // 5 deg
    Vec3 tau = fbl_pd_attitude(s, Vec3(e_phi, 0.0, 0.0), g, p);
    EXPECT_NEAR(tau.x(), p.inertia_diag.x() * 30.0 * e_phi, 1e-12);
    EXPECT_DOUBLE_EQ(tau.y(), 0.0);
    EXPECT_DOUBLE_EQ(tau.z(), 0.0);
}

// ============================================================================
// Hover linearization
// ============================================================================

TEST(LinearizeHover, StructureAndEntries) {
    const auto p = params();
    LinearModel m = linearize_hover(p);
    EXPECT_DOUBLE_EQ(m.B(1, 0), 1.0 / p.inertia_diag.x());  // = 100 with defaults
    EXPECT_DOUBLE_EQ(m.B(3, 1), 1.0 / p.inertia_diag.y());
    EXPECT_DOUBLE_EQ(m.B(5, 2), 1.0 / p.inertia_diag.z());
    // Angle rows pick up only their own rate.
    Vec6 x;
    x << 0.1, 0.0, -0.2, 0.0, 0.3, 0.0;
    EXPECT_DOUBLE_EQ((m.A * x).norm(), 0.0);
    x << 0.0, 0.5, 0.0, -0.25, 0.0, 1.0;
    Vec6 xdot = m.A * x;
    EXPECT_DOUBLE_EQ(xdot[0], 0.5);
    EXPECT_DOUBLE_EQ(xdot[2], -0.25);
    EXPECT_DOUBLE_EQ(xdot[4], 1.0);
    EXPECT_DOUBLE_EQ(xdot[1], 0.0);
}

// Finite-difference Jacobian of the nonlinear attitude dynamics at hover.
TEST(LinearizeHover, MatchesFiniteDifferenceJacobian) {
    const auto p = params();
    const LinearModel m = linearize_hover(p);
    const double h = 1e-5;

    auto attitude_dot = [&](const Vec6 &x, const Vec3 &tau) -> Vec6 {
        RigidBodyState s;
        s.attitude = Vec3(x[0], x[2], x[4]);
        s.attitude_rate = Vec3(x[1], x[3], x[5]);
        Wrench w;
        w.thrust = p.mass_kg * p.gravity;
        w.torque = tau;
        auto d = derivatives(s, w, p);
        Vec6 out;
        out << d.attitude_rate.x(), d.attitude_accel.x(), d.attitude_rate.y(),
            d.attitude_accel.y(), d.attitude_rate.z(), d.attitude_accel.z();
        return out;
    };

    for (int j = 0; j < 6; ++j) {
        Vec6 plus = Vec6::Zero(), minus = Vec6::Zero();
        plus[j] = h;
        minus[j] = -h;
        Vec6 col = (attitude_dot(plus, Vec3::Zero()) - attitude_dot(minus, Vec3::Zero())) /
                   (2.0 * h);
        for (int i = 0; i < 6; ++i) EXPECT_NEAR(col[i], m.A(i, j), 1e-6);
    }
    for (int j = 0; j < 3; ++j) {
        Vec3 plus = Vec3::Zero(), minus = Vec3::Zero();
        plus[j] = h;
        minus[j] = -h;
        Vec6 col =
            (attitude_dot(Vec6::Zero(), plus) - attitude_dot(Vec6::Zero(), minus)) / (2.0 * h);
        for (int i = 0; i < 6; ++i) EXPECT_NEAR(col[i], m.B(i, j), 1e-6);
    }
}

// ============================================================================
// CARE / LQR synthesis
// ============================================================================

TEST(SolveCare, DoubleIntegratorClosedForm) {
    auto sol = solve_care_axis(1.0, 1.0, 0.0, 1.0);
    EXPECT_NEAR(sol.k1, 1.0, 1e-12);
    EXPECT_NEAR(sol.k2, std::sqrt(2.0), 1e-12);

    Eigen::Matrix2d A;
    A << 0, 1, 0, 0;
    Eigen::Vector2d B(0, 1);
    Eigen::Matrix2d Q = Eigen::Vector2d(1.0, 0.0).asDiagonal();
    Eigen::Matrix<double, 1, 1> R;
    R << 1.0;
    EXPECT_LT(care_residual(A, B, Q, R, sol.P), 1e-12);
}

TEST(SolveLqr, DefaultWeightsSatisfyResidualAndHurwitz) {
    const auto p = params();
    const LinearModel m = linearize_hover(p);
    const GainMatrix g = solve_lqr(m, LqrWeights{});

    const Mat6 closed = m.A - m.B * g.K;
    Eigen::EigenSolver<Mat6> eigs(closed);
    EXPECT_LT(eigs.eigenvalues().real().maxCoeff(), -1e-6);
    // Roll gain k1 = sqrt(q1/r) independent of inertia.
    EXPECT_NEAR(g.K(0, 0), std::sqrt(5.0 / 0.01), 1e-9);
}

TEST(SolveLqr, CostScalingInvariance) {
    const auto p = params();
    const LinearModel m = linearize_hover(p);
    LqrWeights w;
    const GainMatrix g1 = solve_lqr(m, w);
    LqrWeights scaled;
    scaled.q_diag = 37.5 * w.q_diag;
    scaled.r_diag = 37.5 * w.r_diag;
    const GainMatrix g2 = solve_lqr(m, scaled);
    EXPECT_LT((g1.K - g2.K).norm(), 1e-9);
}

TEST(SolveLqr, RandomWeightsPropertySweep) {
    const auto p = params();
    const LinearModel m = linearize_hover(p);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> log_q(-2.0, 2.0);
    std::uniform_real_distribution<double> log_r(-3.0, 1.0);

    for (int trial = 0; trial < 200; ++trial) {
        LqrWeights w;
        for (int axis = 0; axis < 3; ++axis) {
            w.q_diag[2 * axis] = std::pow(10.0, log_q(rng));
            w.q_diag[2 * axis + 1] = std::pow(10.0, log_q(rng)) * 0.1;
            w.r_diag[axis] = std::pow(10.0, log_r(rng));
        }
        GainMatrix g;
        Mat6 P = Mat6::Zero();
        for (int axis = 0; axis < 3; ++axis) {
            auto sol = solve_care_axis(m.B(2 * axis + 1, axis), w.q_diag[2 * axis],
                                       w.q_diag[2 * axis + 1], w.r_diag[axis]);
            P.block<2, 2>(2 * axis, 2 * axis) = sol.P;
        }
        g = solve_lqr(m, w);

        Mat6 Q = Mat6::Zero();
        Q.diagonal() = w.q_diag;
        Eigen::Matrix3d R = w.r_diag.asDiagonal();
        EXPECT_LE(care_residual(m.A, m.B, Q, R, P), 1e-9);

        // P symmetric positive semidefinite.
        EXPECT_LT((P - P.transpose()).norm(), 1e-12);
        Eigen::SelfAdjointEigenSolver<Mat6> pe(P);
        EXPECT_GE(pe.eigenvalues().minCoeff(), -1e-10);

        Eigen::EigenSolver<Mat6> eigs(m.A - m.B * g.K);
        EXPECT_LT(eigs.eigenvalues().real().maxCoeff(), -1e-6);
    }
}

TEST(SolveLqr, RejectsInvalidWeights) {
    const LinearModel m = linearize_hover(params());
    LqrWeights w;
    w.r_diag[1] = 0.0;
    EXPECT_THROW(solve_lqr(m, w), std::invalid_argument);
    LqrWeights w2;
    w2.q_diag[0] = 0.0;  // angle not detected by the cost
    EXPECT_THROW(solve_lqr(m, w2), std::invalid_argument);
}

// ============================================================================
// LQR regulation law
// ============================================================================

TEST(LqrAttitude, ZeroErrorZeroRatesGiveZeroTorque) {
    const GainMatrix g = solve_lqr(linearize_hover(params()), LqrWeights{});
    RigidBodyState s;
    EXPECT_DOUBLE_EQ(lqr_attitude(s, Vec3::Zero(), g).norm(), 0.0);
}

TEST(LqrAttitude, PureRateIsDamped) {
    const GainMatrix g = solve_lqr(linearize_hover(params()), LqrWeights{});
    RigidBodyState s;
    s.attitude_rate.x() = 1.0;
    Vec3 tau = lqr_attitude(s, Vec3::Zero(), g);
    EXPECT_LT(tau.x(), 0.0);
}

TEST(LqrAttitude, PositiveErrorGivesPositiveTorque) {
    const GainMatrix g = solve_lqr(linearize_hover(params()), LqrWeights{});
    RigidBodyState s;
    Vec3 tau = lqr_attitude(s, Vec3(0.1, 0.0, 0.0), g);
    EXPECT_GT(tau.x(), 0.0);
}

// ============================================================================
// Outer loop
// ============================================================================

TEST(OuterLoop, ZeroErrorGivesZeroTilt) {
    const auto p = params();
    auto cmd = outer_loop_pd(Vec3::Zero(), Vec3::Zero(), 0.0, p.mass_kg * p.gravity,
                             OuterLoopGains{}, p);
    EXPECT_DOUBLE_EQ(cmd.phi_cmd, 0.0);
    EXPECT_DOUBLE_EQ(cmd.theta_cmd, 0.0);
}

TEST(OuterLoop, PositiveXErrorPitchesForward) {
    const auto p = params();
    auto cmd = outer_loop_pd(Vec3(0.5, 0.0, 0.0), Vec3::Zero(), 0.0,
                             p.mass_kg * p.gravity, OuterLoopGains{}, p);
    EXPECT_LT(cmd.theta_cmd, 0.0);  // xdd ~ -(T/m) theta
    EXPECT_DOUBLE_EQ(cmd.phi_cmd, 0.0);
}

TEST(OuterLoop, YawRotationMapsWorldErrorIntoBodyFrame) {
    const auto p = params();
    // Facing +y (yaw 90 deg): +x world acceleration needs negative roll.
    auto cmd = outer_loop_pd(Vec3(0.5, 0.0, 0.0), Vec3::Zero(), M_PI / 2.0,
                             p.mass_kg * p.gravity, OuterLoopGains{}, p);
    EXPECT_LT(cmd.phi_cmd, 0.0);
    EXPECT_NEAR(cmd.theta_cmd, 0.0, 1e-12);
}

TEST(OuterLoop, SaturatesAtTiltLimit) {
    const auto p = params();
    OuterLoopGains g;
    auto cmd = outer_loop_pd(Vec3(100.0, -100.0, 0.0), Vec3::Zero(), 0.0,
                             p.mass_kg * p.gravity, g, p);
    EXPECT_DOUBLE_EQ(cmd.theta_cmd, -g.tilt_limit_rad);
    EXPECT_DOUBLE_EQ(cmd.phi_cmd, -g.tilt_limit_rad);
}

TEST(OuterLoop, RejectsNonPositiveThrust) {
    EXPECT_THROW(outer_loop_pd(Vec3::Zero(), Vec3::Zero(), 0.0, 0.0, OuterLoopGains{},
                               params()),
                 std::invalid_argument);
}

// ============================================================================
// Altitude PID
// ============================================================================

TEST(AltitudePid, HoverFeedforward) {
    const auto p = params();
    AltitudePidState mem;
    EXPECT_DOUBLE_EQ(altitude_pid(0.0, 0.01, OuterLoopGains{}, mem, p),
                     p.mass_kg * p.gravity);
}

TEST(AltitudePid, PositiveErrorRaisesThrust) {
    const auto p = params();
    AltitudePidState mem;
    EXPECT_GT(altitude_pid(1.0, 0.01, OuterLoopGains{}, mem, p), p.mass_kg * p.gravity);
}

TEST(AltitudePid, IntegralClampsUnderSustainedError) {
    const auto p = params();
    OuterLoopGains g;
    AltitudePidState mem;
    for (int i = 0; i < 20000; ++i) altitude_pid(1.0, 0.01, g, mem, p);
    EXPECT_DOUBLE_EQ(mem.integral, g.alt_integral_limit);
    // Output stays within the actuator ceiling.
    EXPECT_LE(altitude_pid(1.0, 0.01, g, mem, p), p.max_thrust());
}

// ============================================================================
// Step metrics
// ============================================================================

TEST(StepMetricsSuite, ExactStep) {
    std::vector<std::pair<double, double>> trace;
    for (int i = 0; i <= 600; ++i) trace.emplace_back(i * 0.01, 1.0);
    auto m = step_metrics(trace, 1.0);
    EXPECT_DOUBLE_EQ(m.rise_time_s, 0.0);
    EXPECT_DOUBLE_EQ(m.overshoot_pct, 0.0);
    EXPECT_DOUBLE_EQ(m.settling_time_s, 0.0);
    EXPECT_TRUE(m.settled);
}

// First-order response 1 - exp(-t/tau): rise = ln(9) tau, settling(2%) =
// ln(50) tau, no overshoot.
TEST(StepMetricsSuite, FirstOrderAnalytic) {
    std::vector<std::pair<double, double>> trace;
    const double dt = 0.001;
    for (int i = 0; i <= 8000; ++i) {
        const double t = i * dt;
        trace.emplace_back(t, 1.0 - std::exp(-t));
    }
    auto m = step_metrics(trace, 1.0);
    EXPECT_TRUE(m.settled);
    EXPECT_NEAR(m.rise_time_s, std::log(9.0), 0.005);
    EXPECT_NEAR(m.settling_time_s, std::log(50.0), 0.005);
    EXPECT_DOUBLE_EQ(m.overshoot_pct, 0.0);
}

// Second-order underdamped response: peak overshoot exp(-pi z / sqrt(1-z^2)).
TEST(StepMetricsSuite, SecondOrderOvershoot) {
    const double zeta = 0.5;
    const double wn = 4.0;
    const double wd = wn * std::sqrt(1.0 - zeta * zeta);
    std::vector<std::pair<double, double>> trace;
    const double dt = 0.001;
    for (int i = 0; i <= 9000; ++i) {
        const double t = i * dt;
        const double y = 1.0 - std::exp(-zeta * wn * t) *
                                   (std::cos(wd * t) + zeta / std::sqrt(1.0 - zeta * zeta) *
                                                           std::sin(wd * t));
        trace.emplace_back(t, y);
    }
    auto m = step_metrics(trace, 1.0);
    const double expected = 100.0 * std::exp(-M_PI * zeta / std::sqrt(1.0 - zeta * zeta));
    EXPECT_NEAR(m.overshoot_pct, expected, 0.5);
    EXPECT_TRUE(m.settled);
    EXPECT_GE(m.settling_time_s, m.rise_time_s);
}

TEST(StepMetricsSuite, DidNotSettleMarker) {
    std::vector<std::pair<double, double>> trace;
    const double dt = 0.001;
    for (int i = 0; i <= 7000; ++i) {
        const double t = i * dt;
        trace.emplace_back(t, 1.0 + 0.2 * std::sin(3.0 * t));  // sustained oscillation
    }
    auto m = step_metrics(trace, 1.0);
    EXPECT_FALSE(m.settled);
}

TEST(StepMetricsSuite, RejectsBadInput) {
    std::vector<std::pair<double, double>> trace{{0.0, 0.0}, {1.0, 1.0}};
    EXPECT_THROW(step_metrics(trace, 1.0), std::invalid_argument);  // < 5 s
    std::vector<std::pair<double, double>> longer;
    for (int i = 0; i <= 600; ++i) longer.emplace_back(i * 0.01, 0.5);
    EXPECT_THROW(step_metrics(longer, 0.0), std::invalid_argument);  // zero target
}
