// Attitude control laws (PID, feedback linearization + PD, LQR), hover
// linearization with continuous-time Riccati synthesis, outer-loop PD /
// altitude PID, and step-response metric extraction.
#pragma once

#include "quadsim/dynamics.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <limits>
#include <utility>
#include <vector>

namespace quadsim {

using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat63 = Eigen::Matrix<double, 6, 3>;
using Mat36 = Eigen::Matrix<double, 3, 6>;
using Vec6 = Eigen::Matrix<double, 6, 1>;

// =============================================================================
// PID
// =============================================================================

/// Per-axis PID gains for (roll, pitch, yaw) torque channels.
struct PidGains {
    Vec3 kp{2.5, 2.5, 1.8};
    Vec3 ki{0.3, 0.3, 0.2};
    Vec3 kd{0.6, 0.6, 0.4};
    double integral_limit = 1.0;  // anti-windup clamp per axis
};

/// Integrator and previous-error memory; one instance per controller.
struct PidState {
    Vec3 integral = Vec3::Zero();
    Vec3 prev_error = Vec3::Zero();
    bool has_prev = false;
};

/// Classical PID on attitude error with trapezoidal integral and
/// backward-difference derivative. The first call after reset integrates a
/// rectangle and reports zero derivative (no setpoint kick).
inline Vec3 pid_attitude(const Vec3 &error, double dt, const PidGains &gains,
                         PidState &memory) {
    if (!(dt > 0.0)) throw std::invalid_argument("pid_attitude: dt must be positive");
    Vec3 derivative = Vec3::Zero();
    if (memory.has_prev) {
        memory.integral += 0.5 * (error + memory.prev_error) * dt;
        derivative = (error - memory.prev_error) / dt;
    } else {
        memory.integral += error * dt;
        memory.has_prev = true;
    }
    for (int i = 0; i < 3; ++i) {
        memory.integral[i] =
            std::clamp(memory.integral[i], -gains.integral_limit, gains.integral_limit);
    }
    memory.prev_error = error;
    return gains.kp.cwiseProduct(error) + gains.ki.cwiseProduct(memory.integral) +
           gains.kd.cwiseProduct(derivative);
}

// =============================================================================
// Feedback linearization + PD
// =============================================================================

/// PD gains for the feedback-linearized attitude loop.
struct FblGains {
    Vec3 kp{30.0, 30.0, 30.0};
    Vec3 kd{8.0, 8.0, 8.0};
};

/// Cancel the gyroscopic cross terms exactly and impose PD error dynamics:
///
///   tau_phi   = Ix (kp e_phi + kd ed_phi)     + (Iy - Iz) thetad psid
///   tau_theta = Iy (kp e_theta + kd ed_theta) + (Iz - Ix) phid   psid
///   tau_psi   = Iz (kp e_psi + kd ed_psi)     + (Ix - Iy) phid   thetad
inline Vec3 fbl_pd_attitude(const RigidBodyState &state, const Vec3 &setpoint,
                            const FblGains &gains, const QuadParams &params) {
    Vec3 error;
    for (int i = 0; i < 3; ++i) error[i] = wrap_angle(setpoint[i] - state.attitude[i]);
    const Vec3 error_rate = -state.attitude_rate;

    const Vec3 accel_des =
        gains.kp.cwiseProduct(error) + gains.kd.cwiseProduct(error_rate);
    const double Ix = params.inertia_diag.x();
    const double Iy = params.inertia_diag.y();
    const double Iz = params.inertia_diag.z();
    const Vec3 &rate = state.attitude_rate;

    Vec3 torque;
    torque.x() = Ix * accel_des.x() + (Iy - Iz) * rate.y() * rate.z();
    torque.y() = Iy * accel_des.y() + (Iz - Ix) * rate.x() * rate.z();
    torque.z() = Iz * accel_des.z() + (Ix - Iy) * rate.x() * rate.y();
    return torque;
}

// =============================================================================
// Hover linearization and LQR
// =============================================================================

/// Linear attitude model xdot = A x + B u with state
/// x = [phi, phid, theta, thetad, psi, psid] and input u = [tau_phi,
/// tau_theta, tau_psi]. At hover the gyroscopic terms vanish, so each axis is
/// an independent double integrator.
struct LinearModel {
    Mat6 A;
    Mat63 B;
};

inline LinearModel linearize_hover(const QuadParams &params) {
    LinearModel m;
    m.A.setZero();
    m.B.setZero();
    for (int axis = 0; axis < 3; ++axis) {
        m.A(2 * axis, 2 * axis + 1) = 1.0;
        m.B(2 * axis + 1, axis) = 1.0 / params.inertia_diag[axis];
    }
    return m;
}

/// Diagonal LQR weights: q_diag ordered like the state vector, r_diag per
/// torque channel.
struct LqrWeights {
    Vec6 q_diag{(Vec6() << 5.0, 0.1, 5.0, 0.1, 1.0, 0.05).finished()};
    Vec3 r_diag{0.01, 0.01, 0.01};
};

/// State-feedback gain u = -K x with A - B K Hurwitz.
struct GainMatrix {
    Mat36 K;
};

/// Closed-form stabilizing CARE solution for one double-integrator axis
///
///   A = [0 1; 0 0],  B = [0; b],  Q = diag(q_angle, q_rate),  R = [r].
///
/// With s = b^2 / r the unique stabilizing solution is
///
///   p12 = sqrt(q_angle / s)
///   p22 = sqrt((2 p12 + q_rate) / s)
///   p11 = s p12 p22
///
/// and K = (b/r) [p12, p22]. Requires r > 0 and q_angle > 0 (a zero angle
/// weight leaves the angle undetected by the cost and the closed loop
/// marginal).
struct Care2Solution {
    double k1 = 0.0;
    double k2 = 0.0;
    Eigen::Matrix2d P;
};

inline Care2Solution solve_care_axis(double b, double q_angle, double q_rate, double r) {
    if (!(r > 0.0)) throw std::invalid_argument("solve_care_axis: R must be positive");
    if (!(q_angle > 0.0) || q_rate < 0.0) {
        throw std::invalid_argument(
            "solve_care_axis: need q_angle > 0 and q_rate >= 0 for a stabilizing gain");
    }
    if (b == 0.0 || !std::isfinite(b)) {
        throw std::invalid_argument("solve_care_axis: input gain b must be nonzero");
    }
    const double s = b * b / r;
    Care2Solution sol;
    const double p12 = std::sqrt(q_angle / s);
    const double p22 = std::sqrt((2.0 * p12 + q_rate) / s);
    const double p11 = s * p12 * p22;
    sol.P << p11, p12, p12, p22;
    sol.k1 = b * p12 / r;
    sol.k2 = b * p22 / r;
    return sol;
}

/// Frobenius norm of the CARE residual A'P + PA - P B R^-1 B' P + Q.
template <typename MatA, typename MatB, typename MatQ, typename MatR, typename MatP>
double care_residual(const MatA &A, const MatB &B, const MatQ &Q, const MatR &R,
                     const MatP &P) {
    const auto res =
        (A.transpose() * P + P * A - P * B * R.inverse() * B.transpose() * P + Q).eval();
    return res.norm();
}

/// Solve K = R^-1 B' P with P the stabilizing CARE solution. The hover model
/// is block-decoupled, so the three axes are solved in closed form and
/// re-verified jointly: residual Frobenius norm must be <= 1e-9 and A - B K
/// strictly Hurwitz, otherwise the solve is rejected.
inline GainMatrix solve_lqr(const LinearModel &model, const LqrWeights &weights) {
    // The solver relies on the double-integrator sparsity of the hover model.
    Mat6 expected_a = Mat6::Zero();
    for (int axis = 0; axis < 3; ++axis) expected_a(2 * axis, 2 * axis + 1) = 1.0;
    if ((model.A - expected_a).norm() > 1e-12) {
        throw std::invalid_argument("solve_lqr: A is not a hover linearization");
    }

    GainMatrix gain;
    gain.K.setZero();
    Mat6 P = Mat6::Zero();
    for (int axis = 0; axis < 3; ++axis) {
        const double b = model.B(2 * axis + 1, axis);
        const auto sol = solve_care_axis(b, weights.q_diag[2 * axis],
                                         weights.q_diag[2 * axis + 1], weights.r_diag[axis]);
        gain.K(axis, 2 * axis) = sol.k1;
        gain.K(axis, 2 * axis + 1) = sol.k2;
        P.block<2, 2>(2 * axis, 2 * axis) = sol.P;
    }

    Mat6 Q = Mat6::Zero();
    Q.diagonal() = weights.q_diag;
    Eigen::Matrix3d R = weights.r_diag.asDiagonal();
    const double residual = care_residual(model.A, model.B, Q, R, P);
    if (!(residual <= 1e-9)) {
        throw std::runtime_error("solve_lqr: CARE residual above tolerance");
    }

    const Mat6 closed_loop = model.A - model.B * gain.K;
    const Eigen::EigenSolver<Mat6> eigs(closed_loop);
    if (eigs.eigenvalues().real().maxCoeff() >= 0.0) {
        throw std::runtime_error("solve_lqr: closed loop is not Hurwitz");
    }
    return gain;
}

/// Regulation law u = -K x expressed on the error state
/// x_err = [e_phi, -phid, e_theta, -thetad, e_psi, -psid], so zero error and
/// zero rates command zero torque.
inline Vec3 lqr_attitude(const RigidBodyState &state, const Vec3 &setpoint,
                         const GainMatrix &gain) {
    Vec6 x_err;
    for (int axis = 0; axis < 3; ++axis) {
        x_err[2 * axis] = wrap_angle(setpoint[axis] - state.attitude[axis]);
        x_err[2 * axis + 1] = -state.attitude_rate[axis];
    }
    return gain.K * x_err;
}

// =============================================================================
// Outer loop: position PD and altitude PID
// =============================================================================

struct OuterLoopGains {
    double kp_xy = 1.5;
    double kd_xy = 1.8;
    double tilt_limit_rad = 0.349;  // 20 deg
    double alt_kp = 10.0;
    double alt_ki = 6.0;
    double alt_kd = 6.0;
    double alt_integral_limit = 5.0;
};

struct TiltCommand {
    double phi_cmd = 0.0;
    double theta_cmd = 0.0;
};

/// Convert position/velocity errors into commanded roll and pitch. Desired
/// horizontal accelerations are rotated from world into the yaw frame, then
/// inverted through the small-angle force map (xdd ~ -(T/m) theta,
/// ydd ~ (T/m) phi):
///
///   theta_cmd = -(m/T) a_x,   phi_cmd = +(m/T) a_y
///
/// both clipped to +/- tilt_limit_rad.
inline TiltCommand outer_loop_pd(const Vec3 &position_error, const Vec3 &velocity_error,
                                 double yaw, double thrust, const OuterLoopGains &gains,
                                 const QuadParams &params) {
    if (!(thrust > 0.0)) throw std::invalid_argument("outer_loop_pd: thrust must be positive");

    const double ax_world = gains.kp_xy * position_error.x() + gains.kd_xy * velocity_error.x();
    const double ay_world = gains.kp_xy * position_error.y() + gains.kd_xy * velocity_error.y();

    const double c = std::cos(yaw);
    const double s = std::sin(yaw);
    const double ax_body = c * ax_world + s * ay_world;
    const double ay_body = -s * ax_world + c * ay_world;

    const double scale = params.mass_kg / thrust;
    TiltCommand cmd;
    cmd.theta_cmd = std::clamp(-scale * ax_body, -gains.tilt_limit_rad, gains.tilt_limit_rad);
    cmd.phi_cmd = std::clamp(scale * ay_body, -gains.tilt_limit_rad, gains.tilt_limit_rad);
    return cmd;
}

struct AltitudePidState {
    double integral = 0.0;
    double prev_error = 0.0;
    bool has_prev = false;
};

/// Thrust command T = m g + PID(z_error), clipped to [0, 4 k_f cmd_max].
inline double altitude_pid(double z_error, double dt, const OuterLoopGains &gains,
                           AltitudePidState &memory, const QuadParams &params) {
    if (!(dt > 0.0)) throw std::invalid_argument("altitude_pid: dt must be positive");
    double derivative = 0.0;
    if (memory.has_prev) {
        memory.integral += 0.5 * (z_error + memory.prev_error) * dt;
        derivative = (z_error - memory.prev_error) / dt;
    } else {
        memory.integral += z_error * dt;
        memory.has_prev = true;
    }
    memory.integral =
        std::clamp(memory.integral, -gains.alt_integral_limit, gains.alt_integral_limit);
    memory.prev_error = z_error;

    const double pid = gains.alt_kp * z_error + gains.alt_ki * memory.integral +
                       gains.alt_kd * derivative;
    return std::clamp(params.mass_kg * params.gravity + pid, 0.0, params.max_thrust());
}

// =============================================================================
// Step-response metrics
// =============================================================================

/// Rise time (10-90% by default), percentage overshoot, and settling time
/// (last exit of the +/-2% band). `settled` is false when the trace never
/// stays inside the band (or never reaches the upper rise threshold).
struct StepMetrics {
    double rise_time_s = std::numeric_limits<double>::quiet_NaN();
    double overshoot_pct = 0.0;
    double settling_time_s = std::numeric_limits<double>::quiet_NaN();
    bool settled = false;
};

/// Extract step metrics from a (t, value) trace that starts at zero and steps
/// toward `target` at t = trace.front().t.
inline StepMetrics step_metrics(const std::vector<std::pair<double, double>> &trace,
                                double target, double rise_lo_frac = 0.1,
                                double rise_hi_frac = 0.9, double settle_band_frac = 0.02) {
    if (trace.empty()) throw std::invalid_argument("step_metrics: empty trace");
    if (target == 0.0) throw std::invalid_argument("step_metrics: target must be nonzero");
    const double t0 = trace.front().first;
    if (trace.back().first - t0 < 5.0) {
        throw std::invalid_argument("step_metrics: trace must cover at least 5 s");
    }

    StepMetrics m;
    // Normalize so the response rises from 0 toward 1.
    double t_lo = std::numeric_limits<double>::quiet_NaN();
    double t_hi = std::numeric_limits<double>::quiet_NaN();
    double peak = -std::numeric_limits<double>::infinity();
    for (const auto &[t, v] : trace) {
        const double y = v / target;
        peak = std::max(peak, y);
        if (std::isnan(t_lo) && y >= rise_lo_frac) t_lo = t;
        if (std::isnan(t_hi) && y >= rise_hi_frac) t_hi = t;
    }
    if (!std::isnan(t_lo) && !std::isnan(t_hi)) m.rise_time_s = t_hi - t_lo;
    m.overshoot_pct = std::max(0.0, (peak - 1.0) * 100.0);

    // Last exit time of the settling band; settled only if the trace ends
    // inside the band.
    double settling = t0;
    bool in_band_at_end = false;
    for (const auto &[t, v] : trace) {
        const double y = v / target;
        if (std::abs(y - 1.0) > settle_band_frac) {
            settling = t;
            in_band_at_end = false;
        } else if (!in_band_at_end) {
            // First sample back inside the band after an excursion.
            in_band_at_end = true;
            settling = t;
        }
    }
    if (in_band_at_end) {
        m.settled = !std::isnan(m.rise_time_s);
        m.settling_time_s = settling - t0;
    }
    return m;
}

}  // namespace quadsim
