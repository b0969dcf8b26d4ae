// Rigid-body quadrotor dynamics: motor mixing, per-rotor fault injection,
// Euler-angle equations of motion, RK4 stepping with ground contact.
#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace quadsim {

using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;

/// Thrown when the integrator is handed (or produces) a non-finite state.
struct SimulationDiverged : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// =============================================================================
// Plant description and state
// =============================================================================

/// Physical quadrotor parameters. Commands u_i are dimensionless; thrust_coeff
/// converts a unit command to newtons, torque_coeff to newton-metres of yaw
/// drag torque.
struct QuadParams {
    double mass_kg = 1.0;
    Vec3 inertia_diag{0.01, 0.01, 0.02};  // (Ix, Iy, Iz) [kg m^2]
    double arm_length_m = 0.2;
    double thrust_coeff = 3.0;   // k_f [N / unit command]
    double torque_coeff = 0.05;  // k_m [N m / unit command]
    double gravity = 9.81;
    double cmd_max = 2.0;        // per-motor command ceiling

    /// Per-motor command that balances gravity with four healthy rotors.
    double hover_cmd() const { return mass_kg * gravity / (4.0 * thrust_coeff); }

    /// Thrust ceiling with all motors saturated.
    double max_thrust() const { return 4.0 * thrust_coeff * cmd_max; }

    void validate() const {
        auto positive = [](double v, const char *name) {
            if (!(v > 0.0) || !std::isfinite(v)) {
                throw std::invalid_argument(std::string("QuadParams: ") + name +
                                            " must be positive and finite");
            }
        };
        positive(mass_kg, "mass_kg");
        positive(inertia_diag.x(), "Ix");
        positive(inertia_diag.y(), "Iy");
        positive(inertia_diag.z(), "Iz");
        positive(arm_length_m, "arm_length_m");
        positive(thrust_coeff, "thrust_coeff");
        positive(torque_coeff, "torque_coeff");
        positive(gravity, "gravity");
        positive(cmd_max, "cmd_max");
    }
};

/// 12-state rigid body: world-frame position/velocity plus Euler attitude
/// (roll, pitch, yaw) and Euler-angle rates.
struct RigidBodyState {
    Vec3 position = Vec3::Zero();       // (x, y, z) [m]
    Vec3 velocity = Vec3::Zero();       // [m/s]
    Vec3 attitude = Vec3::Zero();       // (phi, theta, psi) [rad], wrapped (-pi, pi]
    Vec3 attitude_rate = Vec3::Zero();  // [rad/s]

    bool finite() const {
        return position.allFinite() && velocity.allFinite() &&
               attitude.allFinite() && attitude_rate.allFinite();
    }
};

/// Per-motor commands u1..u4, each in [0, cmd_max].
struct MotorCommand {
    std::array<double, 4> u{0.0, 0.0, 0.0, 0.0};

    static MotorCommand uniform(double c) { return MotorCommand{{c, c, c, c}}; }
};

/// Rotor effectiveness in [0, 1]: 1 = healthy, 0 = fully failed.
struct FaultMask {
    std::array<double, 4> effectiveness{1.0, 1.0, 1.0, 1.0};

    static FaultMask healthy() { return {}; }

    /// Full failure of one rotor (1-based index).
    static FaultMask rotor_out(int rotor) {
        FaultMask m;
        m.effectiveness.at(static_cast<size_t>(rotor - 1)) = 0.0;
        return m;
    }
};

/// Collective thrust plus the three body torques.
struct Wrench {
    double thrust = 0.0;        // T [N]
    Vec3 torque = Vec3::Zero(); // (tau_phi, tau_theta, tau_psi) [N m]
};

/// Wrap an angle to (-pi, pi].
inline double wrap_angle(double a) {
    a = std::fmod(a, 2.0 * M_PI);
    if (a > M_PI) a -= 2.0 * M_PI;
    if (a <= -M_PI) a += 2.0 * M_PI;
    return a;
}

// =============================================================================
// Motor mixing
// =============================================================================

/// Map motor commands (after fault scaling) to total thrust and body torques:
///
///   T        = k_f (u1 + u2 + u3 + u4)
///   tau_phi  = l k_f (u2 - u4)
///   tau_theta= l k_f (u3 - u1)
///   tau_psi  = k_m (u1 - u2 + u3 - u4)
///
/// The effective command of motor i is u_i * effectiveness_i.
inline Wrench mix_forces(const MotorCommand &cmd, const FaultMask &fault,
                         const QuadParams &params) {
    const double u1 = cmd.u[0] * fault.effectiveness[0];
    const double u2 = cmd.u[1] * fault.effectiveness[1];
    const double u3 = cmd.u[2] * fault.effectiveness[2];
    const double u4 = cmd.u[3] * fault.effectiveness[3];
    const double kf = params.thrust_coeff;
    const double km = params.torque_coeff;
    const double l = params.arm_length_m;

    Wrench w;
    w.thrust = kf * (u1 + u2 + u3 + u4);
    w.torque.x() = l * kf * (u2 - u4);
    w.torque.y() = l * kf * (u3 - u1);
    w.torque.z() = km * (u1 - u2 + u3 - u4);
    return w;
}

struct AllocationResult {
    MotorCommand cmd;
    bool saturated = false;  // set when any component was clipped
};

/// Solve the 4x4 mixing system for motor commands, clipping each component to
/// [0, cmd_max]. For wrenches whose exact solution lies inside the command box
/// the round trip through mix_forces reproduces the wrench.
inline AllocationResult inverse_mix(const Wrench &wrench, const QuadParams &params) {
    const double kf = params.thrust_coeff;
    const double km = params.torque_coeff;
    const double l = params.arm_length_m;

    const double base = wrench.thrust / (4.0 * kf);
    const double roll = wrench.torque.x() / (2.0 * l * kf);
    const double pitch = wrench.torque.y() / (2.0 * l * kf);
    const double yaw = wrench.torque.z() / (4.0 * km);

    std::array<double, 4> u{
        base - pitch + yaw,
        base + roll - yaw,
        base + pitch + yaw,
        base - roll - yaw,
    };

    AllocationResult out;
    for (size_t i = 0; i < 4; ++i) {
        double clipped = std::clamp(u[i], 0.0, params.cmd_max);
        if (clipped != u[i]) out.saturated = true;
        out.cmd.u[i] = clipped;
    }
    return out;
}

// =============================================================================
// Equations of motion
// =============================================================================

/// Time derivative of the 12-state.
struct StateDerivative {
    Vec3 velocity;
    Vec3 acceleration;
    Vec3 attitude_rate;
    Vec3 attitude_accel;
};

/// Nonlinear equations of motion.
///
/// Translational:
///   m xdd = -T (cos(phi) sin(theta) cos(psi) + sin(phi) sin(psi))
///   m ydd = -T (cos(phi) sin(theta) sin(psi) - sin(phi) cos(psi))
///   m zdd =  T cos(phi) cos(theta) - m g
///
/// Rotational (Euler equations, diagonal inertia):
///   Ix phidd   = tau_phi   - (Iy - Iz) thetad psid
///   Iy thetadd = tau_theta - (Iz - Ix) phid   psid
///   Iz psidd   = tau_psi   - (Ix - Iy) phid   thetad
inline StateDerivative derivatives(const RigidBodyState &state, const Wrench &wrench,
                                   const QuadParams &params) {
    const double phi = state.attitude.x();
    const double theta = state.attitude.y();
    const double psi = state.attitude.z();
    const double T = wrench.thrust;
    const double m = params.mass_kg;
    const double Ix = params.inertia_diag.x();
    const double Iy = params.inertia_diag.y();
    const double Iz = params.inertia_diag.z();
    const Vec3 &rate = state.attitude_rate;

    StateDerivative d;
    d.velocity = state.velocity;
    d.acceleration.x() =
        -T * (std::cos(phi) * std::sin(theta) * std::cos(psi) + std::sin(phi) * std::sin(psi)) / m;
    d.acceleration.y() =
        -T * (std::cos(phi) * std::sin(theta) * std::sin(psi) - std::sin(phi) * std::cos(psi)) / m;
    d.acceleration.z() = T * std::cos(phi) * std::cos(theta) / m - params.gravity;

    d.attitude_rate = rate;
    d.attitude_accel.x() = (wrench.torque.x() - (Iy - Iz) * rate.y() * rate.z()) / Ix;
    d.attitude_accel.y() = (wrench.torque.y() - (Iz - Ix) * rate.x() * rate.z()) / Iy;
    d.attitude_accel.z() = (wrench.torque.z() - (Ix - Iy) * rate.x() * rate.y()) / Iz;
    return d;
}

struct StepResult {
    RigidBodyState state;
    bool touchdown = false;  // ground contact happened during this step
};

namespace detail {

inline RigidBodyState add_scaled(const RigidBodyState &s, const StateDerivative &d,
                                 double h) {
    RigidBodyState out;
    out.position = s.position + h * d.velocity;
    out.velocity = s.velocity + h * d.acceleration;
    out.attitude = s.attitude + h * d.attitude_rate;
    out.attitude_rate = s.attitude_rate + h * d.attitude_accel;
    return out;
}

}  // namespace detail

/// Advance one fixed step with classical RK4. The commanded wrench is held
/// constant over the step (zero-order hold). Attitude is re-wrapped to
/// (-pi, pi]. Ground plane at z = 0 is inelastic: if the step would take z
/// below zero, z is clamped and the velocity zeroed, and the touchdown flag
/// is raised.
inline StepResult step(const RigidBodyState &state, const MotorCommand &cmd,
                       const FaultMask &fault, double dt, const QuadParams &params) {
    if (!(dt > 0.0) || dt > 0.01) {
        throw std::invalid_argument("step: dt must be in (0, 0.01] s");
    }
    if (!state.finite()) {
        throw SimulationDiverged("step: non-finite state");
    }

    const Wrench w = mix_forces(cmd, fault, params);

    const StateDerivative k1 = derivatives(state, w, params);
    const StateDerivative k2 = derivatives(detail::add_scaled(state, k1, dt / 2.0), w, params);
    const StateDerivative k3 = derivatives(detail::add_scaled(state, k2, dt / 2.0), w, params);
    const StateDerivative k4 = derivatives(detail::add_scaled(state, k3, dt), w, params);

    RigidBodyState next;
    const double h6 = dt / 6.0;
    next.position = state.position +
                    h6 * (k1.velocity + 2.0 * k2.velocity + 2.0 * k3.velocity + k4.velocity);
    next.velocity = state.velocity + h6 * (k1.acceleration + 2.0 * k2.acceleration +
                                           2.0 * k3.acceleration + k4.acceleration);
    next.attitude = state.attitude + h6 * (k1.attitude_rate + 2.0 * k2.attitude_rate +
                                           2.0 * k3.attitude_rate + k4.attitude_rate);
    next.attitude_rate = state.attitude_rate +
                         h6 * (k1.attitude_accel + 2.0 * k2.attitude_accel +
                               2.0 * k3.attitude_accel + k4.attitude_accel);

    for (int i = 0; i < 3; ++i) next.attitude[i] = wrap_angle(next.attitude[i]);

    StepResult out;
    if (next.position.z() < 0.0) {
        next.position.z() = 0.0;
        next.velocity = Vec3::Zero();
        out.touchdown = true;
    }
    if (!next.finite()) {
        throw SimulationDiverged("step: integration diverged");
    }
    out.state = next;
    return out;
}

}  // namespace quadsim
