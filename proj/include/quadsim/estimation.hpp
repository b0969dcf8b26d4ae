// Behavioral stand-in for the visual-SLAM pose source: 6-DoF poses at a fixed
// output rate with white noise, random-walk drift, and periodic loop-closure
// drift resets.
#pragma once

#include "quadsim/dynamics.hpp"

#include <Eigen/Dense>

#include <limits>
#include <optional>
#include <random>

namespace quadsim {

/// Rigid-body pose: orthonormal rotation plus translation.
struct Pose {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Vec3 translation = Vec3::Zero();
};

/// R = Rz(psi) Ry(theta) Rx(phi) for attitude = (phi, theta, psi).
inline Eigen::Matrix3d rotation_from_euler(const Vec3 &attitude) {
    const double cp = std::cos(attitude.x()), sp = std::sin(attitude.x());
    const double ct = std::cos(attitude.y()), st = std::sin(attitude.y());
    const double cy = std::cos(attitude.z()), sy = std::sin(attitude.z());
    Eigen::Matrix3d r;
    r << cy * ct, cy * st * sp - sy * cp, cy * st * cp + sy * sp,
         sy * ct, sy * st * sp + cy * cp, sy * st * cp - cy * sp,
         -st,     ct * sp,                ct * cp;
    return r;
}

/// Inverse of rotation_from_euler away from the pitch singularity.
inline Vec3 euler_from_rotation(const Eigen::Matrix3d &r) {
    Vec3 att;
    att.x() = std::atan2(r(2, 1), r(2, 2));
    att.y() = -std::asin(std::clamp(r(2, 0), -1.0, 1.0));
    att.z() = std::atan2(r(1, 0), r(0, 0));
    return att;
}

struct PoseNoiseModel {
    double sigma_pos_m = 0.02;
    double sigma_att_rad = 0.01;
    double drift_rate_m_per_sqrt_s = 0.01;  // random-walk intensity per axis
    double loop_closure_period_s = 15.0;    // may be +inf to disable
    double output_rate_hz = 10.0;
};

/// Mutable estimator state; deterministic given the seed.
struct EstimatorState {
    Vec3 accumulated_drift = Vec3::Zero();
    double last_emit_time = -std::numeric_limits<double>::infinity();
    double next_loop_closure_s = 0.0;
    int relocalization_count = 0;
    std::mt19937_64 rng;
};

inline EstimatorState make_estimator(uint64_t seed, const PoseNoiseModel &model) {
    if (!(model.output_rate_hz > 0.0)) {
        throw std::invalid_argument("make_estimator: output_rate_hz must be positive");
    }
    if (!(model.loop_closure_period_s > 0.0)) {
        throw std::invalid_argument("make_estimator: loop_closure_period_s must be positive");
    }
    EstimatorState est;
    est.rng.seed(seed);
    est.next_loop_closure_s = model.loop_closure_period_s;
    return est;
}

/// Emit a noisy pose when an output period has elapsed, otherwise nothing.
/// Drift random-walks between emissions with intensity drift_rate per axis;
/// every loop_closure_period_s the drift resets to zero and the
/// relocalization counter increments. Emitted rotations are built from
/// perturbed Euler angles, hence orthonormal by construction.
inline std::optional<Pose> sample_pose(const RigidBodyState &truth,
                                       const PoseNoiseModel &model, EstimatorState &est,
                                       double t) {
    if (t < est.last_emit_time) {
        throw std::invalid_argument("sample_pose: time moved backwards");
    }
    const double period = 1.0 / model.output_rate_hz;
    if (t - est.last_emit_time < period - 1e-9) return std::nullopt;

    std::normal_distribution<double> unit(0.0, 1.0);
    const bool first = !std::isfinite(est.last_emit_time);
    const double dt_walk = first ? 0.0 : t - est.last_emit_time;
    const double walk_sigma = model.drift_rate_m_per_sqrt_s * std::sqrt(dt_walk);
    for (int i = 0; i < 3; ++i) est.accumulated_drift[i] += walk_sigma * unit(est.rng);

    while (t >= est.next_loop_closure_s) {
        est.accumulated_drift.setZero();
        est.relocalization_count += 1;
        est.next_loop_closure_s += model.loop_closure_period_s;
    }

    Pose pose;
    Vec3 pos_noise, att_noise;
    for (int i = 0; i < 3; ++i) pos_noise[i] = model.sigma_pos_m * unit(est.rng);
    for (int i = 0; i < 3; ++i) att_noise[i] = model.sigma_att_rad * unit(est.rng);
    pose.translation = truth.position + est.accumulated_drift + pos_noise;
    pose.rotation = rotation_from_euler(truth.attitude + att_noise);

    est.last_emit_time = t;
    return pose;
}

}  // namespace quadsim
