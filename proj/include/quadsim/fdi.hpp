// Threshold-based rotor fault detection and identification, failsafe command
// clipping, and emergency landing plan composition.
#pragma once

#include "quadsim/dynamics.hpp"
#include "quadsim/estimation.hpp"
#include "quadsim/planning.hpp"

#include <array>
#include <numeric>
#include <optional>

namespace quadsim {

struct FdiConfig {
    double pwm_saturation_frac = 0.9;   // fraction of cmd_max treated as "high"
    double rate_mismatch_eps = 2.0;     // rad/s^2 model-vs-measured threshold
    int persistence_samples = 9;        // consecutive hits before latching
    double monitor_rate_hz = 10.0;
    bool rpm_feedback_enabled = false;
    double rpm_zero_eps = 0.01;         // "motor stopped" threshold
};

/// One monitor-tick snapshot: the commanded motors (PWM proxy), the measured
/// body rates now and one tick earlier, and optional per-motor speed feedback.
struct FdiObservation {
    MotorCommand commanded;
    Vec3 measured_rates = Vec3::Zero();
    Vec3 measured_rates_prev = Vec3::Zero();
    std::optional<std::array<double, 4>> rpm;
};

/// Latching detector output.
struct FdiStatus {
    bool fault_flag = false;
    std::optional<int> suspected_rotor;      // 1-based
    std::optional<double> detection_time_s;
    std::array<int, 4> consecutive_hits{0, 0, 0, 0};
};

/// Healthy-model expectation of the angular accelerations for a command, used
/// as the reference the measured rate change is compared against. Evaluates
/// the same mixing and Euler equations as the dynamics module.
inline Vec3 predict_rate_change(const MotorCommand &cmd, const RigidBodyState &state,
                                const QuadParams &params) {
    const Wrench w = mix_forces(cmd, FaultMask::healthy(), params);
    return derivatives(state, w, params).attitude_accel;
}

namespace detail {

// Which axis a rotor's failure shows up on, and the expected sign of
// (measured - expected) angular acceleration when that rotor is dead:
//   rotor 1 drives -tau_theta: dead -> realized tau_theta higher -> +theta
//   rotor 2 drives +tau_phi:   dead -> realized tau_phi lower    -> -phi
//   rotor 3 drives +tau_theta: dead -> realized lower            -> -theta
//   rotor 4 drives -tau_phi:   dead -> realized higher           -> +phi
struct RotorSignature {
    int axis;
    double sign;
};
inline constexpr std::array<RotorSignature, 4> kRotorSignatures{{
    {1, +1.0}, {0, -1.0}, {1, -1.0}, {0, +1.0}}};

}  // namespace detail

/// One detector update at the monitor cadence. Rule 2 (speed feedback reads
/// ~zero while the motor is commanded) confirms immediately; rule 1 (command
/// saturated high while the attitude response mismatches the healthy model on
/// that rotor's axis, with the sign the failure would produce) must persist
/// for persistence_samples consecutive ticks. The flag latches.
inline FdiStatus fdi_step(const FdiObservation &obs, const FdiConfig &cfg,
                          FdiStatus status, double t, const QuadParams &params) {
    if (status.fault_flag) return status;

    // Rule 2: direct speed feedback.
    if (cfg.rpm_feedback_enabled && obs.rpm.has_value()) {
        for (int i = 0; i < 4; ++i) {
            if ((*obs.rpm)[i] <= cfg.rpm_zero_eps && obs.commanded.u[i] > 1e-6) {
                status.fault_flag = true;
                status.suspected_rotor = i + 1;
                status.detection_time_s = t;
                return status;
            }
        }
    }

    // Rule 1: saturated command with insufficient (wrong-signed) response.
    RigidBodyState window_state;
    window_state.attitude_rate = obs.measured_rates_prev;
    const Vec3 expected = predict_rate_change(obs.commanded, window_state, params);
    const Vec3 measured =
        (obs.measured_rates - obs.measured_rates_prev) * cfg.monitor_rate_hz;
    const Vec3 mismatch = measured - expected;

    for (int i = 0; i < 4; ++i) {
        const auto sig = detail::kRotorSignatures[static_cast<size_t>(i)];
        const bool saturated =
            obs.commanded.u[i] >= cfg.pwm_saturation_frac * params.cmd_max;
        const bool response_missing = sig.sign * mismatch[sig.axis] > cfg.rate_mismatch_eps;
        if (saturated && response_missing) {
            status.consecutive_hits[i] += 1;
        } else {
            status.consecutive_hits[i] = 0;
        }
    }
    for (int i = 0; i < 4; ++i) {
        if (status.consecutive_hits[i] >= cfg.persistence_samples) {
            status.fault_flag = true;
            status.suspected_rotor = i + 1;
            status.detection_time_s = t;
            break;
        }
    }
    return status;
}

/// Zero the suspected rotor's command and re-clip the rest. The attitude
/// controller itself is left unchanged.
inline MotorCommand failsafe_clip(const MotorCommand &cmd, int suspected_rotor) {
    if (suspected_rotor < 1 || suspected_rotor > 4) {
        throw std::invalid_argument("failsafe_clip: rotor index must be 1..4");
    }
    MotorCommand out = cmd;
    out.u[static_cast<size_t>(suspected_rotor - 1)] = 0.0;
    for (double &u : out.u) u = std::max(u, 0.0);
    return out;
}

/// Emergency plan: route to the selected landing zone plus the altitude
/// descent schedule. When no zone is reachable the plan degrades to a
/// controlled vertical descent in place.
struct EmergencyPlan {
    int zone_index = -1;
    Path path;                    // cell-adjacent route
    std::vector<Vec2> waypoints;  // interpolated route
    std::vector<double> descent;  // altitude setpoints at control cadence
    bool descend_in_place = false;
};

/// Deterministic nearest free cell within a search box (ties by squared
/// distance, then row, then column); nullopt when everything nearby is
/// occupied.
inline std::optional<GridIndex> nearest_free_cell(const OccupancyGrid &grid,
                                                  GridIndex cell, int max_radius_cells) {
    std::optional<GridIndex> best;
    long best_key = 0;
    for (int dy = -max_radius_cells; dy <= max_radius_cells; ++dy) {
        for (int dx = -max_radius_cells; dx <= max_radius_cells; ++dx) {
            GridIndex c{cell.x + dx, cell.y + dy};
            if (!grid.free(c)) continue;
            const long key = (static_cast<long>(dx) * dx + static_cast<long>(dy) * dy) *
                                 1000000L +
                             static_cast<long>(c.y) * 1000 + c.x;
            if (!best || key < best_key) {
                best = c;
                best_key = key;
            }
        }
    }
    return best;
}

/// Compose the landing sequence: select zones in Euclidean order from the
/// current pose, route to the first reachable one on the inflated grid, and
/// schedule the descent from the current altitude. Falls back to the next
/// zone when a route does not exist, and to descending in place when no zone
/// is reachable.
inline EmergencyPlan engage_failsafe(const Pose &current, const LandingZones &zones,
                                     const OccupancyGrid &grid, double v_desc,
                                     double spacing_m = 0.2, double control_dt = 0.01,
                                     Connectivity connectivity = Connectivity::Eight) {
    const Vec2 here(current.translation.x(), current.translation.y());
    EmergencyPlan plan;
    plan.descent = descent_setpoints(
        DescentProfile{std::max(current.translation.z(), 0.0), v_desc, control_dt});

    std::vector<int> order(zones.zones.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return (zones.zones[static_cast<size_t>(a)] - here).norm() <
               (zones.zones[static_cast<size_t>(b)] - here).norm();
    });

    GridIndex start_cell = grid.world_to_cell(here);
    std::optional<GridIndex> start;
    if (grid.in_bounds(start_cell)) start = nearest_free_cell(grid, start_cell, 5);
    if (start) {
        for (int zi : order) {
            const GridIndex zone_cell =
                grid.world_to_cell(zones.zones[static_cast<size_t>(zi)]);
            if (!grid.in_bounds(zone_cell) || grid.occupied(zone_cell)) continue;
            auto route = dijkstra(grid, *start, zone_cell, connectivity);
            if (!route) continue;
            plan.zone_index = zi;
            plan.path = route->path;
            plan.waypoints = interpolate(route->path, spacing_m);
            return plan;
        }
    }

    plan.descend_in_place = true;
    plan.path.waypoints = {here};
    plan.waypoints = {here};
    return plan;
}

}  // namespace quadsim
