// Scenario orchestration: the closed loop (estimator -> planner -> outer loop
// -> inner loop -> dynamics -> FDI monitor), fault-triggered failsafe
// handover, metric extraction, trace export, the attitude step-response
// experiment, and the fault-matrix benchmark.
#pragma once

#include "quadsim/config.hpp"
#include "quadsim/control.hpp"
#include "quadsim/dynamics.hpp"
#include "quadsim/estimation.hpp"
#include "quadsim/fdi.hpp"
#include "quadsim/planning.hpp"

#include <json.hpp>

#include <cstring>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace quadsim {

enum class FlightMode { Mission = 0, Failsafe = 1, Landed = 2 };

struct TraceRecord {
    double t = 0.0;
    RigidBodyState truth;
    Vec3 est_position = Vec3::Zero();
    Vec3 est_attitude = Vec3::Zero();
    bool est_fresh = false;
    bool reloc_flag = false;
    Vec3 attitude_setpoint = Vec3::Zero();
    double z_setpoint = 0.0;
    double thrust_cmd = 0.0;
    MotorCommand cmd;
    bool fault_flag = false;
    int suspected_rotor = 0;  // 0 = none
    int mode = 0;
};

struct RunTrace {
    std::vector<TraceRecord> records;
};

struct RunMetrics {
    // Latency from injection to the FDI flag; present iff a fault was
    // injected and detected.
    std::optional<double> detection_time_s;
    std::optional<double> path_deviation_avg_m;
    std::optional<double> path_deviation_max_m;
    std::optional<double> touchdown_offset_m;
    std::optional<double> descent_rms_m;  // z tracking error during failsafe
    bool navigation_success = false;
    int relocalization_events = 0;
    std::optional<StepMetrics> step;
    bool fault_injected = false;
    std::optional<int> suspected_rotor;
    bool landed = false;
    bool descend_in_place = false;
    int selected_zone = -1;
    double duration_used_s = 0.0;
};

struct RunResult {
    RunMetrics metrics;
    RunTrace trace;
};

// =============================================================================
// Geometry helpers
// =============================================================================

inline double point_to_segment(const Vec2 &p, const Vec2 &a, const Vec2 &b) {
    const Vec2 ab = b - a;
    const double len2 = ab.squaredNorm();
    if (len2 == 0.0) return (p - a).norm();
    const double s = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
    return (p - (a + s * ab)).norm();
}

inline double point_to_polyline(const Vec2 &p, const std::vector<Vec2> &poly) {
    if (poly.empty()) return 0.0;
    if (poly.size() == 1) return (p - poly[0]).norm();
    double best = std::numeric_limits<double>::infinity();
    for (size_t i = 1; i < poly.size(); ++i) {
        best = std::min(best, point_to_segment(p, poly[i - 1], poly[i]));
    }
    return best;
}

// =============================================================================
// Attitude-only step response
// =============================================================================

struct StepTracePoint {
    double t = 0.0;
    double roll_rad = 0.0;
    double torque = 0.0;
};

struct StepRunResult {
    ControllerKind controller = ControllerKind::Lqr;
    StepMetrics metrics;
    std::vector<StepTracePoint> trace;
};

/// Roll-angle step with frozen translational dynamics. The inner loop is
/// advanced every dynamics step: the reference comparison was produced on a
/// continuous linearized model, and the stiff gain set is not discretely
/// stable at the 100 Hz scenario cadence on this plant.
inline StepRunResult run_attitude_step(const ScenarioConfig &cfg, ControllerKind kind) {
    const QuadParams &qp = cfg.quad;
    const double dt = 0.001;
    const double duration = std::max(cfg.duration_s, 6.0);
    const double target = cfg.step_deg * M_PI / 180.0;
    const Vec3 setpoint(target, 0.0, 0.0);

    GainMatrix lqr_gain;
    if (kind == ControllerKind::Lqr) lqr_gain = solve_lqr(linearize_hover(qp), cfg.lqr);
    PidState pid_mem;

    RigidBodyState s;
    s.position.z() = 10.0;  // keep the frozen plant away from the ground plane
    const Vec3 frozen_position = s.position;

    StepRunResult out;
    out.controller = kind;
    std::vector<std::pair<double, double>> roll_trace;
    const long ticks = std::lround(duration / dt);
    for (long i = 0; i <= ticks; ++i) {
        const double t = static_cast<double>(i) * dt;
        Vec3 torque;
        switch (kind) {
            case ControllerKind::Pid: {
                Vec3 err;
                for (int a = 0; a < 3; ++a) err[a] = wrap_angle(setpoint[a] - s.attitude[a]);
                torque = pid_attitude(err, dt, cfg.attitude_pid, pid_mem);
                break;
            }
            case ControllerKind::FblPd:
                torque = fbl_pd_attitude(s, setpoint, cfg.fbl, qp);
                break;
            case ControllerKind::Lqr:
                torque = lqr_attitude(s, setpoint, lqr_gain);
                break;
        }
        Wrench w;
        w.thrust = qp.mass_kg * qp.gravity;
        w.torque = torque;
        const MotorCommand cmd = inverse_mix(w, qp).cmd;

        out.trace.push_back({t, s.attitude.x(), torque.x()});
        roll_trace.emplace_back(t, s.attitude.x());

        if (i < ticks) {
            s = step(s, cmd, FaultMask::healthy(), dt, qp).state;
            s.position = frozen_position;
            s.velocity.setZero();
        }
    }
    out.metrics = step_metrics(roll_trace, target);
    return out;
}

/// Run all three controllers on the same plant and step.
inline std::vector<StepRunResult> step_response_experiment(const ScenarioConfig &cfg) {
    std::vector<StepRunResult> out;
    for (ControllerKind kind :
         {ControllerKind::Pid, ControllerKind::FblPd, ControllerKind::Lqr}) {
        out.push_back(run_attitude_step(cfg, kind));
    }
    return out;
}

// =============================================================================
// Closed-loop scenario
// =============================================================================

namespace detail {

/// Plan through the remaining via points to the goal, concatenating legs.
/// Start and targets are snapped to nearby free cells (estimation drift can
/// place the start inside an inflated wall). Returns dense waypoints.
struct MissionPlan {
    std::vector<Vec2> dense;
    bool ok = false;
};

inline MissionPlan plan_route(const OccupancyGrid &inflated, const Vec2 &from,
                              const std::vector<Vec2> &targets, double spacing,
                              Connectivity connectivity) {
    MissionPlan plan;
    Vec2 cursor = from;
    std::vector<Vec2> dense;
    for (const Vec2 &target : targets) {
        const GridIndex raw_start = inflated.world_to_cell(cursor);
        const GridIndex raw_goal = inflated.world_to_cell(target);
        if (!inflated.in_bounds(raw_start) || !inflated.in_bounds(raw_goal)) return plan;
        const auto start = nearest_free_cell(inflated, raw_start, 6);
        const auto goal = nearest_free_cell(inflated, raw_goal, 6);
        if (!start || !goal) return plan;
        auto leg = dijkstra(inflated, *start, *goal, connectivity);
        if (!leg) return plan;
        std::vector<Vec2> leg_dense = interpolate(leg->path, spacing);
        if (!dense.empty() && !leg_dense.empty()) {
            dense.insert(dense.end(), leg_dense.begin() + 1, leg_dense.end());
        } else {
            dense = std::move(leg_dense);
        }
        cursor = target;
    }
    plan.dense = std::move(dense);
    plan.ok = !plan.dense.empty();
    return plan;
}

/// Attitude-priority allocation: roll/pitch differentials are realized
/// exactly (scaled only if they exceed the command box on their own),
/// collective is clamped into the room they leave, and yaw receives whatever
/// slack remains. Keeps an unachievable axis demand from starving the others.
inline MotorCommand allocate_prioritized(double thrust, const Vec3 &torque,
                                         const QuadParams &p) {
    const double lkf2 = 2.0 * p.arm_length_m * p.thrust_coeff;
    double roll = torque.x() / lkf2;   // + on u2, - on u4
    double pitch = torque.y() / lkf2;  // + on u3, - on u1
    double base = thrust / (4.0 * p.thrust_coeff);
    double yaw = torque.z() / (4.0 * p.torque_coeff);

    std::array<double, 4> rp{-pitch, roll, pitch, -roll};
    const double rp_max = *std::max_element(rp.begin(), rp.end());
    const double rp_min = *std::min_element(rp.begin(), rp.end());
    if (rp_max - rp_min > p.cmd_max) {
        const double scale = p.cmd_max / (rp_max - rp_min);
        for (double &v : rp) v *= scale;
    }
    const double hi = *std::max_element(rp.begin(), rp.end());
    const double lo = *std::min_element(rp.begin(), rp.end());
    base = std::clamp(base, -lo, p.cmd_max - hi);

    // Yaw takes the remaining slack (+ lifts motors 1/3, drops 2/4).
    const double up_room = std::min(p.cmd_max - (base + rp[0]), p.cmd_max - (base + rp[2]));
    const double down_room = std::min(base + rp[1], base + rp[3]);
    const double up_room_neg = std::min(p.cmd_max - (base + rp[1]), p.cmd_max - (base + rp[3]));
    const double down_room_neg = std::min(base + rp[0], base + rp[2]);
    if (yaw >= 0.0) yaw = std::min({yaw, up_room, down_room});
    else yaw = -std::min({-yaw, up_room_neg, down_room_neg});

    MotorCommand cmd;
    cmd.u[0] = std::clamp(base + rp[0] + yaw, 0.0, p.cmd_max);
    cmd.u[1] = std::clamp(base + rp[1] - yaw, 0.0, p.cmd_max);
    cmd.u[2] = std::clamp(base + rp[2] + yaw, 0.0, p.cmd_max);
    cmd.u[3] = std::clamp(base + rp[3] - yaw, 0.0, p.cmd_max);
    return cmd;
}

/// Failsafe allocation with one dead rotor: yaw is free, so the three live
/// motors solve (thrust, roll, pitch) exactly. The dead rotor's axis can only
/// be torqued one way; the demand is clamped to that side and realized by the
/// opposite motor, while the orthogonal pair carries its differential with
/// collective clamped into the box (attitude over thrust).
inline MotorCommand allocate_for_failsafe(double thrust, const Vec3 &torque, int dead_rotor,
                                          const QuadParams &p) {
    const double lkf = p.arm_length_m * p.thrust_coeff;
    MotorCommand cmd;

    // (axis demand, opposite motor, co-axial pair) per dead rotor.
    double solo = 0.0;  // command of the dead rotor's opposite
    int solo_idx = 0;
    int pair_a = 0, pair_b = 0;  // pair_b - pair_a realizes the pair torque
    double pair_diff = 0.0;
    switch (dead_rotor) {
        case 2:  // tau_phi = lkf (0 - u4): only negative achievable
            solo = -std::min(torque.x(), 0.0) / lkf;
            solo_idx = 3;
            pair_a = 0, pair_b = 2, pair_diff = torque.y() / lkf;
            break;
        case 4:  // tau_phi = lkf (u2 - 0): only positive achievable
            solo = std::max(torque.x(), 0.0) / lkf;
            solo_idx = 1;
            pair_a = 0, pair_b = 2, pair_diff = torque.y() / lkf;
            break;
        case 1:  // tau_theta = lkf (u3 - 0): only positive achievable
            solo = std::max(torque.y(), 0.0) / lkf;
            solo_idx = 2;
            pair_a = 3, pair_b = 1, pair_diff = torque.x() / lkf;
            break;
        case 3:  // tau_theta = lkf (0 - u1): only negative achievable
            solo = -std::min(torque.y(), 0.0) / lkf;
            solo_idx = 0;
            pair_a = 3, pair_b = 1, pair_diff = torque.x() / lkf;
            break;
        default:
            throw std::invalid_argument("allocate_for_failsafe: rotor must be 1..4");
    }
    solo = std::clamp(solo, 0.0, p.cmd_max);
    if (std::abs(pair_diff) > 2.0 * p.cmd_max) {
        pair_diff = std::copysign(2.0 * p.cmd_max, pair_diff);
    }
    double pair_sum = thrust / p.thrust_coeff - solo;
    pair_sum = std::clamp(pair_sum, std::abs(pair_diff), 2.0 * p.cmd_max - std::abs(pair_diff));
    cmd.u[static_cast<size_t>(solo_idx)] = solo;
    cmd.u[static_cast<size_t>(pair_a)] =
        std::clamp(0.5 * (pair_sum - pair_diff), 0.0, p.cmd_max);
    cmd.u[static_cast<size_t>(pair_b)] =
        std::clamp(0.5 * (pair_sum + pair_diff), 0.0, p.cmd_max);
    return cmd;
}

/// Progress tracking along a dense waypoint list.
struct PathFollower {
    std::vector<Vec2> waypoints;
    size_t progress = 0;

    void reset(std::vector<Vec2> wps, const Vec2 &position) {
        waypoints = std::move(wps);
        progress = 0;
        double best = std::numeric_limits<double>::infinity();
        for (size_t i = 0; i < waypoints.size(); ++i) {
            const double d = (waypoints[i] - position).norm();
            if (d < best) {
                best = d;
                progress = i;
            }
        }
    }

    bool empty() const { return waypoints.empty(); }

    /// Advance past waypoints within the switch radius; return carrot target
    /// and the unit direction of travel (zero at the path end).
    std::pair<Vec2, Vec2> carrot(const Vec2 &position, double switch_radius,
                                 size_t lookahead_steps) {
        while (progress + 1 < waypoints.size() &&
               (waypoints[progress] - position).norm() < switch_radius) {
            ++progress;
        }
        const size_t target = std::min(progress + lookahead_steps, waypoints.size() - 1);
        Vec2 dir = Vec2::Zero();
        if (target + 1 < waypoints.size()) {
            const Vec2 seg = waypoints[target + 1] - waypoints[target];
            if (seg.norm() > 1e-9) dir = seg.normalized();
        }
        return {waypoints[target], dir};
    }
};

}  // namespace detail

inline RunResult run_scenario(const ScenarioConfig &cfg) {
    validate_config(cfg);

    if (cfg.kind == ScenarioKind::StepResponse) {
        StepRunResult step_run = run_attitude_step(cfg, cfg.controller);
        RunResult out;
        out.metrics.step = step_run.metrics;
        out.metrics.duration_used_s = step_run.trace.empty() ? 0.0 : step_run.trace.back().t;
        out.metrics.navigation_success = step_run.metrics.settled;
        for (const auto &pt : step_run.trace) {
            TraceRecord rec;
            rec.t = pt.t;
            rec.truth.attitude.x() = pt.roll_rad;
            rec.attitude_setpoint = Vec3(cfg.step_deg * M_PI / 180.0, 0.0, 0.0);
            out.trace.records.push_back(rec);
        }
        return out;
    }

    const QuadParams &qp = cfg.quad;
    const double dt = 0.001;
    const int ctrl_every = 10;    // 100 Hz
    const int plan_every = 1000;  // 1 Hz
    const int monitor_every =
        std::max(1, static_cast<int>(std::lround(1000.0 / cfg.fdi.monitor_rate_hz)));
    const double ctrl_dt = dt * ctrl_every;

    const OccupancyGrid grid = resolve_map(cfg.map);
    const OccupancyGrid inflated = inflate(grid, cfg.planner.inflation_radius_m);
    const Connectivity connectivity =
        cfg.planner.connectivity == 4 ? Connectivity::Four : Connectivity::Eight;
    // Predefined pads take priority; otherwise zones are detected from the map.
    const LandingZones zones = cfg.landing.zones.empty()
                                   ? detect_landing_zones(inflated, cfg.landing.clearance_m)
                                   : LandingZones{cfg.landing.zones};

    GainMatrix lqr_gain;
    if (cfg.controller == ControllerKind::Lqr) {
        lqr_gain = solve_lqr(linearize_hover(qp), cfg.lqr);
    }
    PidState pid_mem;
    AltitudePidState alt_mem;

    EstimatorState estimator = make_estimator(cfg.seed, cfg.estimator);

    RigidBodyState truth;
    truth.position = Vec3(cfg.map.start.x(), cfg.map.start.y(), cfg.mission_altitude_m);

    // Estimated pose, velocity from finite-differenced emissions. The
    // position estimate is dead-reckoned between emissions so the 100 Hz
    // loops see a smooth signal; the altitude PID (which differentiates its
    // error internally) advances only on fresh estimates.
    Vec3 est_pos = truth.position;
    Vec3 est_att = Vec3::Zero();
    Vec3 est_vel = Vec3::Zero();
    double last_emit_t = 0.0;
    bool have_emission = false;
    double held_thrust = qp.mass_kg * qp.gravity;

    // Mission route: via points then goal.
    std::vector<Vec2> targets = cfg.map.via;
    targets.push_back(cfg.map.goal);
    size_t next_target = 0;

    detail::PathFollower follower;
    std::vector<Vec2> mission_reference;  // initial plan, deviation baseline
    const size_t lookahead_steps = static_cast<size_t>(
        std::max(1.0, std::ceil(cfg.carrot_lookahead_m / cfg.planner.waypoint_spacing_m)));

    FlightMode mode = FlightMode::Mission;
    FaultMask fault_mask = FaultMask::healthy();
    bool fault_active = false;
    FdiStatus fdi_status;
    Vec3 monitor_rates_prev = Vec3::Zero();
    MotorCommand applied_cmd = MotorCommand::uniform(qp.hover_cmd());

    EmergencyPlan emergency;
    long failsafe_ticks = 0;  // control ticks since failsafe engaged
    Vec2 failsafe_tilt_filt = Vec2::Zero();
    double fault_time = cfg.fault ? cfg.fault->time_s : -1.0;

    RunResult out;
    out.metrics.fault_injected = cfg.fault.has_value();
    const bool hover_mission = (cfg.map.goal - cfg.map.start).norm() <= cfg.goal_tolerance_m;

    double deviation_sum = 0.0, deviation_max = 0.0;
    long deviation_count = 0;
    double descent_err2_sum = 0.0;
    long descent_count = 0;
    Vec2 touchdown_pos = Vec2::Zero();

    const long total_ticks = std::lround(cfg.duration_s / dt);
    bool goal_reached = false;

    for (long i = 0; i <= total_ticks; ++i) {
        const double t = static_cast<double>(i) * dt;

        if (cfg.fault && !fault_active && t >= fault_time) {
            fault_mask = FaultMask::healthy();
            fault_mask.effectiveness[static_cast<size_t>(cfg.fault->rotor - 1)] =
                cfg.fault->effectiveness;
            fault_active = true;
        }

        // --- Estimator (self-gated to its output rate) ---
        bool est_fresh = false;
        bool reloc_now = false;
        {
            const int reloc_before = estimator.relocalization_count;
            auto pose = sample_pose(truth, cfg.estimator, estimator, t);
            if (pose) {
                est_fresh = true;
                reloc_now = estimator.relocalization_count > reloc_before;
                const Vec3 new_pos = pose->translation;
                if (have_emission && t > last_emit_t) {
                    const Vec3 raw_vel = (new_pos - est_pos) / (t - last_emit_t);
                    est_vel = 0.5 * est_vel + 0.5 * raw_vel;
                }
                est_pos = new_pos;
                est_att = euler_from_rotation(pose->rotation);
                last_emit_t = t;
                have_emission = true;
            }
        }

        // --- Planner (1 Hz, mission mode) ---
        if (mode == FlightMode::Mission && i % plan_every == 0) {
            // Advance through via points as they are reached.
            while (next_target + 1 < targets.size() &&
                   (Vec2(est_pos.x(), est_pos.y()) - targets[next_target]).norm() < 0.6) {
                ++next_target;
            }
            std::vector<Vec2> remaining(targets.begin() + static_cast<long>(next_target),
                                        targets.end());
            auto plan = detail::plan_route(inflated, Vec2(est_pos.x(), est_pos.y()), remaining,
                                           cfg.planner.waypoint_spacing_m, connectivity);
            if (plan.ok) {
                follower.reset(plan.dense, Vec2(est_pos.x(), est_pos.y()));
                if (mission_reference.empty()) mission_reference = follower.waypoints;
            } else if (mission_reference.empty()) {
                throw std::runtime_error("run_scenario: mission goal unreachable from start");
            }
        }

        // --- FDI monitor ---
        if (i % monitor_every == 0) {
            FdiObservation obs;
            obs.commanded = applied_cmd;
            obs.measured_rates = truth.attitude_rate;
            obs.measured_rates_prev = monitor_rates_prev;
            if (cfg.fdi.rpm_feedback_enabled) {
                std::array<double, 4> rpm{};
                for (int m = 0; m < 4; ++m) {
                    rpm[static_cast<size_t>(m)] =
                        applied_cmd.u[static_cast<size_t>(m)] *
                        fault_mask.effectiveness[static_cast<size_t>(m)];
                }
                obs.rpm = rpm;
            }
            const bool was_flagged = fdi_status.fault_flag;
            fdi_status = fdi_step(obs, cfg.fdi, fdi_status, t, qp);
            monitor_rates_prev = truth.attitude_rate;

            if (!was_flagged && fdi_status.fault_flag && mode == FlightMode::Mission) {
                mode = FlightMode::Failsafe;
                Pose here;
                here.translation = est_pos;
                here.rotation = rotation_from_euler(est_att);
                emergency = engage_failsafe(here, zones, inflated, cfg.landing.v_desc,
                                            cfg.planner.waypoint_spacing_m, ctrl_dt,
                                            connectivity);
                follower.reset(emergency.waypoints, Vec2(est_pos.x(), est_pos.y()));
                failsafe_ticks = 0;
                out.metrics.selected_zone = emergency.zone_index;
                out.metrics.descend_in_place = emergency.descend_in_place;
            }
        }

        // --- Control (100 Hz) ---
        if (i % ctrl_every == 0) {
            double z_sp = cfg.mission_altitude_m;
            const Vec3 est_now =
                have_emission ? (est_pos + est_vel * (t - last_emit_t)).eval() : est_pos;
            Vec2 target_pos(est_now.x(), est_now.y());
            Vec2 target_dir = Vec2::Zero();
            double speed = cfg.cruise_speed_mps;

            if (mode == FlightMode::Failsafe) {
                const size_t di = std::min(static_cast<size_t>(failsafe_ticks),
                                           emergency.descent.size() - 1);
                z_sp = emergency.descent[di];
                ++failsafe_ticks;
            }
            if (!follower.empty()) {
                auto [pos, dir] = follower.carrot(Vec2(est_now.x(), est_now.y()), 0.3,
                                                  lookahead_steps);
                target_pos = pos;
                target_dir = dir;
            }

            const Vec3 pos_err(target_pos.x() - est_now.x(), target_pos.y() - est_now.y(), 0.0);
            const Vec3 vel_err(speed * target_dir.x() - est_vel.x(),
                               speed * target_dir.y() - est_vel.y(), 0.0);

            // Altitude loop advances on fresh estimates only; its internal
            // error derivative would otherwise spike on each sample-and-hold
            // update of the estimate.
            if (est_fresh) {
                const double est_dt = 1.0 / cfg.estimator.output_rate_hz;
                held_thrust = altitude_pid(z_sp - est_pos.z(), est_dt, cfg.outer, alt_mem, qp);
            }
            // Tilt compensation keeps the vertical thrust component on target.
            const double tilt_cos = std::max(
                std::cos(truth.attitude.x()) * std::cos(truth.attitude.y()), 0.5);
            const double thrust = std::min(held_thrust / tilt_cos, qp.max_thrust());
            const double tilt_thrust = std::max(thrust, 0.3 * qp.mass_kg * qp.gravity);
            // With a dead rotor the roll channel is one-sided, so estimator
            // jitter in the tilt setpoint ratchets the attitude; a tighter
            // failsafe tilt envelope keeps the descent upright.
            OuterLoopGains outer_gains = cfg.outer;
            if (mode == FlightMode::Failsafe) {
                outer_gains.tilt_limit_rad = std::min(outer_gains.tilt_limit_rad, 0.10);
            }
            TiltCommand tilt =
                outer_loop_pd(pos_err, vel_err, truth.attitude.z(), tilt_thrust, outer_gains, qp);
            if (mode == FlightMode::Failsafe) {
                // Smooth the setpoint: with one-sided roll authority, raw
                // estimator jitter would ratchet the attitude downward.
                failsafe_tilt_filt = 0.9 * failsafe_tilt_filt + 0.1 * Vec2(tilt.phi_cmd, tilt.theta_cmd);
                tilt.phi_cmd = failsafe_tilt_filt.x();
                tilt.theta_cmd = failsafe_tilt_filt.y();
            }
            const Vec3 att_sp(tilt.phi_cmd, tilt.theta_cmd, 0.0);

            Vec3 torque;
            switch (cfg.controller) {
                case ControllerKind::Pid: {
                    Vec3 err;
                    for (int a = 0; a < 3; ++a) {
                        err[a] = wrap_angle(att_sp[a] - truth.attitude[a]);
                    }
                    torque = pid_attitude(err, ctrl_dt, cfg.attitude_pid, pid_mem);
                    break;
                }
                case ControllerKind::FblPd:
                    torque = fbl_pd_attitude(truth, att_sp, cfg.fbl, qp);
                    break;
                case ControllerKind::Lqr:
                    torque = lqr_attitude(truth, att_sp, lqr_gain);
                    break;
            }

            // Demands beyond the differential-thrust envelope are clamped so
            // one runaway axis cannot swamp the allocation.
            const double tau_xy_max = qp.arm_length_m * qp.thrust_coeff * qp.cmd_max;
            const double tau_z_max = 0.5 * qp.torque_coeff * qp.cmd_max;
            torque.x() = std::clamp(torque.x(), -tau_xy_max, tau_xy_max);
            torque.y() = std::clamp(torque.y(), -tau_xy_max, tau_xy_max);
            torque.z() = std::clamp(torque.z(), -tau_z_max, tau_z_max);

            MotorCommand cmd;
            if (mode == FlightMode::Failsafe && fdi_status.suspected_rotor) {
                torque.z() = 0.0;  // yaw left free with a dead rotor
                cmd = detail::allocate_for_failsafe(thrust, torque,
                                                    *fdi_status.suspected_rotor, qp);
                cmd = failsafe_clip(cmd, *fdi_status.suspected_rotor);
            } else {
                cmd = detail::allocate_prioritized(thrust, torque, qp);
            }
            applied_cmd = cmd;

            // Metrics accumulated at the control cadence.
            const Vec2 true_xy(truth.position.x(), truth.position.y());
            if (!mission_reference.empty()) {
                const double dev = point_to_polyline(true_xy, mission_reference);
                deviation_sum += dev;
                deviation_max = std::max(deviation_max, dev);
                ++deviation_count;
            }
            if (mode == FlightMode::Failsafe) {
                const double err = truth.position.z() - z_sp;
                descent_err2_sum += err * err;
                ++descent_count;
            }

            TraceRecord rec;
            rec.t = t;
            rec.truth = truth;
            rec.est_position = est_pos;
            rec.est_attitude = est_att;
            rec.est_fresh = est_fresh;
            rec.reloc_flag = reloc_now;
            rec.attitude_setpoint = att_sp;
            rec.z_setpoint = z_sp;
            rec.thrust_cmd = thrust;
            rec.cmd = cmd;
            rec.fault_flag = fdi_status.fault_flag;
            rec.suspected_rotor = fdi_status.suspected_rotor.value_or(0);
            rec.mode = static_cast<int>(mode);
            out.trace.records.push_back(rec);
        }

        // --- Dynamics (1 kHz) ---
        if (i < total_ticks) {
            StepResult sr = step(truth, applied_cmd, fault_mask, dt, qp);
            truth = sr.state;
            if (sr.touchdown) {
                touchdown_pos = Vec2(truth.position.x(), truth.position.y());
                out.metrics.landed = true;
                out.metrics.duration_used_s = t + dt;
                mode = FlightMode::Landed;
                break;
            }
        }

        // --- Mission completion (the run continues to duration; the carrot
        // holds position at the path end) ---
        if (mode == FlightMode::Mission && !hover_mission && !goal_reached) {
            const double goal_dist =
                (Vec2(truth.position.x(), truth.position.y()) - cfg.map.goal).norm();
            if (goal_dist <= cfg.goal_tolerance_m) goal_reached = true;
        }
        out.metrics.duration_used_s = t;
    }

    // --- Metrics wrap-up ---
    if (hover_mission && mode == FlightMode::Mission) {
        const double end_dist =
            (Vec2(truth.position.x(), truth.position.y()) - cfg.map.goal).norm();
        goal_reached = end_dist <= cfg.goal_tolerance_m;
    }
    out.metrics.navigation_success = goal_reached;
    out.metrics.relocalization_events = estimator.relocalization_count;
    if (deviation_count > 0) {
        out.metrics.path_deviation_avg_m = deviation_sum / static_cast<double>(deviation_count);
        out.metrics.path_deviation_max_m = deviation_max;
    }
    if (cfg.fault && fdi_status.fault_flag && fdi_status.detection_time_s) {
        out.metrics.detection_time_s = *fdi_status.detection_time_s - cfg.fault->time_s;
    }
    out.metrics.suspected_rotor = fdi_status.suspected_rotor;
    if (out.metrics.landed && mode == FlightMode::Landed && emergency.zone_index >= 0) {
        out.metrics.touchdown_offset_m =
            (touchdown_pos - zones.zones[static_cast<size_t>(emergency.zone_index)]).norm();
    }
    if (descent_count > 0) {
        out.metrics.descent_rms_m =
            std::sqrt(descent_err2_sum / static_cast<double>(descent_count));
    }
    return out;
}

// =============================================================================
// Export
// =============================================================================

inline void export_trace(const RunTrace &trace, std::ostream &os,
                         const std::string &config_hash_hex_str) {
    os << "# config_hash=" << config_hash_hex_str << "\n";
    os << "t,x,y,z,vx,vy,vz,roll,pitch,yaw,roll_rate,pitch_rate,yaw_rate,"
          "est_x,est_y,est_z,est_roll,est_pitch,est_yaw,est_fresh,reloc,"
          "sp_roll,sp_pitch,sp_yaw,z_sp,thrust_cmd,u1,u2,u3,u4,fault_flag,"
          "suspected_rotor,mode\n";
    char buf[640];
    for (const TraceRecord &r : trace.records) {
        std::snprintf(
            buf, sizeof(buf),
            "%.6f,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,"
            "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%d,%d,"
            "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%d,%d,%d\n",
            r.t, r.truth.position.x(), r.truth.position.y(), r.truth.position.z(),
            r.truth.velocity.x(), r.truth.velocity.y(), r.truth.velocity.z(),
            r.truth.attitude.x(), r.truth.attitude.y(), r.truth.attitude.z(),
            r.truth.attitude_rate.x(), r.truth.attitude_rate.y(), r.truth.attitude_rate.z(),
            r.est_position.x(), r.est_position.y(), r.est_position.z(),
            r.est_attitude.x(), r.est_attitude.y(), r.est_attitude.z(),
            r.est_fresh ? 1 : 0, r.reloc_flag ? 1 : 0, r.attitude_setpoint.x(),
            r.attitude_setpoint.y(), r.attitude_setpoint.z(), r.z_setpoint, r.thrust_cmd,
            r.cmd.u[0], r.cmd.u[1], r.cmd.u[2], r.cmd.u[3], r.fault_flag ? 1 : 0,
            r.suspected_rotor, r.mode);
        os << buf;
    }
}

/// Pose stream as emitted by the estimator (rows where a pose was output).
inline void export_pose_trace(const RunTrace &trace, std::ostream &os,
                              const std::string &config_hash_hex_str) {
    os << "# config_hash=" << config_hash_hex_str << "\n";
    os << "t,x,y,z,roll,pitch,yaw,reloc_flag\n";
    char buf[256];
    for (const TraceRecord &r : trace.records) {
        if (!r.est_fresh) continue;
        std::snprintf(buf, sizeof(buf), "%.6f,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%d\n", r.t,
                      r.est_position.x(), r.est_position.y(), r.est_position.z(),
                      r.est_attitude.x(), r.est_attitude.y(), r.est_attitude.z(),
                      r.reloc_flag ? 1 : 0);
        os << buf;
    }
}

inline nlohmann::json metrics_to_json(const RunMetrics &m,
                                      const std::string &config_hash_hex_str) {
    nlohmann::json j;
    j["config_hash"] = config_hash_hex_str;
    j["navigation_success"] = m.navigation_success;
    j["relocalization_events"] = m.relocalization_events;
    j["fault_injected"] = m.fault_injected;
    j["landed"] = m.landed;
    j["descend_in_place"] = m.descend_in_place;
    j["duration_used_s"] = m.duration_used_s;
    j["selected_zone"] = m.selected_zone;
    if (m.detection_time_s) j["detection_time_s"] = *m.detection_time_s;
    if (m.path_deviation_avg_m) j["path_deviation_avg_m"] = *m.path_deviation_avg_m;
    if (m.path_deviation_max_m) j["path_deviation_max_m"] = *m.path_deviation_max_m;
    if (m.touchdown_offset_m) j["touchdown_offset_m"] = *m.touchdown_offset_m;
    if (m.descent_rms_m) j["descent_rms_m"] = *m.descent_rms_m;
    if (m.suspected_rotor) j["suspected_rotor"] = *m.suspected_rotor;
    if (m.step) {
        j["step"] = {{"rise_time_s", m.step->rise_time_s},
                     {"overshoot_pct", m.step->overshoot_pct},
                     {"settling_time_s", m.step->settling_time_s},
                     {"settled", m.step->settled}};
    }
    return j;
}

inline void export_metrics(const RunMetrics &m, std::ostream &os,
                           const std::string &config_hash_hex_str) {
    os << metrics_to_json(m, config_hash_hex_str).dump(2) << "\n";
}

/// Bitwise trace comparison for the determinism contract.
inline bool traces_bit_identical(const RunTrace &a, const RunTrace &b) {
    if (a.records.size() != b.records.size()) return false;
    auto bits_equal = [](double x, double y) {
        return std::memcmp(&x, &y, sizeof(double)) == 0;
    };
    for (size_t i = 0; i < a.records.size(); ++i) {
        const TraceRecord &ra = a.records[i];
        const TraceRecord &rb = b.records[i];
        if (!bits_equal(ra.t, rb.t)) return false;
        for (int k = 0; k < 3; ++k) {
            if (!bits_equal(ra.truth.position[k], rb.truth.position[k])) return false;
            if (!bits_equal(ra.truth.velocity[k], rb.truth.velocity[k])) return false;
            if (!bits_equal(ra.truth.attitude[k], rb.truth.attitude[k])) return false;
            if (!bits_equal(ra.truth.attitude_rate[k], rb.truth.attitude_rate[k])) return false;
            if (!bits_equal(ra.est_position[k], rb.est_position[k])) return false;
            if (!bits_equal(ra.est_attitude[k], rb.est_attitude[k])) return false;
            if (!bits_equal(ra.attitude_setpoint[k], rb.attitude_setpoint[k])) return false;
        }
        for (int k = 0; k < 4; ++k) {
            if (!bits_equal(ra.cmd.u[static_cast<size_t>(k)], rb.cmd.u[static_cast<size_t>(k)]))
                return false;
        }
        if (!bits_equal(ra.z_setpoint, rb.z_setpoint)) return false;
        if (!bits_equal(ra.thrust_cmd, rb.thrust_cmd)) return false;
        if (ra.fault_flag != rb.fault_flag || ra.suspected_rotor != rb.suspected_rotor ||
            ra.mode != rb.mode || ra.est_fresh != rb.est_fresh || ra.reloc_flag != rb.reloc_flag)
            return false;
    }
    return true;
}

// =============================================================================
// Fault-matrix benchmark: four scenarios x seeds with a full rotor-2 failure,
// plus the same matrix with no fault for the false-positive count.
// =============================================================================

struct FdiMatrixRow {
    ScenarioKind kind;
    uint64_t seed = 0;
    bool fault = false;
    RunMetrics metrics;
};

struct FdiMatrixReport {
    std::vector<FdiMatrixRow> rows;
    int fault_runs = 0;
    int detected = 0;
    int correct_id = 0;
    int recovered = 0;  // landed with touchdown offset <= 1.2 m
    int nominal_runs = 0;
    int false_positives = 0;
    double max_detection_time_s = 0.0;
    double max_touchdown_offset_m = 0.0;
};

/// Module parameter blocks (plant, gains, estimator, FDI, planner, descent
/// speed) are taken from `base`; scenario geometry comes from the canonical
/// per-kind configs.
inline ScenarioConfig apply_base_parameters(ScenarioConfig scenario,
                                            const ScenarioConfig &base) {
    scenario.controller = base.controller;
    scenario.quad = base.quad;
    scenario.attitude_pid = base.attitude_pid;
    scenario.fbl = base.fbl;
    scenario.lqr = base.lqr;
    scenario.outer = base.outer;
    scenario.estimator = base.estimator;
    scenario.fdi = base.fdi;
    scenario.planner = base.planner;
    scenario.landing.v_desc = base.landing.v_desc;
    return scenario;
}

inline FdiMatrixReport run_fdi_matrix(int seeds_per_scenario = 5,
                                      const ScenarioConfig *base = nullptr,
                                      int fault_rotor = 2) {
    FdiMatrixReport report;
    const ScenarioKind kinds[] = {ScenarioKind::StraightLine, ScenarioKind::MazeNavigation,
                                  ScenarioKind::HoverToFault, ScenarioKind::TurningManoeuvre};
    for (bool fault : {true, false}) {
        for (ScenarioKind kind : kinds) {
            for (int s = 1; s <= seeds_per_scenario; ++s) {
                ScenarioConfig cfg =
                    make_default_config(kind, static_cast<uint64_t>(s), fault ? fault_rotor : 0);
                if (base) cfg = apply_base_parameters(cfg, *base);
                RunResult run = run_scenario(cfg);
                report.rows.push_back({kind, static_cast<uint64_t>(s), fault, run.metrics});
                if (fault) {
                    report.fault_runs += 1;
                    if (run.metrics.detection_time_s) {
                        report.detected += 1;
                        report.max_detection_time_s =
                            std::max(report.max_detection_time_s, *run.metrics.detection_time_s);
                    }
                    if (run.metrics.suspected_rotor &&
                        *run.metrics.suspected_rotor == fault_rotor) {
                        report.correct_id += 1;
                    }
                    if (run.metrics.touchdown_offset_m) {
                        report.max_touchdown_offset_m = std::max(
                            report.max_touchdown_offset_m, *run.metrics.touchdown_offset_m);
                    }
                    const bool recovered = run.metrics.landed &&
                                           run.metrics.touchdown_offset_m &&
                                           *run.metrics.touchdown_offset_m <= 1.2;
                    if (recovered) report.recovered += 1;
                } else {
                    report.nominal_runs += 1;
                    if (run.metrics.suspected_rotor) report.false_positives += 1;
                }
            }
        }
    }
    return report;
}

inline void export_fdi_matrix_csv(const FdiMatrixReport &report, std::ostream &os,
                                  const std::string &config_hash_hex_str) {
    os << "# config_hash=" << config_hash_hex_str << "\n";
    os << "scenario,seed,fault_injected,detection_time_s,path_deviation_avg_m,"
          "touchdown_offset_m,suspected_rotor,landed,recovered,navigation_success\n";
    for (const FdiMatrixRow &row : report.rows) {
        const RunMetrics &m = row.metrics;
        os << to_string(row.kind) << "," << row.seed << "," << (row.fault ? 1 : 0) << ",";
        if (m.detection_time_s) os << *m.detection_time_s;
        os << ",";
        if (m.path_deviation_avg_m) os << *m.path_deviation_avg_m;
        os << ",";
        if (m.touchdown_offset_m) os << *m.touchdown_offset_m;
        os << ",";
        if (m.suspected_rotor) os << *m.suspected_rotor;
        os << "," << (m.landed ? 1 : 0) << ","
           << ((m.landed && m.touchdown_offset_m && *m.touchdown_offset_m <= 1.2) ? 1 : 0) << ","
           << (m.navigation_success ? 1 : 0) << "\n";
    }
}

}  // namespace quadsim
