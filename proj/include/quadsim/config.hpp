// Scenario configuration: schema, TOML loading with unknown-key rejection,
// canonical emission (also the provenance hash source), builtin maps, and the
// default benchmark scenarios.
#pragma once

#include "quadsim/control.hpp"
#include "quadsim/dynamics.hpp"
#include "quadsim/estimation.hpp"
#include "quadsim/fdi.hpp"
#include "quadsim/planning.hpp"
#include "quadsim/toml.hpp"

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>

namespace quadsim {

enum class ScenarioKind {
    StraightLine,
    MazeNavigation,
    HoverToFault,
    TurningManoeuvre,
    StepResponse,
};

enum class ControllerKind { Pid, FblPd, Lqr };

inline const char *to_string(ScenarioKind k) {
    switch (k) {
        case ScenarioKind::StraightLine: return "StraightLine";
        case ScenarioKind::MazeNavigation: return "MazeNavigation";
        case ScenarioKind::HoverToFault: return "HoverToFault";
        case ScenarioKind::TurningManoeuvre: return "TurningManoeuvre";
        case ScenarioKind::StepResponse: return "StepResponse";
    }
    return "?";
}

inline const char *to_string(ControllerKind k) {
    switch (k) {
        case ControllerKind::Pid: return "PID";
        case ControllerKind::FblPd: return "FBL_PD";
        case ControllerKind::Lqr: return "LQR";
    }
    return "?";
}

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FaultSpec {
    int rotor = 2;              // 1-based
    double time_s = 0;          // injection time
    double effectiveness = 0.0; // remaining rotor effectiveness (0 = full failure)
};

/// Map source: exactly one of builtin name, grid file path, or inline rows.
struct MapConfig {
    std::string builtin;                  // "open10" | "corridor14x6" | "maze12"
    std::string file;                     // grid file path
    std::vector<std::string> rows;        // inline '.'/'#' rows
    double resolution_m = 0.1;            // for inline rows
    Vec2 origin{0.0, 0.0};                // for inline rows
    Vec2 start{0.0, 0.0};
    Vec2 goal{0.0, 0.0};
    std::vector<Vec2> via;                // intermediate targets, in order
};

struct LandingConfig {
    std::vector<Vec2> zones;   // empty: zones are detected from the map
    double v_desc = 0.5;
    double clearance_m = 0.4;  // free-disk radius for detected zones
};

struct PlannerConfig {
    double inflation_radius_m = 0.25;
    double waypoint_spacing_m = 0.2;
    int connectivity = 8;  // 8-connected with sqrt(2) diagonals, or 4
};

struct ScenarioConfig {
    ScenarioKind kind = ScenarioKind::HoverToFault;
    double duration_s = 30.0;
    uint64_t seed = 1;
    ControllerKind controller = ControllerKind::Lqr;
    double cruise_speed_mps = 0.55;
    double mission_altitude_m = 1.5;
    double goal_tolerance_m = 0.3;
    double carrot_lookahead_m = 0.4;
    double step_deg = 5.0;  // StepResponse amplitude
    std::optional<FaultSpec> fault;

    QuadParams quad;
    PidGains attitude_pid;
    FblGains fbl;
    LqrWeights lqr{(Vec6() << 5.0, 0.1, 5.0, 0.1, 1.0, 0.05).finished(),
                   Vec3(0.1, 0.1, 0.1)};
    OuterLoopGains outer;
    PoseNoiseModel estimator;
    FdiConfig fdi;
    PlannerConfig planner;
    MapConfig map;
    LandingConfig landing;
};

// =============================================================================
// Builtin maps
// =============================================================================

/// 12 m x 12 m maze at 0.1 m resolution: 0.2 m outer ring, two offset
/// interior walls whose gaps sit near the start-goal diagonal, and two decoy
/// stubs. The shortest start-to-goal route is about 13 m.
inline OccupancyGrid make_maze12() {
    OccupancyGrid g = OccupancyGrid::empty(0.1, 0.0, 0.0, 120, 120);
    auto fill = [&](int x0, int x1, int y0, int y1) {
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) g.set_occupied({x, y}, true);
        }
    };
    fill(0, 119, 0, 1);      // outer ring
    fill(0, 119, 118, 119);
    fill(0, 1, 0, 119);
    fill(118, 119, 0, 119);
    fill(2, 47, 40, 41);     // wall A, gap x in [4.8, 6.6] m
    fill(66, 117, 40, 41);
    fill(2, 59, 76, 77);     // wall B, gap x in [6.0, 7.8] m
    fill(78, 117, 76, 77);
    fill(90, 91, 20, 34);    // decoy stubs
    fill(30, 31, 86, 100);
    return g;
}

inline OccupancyGrid make_builtin_map(const std::string &name) {
    if (name == "maze12") return make_maze12();
    if (name == "open10") return OccupancyGrid::empty(0.1, 0.0, 0.0, 100, 100);
    if (name == "corridor14x6") return OccupancyGrid::empty(0.1, 0.0, 0.0, 140, 60);
    if (name == "open6") {
        return OccupancyGrid::empty(0.1, -3.0, -3.0, 60, 60);
    }
    throw ConfigError("unknown builtin map '" + name + "'");
}

/// Resolve the configured map to a grid. Relative file paths are resolved
/// against `base_dir` (the config file's directory).
inline OccupancyGrid resolve_map(const MapConfig &map, const std::string &base_dir = ".") {
    const int sources = (map.builtin.empty() ? 0 : 1) + (map.file.empty() ? 0 : 1) +
                        (map.rows.empty() ? 0 : 1);
    if (sources != 1) {
        throw ConfigError("map: exactly one of builtin/file/rows must be set");
    }
    if (!map.builtin.empty()) return make_builtin_map(map.builtin);
    if (!map.file.empty()) {
        std::filesystem::path p(map.file);
        if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
        std::ifstream f(p);
        if (!f) throw ConfigError("map: cannot open grid file " + p.string());
        return load_grid(f);
    }
    const int h = static_cast<int>(map.rows.size());
    const int w = static_cast<int>(map.rows.front().size());
    OccupancyGrid g = OccupancyGrid::empty(map.resolution_m, map.origin.x(), map.origin.y(), w, h);
    for (int y = 0; y < h; ++y) {
        const std::string &row = map.rows[static_cast<size_t>(y)];
        if (static_cast<int>(row.size()) != w) throw ConfigError("map: ragged inline rows");
        for (int x = 0; x < w; ++x) {
            if (row[static_cast<size_t>(x)] == '#') g.set_occupied({x, y}, true);
            else if (row[static_cast<size_t>(x)] != '.') throw ConfigError("map: bad cell char");
        }
    }
    return g;
}

// =============================================================================
// Canonical emission (also used for the provenance hash)
// =============================================================================

namespace detail {

inline std::string fmt_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);  // shortest round trip
    std::string s(buf, res.ptr);
    // Keep floats recognizable as floats in TOML.
    if (s.find_first_of(".eEn") == std::string::npos) return s + ".0";
    return s;
}

inline std::string fmt_vec(const Vec3 &v) {
    return "[" + fmt_double(v.x()) + ", " + fmt_double(v.y()) + ", " + fmt_double(v.z()) + "]";
}

inline std::string fmt_vec2_list(const std::vector<Vec2> &vs) {
    std::string out = "[";
    for (size_t i = 0; i < vs.size(); ++i) {
        if (i) out += ", ";
        out += "[" + fmt_double(vs[i].x()) + ", " + fmt_double(vs[i].y()) + "]";
    }
    return out + "]";
}

}  // namespace detail

inline std::string to_toml(const ScenarioConfig &c) {
    using detail::fmt_double;
    using detail::fmt_vec;
    std::ostringstream os;
    os << "[scenario]\n";
    os << "kind = \"" << to_string(c.kind) << "\"\n";
    os << "duration_s = " << fmt_double(c.duration_s) << "\n";
    os << "seed = " << c.seed << "\n";
    os << "controller = \"" << to_string(c.controller) << "\"\n";
    os << "cruise_speed_mps = " << fmt_double(c.cruise_speed_mps) << "\n";
    os << "mission_altitude_m = " << fmt_double(c.mission_altitude_m) << "\n";
    os << "goal_tolerance_m = " << fmt_double(c.goal_tolerance_m) << "\n";
    os << "carrot_lookahead_m = " << fmt_double(c.carrot_lookahead_m) << "\n";
    os << "step_deg = " << fmt_double(c.step_deg) << "\n";
    if (c.fault) {
        os << "\n[fault]\n";
        os << "rotor = " << c.fault->rotor << "\n";
        os << "time_s = " << fmt_double(c.fault->time_s) << "\n";
        os << "effectiveness = " << fmt_double(c.fault->effectiveness) << "\n";
    }
    os << "\n[quad]\n";
    os << "mass_kg = " << fmt_double(c.quad.mass_kg) << "\n";
    os << "inertia = " << fmt_vec(c.quad.inertia_diag) << "\n";
    os << "arm_length_m = " << fmt_double(c.quad.arm_length_m) << "\n";
    os << "thrust_coeff = " << fmt_double(c.quad.thrust_coeff) << "\n";
    os << "torque_coeff = " << fmt_double(c.quad.torque_coeff) << "\n";
    os << "gravity = " << fmt_double(c.quad.gravity) << "\n";
    os << "cmd_max = " << fmt_double(c.quad.cmd_max) << "\n";
    os << "\n[attitude_pid]\n";
    os << "kp = " << fmt_vec(c.attitude_pid.kp) << "\n";
    os << "ki = " << fmt_vec(c.attitude_pid.ki) << "\n";
    os << "kd = " << fmt_vec(c.attitude_pid.kd) << "\n";
    os << "integral_limit = " << fmt_double(c.attitude_pid.integral_limit) << "\n";
    os << "\n[fbl]\n";
    os << "kp = " << fmt_vec(c.fbl.kp) << "\n";
    os << "kd = " << fmt_vec(c.fbl.kd) << "\n";
    os << "\n[lqr]\n";
    os << "q_angle = [" << fmt_double(c.lqr.q_diag[0]) << ", " << fmt_double(c.lqr.q_diag[2])
       << ", " << fmt_double(c.lqr.q_diag[4]) << "]\n";
    os << "q_rate = [" << fmt_double(c.lqr.q_diag[1]) << ", " << fmt_double(c.lqr.q_diag[3])
       << ", " << fmt_double(c.lqr.q_diag[5]) << "]\n";
    os << "r = " << fmt_vec(c.lqr.r_diag) << "\n";
    os << "\n[outer]\n";
    os << "kp_xy = " << fmt_double(c.outer.kp_xy) << "\n";
    os << "kd_xy = " << fmt_double(c.outer.kd_xy) << "\n";
    os << "tilt_limit_rad = " << fmt_double(c.outer.tilt_limit_rad) << "\n";
    os << "alt_kp = " << fmt_double(c.outer.alt_kp) << "\n";
    os << "alt_ki = " << fmt_double(c.outer.alt_ki) << "\n";
    os << "alt_kd = " << fmt_double(c.outer.alt_kd) << "\n";
    os << "alt_integral_limit = " << fmt_double(c.outer.alt_integral_limit) << "\n";
    os << "\n[estimator]\n";
    os << "sigma_pos_m = " << fmt_double(c.estimator.sigma_pos_m) << "\n";
    os << "sigma_att_rad = " << fmt_double(c.estimator.sigma_att_rad) << "\n";
    os << "drift_rate_m_per_sqrt_s = " << fmt_double(c.estimator.drift_rate_m_per_sqrt_s) << "\n";
    os << "loop_closure_period_s = " << fmt_double(c.estimator.loop_closure_period_s) << "\n";
    os << "output_rate_hz = " << fmt_double(c.estimator.output_rate_hz) << "\n";
    os << "\n[fdi]\n";
    os << "pwm_saturation_frac = " << fmt_double(c.fdi.pwm_saturation_frac) << "\n";
    os << "rate_mismatch_eps = " << fmt_double(c.fdi.rate_mismatch_eps) << "\n";
    os << "persistence_samples = " << c.fdi.persistence_samples << "\n";
    os << "monitor_rate_hz = " << fmt_double(c.fdi.monitor_rate_hz) << "\n";
    os << "rpm_feedback = " << (c.fdi.rpm_feedback_enabled ? "true" : "false") << "\n";
    os << "rpm_zero_eps = " << fmt_double(c.fdi.rpm_zero_eps) << "\n";
    os << "\n[planner]\n";
    os << "inflation_radius_m = " << fmt_double(c.planner.inflation_radius_m) << "\n";
    os << "waypoint_spacing_m = " << fmt_double(c.planner.waypoint_spacing_m) << "\n";
    os << "connectivity = " << c.planner.connectivity << "\n";
    os << "\n[map]\n";
    if (!c.map.builtin.empty()) os << "builtin = \"" << c.map.builtin << "\"\n";
    if (!c.map.file.empty()) os << "file = \"" << c.map.file << "\"\n";
    if (!c.map.rows.empty()) {
        os << "rows = [";
        for (size_t i = 0; i < c.map.rows.size(); ++i) {
            if (i) os << ", ";
            os << "\"" << c.map.rows[i] << "\"";
        }
        os << "]\n";
        os << "resolution_m = " << fmt_double(c.map.resolution_m) << "\n";
        os << "origin = [" << fmt_double(c.map.origin.x()) << ", " << fmt_double(c.map.origin.y())
           << "]\n";
    }
    os << "start = [" << fmt_double(c.map.start.x()) << ", " << fmt_double(c.map.start.y())
       << "]\n";
    os << "goal = [" << fmt_double(c.map.goal.x()) << ", " << fmt_double(c.map.goal.y()) << "]\n";
    if (!c.map.via.empty()) os << "via = " << detail::fmt_vec2_list(c.map.via) << "\n";
    os << "\n[landing]\n";
    os << "zones = " << detail::fmt_vec2_list(c.landing.zones) << "\n";
    os << "v_desc = " << fmt_double(c.landing.v_desc) << "\n";
    os << "clearance_m = " << fmt_double(c.landing.clearance_m) << "\n";
    return os.str();
}

/// FNV-1a 64-bit over the canonical emission; stamped into every output file.
inline uint64_t config_hash(const ScenarioConfig &c) {
    const std::string dump = to_toml(c);
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char byte : dump) {
        h ^= byte;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string config_hash_hex(const ScenarioConfig &c) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(config_hash(c)));
    return std::string(buf);
}

// =============================================================================
// Loading
// =============================================================================

namespace detail {

/// Tracks which keys were consumed so config drift (unknown keys) is a hard
/// error.
class TableReader {
  public:
    TableReader(const toml::Document &doc, const std::string &name,
                std::set<std::string> *consumed)
        : table_(doc.find(name)), name_(name), consumed_(consumed) {}

    bool present() const { return table_ != nullptr; }

    const toml::Value *get(const std::string &key) const {
        if (!table_) return nullptr;
        const toml::Value *v = table_->find(key);
        if (v) consumed_->insert(name_ + "." + key);
        return v;
    }
    double number(const std::string &key, double fallback) const {
        const toml::Value *v = get(key);
        return v ? v->as_double() : fallback;
    }
    double require_number(const std::string &key) const {
        const toml::Value *v = get(key);
        if (!v) throw ConfigError("missing required key " + name_ + "." + key);
        return v->as_double();
    }
    int64_t require_int(const std::string &key) const {
        const toml::Value *v = get(key);
        if (!v) throw ConfigError("missing required key " + name_ + "." + key);
        return v->as_int();
    }
    int64_t integer(const std::string &key, int64_t fallback) const {
        const toml::Value *v = get(key);
        return v ? v->as_int() : fallback;
    }
    bool boolean(const std::string &key, bool fallback) const {
        const toml::Value *v = get(key);
        return v ? v->as_bool() : fallback;
    }
    std::string text(const std::string &key, const std::string &fallback) const {
        const toml::Value *v = get(key);
        return v ? v->as_string() : fallback;
    }
    Vec3 vec3(const std::string &key, const Vec3 &fallback) const {
        const toml::Value *v = get(key);
        if (!v) return fallback;
        const auto &a = v->as_array();
        if (a.size() != 3) throw ConfigError(name_ + "." + key + " must have 3 entries");
        return Vec3(a[0].as_double(), a[1].as_double(), a[2].as_double());
    }
    Vec2 vec2(const std::string &key, const Vec2 &fallback) const {
        const toml::Value *v = get(key);
        if (!v) return fallback;
        const auto &a = v->as_array();
        if (a.size() != 2) throw ConfigError(name_ + "." + key + " must have 2 entries");
        return Vec2(a[0].as_double(), a[1].as_double());
    }
    std::vector<Vec2> vec2_list(const std::string &key) const {
        const toml::Value *v = get(key);
        std::vector<Vec2> out;
        if (!v) return out;
        for (const auto &item : v->as_array()) {
            const auto &pair = item.as_array();
            if (pair.size() != 2) throw ConfigError(name_ + "." + key + " entries must be [x, y]");
            out.emplace_back(pair[0].as_double(), pair[1].as_double());
        }
        return out;
    }
    std::vector<std::string> string_list(const std::string &key) const {
        const toml::Value *v = get(key);
        std::vector<std::string> out;
        if (!v) return out;
        for (const auto &item : v->as_array()) out.push_back(item.as_string());
        return out;
    }

  private:
    const toml::Table *table_;
    std::string name_;
    std::set<std::string> *consumed_;
};

inline ScenarioKind parse_kind(const std::string &s) {
    for (ScenarioKind k : {ScenarioKind::StraightLine, ScenarioKind::MazeNavigation,
                           ScenarioKind::HoverToFault, ScenarioKind::TurningManoeuvre,
                           ScenarioKind::StepResponse}) {
        if (s == to_string(k)) return k;
    }
    throw ConfigError("unknown scenario kind '" + s + "'");
}

inline ControllerKind parse_controller(const std::string &s) {
    for (ControllerKind k : {ControllerKind::Pid, ControllerKind::FblPd, ControllerKind::Lqr}) {
        if (s == to_string(k)) return k;
    }
    throw ConfigError("unknown controller '" + s + "'");
}

}  // namespace detail

inline bool kind_needs_map(ScenarioKind k) { return k != ScenarioKind::StepResponse; }

inline void validate_config(const ScenarioConfig &c) {
    c.quad.validate();
    if (!(c.duration_s > 0.0)) throw ConfigError("scenario.duration_s must be positive");
    if (c.fault) {
        if (c.fault->rotor < 1 || c.fault->rotor > 4) throw ConfigError("fault.rotor must be 1..4");
        if (!(c.fault->time_s >= 0.0) || c.fault->time_s >= c.duration_s) {
            throw ConfigError("fault.time_s must lie inside the scenario duration");
        }
        if (c.fault->effectiveness < 0.0 || c.fault->effectiveness >= 1.0) {
            throw ConfigError("fault.effectiveness must be in [0, 1)");
        }
    }
    if (!(c.outer.tilt_limit_rad > 0.0) || c.outer.tilt_limit_rad > M_PI / 4.0) {
        throw ConfigError("outer.tilt_limit_rad must be in (0, pi/4]");
    }
    if (c.fdi.persistence_samples < 1) throw ConfigError("fdi.persistence_samples must be >= 1");
    if (!(c.landing.v_desc > 0.0)) throw ConfigError("landing.v_desc must be positive");
    if (c.planner.connectivity != 4 && c.planner.connectivity != 8) {
        throw ConfigError("planner.connectivity must be 4 or 8");
    }
    if (kind_needs_map(c.kind)) {
        const int sources = (c.map.builtin.empty() ? 0 : 1) + (c.map.file.empty() ? 0 : 1) +
                            (c.map.rows.empty() ? 0 : 1);
        if (sources != 1) throw ConfigError("map: exactly one of builtin/file/rows must be set");
    }
}

inline ScenarioConfig load_config(std::istream &is, const std::string & /*base_dir*/ = ".") {
    toml::Document doc = toml::parse(is);
    std::set<std::string> consumed;
    ScenarioConfig c;

    detail::TableReader scenario(doc, "scenario", &consumed);
    if (!scenario.present()) throw ConfigError("missing [scenario] table");
    c.kind = detail::parse_kind(scenario.text("kind", ""));
    c.duration_s = scenario.require_number("duration_s");
    const toml::Value *seed = scenario.get("seed");
    if (!seed) throw ConfigError("missing required key scenario.seed (determinism contract)");
    c.seed = static_cast<uint64_t>(seed->as_int());
    c.controller = detail::parse_controller(scenario.text("controller", "LQR"));
    c.cruise_speed_mps = scenario.number("cruise_speed_mps", c.cruise_speed_mps);
    c.mission_altitude_m = scenario.number("mission_altitude_m", c.mission_altitude_m);
    c.goal_tolerance_m = scenario.number("goal_tolerance_m", c.goal_tolerance_m);
    c.carrot_lookahead_m = scenario.number("carrot_lookahead_m", c.carrot_lookahead_m);
    c.step_deg = scenario.number("step_deg", c.step_deg);

    detail::TableReader fault(doc, "fault", &consumed);
    if (fault.present()) {
        FaultSpec f;
        f.rotor = static_cast<int>(fault.require_int("rotor"));
        f.time_s = fault.require_number("time_s");
        f.effectiveness = fault.number("effectiveness", 0.0);
        c.fault = f;
    }

    detail::TableReader quad(doc, "quad", &consumed);
    c.quad.mass_kg = quad.number("mass_kg", c.quad.mass_kg);
    c.quad.inertia_diag = quad.vec3("inertia", c.quad.inertia_diag);
    c.quad.arm_length_m = quad.number("arm_length_m", c.quad.arm_length_m);
    c.quad.thrust_coeff = quad.number("thrust_coeff", c.quad.thrust_coeff);
    c.quad.torque_coeff = quad.number("torque_coeff", c.quad.torque_coeff);
    c.quad.gravity = quad.number("gravity", c.quad.gravity);
    c.quad.cmd_max = quad.number("cmd_max", c.quad.cmd_max);

    detail::TableReader pid(doc, "attitude_pid", &consumed);
    c.attitude_pid.kp = pid.vec3("kp", c.attitude_pid.kp);
    c.attitude_pid.ki = pid.vec3("ki", c.attitude_pid.ki);
    c.attitude_pid.kd = pid.vec3("kd", c.attitude_pid.kd);
    c.attitude_pid.integral_limit = pid.number("integral_limit", c.attitude_pid.integral_limit);

    detail::TableReader fbl(doc, "fbl", &consumed);
    c.fbl.kp = fbl.vec3("kp", c.fbl.kp);
    c.fbl.kd = fbl.vec3("kd", c.fbl.kd);

    detail::TableReader lqr(doc, "lqr", &consumed);
    const Vec3 q_angle = lqr.vec3("q_angle", Vec3(c.lqr.q_diag[0], c.lqr.q_diag[2], c.lqr.q_diag[4]));
    const Vec3 q_rate = lqr.vec3("q_rate", Vec3(c.lqr.q_diag[1], c.lqr.q_diag[3], c.lqr.q_diag[5]));
    for (int axis = 0; axis < 3; ++axis) {
        c.lqr.q_diag[2 * axis] = q_angle[axis];
        c.lqr.q_diag[2 * axis + 1] = q_rate[axis];
    }
    c.lqr.r_diag = lqr.vec3("r", c.lqr.r_diag);

    detail::TableReader outer(doc, "outer", &consumed);
    c.outer.kp_xy = outer.number("kp_xy", c.outer.kp_xy);
    c.outer.kd_xy = outer.number("kd_xy", c.outer.kd_xy);
    c.outer.tilt_limit_rad = outer.number("tilt_limit_rad", c.outer.tilt_limit_rad);
    c.outer.alt_kp = outer.number("alt_kp", c.outer.alt_kp);
    c.outer.alt_ki = outer.number("alt_ki", c.outer.alt_ki);
    c.outer.alt_kd = outer.number("alt_kd", c.outer.alt_kd);
    c.outer.alt_integral_limit = outer.number("alt_integral_limit", c.outer.alt_integral_limit);

    detail::TableReader est(doc, "estimator", &consumed);
    c.estimator.sigma_pos_m = est.number("sigma_pos_m", c.estimator.sigma_pos_m);
    c.estimator.sigma_att_rad = est.number("sigma_att_rad", c.estimator.sigma_att_rad);
    c.estimator.drift_rate_m_per_sqrt_s =
        est.number("drift_rate_m_per_sqrt_s", c.estimator.drift_rate_m_per_sqrt_s);
    c.estimator.loop_closure_period_s =
        est.number("loop_closure_period_s", c.estimator.loop_closure_period_s);
    c.estimator.output_rate_hz = est.number("output_rate_hz", c.estimator.output_rate_hz);

    detail::TableReader fdi(doc, "fdi", &consumed);
    c.fdi.pwm_saturation_frac = fdi.number("pwm_saturation_frac", c.fdi.pwm_saturation_frac);
    c.fdi.rate_mismatch_eps = fdi.number("rate_mismatch_eps", c.fdi.rate_mismatch_eps);
    c.fdi.persistence_samples =
        static_cast<int>(fdi.integer("persistence_samples", c.fdi.persistence_samples));
    c.fdi.monitor_rate_hz = fdi.number("monitor_rate_hz", c.fdi.monitor_rate_hz);
    c.fdi.rpm_feedback_enabled = fdi.boolean("rpm_feedback", c.fdi.rpm_feedback_enabled);
    c.fdi.rpm_zero_eps = fdi.number("rpm_zero_eps", c.fdi.rpm_zero_eps);

    detail::TableReader planner(doc, "planner", &consumed);
    c.planner.inflation_radius_m =
        planner.number("inflation_radius_m", c.planner.inflation_radius_m);
    c.planner.waypoint_spacing_m =
        planner.number("waypoint_spacing_m", c.planner.waypoint_spacing_m);
    c.planner.connectivity = static_cast<int>(planner.integer("connectivity", c.planner.connectivity));

    detail::TableReader map(doc, "map", &consumed);
    c.map.builtin = map.text("builtin", "");
    c.map.file = map.text("file", "");
    c.map.rows = map.string_list("rows");
    c.map.resolution_m = map.number("resolution_m", c.map.resolution_m);
    c.map.origin = map.vec2("origin", c.map.origin);
    c.map.start = map.vec2("start", c.map.start);
    c.map.goal = map.vec2("goal", c.map.goal);
    c.map.via = map.vec2_list("via");

    detail::TableReader landing(doc, "landing", &consumed);
    c.landing.zones = landing.vec2_list("zones");
    c.landing.v_desc = landing.number("v_desc", c.landing.v_desc);
    c.landing.clearance_m = landing.number("clearance_m", c.landing.clearance_m);

    // Unknown tables or keys are config drift: reject loudly.
    static const std::set<std::string> known_tables{
        "",     "scenario", "fault", "quad",    "attitude_pid", "fbl",     "lqr",
        "outer", "estimator", "fdi",  "planner", "map",          "landing"};
    for (const auto &[table_name, table] : doc.tables) {
        if (!known_tables.count(table_name)) {
            throw ConfigError("unknown table [" + table_name + "]");
        }
        for (const auto &[key, value] : table.entries) {
            const std::string full = table_name + "." + key;
            if (!consumed.count(full)) {
                throw ConfigError("unknown key " + full + " (line " +
                                  std::to_string(value.line) + ")");
            }
        }
    }

    validate_config(c);
    return c;
}

inline ScenarioConfig load_config_file(const std::string &path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path);
    const std::string base = std::filesystem::path(path).parent_path().string();
    ScenarioConfig c = load_config(f, base.empty() ? "." : base);
    // Resolve the map now so relative paths bind to the config location.
    if (kind_needs_map(c.kind) && !c.map.file.empty()) {
        std::filesystem::path p(c.map.file);
        if (p.is_relative()) c.map.file = (std::filesystem::path(base) / p).string();
    }
    return c;
}

// =============================================================================
// Default benchmark scenarios
// =============================================================================

/// Canonical configs for the four benchmark scenarios plus the step test.
/// fault_rotor 0 means no fault is injected.
inline ScenarioConfig make_default_config(ScenarioKind kind, uint64_t seed = 1,
                                          int fault_rotor = 0) {
    ScenarioConfig c;
    c.kind = kind;
    c.seed = seed;
    if (kind != ScenarioKind::StepResponse) c.mission_altitude_m = 3.0;
    switch (kind) {
        case ScenarioKind::StraightLine:
            c.duration_s = 40.0;
            c.map.builtin = "corridor14x6";
            c.map.start = Vec2(1.5, 3.0);
            c.map.goal = Vec2(12.5, 3.0);
            c.landing.zones = {Vec2(4.0, 2.5), Vec2(9.1, 2.3), Vec2(11.5, 3.5)};
            if (fault_rotor > 0) c.fault = FaultSpec{fault_rotor, 6.0};
            break;
        case ScenarioKind::MazeNavigation:
            c.duration_s = 30.0;
            c.map.builtin = "maze12";
            c.map.start = Vec2(1.5, 1.5);
            c.map.goal = Vec2(10.5, 10.5);
            c.landing.zones = {Vec2(6.3, 5.9), Vec2(2.0, 10.0), Vec2(10.0, 2.0)};
            c.cruise_speed_mps = 0.7;
            if (fault_rotor > 0) c.fault = FaultSpec{fault_rotor, 5.0};
            break;
        case ScenarioKind::HoverToFault:
            c.duration_s = 30.0;
            c.map.builtin = "open6";
            c.map.start = Vec2(0.0, 0.0);
            c.map.goal = Vec2(0.0, 0.0);
            c.landing.zones = {Vec2(0.6, 0.0), Vec2(-2.0, -2.0)};
            if (fault_rotor > 0) c.fault = FaultSpec{fault_rotor, 8.0};
            break;
        case ScenarioKind::TurningManoeuvre:
            c.duration_s = 40.0;
            c.map.builtin = "open10";
            c.map.start = Vec2(1.5, 1.5);
            c.map.via = {Vec2(8.5, 1.5)};
            c.map.goal = Vec2(8.5, 8.5);
            c.landing.zones = {Vec2(9.0, 4.6), Vec2(3.0, 2.5)};
            if (fault_rotor > 0) c.fault = FaultSpec{fault_rotor, 10.0};
            break;
        case ScenarioKind::StepResponse:
            c.duration_s = 6.0;
            // The step comparison uses the reference controller weights; the
            // flight scenarios run a softer R that is discretely stable at
            // the 100 Hz loop.
            c.lqr.r_diag = Vec3(0.01, 0.01, 0.01);
            break;
    }
    validate_config(c);
    return c;
}

}  // namespace quadsim
