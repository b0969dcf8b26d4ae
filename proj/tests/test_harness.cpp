// Config parsing and validation, canonical emission, rate contracts,
// determinism, mode transitions, metric consistency, and exports.

#include "quadsim/scenario.hpp"

#include <gtest/gtest.h>

#include <json.hpp>

#include <sstream>

using namespace quadsim;

// ============================================================================
// TOML subset
// ============================================================================

TEST(Toml, ParsesScalarsArraysAndTables) {
    std::stringstream ss(R"(
# comment
top = 3
[alpha]
name = "hello # not a comment"
flag = true
value = -2.5e-1
ints = [1, 2, 3]
pairs = [[1.0, 2.0], [3.0, 4.0]]
multi = [
  "a", "b",
]
)");
    auto doc = toml::parse(ss);
    const auto *root = doc.find("");
    ASSERT_NE(root, nullptr);
    EXPECT_EQ(root->find("top")->as_int(), 3);
    const auto *alpha = doc.find("alpha");
    ASSERT_NE(alpha, nullptr);
    EXPECT_EQ(alpha->find("name")->as_string(), "hello # not a comment");
    EXPECT_TRUE(alpha->find("flag")->as_bool());
    EXPECT_DOUBLE_EQ(alpha->find("value")->as_double(), -0.25);
    EXPECT_EQ(alpha->find("ints")->as_array().size(), 3u);
    EXPECT_DOUBLE_EQ(alpha->find("pairs")->as_array()[1].as_array()[0].as_double(), 3.0);
    EXPECT_EQ(alpha->find("multi")->as_array().size(), 2u);
}

TEST(Toml, ReportsLineNumbers) {
    std::stringstream ss("a = 1\nb = ???\n");
    try {
        toml::parse(ss);
        FAIL() << "expected parse error";
    } catch (const toml::ParseError &e) {
        EXPECT_EQ(e.line, 2);
    }
}

TEST(Toml, RejectsDuplicates) {
    std::stringstream ss("a = 1\na = 2\n");
    EXPECT_THROW(toml::parse(ss), toml::ParseError);
    std::stringstream ss2("[t]\nx = 1\n[t]\ny = 2\n");
    EXPECT_THROW(toml::parse(ss2), toml::ParseError);
}

// ============================================================================
// Config
// ============================================================================

TEST(Config, CanonicalEmissionRoundTrips) {
    for (ScenarioKind kind : {ScenarioKind::StraightLine, ScenarioKind::MazeNavigation,
                              ScenarioKind::HoverToFault, ScenarioKind::TurningManoeuvre,
                              ScenarioKind::StepResponse}) {
        ScenarioConfig cfg = make_default_config(kind, 3, kind == ScenarioKind::StepResponse ? 0 : 2);
        std::stringstream ss(to_toml(cfg));
        ScenarioConfig back = load_config(ss);
        EXPECT_EQ(to_toml(back), to_toml(cfg)) << to_string(kind);
        EXPECT_EQ(config_hash(back), config_hash(cfg));
    }
}

TEST(Config, MissingSeedRejected) {
    std::stringstream ss("[scenario]\nkind = \"HoverToFault\"\nduration_s = 10.0\n");
    EXPECT_THROW(load_config(ss), ConfigError);
}

TEST(Config, UnknownKeyIsHardError) {
    ScenarioConfig cfg = make_default_config(ScenarioKind::HoverToFault, 1);
    std::string text = to_toml(cfg) + "\n[scenario2]\nboo = 1\n";
    std::stringstream ss(text);
    EXPECT_THROW(load_config(ss), ConfigError);

    std::string text2 = to_toml(cfg);
    text2.insert(text2.find("[quad]") + 7, "not_a_knob = 3\n");
    std::stringstream ss2(text2);
    try {
        load_config(ss2);
        FAIL() << "expected unknown-key rejection";
    } catch (const ConfigError &e) {
        EXPECT_NE(std::string(e.what()).find("not_a_knob"), std::string::npos);
    }
}

TEST(Config, FaultValidation) {
    ScenarioConfig cfg = make_default_config(ScenarioKind::HoverToFault, 1, 2);
    cfg.fault->time_s = cfg.duration_s + 1.0;
    EXPECT_THROW(validate_config(cfg), ConfigError);
    cfg.fault->time_s = 5.0;
    cfg.fault->rotor = 5;
    EXPECT_THROW(validate_config(cfg), ConfigError);
}

TEST(Config, MapSourcesAreExclusive) {
    ScenarioConfig cfg = make_default_config(ScenarioKind::HoverToFault, 1);
    cfg.map.file = "somewhere.grid";  // builtin already set
    EXPECT_THROW(validate_config(cfg), ConfigError);
}

TEST(Config, InlineRowsResolve) {
    MapConfig map;
    map.rows = {"....", ".##.", "...."};
    map.resolution_m = 0.5;
    OccupancyGrid g = resolve_map(map);
    EXPECT_EQ(g.width, 4);
    EXPECT_EQ(g.height, 3);
    EXPECT_TRUE(g.occupied({1, 1}));
    EXPECT_FALSE(g.occupied({0, 0}));
}

TEST(Config, BuiltinMazeIsSolvable) {
    OccupancyGrid maze = inflate(make_maze12(), 0.25);
    auto plan = dijkstra(maze, maze.world_to_cell(Vec2(1.5, 1.5)),
                         maze.world_to_cell(Vec2(10.5, 10.5)));
    ASSERT_TRUE(plan.has_value());
    const double length_m = plan->cost_cells * maze.resolution_m;
    EXPECT_GT(length_m, 12.0);  // forced detours past the straight diagonal
    EXPECT_LT(length_m, 15.0);  // benchmark-scale route
}

// ============================================================================
// Closed loop
// ============================================================================

TEST(RunScenario, RateContract) {
    ScenarioConfig cfg = make_default_config(ScenarioKind::HoverToFault, 3);
    cfg.duration_s = 5.0;
    RunResult run = run_scenario(cfg);
    // 100 Hz control records over [0, 5] inclusive.
    EXPECT_EQ(run.trace.records.size(), 501u);
    int emissions = 0;
    for (const auto &r : run.trace.records) {
        if (r.est_fresh) ++emissions;
    }
    EXPECT_EQ(emissions, 51);  // 10 Hz over [0, 5] inclusive
}

TEST(RunScenario, DeterministicTraces) {
    ScenarioConfig cfg = make_default_config(ScenarioKind::MazeNavigation, 7);
    cfg.duration_s = 12.0;
    RunResult a = run_scenario(cfg);
    RunResult b = run_scenario(cfg);
    EXPECT_TRUE(traces_bit_identical(a.trace, b.trace));

    ScenarioConfig other = cfg;
    other.seed = 8;
    RunResult c = run_scenario(other);
    EXPECT_FALSE(traces_bit_identical(a.trace, c.trace));
}

TEST(RunScenario, ModeTransitionsAreMonotone) {
    ScenarioConfig cfg = make_default_config(ScenarioKind::HoverToFault, 2, 2);
    RunResult run = run_scenario(cfg);
    int prev = 0;
    for (const auto &r : run.trace.records) {
        EXPECT_GE(r.mode, prev);
        prev = r.mode;
    }
    EXPECT_EQ(prev, 1);  // ended in failsafe just before the landed break
    EXPECT_TRUE(run.metrics.landed);
}

TEST(RunScenario, MetricPresenceMatchesScenario) {
    // Nominal navigation: no touchdown offset, no step metrics.
    ScenarioConfig nav = make_default_config(ScenarioKind::StraightLine, 4);
    nav.duration_s = 15.0;
    RunResult nav_run = run_scenario(nav);
    EXPECT_FALSE(nav_run.metrics.touchdown_offset_m.has_value());
    EXPECT_FALSE(nav_run.metrics.step.has_value());
    EXPECT_FALSE(nav_run.metrics.detection_time_s.has_value());
    EXPECT_TRUE(nav_run.metrics.path_deviation_avg_m.has_value());

    // Fault run: detection + touchdown offset present.
    ScenarioConfig fault = make_default_config(ScenarioKind::HoverToFault, 4, 2);
    RunResult fault_run = run_scenario(fault);
    EXPECT_TRUE(fault_run.metrics.detection_time_s.has_value());
    EXPECT_TRUE(fault_run.metrics.touchdown_offset_m.has_value());
    EXPECT_TRUE(fault_run.metrics.descent_rms_m.has_value());

    // Step scenario: step metrics only.
    ScenarioConfig step = make_default_config(ScenarioKind::StepResponse, 1);
    RunResult step_run = run_scenario(step);
    ASSERT_TRUE(step_run.metrics.step.has_value());
    EXPECT_FALSE(step_run.metrics.path_deviation_avg_m.has_value());
}

// Noiseless regression: with a perfect pose source the tracking error alone
// stays well under a decimetre.
TEST(RunScenario, NoiselessStraightLineBaseline) {
    ScenarioConfig cfg = make_default_config(ScenarioKind::StraightLine, 1);
    cfg.estimator.sigma_pos_m = 0.0;
    cfg.estimator.sigma_att_rad = 0.0;
    cfg.estimator.drift_rate_m_per_sqrt_s = 0.0;
    cfg.duration_s = 20.0;
    RunResult run = run_scenario(cfg);
    EXPECT_TRUE(run.metrics.navigation_success);
    ASSERT_TRUE(run.metrics.path_deviation_avg_m.has_value());
    EXPECT_LT(*run.metrics.path_deviation_avg_m, 0.1);
}

TEST(StepExperiment, RunsAllThreeControllers) {
    ScenarioConfig cfg = make_default_config(ScenarioKind::StepResponse, 1);
    auto results = step_response_experiment(cfg);
    ASSERT_EQ(results.size(), 3u);
    for (const auto &r : results) {
        EXPECT_TRUE(r.metrics.settled) << to_string(r.controller);
        EXPECT_FALSE(r.trace.empty());
    }
}

// Doubling the LQR effort penalty slows the response. Checked with a pure
// angle weight, where the closed loop is a Butterworth pair and the rise
// time scales as r^(1/4); with a dominant rate weight the slow pole is pinned
// by the weight ratio and barely moves.
TEST(StepExperiment, EffortPenaltyMonotonicity) {
    ScenarioConfig cfg = make_default_config(ScenarioKind::StepResponse, 1);
    for (int axis = 0; axis < 3; ++axis) {
        cfg.lqr.q_diag[2 * axis] = 5.0;
        cfg.lqr.q_diag[2 * axis + 1] = 0.0;
        cfg.lqr.r_diag[axis] = 1.0;
    }
    auto base = run_attitude_step(cfg, ControllerKind::Lqr);
    ScenarioConfig heavier = cfg;
    heavier.lqr.r_diag *= 2.0;
    auto slow = run_attitude_step(heavier, ControllerKind::Lqr);
    ASSERT_TRUE(base.metrics.settled);
    ASSERT_TRUE(slow.metrics.settled);
    EXPECT_GT(slow.metrics.rise_time_s, base.metrics.rise_time_s * 1.05);
}

// ============================================================================
// Exports
// ============================================================================

TEST(Exports, TraceCsvCarriesHashAndHeader) {
    ScenarioConfig cfg = make_default_config(ScenarioKind::HoverToFault, 5);
    cfg.duration_s = 1.0;
    RunResult run = run_scenario(cfg);
    std::stringstream ss;
    export_trace(run.trace, ss, config_hash_hex(cfg));
    std::string first, second;
    std::getline(ss, first);
    std::getline(ss, second);
    EXPECT_EQ(first, "# config_hash=" + config_hash_hex(cfg));
    EXPECT_EQ(second.substr(0, 8), "t,x,y,z,");
    int rows = 0;
    std::string line;
    while (std::getline(ss, line)) ++rows;
    EXPECT_EQ(rows, 101);
}

TEST(Exports, MetricsJsonRoundTrip) {
    ScenarioConfig cfg = make_default_config(ScenarioKind::HoverToFault, 5, 2);
    RunResult run = run_scenario(cfg);
    std::stringstream ss;
    export_metrics(run.metrics, ss, config_hash_hex(cfg));
    auto j = nlohmann::json::parse(ss.str());
    EXPECT_EQ(j["config_hash"], config_hash_hex(cfg));
    EXPECT_EQ(j["landed"], run.metrics.landed);
    EXPECT_DOUBLE_EQ(j["touchdown_offset_m"].get<double>(), *run.metrics.touchdown_offset_m);
    EXPECT_DOUBLE_EQ(j["detection_time_s"].get<double>(), *run.metrics.detection_time_s);
}

TEST(Exports, PoseTraceOnlyFreshRows) {
    ScenarioConfig cfg = make_default_config(ScenarioKind::HoverToFault, 6);
    cfg.duration_s = 2.0;
    RunResult run = run_scenario(cfg);
    std::stringstream ss;
    export_pose_trace(run.trace, ss, config_hash_hex(cfg));
    std::string line;
    std::getline(ss, line);  // hash
    std::getline(ss, line);  // header
    int rows = 0;
    while (std::getline(ss, line)) ++rows;
    EXPECT_EQ(rows, 21);  // 10 Hz over [0, 2] inclusive
}

// ============================================================================
// Shipped configs
// ============================================================================

// The repo's scenario files must stay equivalent to the canonical builders
// (drift in either direction is an error).
TEST(Config, ShippedFilesMatchBuilders) {
    const std::string root = QUADSIM_REPO_DIR "/configs/";
    struct Entry {
        const char *file;
        ScenarioConfig cfg;
    };
    const Entry entries[] = {
        {"straight_line.toml", make_default_config(ScenarioKind::StraightLine, 1)},
        {"maze.toml", make_default_config(ScenarioKind::MazeNavigation, 1)},
        {"turning.toml", make_default_config(ScenarioKind::TurningManoeuvre, 1)},
        {"hover_to_fault.toml", make_default_config(ScenarioKind::HoverToFault, 1, 2)},
        {"step_response.toml", make_default_config(ScenarioKind::StepResponse, 1)},
        {"fdi_matrix.toml", make_default_config(ScenarioKind::HoverToFault, 1)},
    };
    for (const auto &entry : entries) {
        ScenarioConfig loaded = load_config_file(root + entry.file);
        EXPECT_EQ(to_toml(loaded), to_toml(entry.cfg)) << entry.file;
    }
    ScenarioConfig descent = make_default_config(ScenarioKind::HoverToFault, 1, 2);
    descent.fdi.rpm_feedback_enabled = true;
    EXPECT_EQ(to_toml(load_config_file(root + "emergency_descent.toml")), to_toml(descent));
}

TEST(Config, ShippedMazeGridMatchesBuiltin) {
    std::ifstream f(QUADSIM_REPO_DIR "/data/maze12.grid");
    ASSERT_TRUE(f.good());
    OccupancyGrid shipped = load_grid(f);
    OccupancyGrid builtin = make_maze12();
    EXPECT_EQ(shipped.cells, builtin.cells);
    EXPECT_EQ(shipped.width, builtin.width);
}

// ============================================================================
// Failsafe corner cases
// ============================================================================

// Identification and recovery work for every rotor index, not just the
// benchmark's rotor 2.
TEST(RunScenario, IdentifiesEachRotor) {
    for (int rotor : {1, 3, 4}) {
        ScenarioConfig cfg = make_default_config(ScenarioKind::HoverToFault, 2, rotor);
        RunResult run = run_scenario(cfg);
        ASSERT_TRUE(run.metrics.suspected_rotor.has_value()) << "rotor " << rotor;
        EXPECT_EQ(*run.metrics.suspected_rotor, rotor);
        EXPECT_TRUE(run.metrics.landed) << "rotor " << rotor;
    }
}

// Every zone walled off: the failsafe degrades to a controlled descent in
// place and flags it in the metrics.
TEST(RunScenario, DescendsInPlaceWhenZonesUnreachable) {
    ScenarioConfig cfg = make_default_config(ScenarioKind::HoverToFault, 3, 2);
    cfg.map.builtin.clear();
    cfg.map.rows.assign(40, std::string(40, '.'));
    for (auto &row : cfg.map.rows) {
        row[20] = '#';
        row[21] = '#';
    }
    cfg.map.resolution_m = 0.1;
    cfg.map.origin = Vec2(0.0, 0.0);
    cfg.map.start = Vec2(1.0, 1.0);
    cfg.map.goal = Vec2(1.0, 1.0);
    cfg.mission_altitude_m = 2.0;
    cfg.landing.zones = {Vec2(3.0, 1.0)};  // across the wall
    cfg.duration_s = 20.0;
    cfg.fault = FaultSpec{2, 4.0};

    RunResult run = run_scenario(cfg);
    EXPECT_TRUE(run.metrics.descend_in_place);
    EXPECT_TRUE(run.metrics.landed);
    EXPECT_FALSE(run.metrics.touchdown_offset_m.has_value());
    EXPECT_EQ(run.metrics.selected_zone, -1);
}

// With no predefined pads, the failsafe lands on a detected clear spot.
TEST(RunScenario, DetectedZonesUsedWhenNoneConfigured) {
    ScenarioConfig cfg = make_default_config(ScenarioKind::HoverToFault, 4, 2);
    cfg.landing.zones.clear();
    RunResult run = run_scenario(cfg);
    EXPECT_TRUE(run.metrics.landed);
    EXPECT_FALSE(run.metrics.descend_in_place);
    EXPECT_GE(run.metrics.selected_zone, 0);
    ASSERT_TRUE(run.metrics.touchdown_offset_m.has_value());
}

// The detector must stay quiet over long nominal flights: 60 s of each
// scenario kind with default thresholds and no injected fault.
TEST(RunScenario, SixtySecondNominalFlightsNoFalsePositives) {
    for (ScenarioKind kind : {ScenarioKind::StraightLine, ScenarioKind::MazeNavigation,
                              ScenarioKind::HoverToFault, ScenarioKind::TurningManoeuvre}) {
        ScenarioConfig cfg = make_default_config(kind, 11);
        cfg.duration_s = 60.0;
        RunResult run = run_scenario(cfg);
        EXPECT_FALSE(run.metrics.suspected_rotor.has_value()) << to_string(kind);
        for (const auto &rec : run.trace.records) {
            ASSERT_FALSE(rec.fault_flag) << to_string(kind) << " t=" << rec.t;
        }
    }
}
