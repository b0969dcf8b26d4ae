// quadsim command-line front end: scenario simulation, step-response
// comparison, grid planning, the fault-matrix benchmark, and face-model
// training/classification.

#include "quadsim/scenario.hpp"
#include "quadsim/vision.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace quadsim;

namespace {

uint64_t fnv1a(const std::string &data, uint64_t h = 1469598103934665603ULL) {
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::ofstream open_out(const fs::path &path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    return f;
}

int cmd_simulate(const std::string &config_path, std::optional<uint64_t> seed,
                 const std::string &out_dir, const std::string &format) {
    ScenarioConfig cfg = load_config_file(config_path);
    if (seed) cfg.seed = *seed;
    const std::string hash = config_hash_hex(cfg);
    RunResult run = run_scenario(cfg);

    fs::create_directories(out_dir);
    const fs::path base = fs::path(out_dir) / fs::path(config_path).stem();
    {
        auto f = open_out(base.string() + "_trace.csv");
        export_trace(run.trace, f, hash);
    }
    {
        auto f = open_out(base.string() + "_pose.csv");
        export_pose_trace(run.trace, f, hash);
    }
    {
        auto f = open_out(base.string() + "_metrics.json");
        export_metrics(run.metrics, f, hash);
    }

    if (format == "json") {
        std::cout << metrics_to_json(run.metrics, hash).dump(2) << "\n";
    } else {
        const RunMetrics &m = run.metrics;
        std::cout << "scenario: " << to_string(cfg.kind) << " (seed " << cfg.seed << ")\n";
        std::cout << "  navigation_success: " << (m.navigation_success ? "yes" : "no") << "\n";
        if (m.path_deviation_avg_m) {
            std::cout << "  path_deviation: avg " << *m.path_deviation_avg_m << " m, max "
                      << *m.path_deviation_max_m << " m\n";
        }
        std::cout << "  relocalization_events: " << m.relocalization_events << "\n";
        if (m.detection_time_s) std::cout << "  detection_time: " << *m.detection_time_s << " s\n";
        if (m.touchdown_offset_m) {
            std::cout << "  touchdown_offset: " << *m.touchdown_offset_m << " m\n";
        }
        if (m.descent_rms_m) std::cout << "  descent_rms: " << *m.descent_rms_m << " m\n";
        if (m.step) {
            std::cout << "  step: rise " << m.step->rise_time_s << " s, overshoot "
                      << m.step->overshoot_pct << " %, settling " << m.step->settling_time_s
                      << " s\n";
        }
        std::cout << "  outputs: " << base.string() << "_{trace.csv,pose.csv,metrics.json}\n";
    }
    return 0;
}

int cmd_step_response(const std::string &config_path, const std::string &out_dir) {
    ScenarioConfig cfg = load_config_file(config_path);
    const std::string hash = config_hash_hex(cfg);
    auto results = step_response_experiment(cfg);

    fs::create_directories(out_dir);
    std::printf("%-8s %12s %14s %14s\n", "ctrl", "rise [s]", "overshoot [%]", "settling [s]");
    for (const auto &r : results) {
        std::string name = to_string(r.controller);
        std::transform(name.begin(), name.end(), name.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        auto f = open_out(fs::path(out_dir) / ("step_" + name + ".csv"));
        f << "# config_hash=" << hash << "\n";
        f << "t,roll_rad,torque\n";
        char buf[128];
        for (const auto &pt : r.trace) {
            std::snprintf(buf, sizeof(buf), "%.6f,%.9g,%.9g\n", pt.t, pt.roll_rad, pt.torque);
            f << buf;
        }
        std::printf("%-8s %12.4f %14.3f %14.4f\n", to_string(r.controller),
                    r.metrics.rise_time_s, r.metrics.overshoot_pct, r.metrics.settling_time_s);
    }
    return 0;
}

int cmd_plan(const std::string &grid_path, const std::string &start_str,
             const std::string &goal_str, double inflate_radius, double spacing,
             const std::string &out_dir) {
    std::ifstream gf(grid_path);
    if (!gf) throw std::runtime_error("cannot open grid file " + grid_path);
    std::string grid_bytes((std::istreambuf_iterator<char>(gf)), std::istreambuf_iterator<char>());
    std::stringstream gs(grid_bytes);
    OccupancyGrid grid = load_grid(gs);
    if (inflate_radius > 0.0) grid = inflate(grid, inflate_radius);

    auto parse_xy = [](const std::string &s) {
        const size_t comma = s.find(',');
        if (comma == std::string::npos) throw std::runtime_error("expected x,y: " + s);
        return Vec2(std::stod(s.substr(0, comma)), std::stod(s.substr(comma + 1)));
    };
    const Vec2 start = parse_xy(start_str);
    const Vec2 goal = parse_xy(goal_str);
    auto plan = dijkstra(grid, grid.world_to_cell(start), grid.world_to_cell(goal));
    if (!plan) {
        std::cerr << "no path: goal unreachable or endpoint occupied\n";
        return 2;
    }
    std::vector<Vec2> waypoints = plan->path.waypoints;
    if (spacing > 0.0) waypoints = interpolate(plan->path, spacing);

    const std::string hash = hex64(fnv1a(grid_bytes, fnv1a(start_str + "|" + goal_str)));
    fs::create_directories(out_dir);
    auto f = open_out(fs::path(out_dir) / "path.csv");
    f << "# config_hash=" << hash << "\n";
    f << "x,y\n";
    for (const Vec2 &wp : waypoints) f << wp.x() << "," << wp.y() << "\n";
    std::cout << "cost: " << plan->cost_cells * grid.resolution_m << " m over "
              << waypoints.size() << " waypoints -> " << (fs::path(out_dir) / "path.csv").string()
              << "\n";
    return 0;
}

int cmd_fdi_matrix(const std::string &config_path, int seeds, const std::string &out_dir) {
    ScenarioConfig base = load_config_file(config_path);
    const std::string hash = config_hash_hex(base);
    FdiMatrixReport report = run_fdi_matrix(seeds, &base);

    fs::create_directories(out_dir);
    {
        auto f = open_out(fs::path(out_dir) / "fdi_matrix.csv");
        export_fdi_matrix_csv(report, f, hash);
    }
    std::printf("fault runs: %d  detected: %d  correct id: %d  recovered: %d\n",
                report.fault_runs, report.detected, report.correct_id, report.recovered);
    std::printf("nominal runs: %d  false positives: %d\n", report.nominal_runs,
                report.false_positives);
    std::printf("max detection time: %.2f s  max touchdown offset: %.2f m\n",
                report.max_detection_time_s, report.max_touchdown_offset_m);
    std::cout << "rows -> " << (fs::path(out_dir) / "fdi_matrix.csv").string() << "\n";
    return 0;
}

int cmd_face_train(const std::string &dir, const std::string &model_path, int k,
                   double threshold) {
    std::vector<Eigen::VectorXd> images;
    std::vector<std::string> labels;
    std::vector<fs::path> class_dirs;
    for (const auto &entry : fs::directory_iterator(dir)) {
        if (entry.is_directory()) class_dirs.push_back(entry.path());
    }
    std::sort(class_dirs.begin(), class_dirs.end());
    for (const auto &class_dir : class_dirs) {
        std::vector<fs::path> files;
        for (const auto &entry : fs::directory_iterator(class_dir)) {
            if (entry.path().extension() == ".pgm") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto &file : files) {
            images.push_back(load_face_pgm(file.string()));
            labels.push_back(class_dir.filename().string());
        }
    }
    if (images.empty()) throw std::runtime_error("no .pgm images under " + dir);

    FaceModel model = train_pca(images, labels, k, threshold);
    auto f = open_out(model_path);
    save_model(model, f);
    std::cout << "trained " << model.classes.size() << " classes from " << images.size()
              << " images (k = " << k << ") -> " << model_path << "\n";
    return 0;
}

int cmd_face_classify(const std::string &model_path, const std::string &image_path) {
    std::ifstream mf(model_path, std::ios::binary);
    if (!mf) throw std::runtime_error("cannot open model " + model_path);
    FaceModel model = load_model(mf);
    Eigen::VectorXd image = load_face_pgm(image_path);
    Classification result = classify(encode(image, model), model);

    nlohmann::json j;
    j["label"] = result.label;
    j["unknown"] = result.unknown;
    j["distance"] = result.distance;
    j["score_pct"] = similarity_score_pct(result.distance);
    std::cout << j.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"deterministic fault-tolerant quadrotor simulator and benchmark harness"};
    app.require_subcommand(1);

    std::string config_path, out_dir = ".", format = "csv";
    std::optional<uint64_t> seed;

    auto *simulate = app.add_subcommand("simulate", "run a scenario config");
    simulate->add_option("config", config_path, "scenario TOML")->required();
    simulate->add_option("--seed", seed, "override the config seed");
    simulate->add_option("--out-dir", out_dir, "output directory");
    simulate->add_option("--format", format, "stdout format")
        ->check(CLI::IsMember({"csv", "json"}));

    auto *step = app.add_subcommand("step-response", "compare the three attitude controllers");
    step->add_option("config", config_path, "scenario TOML")->required();
    step->add_option("--out-dir", out_dir, "output directory");

    std::string grid_path, start_str, goal_str;
    double inflate_radius = 0.0, spacing = 0.0;
    auto *plan = app.add_subcommand("plan", "shortest path on a grid file");
    plan->add_option("gridfile", grid_path, "occupancy grid file")->required();
    plan->add_option("start", start_str, "start as x,y [m]")->required();
    plan->add_option("goal", goal_str, "goal as x,y [m]")->required();
    plan->add_option("--inflate-radius", inflate_radius, "obstacle inflation [m]");
    plan->add_option("--spacing", spacing, "waypoint interpolation spacing [m]");
    plan->add_option("--out-dir", out_dir, "output directory");

    int seeds = 5;
    auto *matrix = app.add_subcommand("fdi-matrix", "fault-injection benchmark matrix");
    matrix->add_option("config", config_path, "base parameter TOML")->required();
    matrix->add_option("--seeds", seeds, "seeds per scenario")->check(CLI::PositiveNumber);
    matrix->add_option("--out-dir", out_dir, "output directory");

    std::string train_dir, model_path, image_path;
    int k = 16;
    double threshold = 3.0;
    auto *train = app.add_subcommand("face-train", "train the PCA face model");
    train->add_option("dir", train_dir, "directory with one subdirectory per label")->required();
    train->add_option("model", model_path, "output model file")->required();
    train->add_option("--k", k, "subspace dimension")->check(CLI::PositiveNumber);
    train->add_option("--threshold", threshold, "Mahalanobis rejection threshold");

    auto *classify_cmd = app.add_subcommand("face-classify", "classify one face image");
    classify_cmd->add_option("model", model_path, "model file")->required();
    classify_cmd->add_option("image", image_path, "128x128 PGM image")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (simulate->parsed()) return cmd_simulate(config_path, seed, out_dir, format);
        if (step->parsed()) return cmd_step_response(config_path, out_dir);
        if (plan->parsed()) {
            return cmd_plan(grid_path, start_str, goal_str, inflate_radius, spacing, out_dir);
        }
        if (matrix->parsed()) return cmd_fdi_matrix(config_path, seeds, out_dir);
        if (train->parsed()) return cmd_face_train(train_dir, model_path, k, threshold);
        if (classify_cmd->parsed()) return cmd_face_classify(model_path, image_path);
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
