// Occupancy-grid construction from 3D points, obstacle inflation, Dijkstra
// shortest paths over 8-connected free space, waypoint interpolation, landing
// zone selection, and descent profiles.
#pragma once

#include "quadsim/dynamics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <queue>
#include <sstream>
#include <string>
#include <vector>

namespace quadsim {

struct GridIndex {
    int x = 0;  // column
    int y = 0;  // row

    bool operator==(const GridIndex &o) const { return x == o.x && y == o.y; }
};

/// Planar free/occupied map. Immutable once built; inflation returns a new
/// grid.
struct OccupancyGrid {
    double resolution_m = 0.1;
    double origin_x = 0.0;
    double origin_y = 0.0;
    int width = 0;   // cells in x
    int height = 0;  // cells in y
    std::vector<uint8_t> cells;  // row-major, height rows of width, 1 = occupied

    bool in_bounds(const GridIndex &c) const {
        return c.x >= 0 && c.x < width && c.y >= 0 && c.y < height;
    }
    bool occupied(const GridIndex &c) const {
        return cells[static_cast<size_t>(c.y) * width + c.x] != 0;
    }
    void set_occupied(const GridIndex &c, bool v) {
        cells[static_cast<size_t>(c.y) * width + c.x] = v ? 1 : 0;
    }
    bool free(const GridIndex &c) const { return in_bounds(c) && !occupied(c); }

    GridIndex world_to_cell(const Vec2 &p) const {
        return GridIndex{static_cast<int>(std::floor((p.x() - origin_x) / resolution_m)),
                         static_cast<int>(std::floor((p.y() - origin_y) / resolution_m))};
    }
    Vec2 cell_center(const GridIndex &c) const {
        return Vec2(origin_x + (c.x + 0.5) * resolution_m,
                    origin_y + (c.y + 0.5) * resolution_m);
    }

    static OccupancyGrid empty(double resolution, double ox, double oy, int w, int h) {
        OccupancyGrid g;
        g.resolution_m = resolution;
        g.origin_x = ox;
        g.origin_y = oy;
        g.width = w;
        g.height = h;
        g.cells.assign(static_cast<size_t>(w) * h, 0);
        return g;
    }
};

struct WorldRect {
    double x_min = 0.0, y_min = 0.0, x_max = 0.0, y_max = 0.0;
};

/// Project 3D points within the z band onto the ground plane: a cell is
/// occupied iff at least one point lands in it.
inline OccupancyGrid build_grid(const std::vector<Vec3> &points, double resolution,
                                std::pair<double, double> z_band, const WorldRect &bounds) {
    if (!(resolution > 0.0)) throw std::invalid_argument("build_grid: resolution must be > 0");
    if (!(bounds.x_max > bounds.x_min) || !(bounds.y_max > bounds.y_min)) {
        throw std::invalid_argument("build_grid: empty bounds");
    }
    const int w = static_cast<int>(std::ceil((bounds.x_max - bounds.x_min) / resolution));
    const int h = static_cast<int>(std::ceil((bounds.y_max - bounds.y_min) / resolution));
    OccupancyGrid g = OccupancyGrid::empty(resolution, bounds.x_min, bounds.y_min, w, h);
    for (const Vec3 &p : points) {
        if (p.z() < z_band.first || p.z() > z_band.second) continue;
        GridIndex c = g.world_to_cell(Vec2(p.x(), p.y()));
        if (g.in_bounds(c)) g.set_occupied(c, true);
    }
    return g;
}

/// Mark every cell any part of which lies within `radius_m` of an occupied
/// cell's center. Radius 0 is the identity.
inline OccupancyGrid inflate(const OccupancyGrid &grid, double radius_m) {
    if (radius_m < 0.0) throw std::invalid_argument("inflate: radius must be >= 0");
    OccupancyGrid out = grid;
    const double r_cells = radius_m / grid.resolution_m;
    const int reach = static_cast<int>(std::ceil(r_cells + 0.5));

    // Offsets whose nearest cell-extent point is within the radius.
    std::vector<std::pair<int, int>> offsets;
    for (int dy = -reach; dy <= reach; ++dy) {
        for (int dx = -reach; dx <= reach; ++dx) {
            const double ex = std::max(std::abs(dx) - 0.5, 0.0);
            const double ey = std::max(std::abs(dy) - 0.5, 0.0);
            if (std::hypot(ex, ey) <= r_cells + 1e-12) offsets.emplace_back(dx, dy);
        }
    }

    for (int y = 0; y < grid.height; ++y) {
        for (int x = 0; x < grid.width; ++x) {
            if (!grid.occupied({x, y})) continue;
            for (auto [dx, dy] : offsets) {
                GridIndex c{x + dx, y + dy};
                if (out.in_bounds(c)) out.set_occupied(c, true);
            }
        }
    }
    return out;
}

/// Ordered world-frame waypoints; consecutive entries are 8-neighbor cells
/// before interpolation.
struct Path {
    std::vector<Vec2> waypoints;
};

/// Shortest-path result. Cost uses unit axis edges and sqrt(2) diagonals;
/// axis/diagonal step counts are carried so costs compare exactly.
struct PlanResult {
    Path path;
    double cost_cells = 0.0;  // axis_steps + sqrt(2) * diag_steps
    int axis_steps = 0;
    int diag_steps = 0;
};

namespace detail {
inline double cell_cost(int axis_steps, int diag_steps) {
    return axis_steps + diag_steps * std::sqrt(2.0);
}
}  // namespace detail

enum class Connectivity { Four = 4, Eight = 8 };

/// Dijkstra over free cells, 8-connected by default (unit axis edges, sqrt(2)
/// diagonals); diagonal moves require both adjacent axis cells free (no
/// corner cutting). A 4-connected mode is available. Ties in the queue are
/// broken by lexicographic (row, col) pop order. Returns nullopt when the
/// goal is unreachable or start/goal are occupied; out-of-bounds inputs are
/// rejected.
inline std::optional<PlanResult> dijkstra(const OccupancyGrid &grid, GridIndex start,
                                          GridIndex goal,
                                          Connectivity connectivity = Connectivity::Eight) {
    if (!grid.in_bounds(start) || !grid.in_bounds(goal)) {
        throw std::invalid_argument("dijkstra: start or goal out of bounds");
    }
    if (grid.occupied(start) || grid.occupied(goal)) return std::nullopt;

    struct Node {
        double cost;
        int y, x;
        bool operator>(const Node &o) const {
            if (cost != o.cost) return cost > o.cost;
            if (y != o.y) return y > o.y;
            return x > o.x;
        }
    };

    const size_t n = static_cast<size_t>(grid.width) * grid.height;
    constexpr int kUnset = -1;
    std::vector<int> axis_steps(n, kUnset), diag_steps(n, kUnset);
    std::vector<int32_t> parent(n, -1);
    std::vector<uint8_t> settled(n, 0);
    auto id = [&](int x, int y) { return static_cast<size_t>(y) * grid.width + x; };

    std::priority_queue<Node, std::vector<Node>, std::greater<Node>> queue;
    axis_steps[id(start.x, start.y)] = 0;
    diag_steps[id(start.x, start.y)] = 0;
    queue.push({0.0, start.y, start.x});

    static constexpr int dxs[8] = {1, -1, 0, 0, 1, 1, -1, -1};
    static constexpr int dys[8] = {0, 0, 1, -1, 1, -1, 1, -1};
    const int neighbor_count = connectivity == Connectivity::Four ? 4 : 8;

    while (!queue.empty()) {
        const Node node = queue.top();
        queue.pop();
        const size_t u = id(node.x, node.y);
        if (settled[u]) continue;
        settled[u] = 1;
        if (node.x == goal.x && node.y == goal.y) break;

        for (int k = 0; k < neighbor_count; ++k) {
            const int nx = node.x + dxs[k];
            const int ny = node.y + dys[k];
            GridIndex c{nx, ny};
            if (!grid.free(c)) continue;
            const bool diagonal = dxs[k] != 0 && dys[k] != 0;
            if (diagonal &&
                (!grid.free({node.x + dxs[k], node.y}) || !grid.free({node.x, node.y + dys[k]}))) {
                continue;  // corner cutting forbidden
            }
            const size_t v = id(nx, ny);
            const int na = axis_steps[u] + (diagonal ? 0 : 1);
            const int nd = diag_steps[u] + (diagonal ? 1 : 0);
            const double new_cost = detail::cell_cost(na, nd);
            if (axis_steps[v] == kUnset || new_cost < detail::cell_cost(axis_steps[v], diag_steps[v])) {
                axis_steps[v] = na;
                diag_steps[v] = nd;
                parent[v] = static_cast<int32_t>(u);
                queue.push({new_cost, ny, nx});
            }
        }
    }

    const size_t g = id(goal.x, goal.y);
    if (axis_steps[g] == kUnset) return std::nullopt;

    PlanResult result;
    result.axis_steps = axis_steps[g];
    result.diag_steps = diag_steps[g];
    result.cost_cells = detail::cell_cost(result.axis_steps, result.diag_steps);

    std::vector<GridIndex> cells;
    for (int32_t cur = static_cast<int32_t>(g); cur >= 0; cur = parent[cur]) {
        cells.push_back({static_cast<int>(cur % grid.width), static_cast<int>(cur / grid.width)});
        if (cells.back() == start) break;
    }
    std::reverse(cells.begin(), cells.end());
    result.path.waypoints.reserve(cells.size());
    for (const GridIndex &c : cells) result.path.waypoints.push_back(grid.cell_center(c));
    return result;
}

/// Piecewise-linear resampling with consecutive points at most `spacing_m`
/// apart; endpoints preserved exactly.
inline std::vector<Vec2> interpolate(const Path &path, double spacing_m) {
    if (path.waypoints.empty()) throw std::invalid_argument("interpolate: empty path");
    if (!(spacing_m > 0.0)) throw std::invalid_argument("interpolate: spacing must be > 0");
    std::vector<Vec2> out;
    out.push_back(path.waypoints.front());
    for (size_t i = 1; i < path.waypoints.size(); ++i) {
        const Vec2 a = path.waypoints[i - 1];
        const Vec2 b = path.waypoints[i];
        const double len = (b - a).norm();
        const int pieces = std::max(1, static_cast<int>(std::ceil(len / spacing_m)));
        for (int k = 1; k < pieces; ++k) {
            out.push_back(a + (b - a) * (static_cast<double>(k) / pieces));
        }
        out.push_back(b);  // segment endpoint kept exact
    }
    return out;
}

struct LandingZones {
    std::vector<Vec2> zones;
};

/// Index and distance of the closest zone; equidistant zones resolve to the
/// lowest index.
inline std::pair<int, double> nearest_zone(const Vec2 &current, const LandingZones &zones) {
    if (zones.zones.empty()) throw std::invalid_argument("nearest_zone: no zones");
    int best = 0;
    double best_d = (zones.zones[0] - current).norm();
    for (size_t i = 1; i < zones.zones.size(); ++i) {
        const double d = (zones.zones[i] - current).norm();
        if (d < best_d) {
            best = static_cast<int>(i);
            best_d = d;
        }
    }
    return {best, best_d};
}

/// Free cells whose whole clearance disk is free qualify as landing spots;
/// used when no zones are predefined. Cells are emitted in row-major order.
inline LandingZones detect_landing_zones(const OccupancyGrid &inflated_grid,
                                         double clearance_m) {
    if (clearance_m < 0.0) {
        throw std::invalid_argument("detect_landing_zones: clearance must be >= 0");
    }
    const OccupancyGrid widened = inflate(inflated_grid, clearance_m);
    LandingZones zones;
    for (int y = 0; y < widened.height; ++y) {
        for (int x = 0; x < widened.width; ++x) {
            if (!widened.occupied({x, y})) zones.zones.push_back(widened.cell_center({x, y}));
        }
    }
    return zones;
}

/// Constant-rate descent z(t) = z0 - v_desc t, sampled every dt.
struct DescentProfile {
    double z0 = 0.0;
    double v_desc = 0.5;  // m/s
    double dt = 0.01;
};

/// Altitude setpoints max(0, z0 - v_desc k dt), ending at the first zero.
inline std::vector<double> descent_setpoints(const DescentProfile &profile) {
    if (profile.z0 < 0.0) throw std::invalid_argument("descent_setpoints: z0 must be >= 0");
    if (!(profile.v_desc > 0.0) || !(profile.dt > 0.0)) {
        throw std::invalid_argument("descent_setpoints: v_desc and dt must be > 0");
    }
    std::vector<double> out;
    for (long k = 0;; ++k) {
        const double z = profile.z0 - profile.v_desc * k * profile.dt;
        if (z <= 0.0) {
            out.push_back(0.0);
            break;
        }
        out.push_back(z);
    }
    return out;
}

// =============================================================================
// Grid text format: header lines (resolution, origin, width, height) followed
// by `height` row-major lines of '.' (free) / '#' (occupied).
// =============================================================================

inline void save_grid(const OccupancyGrid &grid, std::ostream &os) {
    os << "resolution " << grid.resolution_m << "\n";
    os << "origin " << grid.origin_x << " " << grid.origin_y << "\n";
    os << "width " << grid.width << "\n";
    os << "height " << grid.height << "\n";
    for (int y = 0; y < grid.height; ++y) {
        for (int x = 0; x < grid.width; ++x) os << (grid.occupied({x, y}) ? '#' : '.');
        os << "\n";
    }
}

inline OccupancyGrid load_grid(std::istream &is) {
    OccupancyGrid g;
    std::string key;
    double res = 0.0, ox = 0.0, oy = 0.0;
    int w = 0, h = 0;
    for (int line = 0; line < 4; ++line) {
        if (!(is >> key)) throw std::runtime_error("grid: truncated header");
        if (key == "resolution") is >> res;
        else if (key == "origin") is >> ox >> oy;
        else if (key == "width") is >> w;
        else if (key == "height") is >> h;
        else throw std::runtime_error("grid: unknown header key '" + key + "'");
        if (!is) throw std::runtime_error("grid: malformed header value for '" + key + "'");
    }
    if (!(res > 0.0) || w <= 0 || h <= 0) throw std::runtime_error("grid: invalid header");
    g = OccupancyGrid::empty(res, ox, oy, w, h);
    std::string row;
    std::getline(is, row);  // consume end of header line
    for (int y = 0; y < h; ++y) {
        if (!std::getline(is, row)) throw std::runtime_error("grid: missing row " + std::to_string(y));
        if (static_cast<int>(row.size()) < w) {
            throw std::runtime_error("grid: row " + std::to_string(y) + " too short");
        }
        for (int x = 0; x < w; ++x) {
            const char c = row[static_cast<size_t>(x)];
            if (c == '#') g.set_occupied({x, y}, true);
            else if (c != '.') throw std::runtime_error("grid: bad cell char in row " + std::to_string(y));
        }
    }
    return g;
}

}  // namespace quadsim
