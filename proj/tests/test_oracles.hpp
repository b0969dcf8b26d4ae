// Test-only oracles, independent of the implementation paths they check.
#pragma once

#include "quadsim/planning.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace quadsim::testing {

struct OracleResult {
    bool reachable = false;
    int axis = 0;
    int diag = 0;
    double cost() const { return axis + diag * std::sqrt(2.0); }
};

/// Bellman-Ford-style exhaustive relaxation over the same 8-connected,
/// corner-cut-forbidden graph, carrying (axis, diagonal) step counts so cost
/// comparisons against the planner are exact.
inline OracleResult oracle_shortest(const OccupancyGrid &g, GridIndex start, GridIndex goal) {
    if (g.occupied(start) || g.occupied(goal)) return {};
    const size_t n = static_cast<size_t>(g.width) * g.height;
    std::vector<int> axis(n, -1), diag(n, -1);
    auto id = [&](int x, int y) { return static_cast<size_t>(y) * g.width + x; };
    auto cost_of = [&](size_t i) { return axis[i] + diag[i] * std::sqrt(2.0); };
    axis[id(start.x, start.y)] = 0;
    diag[id(start.x, start.y)] = 0;

    const int dxs[8] = {1, -1, 0, 0, 1, 1, -1, -1};
    const int dys[8] = {0, 0, 1, -1, 1, -1, 1, -1};
    bool changed = true;
    while (changed) {
        changed = false;
        for (int y = 0; y < g.height; ++y) {
            for (int x = 0; x < g.width; ++x) {
                const size_t u = id(x, y);
                if (axis[u] < 0 || g.occupied({x, y})) continue;
                for (int k = 0; k < 8; ++k) {
                    GridIndex c{x + dxs[k], y + dys[k]};
                    if (!g.free(c)) continue;
                    const bool d = dxs[k] != 0 && dys[k] != 0;
                    if (d && (!g.free({x + dxs[k], y}) || !g.free({x, y + dys[k]}))) continue;
                    const size_t v = id(c.x, c.y);
                    const int na = axis[u] + (d ? 0 : 1);
                    const int nd = diag[u] + (d ? 1 : 0);
                    const double nc = na + nd * std::sqrt(2.0);
                    if (axis[v] < 0 || nc < cost_of(v)) {
                        axis[v] = na;
                        diag[v] = nd;
                        changed = true;
                    }
                }
            }
        }
    }
    const size_t gi = id(goal.x, goal.y);
    if (axis[gi] < 0) return {};
    return {true, axis[gi], diag[gi]};
}

inline OccupancyGrid random_grid(std::mt19937_64 &rng, int w, int h, double density) {
    OccupancyGrid g = OccupancyGrid::empty(0.1, 0.0, 0.0, w, h);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (coin(rng) < density) g.set_occupied({x, y}, true);
        }
    }
    return g;
}

inline GridIndex random_free_cell(std::mt19937_64 &rng, const OccupancyGrid &g) {
    std::uniform_int_distribution<int> ux(0, g.width - 1), uy(0, g.height - 1);
    for (int tries = 0; tries < 10000; ++tries) {
        GridIndex c{ux(rng), uy(rng)};
        if (!g.occupied(c)) return c;
    }
    return {0, 0};
}

}  // namespace quadsim::testing
