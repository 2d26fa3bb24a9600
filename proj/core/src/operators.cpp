#include "qvi/operators.hpp"

#include <limits>
#include <stdexcept>

#include "qvi/parallel.hpp"

namespace qvi::operators {

SupObstacle eval_supOP(const ProblemSpec& spec, const Grid& g, std::span<const double> slice,
                       double t, int threads, std::atomic<std::uint64_t>* clamp_count) {
    const int n = g.num_nodes();
    const auto& U = spec.impulses.nodes;
    SupObstacle out;
    out.values.assign(static_cast<std::size_t>(n), 0.0);
    out.argmax.assign(static_cast<std::size_t>(n), 0);
    parallel_for(n, threads, [&](int i) {
        Point x = g.node(i);
        double best = -std::numeric_limits<double>::infinity();
        int best_k = 0;
        for (std::size_t k = 0; k < U.size(); ++k) {
            Point dest = spec.after_impulse(t, x, static_cast<int>(k));
            double cand = grid::interpolate(g, slice, dest, clamp_count) -
                          spec.impulse_cost(t, x, U[k]);
            if (cand > best) {
                best = cand;
                best_k = static_cast<int>(k);
            }
        }
        out.values[static_cast<std::size_t>(i)] = best;
        out.argmax[static_cast<std::size_t>(i)] = best_k;
    });
    return out;
}

InfObstacle eval_infOP(const ProblemSpec& spec, const Grid& g, std::span<const double> slice,
                       double t, int threads, std::atomic<std::uint64_t>* clamp_count) {
    const int n = g.num_nodes();
    const auto& E = spec.jumps.nodes;
    InfObstacle out;
    out.values.assign(static_cast<std::size_t>(n), 0.0);
    out.argmin.assign(static_cast<std::size_t>(n), 0);
    parallel_for(n, threads, [&](int i) {
        Point x = g.node(i);
        double best = std::numeric_limits<double>::infinity();
        int best_k = 0;
        for (std::size_t k = 0; k < E.size(); ++k) {
            Point dest = spec.after_jump(t, x, static_cast<int>(k));
            double cand =
                grid::interpolate(g, slice, dest, clamp_count) + spec.jump_cost(t, x, E[k]);
            if (cand < best) {
                best = cand;
                best_k = static_cast<int>(k);
            }
        }
        out.values[static_cast<std::size_t>(i)] = best;
        out.argmin[static_cast<std::size_t>(i)] = best_k;
    });
    return out;
}

std::vector<double> eval_penalty(const ProblemSpec& spec, const Grid& g,
                                 std::span<const double> slice, double t, double level,
                                 int threads, std::atomic<std::uint64_t>* clamp_count) {
    if (level < 0.0) throw std::invalid_argument("eval_penalty: level must be >= 0");
    const int n = g.num_nodes();
    const auto& E = spec.jumps.nodes;
    std::vector<double> out(static_cast<std::size_t>(n), 0.0);
    if (level == 0.0) return out;
    parallel_for(n, threads, [&](int i) {
        Point x = g.node(i);
        double here = slice[static_cast<std::size_t>(i)];
        double acc = 0.0;
        for (std::size_t k = 0; k < E.size(); ++k) {
            Point dest = spec.after_jump(t, x, static_cast<int>(k));
            double gap =
                grid::interpolate(g, slice, dest, clamp_count) + spec.jump_cost(t, x, E[k]) - here;
            if (gap < 0.0) acc += spec.jumps.weights[k] * (-gap);
        }
        out[static_cast<std::size_t>(i)] = level * acc;
    });
    return out;
}

}  // namespace qvi::operators
