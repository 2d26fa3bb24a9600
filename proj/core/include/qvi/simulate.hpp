#ifndef QVI_SIMULATE_HPP
#define QVI_SIMULATE_HPP

// Forward Monte Carlo of the controlled jump-diffusion under extracted
// strategies. Randomized jumps are simulated by thinning: proposals arrive at
// the dominating rate n*lambda(E) with marks drawn proportionally to the
// lambda weights, and a proposal is accepted exactly when the density trigger
// holds at the nearest grid state. This samples the controlled measure
// directly, so no likelihood weights are involved. Per-path RNG substreams
// are derived from (seed, path index); results are independent of the worker
// count.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "qvi/grid.hpp"
#include "qvi/strategy.hpp"

namespace qvi::simulate {

using grid::Grid;
using model::Point;
using model::ProblemSpec;
using strategy::ImpulsePolicy;
using strategy::RandomizationDensity;

struct PathRecord {
    double t0 = 0.0;
    double dt_sim = 0.0;
    std::vector<Point> states;                      // X at step times, t0 .. T
    std::vector<Point> brownian_increments;         // per step
    std::vector<std::pair<double, int>> jumps;      // accepted (time, E index)
    std::vector<std::pair<double, int>> impulses;   // (time, U index)
    double impulse_cost_total = 0.0;  // Xi = sum of ell over applied impulses
    double running_reward = 0.0;      // int f dr
    double compensation = 0.0;        // int int chi nu lambda de dr
    double terminal_payoff = 0.0;     // psi(X_T)
    double payoff = 0.0;              // P
    bool boundary_clamped = false;
    int proposals = 0;

    /// P rebuilt from the components; must match `payoff` to 1e-12.
    double recompute_payoff() const {
        return terminal_payoff + running_reward + compensation - impulse_cost_total;
    }
};

struct MCReport {
    int paths = 0;
    double mean = 0.0;
    double std_error = 0.0;
    double ci_half = 0.0;  // 1.96 * std_error
    double target = 0.0;
    double model_allowance = 0.0;  // 10 (dt + dx^2 + dt_sim)
    bool pass = false;
    int clamped_paths = 0;
    std::uint64_t seed = 0;
    std::string to_text() const;
    std::vector<std::pair<std::string, std::string>> to_kv() const;
};

struct MomentReport {
    int exponent = 2;  // p
    int paths = 0;
    double estimate = 0.0;   // mean of sup_s |X_s|^p
    double std_error = 0.0;
    double bound = 0.0;      // C_fit (1 + |x0|^p), C_fit frozen
    double ratio = 0.0;
    bool pass = false;
    std::string to_text() const;
    std::vector<std::pair<std::string, std::string>> to_kv() const;
};

/// One trajectory. Requires a state-only driver, dt_sim dividing T - t0, and
/// x0 inside the box. The same (seed) always produces the same record.
PathRecord simulate_path(const ProblemSpec& spec, const Grid& g, const ImpulsePolicy& policy,
                         const RandomizationDensity& density, double t0, const Point& x0,
                         double dt_sim, std::uint64_t seed);

/// Averages independent paths (substream i = mix(seed, i)); PASS when
/// |mean - target| <= ci_half + 10 (dt + dx^2 + dt_sim).
MCReport estimate_game_value(const ProblemSpec& spec, const Grid& g, const ImpulsePolicy& policy,
                             const RandomizationDensity& density, double t0, const Point& x0,
                             int paths, double dt_sim, std::uint64_t seed, double target,
                             int threads = 1);

/// Estimates E[sup_s |X_s|^p] for p in {2,4} against the frozen reference
/// bound C_fit (1 + |x0|^p).
MomentReport moment_check(const ProblemSpec& spec, const Grid& g, const ImpulsePolicy& policy,
                          const RandomizationDensity& density, double t0, const Point& x0,
                          int exponent, int paths, double dt_sim, std::uint64_t seed,
                          int threads = 1);

/// Substream derivation, exposed for tests.
std::uint64_t path_seed(std::uint64_t seed, int path_index);

}  // namespace qvi::simulate

#endif
