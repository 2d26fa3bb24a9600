#include "qvi/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "qvi/parallel.hpp"

namespace qvi::simulate {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// frozen on the reference teleport model; moment_check reports the ratio
// against C_fit (1 + |x0|^p)
constexpr double kMomentC2 = 8.0;
constexpr double kMomentC4 = 64.0;

int step_count(double t0, double horizon, double dt_sim) {
    if (!(dt_sim > 0.0)) throw std::invalid_argument("simulate: dt_sim must be positive");
    double span = horizon - t0;
    if (!(span > 0.0)) throw std::invalid_argument("simulate: t0 must lie before T");
    double steps = span / dt_sim;
    double rounded = std::round(steps);
    if (std::fabs(steps - rounded) > 1e-9 * std::max(1.0, steps))
        throw std::invalid_argument("simulate: dt_sim must divide T - t0");
    return static_cast<int>(rounded);
}

void check_impulse_bound(const ProblemSpec& spec, const Point& before, const Point& after,
                         double t, const char* what) {
    double cap = std::max(spec.impulse_bound, model::norm(before, spec.dim));
    if (model::norm(after, spec.dim) > cap + 1e-9) {
        std::ostringstream os;
        os << "pathwise impulse bound violated by " << what << " at t = " << t << ": |X| grew from "
           << model::norm(before, spec.dim) << " to " << model::norm(after, spec.dim)
           << " past K = " << spec.impulse_bound;
        throw std::runtime_error(os.str());
    }
}

}  // namespace

std::uint64_t path_seed(std::uint64_t seed, int path_index) {
    return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(path_index) + 0x51d5eedull));
}

PathRecord simulate_path(const ProblemSpec& spec, const Grid& g, const ImpulsePolicy& policy,
                         const RandomizationDensity& density, double t0, const Point& x0,
                         double dt_sim, std::uint64_t seed) {
    if (!spec.state_only)
        throw std::invalid_argument(
            "simulate: Monte Carlo validation requires a state-only driver f(t,x)");
    for (int a = 0; a < spec.dim; ++a)
        if (std::fabs(x0[static_cast<std::size_t>(a)]) > g.radius)
            throw std::invalid_argument("simulate: x0 lies outside the grid box");

    const int steps = step_count(t0, spec.horizon, dt_sim);
    const double total_mass = spec.jumps.total_mass();
    const double proposal_rate = density.level * total_mass;
    const int marks = static_cast<int>(spec.jumps.nodes.size());

    std::vector<double> cumulative(spec.jumps.weights.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < spec.jumps.weights.size(); ++k) {
        acc += spec.jumps.weights[k];
        cumulative[k] = acc;
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    PathRecord rec;
    rec.t0 = t0;
    rec.dt_sim = dt_sim;
    rec.states.reserve(static_cast<std::size_t>(steps + 1));
    rec.brownian_increments.reserve(static_cast<std::size_t>(steps));

    Point x = x0;
    rec.states.push_back(x);
    const double sq_dt = std::sqrt(dt_sim);

    for (int s = 0; s < steps; ++s) {
        double t = t0 + s * dt_sim;
        int m_near = g.nearest_time(t);

        // impulse first (hitting-time approximation: at most one per step)
        int node = g.nearest_node(x);
        if (policy.nodes > 0 && policy.marked(m_near, node)) {
            int b = policy.impulse(m_near, node);
            double cost = spec.impulse_cost(t, x, spec.impulses.nodes[static_cast<std::size_t>(b)]);
            Point before = x;
            x = spec.after_impulse(t, x, b);
            check_impulse_bound(spec, before, x, t, "impulse");
            rec.impulse_cost_total += cost;
            rec.impulses.emplace_back(t, b);
            node = g.nearest_node(x);
        }

        // running reward and the compensation integral on the current state
        rec.running_reward += spec.driver(t, x, 0.0, Point{0.0, 0.0}) * dt_sim;
        if (density.level > 0.0 && density.nodes > 0) {
            for (int k = 0; k < marks; ++k) {
                if (!density.triggered(m_near, node, k)) continue;
                rec.compensation += spec.jump_cost(t, x, spec.jumps.nodes[static_cast<std::size_t>(k)]) *
                                    density.level *
                                    spec.jumps.weights[static_cast<std::size_t>(k)] * dt_sim;
            }
        }

        // Euler-Maruyama diffusion increment
        Point z{0.0, 0.0};
        for (int a = 0; a < spec.dim; ++a) z[static_cast<std::size_t>(a)] = normal(rng);
        rec.brownian_increments.push_back(z);
        Point drifted = x;
        for (int r = 0; r < spec.dim; ++r) {
            double inc = spec.drift[static_cast<std::size_t>(r)](t, x) * dt_sim;
            for (int c = 0; c < spec.dim; ++c)
                inc += spec.diffusion[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)](t, x) *
                       sq_dt * z[static_cast<std::size_t>(c)];
            drifted[static_cast<std::size_t>(r)] += inc;
        }
        x = drifted;

        // randomized jumps by thinning under the dominating rate n lambda(E)
        if (proposal_rate > 0.0) {
            std::poisson_distribution<int> poisson(proposal_rate * dt_sim);
            int proposals = poisson(rng);
            for (int p = 0; p < proposals; ++p) {
                ++rec.proposals;
                double u = unif(rng) * total_mass;
                int mark = marks - 1;
                for (int k = 0; k < marks; ++k)
                    if (u <= cumulative[static_cast<std::size_t>(k)]) {
                        mark = k;
                        break;
                    }
                int jnode = g.nearest_node(x);
                if (density.triggered(g.nearest_time(t), jnode, mark)) {
                    Point before = x;
                    x = spec.after_jump(t, x, mark);
                    check_impulse_bound(spec, before, x, t, "randomized jump");
                    rec.jumps.emplace_back(t, mark);
                }
            }
        }

        // truncation box: clamp and flag
        for (int a = 0; a < spec.dim; ++a) {
            auto au = static_cast<std::size_t>(a);
            if (std::fabs(x[au]) > g.radius) {
                x[au] = std::clamp(x[au], -g.radius, g.radius);
                rec.boundary_clamped = true;
            }
        }
        rec.states.push_back(x);
    }

    rec.terminal_payoff = spec.terminal(x);
    rec.payoff = rec.terminal_payoff + rec.running_reward + rec.compensation -
                 rec.impulse_cost_total;
    return rec;
}

MCReport estimate_game_value(const ProblemSpec& spec, const Grid& g, const ImpulsePolicy& policy,
                             const RandomizationDensity& density, double t0, const Point& x0,
                             int paths, double dt_sim, std::uint64_t seed, double target,
                             int threads) {
    if (paths < 100) throw std::invalid_argument("estimate_game_value: paths must be >= 100");
    std::vector<double> payoffs(static_cast<std::size_t>(paths));
    std::vector<std::uint8_t> clamped(static_cast<std::size_t>(paths), 0);
    parallel_for(paths, threads, [&](int p) {
        PathRecord rec =
            simulate_path(spec, g, policy, density, t0, x0, dt_sim, path_seed(seed, p));
        payoffs[static_cast<std::size_t>(p)] = rec.payoff;
        clamped[static_cast<std::size_t>(p)] = rec.boundary_clamped ? 1 : 0;
    });
    MCReport rep;
    rep.paths = paths;
    rep.seed = seed;
    rep.target = target;
    double sum = 0.0;
    for (double v : payoffs) sum += v;
    rep.mean = sum / paths;
    double ss = 0.0;
    for (double v : payoffs) ss += (v - rep.mean) * (v - rep.mean);
    rep.std_error = paths > 1 ? std::sqrt(ss / (paths - 1) / paths) : 0.0;
    rep.ci_half = 1.96 * rep.std_error;
    rep.model_allowance = 10.0 * (g.dt + g.dx * g.dx + dt_sim);
    rep.pass = std::fabs(rep.mean - target) <= rep.ci_half + rep.model_allowance;
    for (auto c : clamped) rep.clamped_paths += c;
    return rep;
}

MomentReport moment_check(const ProblemSpec& spec, const Grid& g, const ImpulsePolicy& policy,
                          const RandomizationDensity& density, double t0, const Point& x0,
                          int exponent, int paths, double dt_sim, std::uint64_t seed,
                          int threads) {
    if (exponent != 2 && exponent != 4)
        throw std::invalid_argument("moment_check: exponent must be 2 or 4");
    if (paths < 1) throw std::invalid_argument("moment_check: paths must be >= 1");
    std::vector<double> sups(static_cast<std::size_t>(paths));
    parallel_for(paths, threads, [&](int p) {
        PathRecord rec =
            simulate_path(spec, g, policy, density, t0, x0, dt_sim, path_seed(seed, p));
        double s = 0.0;
        for (const Point& xp : rec.states) s = std::max(s, model::norm(xp, spec.dim));
        sups[static_cast<std::size_t>(p)] = std::pow(s, exponent);
    });
    MomentReport rep;
    rep.exponent = exponent;
    rep.paths = paths;
    double sum = 0.0;
    for (double v : sups) sum += v;
    rep.estimate = sum / paths;
    double ss = 0.0;
    for (double v : sups) ss += (v - rep.estimate) * (v - rep.estimate);
    rep.std_error = paths > 1 ? std::sqrt(ss / (paths - 1) / paths) : 0.0;
    double c_fit = exponent == 2 ? kMomentC2 : kMomentC4;
    rep.bound = c_fit * (1.0 + std::pow(model::norm(x0, spec.dim), exponent));
    rep.ratio = rep.estimate / rep.bound;
    rep.pass = rep.ratio <= 1.0;
    return rep;
}

std::string MCReport::to_text() const {
    std::ostringstream os;
    os << "Monte Carlo game-value estimate (" << paths << " paths, seed " << seed << ")\n"
       << "  mean            : " << mean << '\n'
       << "  std error       : " << std_error << '\n'
       << "  95% CI half     : " << ci_half << '\n'
       << "  target          : " << target << '\n'
       << "  model allowance : " << model_allowance << '\n'
       << "  clamped paths   : " << clamped_paths << '\n'
       << "  verdict         : " << (pass ? "PASS" : "FAIL") << '\n';
    return os.str();
}

std::vector<std::pair<std::string, std::string>> MCReport::to_kv() const {
    auto num = [](double v) {
        std::ostringstream os;
        os << v;
        return os.str();
    };
    return {{"paths", std::to_string(paths)},
            {"mean", num(mean)},
            {"std_error", num(std_error)},
            {"ci_half", num(ci_half)},
            {"target", num(target)},
            {"model_allowance", num(model_allowance)},
            {"clamped_paths", std::to_string(clamped_paths)},
            {"pass", pass ? "1" : "0"}};
}

std::string MomentReport::to_text() const {
    std::ostringstream os;
    os << "moment check p=" << exponent << " over " << paths << " paths\n"
       << "  E[sup|X|^p] : " << estimate << " (stderr " << std_error << ")\n"
       << "  bound       : " << bound << '\n'
       << "  ratio       : " << ratio << "  -> " << (pass ? "PASS" : "FAIL") << '\n';
    return os.str();
}

std::vector<std::pair<std::string, std::string>> MomentReport::to_kv() const {
    auto num = [](double v) {
        std::ostringstream os;
        os << v;
        return os.str();
    };
    return {{"p", std::to_string(exponent)},
            {"paths", std::to_string(paths)},
            {"estimate", num(estimate)},
            {"std_error", num(std_error)},
            {"bound", num(bound)},
            {"ratio", num(ratio)},
            {"pass", pass ? "1" : "0"}};
}

}  // namespace qvi::simulate
