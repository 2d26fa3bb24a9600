#ifndef QVI_TESTS_MODELS_HPP
#define QVI_TESTS_MODELS_HPP

// Canonical test models, built through the expression path end to end.

#include <random>
#include <string>
#include <vector>

#include "qvi/model.hpp"

namespace testmodels {

using qvi::model::Point;
using qvi::model::ProblemSpec;

struct TeleportOpts {
    std::string ell = "1";
    std::string chi = "1";
    std::string f = "0";
    std::string psi = "0";
    std::string sigma = "0.3";
    std::string drift = "0";
    std::vector<double> impulse_nodes = {-1.0, 0.0, 1.0};
    std::vector<double> jump_nodes = {-1.0, 0.0, 1.0};
    std::vector<double> weights = {};  // default: all 1/m
    double delta = 1e-3;
    double rho = 2.0;
    double k_f = 0.0;
};

/// 1-D teleport family: xi = b - x, gamma = e - x, so destinations are the
/// nodes of U resp. E and the impulse bound holds with K = max |node|.
inline ProblemSpec teleport(const TeleportOpts& o = {}) {
    using namespace qvi::model;
    ProblemSpec spec;
    spec.dim = 1;
    spec.horizon = 1.0;
    auto fv = field_vars(1);
    spec.drift[0] = make_field_fn(qvi::expr::parse(o.drift, fv), 1);
    spec.diffusion[0][0] = make_field_fn(qvi::expr::parse(o.sigma, fv), 1);
    auto bv = mark_vars(1, 'b');
    spec.impulse_map[0] = make_mark_fn(qvi::expr::parse("b1 - x1", bv), 1);
    spec.impulse_cost = make_mark_fn(qvi::expr::parse(o.ell, bv), 1);
    auto ev = mark_vars(1, 'e');
    spec.jump_map[0] = make_mark_fn(qvi::expr::parse("e1 - x1", ev), 1);
    spec.jump_cost = make_mark_fn(qvi::expr::parse(o.chi, ev), 1);
    spec.driver = make_driver_fn(qvi::expr::parse(o.f, driver_vars(1, true)), 1, true);
    spec.state_only = true;
    spec.terminal = make_terminal_fn(qvi::expr::parse(o.psi, terminal_vars(1)), 1);
    for (double b : o.impulse_nodes) spec.impulses.nodes.push_back(Point{b, 0.0});
    for (double e : o.jump_nodes) spec.jumps.nodes.push_back(Point{e, 0.0});
    if (o.weights.empty())
        spec.jumps.weights.assign(o.jump_nodes.size(), 1.0 / static_cast<double>(o.jump_nodes.size()));
    else
        spec.jumps.weights = o.weights;
    double K = 0.0;
    for (double b : o.impulse_nodes) K = std::max(K, std::fabs(b));
    for (double e : o.jump_nodes) K = std::max(K, std::fabs(e));
    spec.impulse_bound = std::max(K, 1e-3);
    spec.cost_floor = o.delta;
    spec.growth_exponent = o.rho;
    spec.driver_lipschitz = o.k_f;
    spec.validate_shape();
    return spec;
}

/// Criterion-1 model: everything flat, unit costs.
inline ProblemSpec zero_model() { return teleport(); }

/// The canonical nontrivial model: running reward x^2 with unit costs.
inline ProblemSpec teleport_x2() {
    TeleportOpts o;
    o.f = "x1^2";
    return teleport(o);
}

/// 1-D shift trap: xi = +1, gamma = -1 (singleton action spaces) with equal
/// constant costs; the depth-2 sequence (impulse, jump) is a free loop.
inline ProblemSpec shift_trap() {
    using namespace qvi::model;
    ProblemSpec spec;
    spec.dim = 1;
    spec.horizon = 1.0;
    auto fv = field_vars(1);
    spec.drift[0] = make_field_fn(qvi::expr::parse("0", fv), 1);
    spec.diffusion[0][0] = make_field_fn(qvi::expr::parse("0", fv), 1);
    auto bv = mark_vars(1, 'b');
    spec.impulse_map[0] = make_mark_fn(qvi::expr::parse("1", bv), 1);
    spec.impulse_cost = make_mark_fn(qvi::expr::parse("1", bv), 1);
    auto ev = mark_vars(1, 'e');
    spec.jump_map[0] = make_mark_fn(qvi::expr::parse("0 - 1", ev), 1);
    spec.jump_cost = make_mark_fn(qvi::expr::parse("1", ev), 1);
    spec.driver = make_driver_fn(qvi::expr::parse("0", driver_vars(1, true)), 1, true);
    spec.terminal = make_terminal_fn(qvi::expr::parse("0", terminal_vars(1)), 1);
    spec.impulses.nodes = {Point{1.0, 0.0}};
    spec.jumps.nodes = {Point{-1.0, 0.0}};
    spec.jumps.weights = {1.0};
    spec.impulse_bound = 10.0;  // the shift dynamics do not satisfy Assumption 2.i; scan only
    spec.cost_floor = 0.5;
    spec.validate_shape();
    return spec;
}

/// Randomized teleport-family spec for oracle-equivalence sweeps.
inline ProblemSpec random_teleport(std::mt19937_64& rng) {
    auto pick = [&](double lo, double hi) {
        return lo + (hi - lo) * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    };
    auto fmt = [](double v) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.12g", v);
        return std::string(buf);
    };
    TeleportOpts o;
    int q = 2 + static_cast<int>(rng() % 2);
    int m = 2 + static_cast<int>(rng() % 2);
    o.impulse_nodes.clear();
    o.jump_nodes.clear();
    for (int i = 0; i < q; ++i) o.impulse_nodes.push_back(pick(-1.0, 1.0));
    for (int i = 0; i < m; ++i) o.jump_nodes.push_back(pick(-1.0, 1.0));
    o.weights.clear();
    for (int i = 0; i < m; ++i) o.weights.push_back(pick(0.1, 1.0));
    o.ell = fmt(pick(0.3, 2.0));
    o.chi = fmt(pick(0.0, 2.0));
    o.sigma = fmt(pick(0.0, 0.5));
    o.drift = fmt(pick(-0.4, 0.4));
    double c0 = pick(-1.0, 1.0), c1 = pick(-1.0, 1.0), c2 = pick(0.0, 1.5);
    o.f = fmt(c0) + " + " + fmt(c1) + "*x1 + " + fmt(c2) + "*x1^2";
    o.psi = fmt(pick(-0.2, 0.2));
    o.delta = 0.25;
    return teleport(o);
}

}  // namespace testmodels

#endif
