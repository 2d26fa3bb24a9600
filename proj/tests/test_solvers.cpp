#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "models.hpp"
#include "qvi/solvers.hpp"

using namespace qvi::solvers;
using qvi::grid::build_grid;
using qvi::grid::Grid;
using qvi::grid::ValueField;
using qvi::model::Point;
using qvi::model::ProblemSpec;

namespace {

SolveParams explicit_params() {
    SolveParams p;
    p.mode = StepMode::Explicit;
    p.fp_tol = 1e-13;
    p.penalty_ladder = {1.0, 2.0};
    return p;
}

SolveParams implicit_params() {
    SolveParams p;
    p.mode = StepMode::ImplicitObstacle;
    p.fp_tol = 1e-12;
    p.penalty_ladder = {1.0, 1e3, 1e6, 1e9, 1e12};
    p.max_inner = 20000;
    return p;
}

// ---------------------------------------------------------------------------
// Independent oracles. They share no stepping code with qvi::solvers: own
// stencil assembly, own interpolation, own fixed-point loops.
// ---------------------------------------------------------------------------

double onorm(const ProblemSpec& s, const Grid& g, std::vector<double>& slice, double y) {
    double u = (y + g.radius) / g.dx;
    u = std::clamp(u, 0.0, static_cast<double>(g.nx - 1));
    int lo = std::min(static_cast<int>(std::floor(u)), g.nx - 2);
    double w = u - lo;
    (void)s;
    return (1.0 - w) * slice[static_cast<std::size_t>(lo)] + w * slice[static_cast<std::size_t>(lo + 1)];
}

// explicit pde update: prev + dt (L prev + f), evaluated at t_{m+1}  (1-D)
std::vector<double> oracle_pde(const ProblemSpec& s, const Grid& g,
                               std::vector<double>& prev, double t) {
    const int n = g.nx;
    std::vector<double> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Point x{-g.radius + i * g.dx, 0.0};
        double a = s.drift[0](t, x);
        double sg = s.diffusion[0][0](t, x);
        double diff = 0.0, drift = 0.0;
        if (i > 0 && i < n - 1) {
            diff = 0.5 * sg * sg *
                   (prev[static_cast<std::size_t>(i + 1)] - 2.0 * prev[static_cast<std::size_t>(i)] +
                    prev[static_cast<std::size_t>(i - 1)]) /
                   (g.dx * g.dx);
            drift = a >= 0.0 ? a * (prev[static_cast<std::size_t>(i + 1)] - prev[static_cast<std::size_t>(i)]) / g.dx
                             : a * (prev[static_cast<std::size_t>(i)] - prev[static_cast<std::size_t>(i - 1)]) / g.dx;
        } else if (i == 0) {
            drift = a * (prev[1] - prev[0]) / g.dx;
        } else {
            drift = a * (prev[static_cast<std::size_t>(n - 1)] - prev[static_cast<std::size_t>(n - 2)]) / g.dx;
        }
        out[static_cast<std::size_t>(i)] =
            prev[static_cast<std::size_t>(i)] + g.dt * (diff + drift + s.driver(t, x, 0.0, Point{0.0, 0.0}));
    }
    return out;
}

// obstacle-free explicit scheme (used against the penalized solver when the
// penalty and barrier are both slack)
ValueField oracle_heat(const ProblemSpec& s, const Grid& g) {
    ValueField f = ValueField::zeros(g);
    std::vector<double> cur(static_cast<std::size_t>(g.nx));
    for (int i = 0; i < g.nx; ++i) {
        cur[static_cast<std::size_t>(i)] = s.terminal(Point{-g.radius + i * g.dx, 0.0});
        f.at(g.nt, i) = cur[static_cast<std::size_t>(i)];
    }
    for (int m = g.nt - 1; m >= 0; --m) {
        cur = oracle_pde(s, g, cur, g.time(m + 1));
        for (int i = 0; i < g.nx; ++i) f.at(m, i) = cur[static_cast<std::size_t>(i)];
    }
    return f;
}

double oracle_sup(const ProblemSpec& s, const Grid& g, std::vector<double>& w, double t, int i) {
    Point x{-g.radius + i * g.dx, 0.0};
    double best = -1e300;
    for (std::size_t k = 0; k < s.impulses.nodes.size(); ++k) {
        Point dest = s.after_impulse(t, x, static_cast<int>(k));
        best = std::max(best, onorm(s, g, w, dest[0]) - s.impulse_cost(t, x, s.impulses.nodes[k]));
    }
    return best;
}

double oracle_inf(const ProblemSpec& s, const Grid& g, std::vector<double>& w, double t, int i) {
    Point x{-g.radius + i * g.dx, 0.0};
    double best = 1e300;
    for (std::size_t k = 0; k < s.jumps.nodes.size(); ++k) {
        Point dest = s.after_jump(t, x, static_cast<int>(k));
        best = std::min(best, onorm(s, g, w, dest[0]) + s.jump_cost(t, x, s.jumps.nodes[k]));
    }
    return best;
}

// exhaustive value iteration for the explicit min-max projection
ValueField oracle_value_iteration(const ProblemSpec& s, const Grid& g) {
    ValueField f = ValueField::zeros(g);
    std::vector<double> prev(static_cast<std::size_t>(g.nx));
    for (int i = 0; i < g.nx; ++i) {
        prev[static_cast<std::size_t>(i)] = s.terminal(Point{-g.radius + i * g.dx, 0.0});
        f.at(g.nt, i) = prev[static_cast<std::size_t>(i)];
    }
    for (int m = g.nt - 1; m >= 0; --m) {
        std::vector<double> pde = oracle_pde(s, g, prev, g.time(m + 1));
        std::vector<double> w = pde;
        for (int it = 0; it < 100000; ++it) {
            std::vector<double> next(static_cast<std::size_t>(g.nx));
            double delta = 0.0;
            for (int i = 0; i < g.nx; ++i) {
                double M = oracle_sup(s, g, w, g.time(m), i);
                double N = oracle_inf(s, g, w, g.time(m), i);
                next[static_cast<std::size_t>(i)] = std::max(M, std::min(N, pde[static_cast<std::size_t>(i)]));
                delta = std::max(delta, std::fabs(next[static_cast<std::size_t>(i)] - w[static_cast<std::size_t>(i)]));
            }
            w = next;
            if (delta < 1e-14) break;
        }
        prev = w;
        for (int i = 0; i < g.nx; ++i) f.at(m, i) = w[static_cast<std::size_t>(i)];
    }
    return f;
}

// implicit projected double-obstacle iteration (PSOR-like) used as the oracle
// for the penalty-ladder limit: per slice solve
//   w = max(h, min(N w, (prev + dt (offdiag(w) + f)) / (1 - dt center)))
ValueField oracle_implicit_double_obstacle(const ProblemSpec& s, const Grid& g,
                                           const std::vector<std::vector<double>>& barrier) {
    ValueField f = ValueField::zeros(g);
    std::vector<double> prev(static_cast<std::size_t>(g.nx));
    for (int i = 0; i < g.nx; ++i) {
        prev[static_cast<std::size_t>(i)] = s.terminal(Point{-g.radius + i * g.dx, 0.0});
        f.at(g.nt, i) = prev[static_cast<std::size_t>(i)];
    }
    for (int m = g.nt - 1; m >= 0; --m) {
        double t = g.time(m);
        std::vector<double> w = prev;
        for (int it = 0; it < 200000; ++it) {
            std::vector<double> next(static_cast<std::size_t>(g.nx));
            double delta = 0.0;
            for (int i = 0; i < g.nx; ++i) {
                Point x{-g.radius + i * g.dx, 0.0};
                double a = s.drift[0](t, x);
                double sg = s.diffusion[0][0](t, x);
                double center = 0.0, offdiag = 0.0;
                if (i > 0 && i < g.nx - 1) {
                    double dc = 0.5 * sg * sg / (g.dx * g.dx);
                    center -= 2.0 * dc;
                    offdiag += dc * (w[static_cast<std::size_t>(i + 1)] + w[static_cast<std::size_t>(i - 1)]);
                    if (a >= 0.0) {
                        center -= a / g.dx;
                        offdiag += a / g.dx * w[static_cast<std::size_t>(i + 1)];
                    } else {
                        center -= -a / g.dx;
                        offdiag += -a / g.dx * w[static_cast<std::size_t>(i - 1)];
                    }
                } else if (i == 0) {
                    center -= a / g.dx;
                    offdiag += a / g.dx * w[1];
                } else {
                    center -= -a / g.dx;
                    offdiag += -a / g.dx * w[static_cast<std::size_t>(g.nx - 2)];
                }
                double fi = s.driver(t, x, 0.0, Point{0.0, 0.0});
                double pde = (prev[static_cast<std::size_t>(i)] + g.dt * (offdiag + fi)) / (1.0 - g.dt * center);
                double N = oracle_inf(s, g, w, t, i);
                next[static_cast<std::size_t>(i)] =
                    std::max(barrier[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)], std::min(N, pde));
                delta = std::max(delta, std::fabs(next[static_cast<std::size_t>(i)] - w[static_cast<std::size_t>(i)]));
            }
            w = next;
            if (delta < 1e-13) break;
        }
        prev = w;
        for (int i = 0; i < g.nx; ++i) f.at(m, i) = w[static_cast<std::size_t>(i)];
    }
    return f;
}

double sup_abs_diff(const ValueField& a, const ValueField& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) d = std::max(d, std::fabs(a.data[i] - b.data[i]));
    return d;
}

}  // namespace

TEST_CASE("penalized solve: slack penalty and barrier give the zero field") {
    auto spec = testmodels::teleport();  // psi = f = 0, chi = 1
    Grid g = build_grid(spec, 2.0, 17, 8);
    auto v = solve_penalized_single_obstacle(spec, g, explicit_params(), 2.0,
                                             constant_barrier(-1.0));
    for (double x : v.data) CHECK(x == 0.0);
}

TEST_CASE("penalized solve: n=0, h=psi=0, f=1 integrates to T - t") {
    testmodels::TeleportOpts o;
    o.f = "1";
    auto spec = testmodels::teleport(o);
    Grid g = build_grid(spec, 2.0, 9, 8);
    SolveParams p = explicit_params();
    auto v = solve_penalized_single_obstacle(spec, g, p, 0.0, constant_barrier(0.0));
    for (int m = 0; m <= g.nt; ++m)
        for (int i = 0; i < g.num_nodes(); ++i)
            CHECK(v.at(m, i) == doctest::Approx(spec.horizon - g.time(m)).epsilon(1e-12));
    // implicit mode integrates the same constant-f problem exactly as well
    p.mode = StepMode::ImplicitObstacle;
    auto vi = solve_penalized_single_obstacle(spec, g, p, 0.0, constant_barrier(0.0));
    for (int m = 0; m <= g.nt; ++m)
        CHECK(vi.at(m, 0) == doctest::Approx(spec.horizon - g.time(m)).epsilon(1e-9));
}

TEST_CASE("penalized solve matches the obstacle-free oracle when chi = 10") {
    testmodels::TeleportOpts o;
    o.f = "x1^2";
    o.chi = "10";
    auto spec = testmodels::teleport(o);
    Grid g = build_grid(spec, 2.0, 17, 16);
    auto v = solve_penalized_single_obstacle(spec, g, explicit_params(), 4.0,
                                             constant_barrier(never_binding_level(spec, g)));
    auto oracle = oracle_heat(spec, g);
    CHECK(sup_abs_diff(v, oracle) <= 2.0 * g.dt);
}

TEST_CASE("explicit CFL violation is reported with the required dt") {
    testmodels::TeleportOpts o;
    o.sigma = "1.5";
    auto spec = testmodels::teleport(o);
    Grid g = build_grid(spec, 2.0, 33, 8);  // dt = 1/8, dx = 1/8: far beyond the bound
    try {
        solve_penalized_single_obstacle(spec, g, explicit_params(), 0.0, constant_barrier(-1.0));
        FAIL("expected stability error");
    } catch (const std::invalid_argument& e) {
        std::string msg = e.what();
        CHECK(msg.find("required dt") != std::string::npos);
    }
}

TEST_CASE("terminal gluing h(T,.) <= psi is enforced") {
    auto spec = testmodels::teleport();  // psi = 0
    Grid g = build_grid(spec, 2.0, 9, 4);
    CHECK_THROWS_AS(solve_penalized_single_obstacle(spec, g, explicit_params(), 0.0,
                                                    constant_barrier(0.5)),
                    std::invalid_argument);
}

TEST_CASE("frozen-upper ladder: zero model stays zero for every rung") {
    auto spec = testmodels::teleport();
    Grid g = build_grid(spec, 2.0, 9, 8);
    auto rep = solve_double_obstacle_frozen_upper(spec, g, explicit_params(),
                                                  constant_barrier(-1.0));
    CHECK(rep.converged);
    for (double x : rep.field.data) CHECK(x == 0.0);
}

TEST_CASE("frozen-upper ladder is non-increasing in n (teleport, f = x^2)") {
    auto spec = testmodels::teleport_x2();
    Grid g = build_grid(spec, 2.0, 17, 16);
    SolveParams p = implicit_params();
    p.penalty_ladder = {2.0, 8.0, 32.0, 128.0};
    double h0 = never_binding_level(spec, g);
    ValueField previous;
    for (std::size_t j = 0; j < p.penalty_ladder.size(); ++j) {
        SolveParams single = p;
        single.penalty_ladder = {p.penalty_ladder[j]};
        auto rep = solve_double_obstacle_frozen_upper(spec, g, single, constant_barrier(h0));
        if (j > 0) {
            double worst = -1e300;
            for (std::size_t i = 0; i < rep.field.data.size(); ++i)
                worst = std::max(worst, rep.field.data[i] - previous.data[i]);
            CHECK(worst <= 5.0 * g.dt);
        }
        previous = std::move(rep.field);
    }
}

TEST_CASE("frozen-upper ladder limit equals the projected implicit VI oracle (9x9)") {
    auto spec = testmodels::teleport_x2();
    Grid g = build_grid(spec, 2.0, 9, 9);
    SolveParams p = implicit_params();
    double h0 = never_binding_level(spec, g);
    auto rep = solve_double_obstacle_frozen_upper(spec, g, p, constant_barrier(h0));
    std::vector<std::vector<double>> barrier(
        static_cast<std::size_t>(g.nt + 1),
        std::vector<double>(static_cast<std::size_t>(g.nx), h0));
    auto oracle = oracle_implicit_double_obstacle(spec, g, barrier);
    CHECK(sup_abs_diff(rep.field, oracle) <= 1e-8);
}

TEST_CASE("lower iteration: zero model fixed at zero for all k") {
    auto spec = testmodels::teleport();
    Grid g = build_grid(spec, 2.0, 9, 8);
    SolveParams p = explicit_params();
    p.lower_iterations = 3;
    auto rep = lower_iteration(spec, g, p);
    CHECK(rep.converged);
    for (double x : rep.field.data) CHECK(x == 0.0);
}

TEST_CASE("lower iteration: one profitable impulse raises v_1 above v_0 and matches two-stage DP") {
    testmodels::TeleportOpts o;
    o.f = "x1^2";
    o.ell = "0.4";
    o.chi = "1.5";
    o.delta = 0.4;
    auto spec = testmodels::teleport(o);
    Grid g = build_grid(spec, 2.0, 9, 9);
    SolveParams p = implicit_params();
    p.lower_iterations = 1;

    double h0 = never_binding_level(spec, g);
    std::vector<std::vector<double>> b0(
        static_cast<std::size_t>(g.nt + 1),
        std::vector<double>(static_cast<std::size_t>(g.nx), h0));
    auto v0 = oracle_implicit_double_obstacle(spec, g, b0);
    std::vector<std::vector<double>> b1 = b0;
    for (int m = 0; m <= g.nt; ++m) {
        std::vector<double> slice(static_cast<std::size_t>(g.nx));
        for (int i = 0; i < g.nx; ++i) slice[static_cast<std::size_t>(i)] = v0.at(m, i);
        for (int i = 0; i < g.nx; ++i)
            b1[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)] =
                oracle_sup(spec, g, slice, g.time(m), i);
    }
    auto v1_oracle = oracle_implicit_double_obstacle(spec, g, b1);

    auto rep = lower_iteration(spec, g, p);
    CHECK(sup_abs_diff(rep.field, v1_oracle) <= 1e-7);

    double max_gain = 0.0;
    for (std::size_t i = 0; i < rep.field.data.size(); ++i)
        max_gain = std::max(max_gain, rep.field.data[i] - v0.data[i]);
    CHECK(max_gain > 0.01);  // the impulse is strictly profitable somewhere
}

TEST_CASE("upper iteration equals the unconstrained solve when both constraints are slack") {
    testmodels::TeleportOpts o;
    o.f = "x1^2";
    o.ell = "1000";
    o.chi = "1000";
    o.delta = 1.0;
    auto spec = testmodels::teleport(o);
    Grid g = build_grid(spec, 2.0, 17, 16);
    SolveParams p = explicit_params();
    p.penalty_ladder = {1.0, 2.0, 4.0};
    auto rep = upper_iteration(spec, g, p);
    CHECK(rep.converged);  // all rungs identical once the penalty is everywhere slack
    auto oracle = oracle_heat(spec, g);
    CHECK(sup_abs_diff(rep.field, oracle) <= 1e-10);
}

TEST_CASE("upper iteration is non-increasing along the ladder (teleport, f = x^2)") {
    auto spec = testmodels::teleport_x2();
    Grid g = build_grid(spec, 2.0, 17, 16);
    SolveParams p = implicit_params();
    p.penalty_ladder = {2.0, 8.0, 32.0, 128.0};
    auto rep = upper_iteration(spec, g, p);
    CHECK(rep.monotonicity_violations == 0);
    CHECK(rep.deltas.size() == 3);
}

TEST_CASE("solve_direct: zero model is exactly zero and terminal is exact") {
    auto spec = testmodels::teleport();
    Grid g = build_grid(spec, 2.0, 17, 8);
    auto v = solve_direct(spec, g, explicit_params());
    for (double x : v.data) CHECK(x == 0.0);

    testmodels::TeleportOpts o;
    o.psi = "0.1*x1^2";
    o.ell = "0.5";
    o.delta = 0.5;
    auto spec2 = testmodels::teleport(o);
    auto v2 = solve_direct(spec2, g, explicit_params());
    for (int i = 0; i < g.num_nodes(); ++i)
        CHECK(v2.at(g.nt, i) == spec2.terminal(g.node(i)));  // bitwise
}

TEST_CASE("solve_direct equals exhaustive value iteration on a 9x9 grid to 1e-10") {
    auto spec = testmodels::teleport_x2();
    Grid g = build_grid(spec, 2.0, 9, 9);
    SolveParams p = explicit_params();
    auto v = solve_direct(spec, g, p);
    auto oracle = oracle_value_iteration(spec, g);
    CHECK(sup_abs_diff(v, oracle) <= 1e-10);
}

TEST_CASE("discrete comparison: larger terminal data gives a larger solution") {
    auto base = testmodels::teleport_x2();
    testmodels::TeleportOpts o;
    o.f = "x1^2";
    o.psi = "0.25";
    auto upper_spec = testmodels::teleport(o);
    Grid g = build_grid(base, 2.0, 17, 16);
    auto lo = solve_direct(base, g, explicit_params());
    auto hi = solve_direct(upper_spec, g, explicit_params());
    for (std::size_t i = 0; i < lo.data.size(); ++i) CHECK(lo.data[i] <= hi.data[i] + 1e-12);
}

TEST_CASE("sandwich on the teleport x^2 model (implicit, reduced grid)") {
    auto spec = testmodels::teleport_x2();
    Grid g = build_grid(spec, 2.0, 33, 32);
    SolveParams p = implicit_params();
    p.penalty_ladder = {4.0, 16.0, 64.0, 256.0};
    p.lower_iterations = 6;
    p.fp_tol = 1e-9;
    auto lower = lower_iteration(spec, g, p);
    auto upper = upper_iteration(spec, g, p);
    auto direct = solve_direct(spec, g, p);
    auto gap = sandwich_gap(lower, upper, direct, g, p.sandwich_tol);
    CAPTURE(gap.to_text());
    CHECK(gap.pass);
    CHECK(gap.positive_gap <= scheme_tolerance(g));
}

TEST_CASE("under-penalized ladder (J=1, n=1) fails the sandwich") {
    auto spec = testmodels::teleport_x2();
    Grid g = build_grid(spec, 2.0, 33, 32);
    SolveParams p = implicit_params();
    p.penalty_ladder = {1.0};
    p.lower_iterations = 4;
    p.fp_tol = 1e-9;
    auto lower = lower_iteration(spec, g, p);
    auto upper = upper_iteration(spec, g, p);
    auto direct = solve_direct(spec, g, p);
    auto gap = sandwich_gap(lower, upper, direct, g, p.sandwich_tol);
    CHECK_FALSE(gap.pass);
    CHECK(gap.max_lower_minus_direct > gap.tolerance);
}

TEST_CASE("thread count does not change solver output bitwise") {
    auto spec = testmodels::teleport_x2();
    Grid g = build_grid(spec, 2.0, 17, 12);
    SolveParams p1 = implicit_params();
    p1.penalty_ladder = {4.0, 64.0};
    SolveParams p4 = p1;
    p4.threads = 4;
    auto a = upper_iteration(spec, g, p1);
    auto b = upper_iteration(spec, g, p4);
    CHECK(a.field.data == b.field.data);
    auto da = solve_direct(spec, g, p1);
    auto db = solve_direct(spec, g, p4);
    CHECK(da.data == db.data);
}

TEST_CASE("gauss-seidel sweeps agree with jacobi within tolerance and demand one thread") {
    auto spec = testmodels::teleport_x2();
    Grid g = build_grid(spec, 2.0, 17, 12);
    SolveParams pj = implicit_params();
    pj.penalty_ladder = {16.0};
    SolveParams pg = pj;
    pg.sweep = SweepStyle::GaussSeidel;
    auto vj = solve_direct(spec, g, pj);
    auto vg = solve_direct(spec, g, pg);
    CHECK(sup_abs_diff(vj, vg) <= 1e-7);
    pg.threads = 2;
    CHECK_THROWS_AS(solve_direct(spec, g, pg), std::invalid_argument);
}

TEST_CASE("explicit and implicit modes agree to scheme order") {
    auto spec = testmodels::teleport_x2();
    Grid g = build_grid(spec, 2.0, 17, 16);
    SolveParams pe = explicit_params();
    SolveParams pi = implicit_params();
    auto ve = solve_direct(spec, g, pe);
    auto vi = solve_direct(spec, g, pi);
    CHECK(sup_abs_diff(ve, vi) <= scheme_tolerance(g));
}

TEST_CASE("ladder must be strictly increasing") {
    SolveParams p;
    p.penalty_ladder = {4.0, 4.0};
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p.penalty_ladder = {};
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}
