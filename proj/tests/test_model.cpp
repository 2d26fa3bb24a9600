#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "models.hpp"
#include "qvi/model.hpp"

using namespace qvi::model;
using testmodels::teleport;
using testmodels::TeleportOpts;

TEST_CASE("teleport model passes every assumption check") {
    auto spec = teleport();
    auto report = validate_assumptions(spec, 500, 2.0, 42);
    for (const auto& c : report.checks) {
        CAPTURE(c.name);
        CAPTURE(c.witness);
        CHECK(c.pass);
    }
    CHECK(report.all_pass());
    CHECK(spec.impulse_bound == 1.0);
}

TEST_CASE("validation is deterministic given the seed") {
    auto spec = teleport();
    auto a = validate_assumptions(spec, 200, 2.0, 7);
    auto b = validate_assumptions(spec, 200, 2.0, 7);
    REQUIRE(a.checks.size() == b.checks.size());
    for (std::size_t i = 0; i < a.checks.size(); ++i) {
        CHECK(a.checks[i].value == b.checks[i].value);
        CHECK(a.checks[i].witness == b.checks[i].witness);
    }
}

TEST_CASE("constant-shift impulse map violates the impulse bound") {
    auto spec = teleport();
    // xi(t,x,b) = b with U = {1}: |x+1| > max(K,|x|) for x > 0
    spec.impulses.nodes = {Point{1.0, 0.0}};
    spec.impulse_map[0] = make_mark_fn(qvi::expr::parse("b1", mark_vars(1, 'b')), 1);
    auto report = validate_assumptions(spec, 500, 2.0, 42);
    bool found = false;
    for (const auto& c : report.checks)
        if (c.name == "impulse_bound") {
            found = true;
            CHECK_FALSE(c.pass);
            CHECK(c.value > 0.0);
            CHECK_FALSE(c.witness.empty());
        }
    CHECK(found);
}

TEST_CASE("zero impulse cost violates the delta floor") {
    TeleportOpts o;
    o.ell = "0";
    auto spec = teleport(o);
    auto report = validate_assumptions(spec, 100, 2.0, 42);
    for (const auto& c : report.checks)
        if (c.name == "cost_floor") CHECK_FALSE(c.pass);
    CHECK_FALSE(report.all_pass());
}

TEST_CASE("terminal inconsistency is caught") {
    TeleportOpts o;
    o.psi = "x1^2";  // psi(0)=0 < max_b {psi(b) - ell} = 1 - 0.2 with cheap ell
    o.ell = "0.2";
    auto spec = teleport(o);
    auto report = validate_assumptions(spec, 400, 2.0, 42);
    for (const auto& c : report.checks)
        if (c.name == "terminal_consistency") CHECK_FALSE(c.pass);
}

TEST_CASE("declared k_f is checked against empirical quotient") {
    using namespace qvi::model;
    auto spec = teleport();
    spec.state_only = false;
    spec.driver = make_driver_fn(qvi::expr::parse("x1 + 2*y", driver_vars(1, false)), 1, false);
    spec.driver_lipschitz = 2.0;
    auto ok = validate_assumptions(spec, 400, 2.0, 42);
    for (const auto& c : ok.checks)
        if (c.name == "lipschitz_f_yz") {
            CHECK(c.pass);
            CHECK(c.value <= 2.0 + 1e-6);
            CHECK(c.value > 1.0);
        }
    spec.driver_lipschitz = 0.5;  // understated
    auto bad = validate_assumptions(spec, 400, 2.0, 42);
    for (const auto& c : bad.checks)
        if (c.name == "lipschitz_f_yz") CHECK_FALSE(c.pass);
}

TEST_CASE("radius below K is rejected") {
    auto spec = teleport();
    CHECK_THROWS_AS(validate_assumptions(spec, 10, 0.5, 42), std::invalid_argument);
}

TEST_CASE("impulse bound estimation recovers K=1 for teleport") {
    auto spec = teleport();
    double K = estimate_impulse_bound(spec, 200);
    CHECK(K == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("shift trap: depth-2 free loop is reported") {
    auto spec = testmodels::shift_trap();
    NoFreeLoopParams params;
    params.closure_radius = 0.25;  // h1
    params.cost_floor = 0.5;       // h2
    params.max_depth = 2;
    auto report = no_free_loop_scan(spec, params, 0.0, Point{0.0, 0.0});
    REQUIRE_FALSE(report.violations.empty());
    bool has_impulse_then_jump = false;
    for (const auto& v : report.violations) {
        CHECK(std::fabs(v.cost_sum) < params.cost_floor);
        if (v.actions == std::vector<std::pair<int, int>>{{1, 0}, {2, 0}})
            has_impulse_then_jump = true;
    }
    CHECK(has_impulse_then_jump);
    CHECK(report.min_near_loop_cost == doctest::Approx(0.0));
}

TEST_CASE("teleport with cheap jump cost: depth-2 impulse-jump loops clear h2") {
    TeleportOpts o;
    o.chi = "0.25";
    auto spec = teleport(o);
    NoFreeLoopParams params;
    params.closure_radius = 0.1;
    params.cost_floor = 0.5;
    params.max_depth = 2;
    auto report = no_free_loop_scan(spec, params, 0.0, Point{0.0, 0.0});
    // |ell - chi| = 0.75 >= 0.5: no two-action violation; the lone-jump return
    // at cost 0.25 is a genuine depth-1 violation and must be flagged.
    for (const auto& v : report.violations) CHECK(v.actions.size() == 1);
    REQUIRE_FALSE(report.violations.empty());
    CHECK(report.min_near_loop_cost == doctest::Approx(0.25));
}

namespace {

// Independent brute-force enumeration: iterative over flattened action codes.
struct OracleLoop {
    std::vector<std::pair<int, int>> actions;
    double cost;
};

std::vector<OracleLoop> oracle_scan(const ProblemSpec& spec, double h1, double h2, int depth,
                                    double t, Point x0) {
    std::vector<OracleLoop> out;
    const int q = static_cast<int>(spec.impulses.nodes.size());
    const int m = static_cast<int>(spec.jumps.nodes.size());
    const int alphabet = q + m;
    for (int len = 1; len <= depth; ++len) {
        std::vector<int> code(static_cast<std::size_t>(len), 0);
        for (;;) {
            Point x = x0;
            double cost = 0.0;
            std::vector<std::pair<int, int>> actions;
            for (int j = 0; j < len; ++j) {
                int c = code[static_cast<std::size_t>(j)];
                if (c < q) {
                    cost += spec.impulse_cost(t, x, spec.impulses.nodes[static_cast<std::size_t>(c)]);
                    x = spec.after_impulse(t, x, c);
                    actions.emplace_back(1, c);
                } else {
                    cost -= spec.jump_cost(t, x, spec.jumps.nodes[static_cast<std::size_t>(c - q)]);
                    x = spec.after_jump(t, x, c - q);
                    actions.emplace_back(2, c - q);
                }
            }
            if (qvi::model::norm(qvi::model::sub(x, x0, spec.dim), spec.dim) <= h1 &&
                std::fabs(cost) < h2)
                out.push_back({actions, cost});
            int j = len - 1;
            while (j >= 0 && ++code[static_cast<std::size_t>(j)] == alphabet) {
                code[static_cast<std::size_t>(j)] = 0;
                --j;
            }
            if (j < 0) break;
        }
    }
    return out;
}

}  // namespace

TEST_CASE("depth-4 scan equals independent brute-force enumeration") {
    TeleportOpts o;
    o.ell = "0.8";
    o.chi = "0.6";
    auto spec = teleport(o);
    NoFreeLoopParams params;
    params.closure_radius = 0.05;
    params.cost_floor = 0.45;
    params.max_depth = 4;
    auto report = no_free_loop_scan(spec, params, 0.3, Point{0.0, 0.0});
    auto oracle = oracle_scan(spec, params.closure_radius, params.cost_floor, 4, 0.3,
                              Point{0.0, 0.0});
    REQUIRE(report.violations.size() == oracle.size());
    std::set<std::vector<std::pair<int, int>>> a, b;
    for (const auto& v : report.violations) a.insert(v.actions);
    for (const auto& v : oracle) b.insert(v.actions);
    CHECK(a == b);
    CHECK_FALSE(report.violations.empty());  // the teleport family has cheap near-loops here
}

TEST_CASE("scan budget truncation is reported") {
    auto spec = teleport();
    NoFreeLoopParams params;
    params.closure_radius = 0.1;
    params.cost_floor = 0.5;
    params.max_depth = 8;
    params.budget = 100;
    auto report = no_free_loop_scan(spec, params, 0.0, Point{0.0, 0.0});
    CHECK(report.budget_exceeded);
    CHECK(report.sequences_scanned <= 100 + 6);
}

TEST_CASE("expression domain errors carry the offending sample") {
    TeleportOpts o;
    o.ell = "log(x1)";  // blows up for x1 <= 0
    auto spec = teleport(o);
    try {
        validate_assumptions(spec, 200, 2.0, 42);
        FAIL("expected EvalError");
    } catch (const qvi::expr::EvalError& e) {
        std::string msg = e.what();
        CHECK(msg.find("domain error") != std::string::npos);
        CHECK(msg.find("t=") != std::string::npos);
        CHECK(msg.find("x=(") != std::string::npos);
    }
}
