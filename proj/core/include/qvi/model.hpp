#ifndef QVI_MODEL_HPP
#define QVI_MODEL_HPP

// Problem data: coefficients of the controlled dynamics, impulse/jump action
// spaces, structural constants, and sampled validation of the standing
// assumptions on user-supplied coefficients.

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "qvi/expr.hpp"

namespace qvi::model {

/// State vector; only the first `dim` components are meaningful (dim ∈ {1,2}).
using Point = std::array<double, 2>;

double norm(const Point& x, int dim);
Point sub(const Point& a, const Point& b, int dim);

/// Scalar coefficient of (t, x): drift/diffusion entries.
using FieldFn = std::function<double(double t, const Point& x)>;
/// Scalar coefficient of (t, x, mark) where the mark is an impulse b or a
/// jump mark e.
using MarkFn = std::function<double(double t, const Point& x, const Point& mark)>;
/// Running reward f(t, x, y, z).
using DriverFn = std::function<double(double t, const Point& x, double y, const Point& z)>;
using TerminalFn = std::function<double(const Point& x)>;

/// Discrete carrier {e_1..e_m} with weights lambda_i > 0.
struct JumpMeasure {
    std::vector<Point> nodes;
    std::vector<double> weights;
    double total_mass() const;
    void validate() const;  // m >= 1, all weights > 0, finite mass
};

/// Discrete impulse set {b_1..b_q}.
struct ImpulseSpace {
    std::vector<Point> nodes;
    void validate() const;  // q >= 1
};

struct NoFreeLoopParams {
    double closure_radius = 0.1;  // h1
    double cost_floor = 0.1;      // h2
    int max_depth = 4;            // composition depth cap
    std::size_t budget = 5'000'000;
    void validate() const;
};

struct ProblemSpec {
    int dim = 1;
    double horizon = 1.0;  // T

    std::array<FieldFn, 2> drift;                    // a_j(t,x)
    std::array<std::array<FieldFn, 2>, 2> diffusion; // sigma_{ij}(t,x)
    std::array<MarkFn, 2> impulse_map;               // xi_j(t,x,b)
    MarkFn impulse_cost;                             // ell(t,x,b) >= delta
    std::array<MarkFn, 2> jump_map;                  // gamma_j(t,x,e)
    MarkFn jump_cost;                                // chi(t,x,e) >= 0
    DriverFn driver;                                 // f(t,x,y,z)
    bool state_only = true;                          // f ignores (y,z)
    TerminalFn terminal;                             // psi(x)

    ImpulseSpace impulses;  // U
    JumpMeasure jumps;      // E, lambda

    double impulse_bound = 1.0;    // K_{gamma,xi}
    double cost_floor = 1e-3;      // delta > 0
    double driver_lipschitz = 0.0; // k_f in (y,z)
    double growth_exponent = 1.0;  // rho >= 1

    Point after_impulse(double t, const Point& x, int b_index) const;
    Point after_jump(double t, const Point& x, int e_index) const;
    double sigma2(double t, const Point& x, int i, int j) const;  // (sigma sigma^T)_{ij}

    void validate_shape() const;  // structural invariants, throws on nonsense
};

// Expression-to-coefficient bindings. Each family has its own declared
// variable list; parse against the matching list before wrapping.
std::vector<std::string> field_vars(int dim);                       // {t,x*}
std::vector<std::string> mark_vars(int dim, char mark);             // {t,x*,b*} or {t,x*,e*}
std::vector<std::string> driver_vars(int dim, bool state_only);     // {t,x*[,y,z*]}
std::vector<std::string> terminal_vars(int dim);                    // {x*}

FieldFn make_field_fn(expr::AstPtr ast, int dim);
MarkFn make_mark_fn(expr::AstPtr ast, int dim);
DriverFn make_driver_fn(expr::AstPtr ast, int dim, bool state_only);
TerminalFn make_terminal_fn(expr::AstPtr ast, int dim);

struct Check {
    std::string name;
    bool pass = true;
    double value = 0.0;   // reported statistic (max ratio, fitted constant, ...)
    std::string witness;  // sample that produced the statistic / failure
};

struct ValidationReport {
    std::vector<Check> checks;
    std::uint64_t seed = 0;
    int samples = 0;
    bool all_pass() const;
    std::string to_text() const;
    std::vector<std::pair<std::string, std::string>> to_kv() const;
};

/// Monte Carlo check of the standing assumptions on [0,T] x B_radius x U x E.
/// Deterministic for a given seed. Expression domain errors propagate with the
/// offending sample point attached.
ValidationReport validate_assumptions(const ProblemSpec& spec, int sample_count, double radius,
                                      std::uint64_t seed = 0x51d5eed);

/// Estimates K_{gamma,xi} as the fixed point of K -> max over samples with
/// |x| <= K of |x+xi| v |x+gamma| (used when the config does not declare it).
double estimate_impulse_bound(const ProblemSpec& spec, int sample_count,
                              std::uint64_t seed = 0x51d5eed);

struct LoopViolation {
    // (player, index) per step: player 1 picks b from U, player 2 picks e from E.
    std::vector<std::pair<int, int>> actions;
    double cost_sum = 0.0;
    double end_distance = 0.0;
    std::string to_text() const;
};

struct LoopReport {
    std::vector<LoopViolation> violations;
    std::size_t sequences_scanned = 0;
    bool budget_exceeded = false;
    double min_near_loop_cost = 0.0;  // empirically smallest |cost| over near-loops
    bool any_near_loop = false;
    bool pass() const { return violations.empty() && !budget_exceeded; }
    std::string to_text() const;
    std::vector<std::pair<std::string, std::string>> to_kv() const;
};

/// Exhaustive scan over interleaved impulse/jump sequences of length
/// <= params.max_depth from x0 at frozen t. Every prefix returning within h1
/// of x0 must carry |sum of signed costs| >= h2; violations are returned.
LoopReport no_free_loop_scan(const ProblemSpec& spec, const NoFreeLoopParams& params, double t,
                             const Point& x0);

}  // namespace qvi::model

#endif
