#ifndef QVI_SOLVERS_HPP
#define QVI_SOLVERS_HPP

// The three solution paths for the double-obstacle QVI
//   min{ v - supOP v, max{ v - infOP v, -v_t - Lv - f } } = 0,  v(T,.) = psi:
//
//  * penalized single-obstacle solves  min{ v - h, -v_t - Lv + K^n v - f } = 0
//    run along an increasing penalty ladder (upper constraint enforced as
//    n -> infinity),
//  * the lower monotone iteration v_k from frozen barriers supOP v_{k-1} and
//    the upper monotone iteration v_n with the implicit sup-obstacle,
//  * a direct projection fixed point v = max(Mv, min(Nv, step(v))) used as a
//    mutual oracle.
//
// Explicit stepping requires dt * (max|L_ii| + n lambda(E) + k_f) <= 1 and
// throws otherwise with the required dt; implicit-obstacle stepping solves
// each slice by damped Jacobi sweeps (Gauss-Seidel opt-in, single thread).

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "qvi/grid.hpp"
#include "qvi/operators.hpp"

namespace qvi::solvers {

using grid::Grid;
using grid::ValueField;
using model::ProblemSpec;

enum class StepMode { Explicit, ImplicitObstacle };
enum class SweepStyle { Jacobi, GaussSeidel };
enum class ProjectionOrder { MinMax, MaxMin };  // max-min exposed but uncertified

struct SolveParams {
    StepMode mode = StepMode::Explicit;
    SweepStyle sweep = SweepStyle::Jacobi;
    std::vector<double> penalty_ladder = {4.0, 16.0, 64.0, 256.0};  // n_1 < ... < n_J
    double fp_tol = 1e-9;       // eps_fp: inner fixed points and ladder deltas
    int max_inner = 5000;       // cap on inner sweeps per slice
    int lower_iterations = 6;   // K
    double sandwich_tol = 1e-6; // eps_sw
    ProjectionOrder projection = ProjectionOrder::MinMax;
    int threads = 1;
    void validate() const;
};

struct SolveReport {
    ValueField field;            // final iterate
    std::vector<double> deltas;  // sup-norm deltas per outer iteration / rung
    bool converged = false;      // deltas dropped below fp_tol before the cap
    double last_delta = 0.0;
    int iterations = 0;
    int monotonicity_violations = 0;   // nodes beyond the 5*dt allowance
    double worst_monotonicity = 0.0;
    std::vector<std::string> warnings;
    double growth_constant = 0.0;  // fitted growth guard of the final field
    double wall_seconds = 0.0;     // reported on stdout only, never in artifacts
};

struct GapReport {
    double positive_gap = 0.0;        // max (v_K - vbar)^+
    double max_lower_minus_direct = 0.0;
    double max_direct_minus_upper = 0.0;
    double max_abs_direct_lower = 0.0;
    double max_abs_direct_upper = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    std::string to_text() const;
    std::vector<std::pair<std::string, std::string>> to_kv() const;
};

/// Lower barrier h(t_m, .) written slicewise.
using BarrierFn = std::function<void(int m, std::span<double> out)>;

BarrierFn constant_barrier(double level);
BarrierFn field_barrier(ValueField h);

/// Barrier level below every reachable field value: -(e^{k_f T}(max|psi| +
/// T max|f(.,.,0,0)|) + 1), the discrete stand-in for "no lower obstacle".
double never_binding_level(const ProblemSpec& spec, const Grid& g);

/// 10 * (dt + dx^2): the scheme tolerance used by admissibility checks.
double scheme_tolerance(const Grid& g);

/// Backward solve of min{v - h, -v_t - Lv + K^n v - f} = 0, v(T,.) = psi.
/// Requires the gluing h(T,.) <= psi.
ValueField solve_penalized_single_obstacle(const ProblemSpec& spec, const Grid& g,
                                           const SolveParams& params, double level,
                                           const BarrierFn& barrier);

/// Runs the ladder until successive rungs differ by < fp_tol; reports ladder
/// deltas, non-increase violations (beyond 5*dt) and admissibility of the
/// limit (v <= Nv + tol, v >= h - tol).
SolveReport solve_double_obstacle_frozen_upper(const ProblemSpec& spec, const Grid& g,
                                               const SolveParams& params,
                                               const BarrierFn& barrier);

/// v_0 from the never-binding barrier, then v_k from h_k = supOP v_{k-1};
/// non-decreasing up to 5*dt (throws on gross violation), early stop on
/// sup|v_k - v_{k-1}| < fp_tol.
SolveReport lower_iteration(const ProblemSpec& spec, const Grid& g, const SolveParams& params);

/// Sup-obstacle QVI min{v - supOP v, -v_t - Lv + K^n v - f} = 0 along the
/// ladder; nodewise non-increase in n checked up to 5*dt.
SolveReport upper_iteration(const ProblemSpec& spec, const Grid& g, const SolveParams& params);

/// Direct projection fixed point v = max(Mv, min(Nv, step(v))) per slice.
ValueField solve_direct(const ProblemSpec& spec, const Grid& g, const SolveParams& params);

/// Sandwich check: v_K - tol <= direct <= vbar_{n_J} + tol with
/// tol = 10*(dt + dx^2) + eps_sw.
GapReport sandwich_gap(const SolveReport& lower, const SolveReport& upper,
                       const ValueField& direct, const Grid& g, double eps_sw);

}  // namespace qvi::solvers

#endif
