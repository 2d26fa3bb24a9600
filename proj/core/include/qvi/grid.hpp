#ifndef QVI_GRID_HPP
#define QVI_GRID_HPP

// Space-time discretization of the truncated domain [0,T] x [-R,R]^d,
// multilinear interpolation, and the discrete generator
// L = sum_j a_j d/dx_j + 1/2 sum_ij (sigma sigma^T)_ij d^2/dx_i dx_j
// built from monotone stencils (upwind drift, central second differences,
// sign-adapted 7-point cross terms, zero curvature at the box edge).

#include <atomic>
#include <cstdint>
#include <span>
#include <vector>

#include "qvi/model.hpp"

namespace qvi::grid {

using model::Point;
using model::ProblemSpec;

struct Grid {
    int dim = 1;
    double horizon = 1.0;  // T
    double radius = 1.0;   // R
    int nx = 3;            // nodes per axis
    int nt = 3;            // time intervals; nt+1 slices
    double dt = 0.0;
    double dx = 0.0;

    int axis_nodes() const { return nx; }
    int num_nodes() const { return dim == 1 ? nx : nx * nx; }
    double time(int m) const { return m == nt ? horizon : m * dt; }
    double coord(int axis_index) const { return -radius + axis_index * dx; }
    int index(int i1, int i2 = 0) const { return dim == 1 ? i1 : i1 * nx + i2; }
    Point node(int i) const;
    /// Nearest grid node to an arbitrary point (clamped to the box).
    int nearest_node(const Point& x) const;
    int nearest_time(double t) const;
};

/// v[m][i] over (time node m, space node i), terminal slice at m = nt.
struct ValueField {
    int nt = 0;
    int nodes = 0;
    std::vector<double> data;

    static ValueField zeros(const Grid& g);
    double& at(int m, int i) { return data[static_cast<std::size_t>(m) * static_cast<std::size_t>(nodes) + static_cast<std::size_t>(i)]; }
    double at(int m, int i) const { return data[static_cast<std::size_t>(m) * static_cast<std::size_t>(nodes) + static_cast<std::size_t>(i)]; }
    std::span<double> slice(int m) { return {data.data() + static_cast<std::size_t>(m) * static_cast<std::size_t>(nodes), static_cast<std::size_t>(nodes)}; }
    std::span<const double> slice(int m) const { return {data.data() + static_cast<std::size_t>(m) * static_cast<std::size_t>(nodes), static_cast<std::size_t>(nodes)}; }
    bool all_finite() const;
};

/// Rejects R < K_{gamma,xi} (impulse destinations would exit the box).
Grid build_grid(const ProblemSpec& spec, double radius, int nx, int nt);

/// Multilinear interpolation of a slice, exact at nodes. Points outside the
/// box by at most dx/2 are clamped (counted in *clamp_count when given);
/// farther outside raises std::domain_error.
double interpolate(const Grid& g, std::span<const double> slice, const Point& y,
                   std::atomic<std::uint64_t>* clamp_count = nullptr);

/// Precomputed multilinear weights of a point; applying them reproduces
/// interpolate() bitwise. Solvers cache these per slice for the impulse/jump
/// destinations.
struct InterpWeights {
    int lo0 = 0, lo1 = 0;
    double w0 = 0.0, w1 = 0.0;
};
InterpWeights interp_weights(const Grid& g, const Point& y,
                             std::atomic<std::uint64_t>* clamp_count = nullptr);
double interp_apply(const Grid& g, const InterpWeights& w, std::span<const double> slice);

/// Per-slice stencil of the discrete generator at a fixed time, reusable
/// across sweeps. Neighbor weights are nonnegative by construction whenever
/// sigma sigma^T is diagonally dominant.
struct StencilSlice {
    struct Row {
        double center = 0.0;
        double east = 0.0, west = 0.0;                          // axis 0
        double north = 0.0, south = 0.0;                        // axis 1 (d=2)
        double ne = 0.0, sw = 0.0, nw = 0.0, se = 0.0;          // corners (d=2)
    };
    std::vector<Row> rows;
    double max_abs_center = 0.0;
    int dim = 1;
    int nx = 0;
};

StencilSlice build_stencil(const ProblemSpec& spec, const Grid& g, double t);
void apply_stencil(const StencilSlice& st, std::span<const double> slice,
                   std::span<double> out);
/// Single row of the stencil product (used by Gauss-Seidel sweeps).
double apply_stencil_row(const StencilSlice& st, std::span<const double> slice, int i);

/// (L_h v) on one time slice; convenience wrapper over build/apply.
std::vector<double> apply_generator(const ProblemSpec& spec, const Grid& g,
                                    std::span<const double> slice, double t);

/// Upwind gradient D_h v (directions follow the drift sign, one-sided at the
/// box edge); used to feed z = sigma^T D_h v into general drivers.
std::vector<Point> upwind_gradient(const ProblemSpec& spec, const Grid& g,
                                   std::span<const double> slice, double t);

/// Largest explicit time step keeping the step operator monotone:
/// 1 / max_t,x ( |L_ii| + penalty_rate + driver_lipschitz ).
double explicit_step_bound(const ProblemSpec& spec, const Grid& g, double penalty_rate);

/// d=2 cross-term monotonicity requires (ssT)_11 >= |(ssT)_12| and
/// (ssT)_22 >= |(ssT)_12| at every grid point; throws otherwise.
void check_diagonal_dominance(const ProblemSpec& spec, const Grid& g);

/// Fitted growth constant C = max |v| / (1 + |x|^rho) (growth guard).
double fit_growth_constant(const Grid& g, const ValueField& field, double rho);

}  // namespace qvi::grid

#endif
