#include "qvi/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace qvi::grid {

Point Grid::node(int i) const {
    if (dim == 1) return Point{coord(i), 0.0};
    return Point{coord(i / nx), coord(i % nx)};
}

int Grid::nearest_node(const Point& x) const {
    auto axis = [&](double v) {
        int i = static_cast<int>(std::lround((v + radius) / dx));
        return std::clamp(i, 0, nx - 1);
    };
    if (dim == 1) return axis(x[0]);
    return index(axis(x[0]), axis(x[1]));
}

int Grid::nearest_time(double t) const {
    int m = static_cast<int>(std::lround(t / dt));
    return std::clamp(m, 0, nt);
}

ValueField ValueField::zeros(const Grid& g) {
    ValueField f;
    f.nt = g.nt;
    f.nodes = g.num_nodes();
    f.data.assign(static_cast<std::size_t>(f.nt + 1) * static_cast<std::size_t>(f.nodes), 0.0);
    return f;
}

bool ValueField::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

Grid build_grid(const ProblemSpec& spec, double radius, int nx, int nt) {
    if (radius < spec.impulse_bound) {
        std::ostringstream os;
        os << "grid: R = " << radius << " < K_{gamma,xi} = " << spec.impulse_bound
           << "; impulse destinations would exit the box";
        throw std::invalid_argument(os.str());
    }
    if (nx < 3 || nt < 3) throw std::invalid_argument("grid: nx and nt must be >= 3");
    Grid g;
    g.dim = spec.dim;
    g.horizon = spec.horizon;
    g.radius = radius;
    g.nx = nx;
    g.nt = nt;
    g.dt = spec.horizon / nt;
    g.dx = 2.0 * radius / (nx - 1);
    return g;
}

namespace {

struct AxisWeight {
    int lo;      // lower node index on the axis
    double w;    // weight of the upper node; 1-w on the lower
};

AxisWeight axis_weight(const Grid& g, double v, std::atomic<std::uint64_t>* clamp_count) {
    double u = (v + g.radius) / g.dx;
    if (u < 0.0 || u > g.nx - 1) {
        double overshoot = std::max(-u, u - (g.nx - 1)) * g.dx;
        if (overshoot > 0.5 * g.dx + 1e-12) {
            std::ostringstream os;
            os << "interpolate: coordinate " << v << " exits the box [-" << g.radius << ","
               << g.radius << "] by " << overshoot << " > dx/2";
            throw std::domain_error(os.str());
        }
        if (clamp_count) clamp_count->fetch_add(1, std::memory_order_relaxed);
        u = std::clamp(u, 0.0, static_cast<double>(g.nx - 1));
    }
    int lo = std::min(static_cast<int>(u), g.nx - 2);
    return {lo, u - lo};
}

}  // namespace

InterpWeights interp_weights(const Grid& g, const Point& y,
                             std::atomic<std::uint64_t>* clamp_count) {
    InterpWeights out;
    AxisWeight a = axis_weight(g, y[0], clamp_count);
    out.lo0 = a.lo;
    out.w0 = a.w;
    if (g.dim == 2) {
        AxisWeight b = axis_weight(g, y[1], clamp_count);
        out.lo1 = b.lo;
        out.w1 = b.w;
    }
    return out;
}

double interp_apply(const Grid& g, const InterpWeights& w, std::span<const double> slice) {
    if (g.dim == 1) {
        return (1.0 - w.w0) * slice[static_cast<std::size_t>(w.lo0)] +
               w.w0 * slice[static_cast<std::size_t>(w.lo0 + 1)];
    }
    auto at = [&](int i1, int i2) { return slice[static_cast<std::size_t>(g.index(i1, i2))]; };
    return (1.0 - w.w0) * ((1.0 - w.w1) * at(w.lo0, w.lo1) + w.w1 * at(w.lo0, w.lo1 + 1)) +
           w.w0 * ((1.0 - w.w1) * at(w.lo0 + 1, w.lo1) + w.w1 * at(w.lo0 + 1, w.lo1 + 1));
}

double interpolate(const Grid& g, std::span<const double> slice, const Point& y,
                   std::atomic<std::uint64_t>* clamp_count) {
    return interp_apply(g, interp_weights(g, y, clamp_count), slice);
}

StencilSlice build_stencil(const ProblemSpec& spec, const Grid& g, double t) {
    StencilSlice st;
    st.dim = g.dim;
    st.nx = g.nx;
    st.rows.resize(static_cast<std::size_t>(g.num_nodes()));
    const double dx = g.dx;
    const double dx2 = dx * dx;

    for (int i = 0; i < g.num_nodes(); ++i) {
        Point x = g.node(i);
        StencilSlice::Row row;
        int i1 = g.dim == 1 ? i : i / g.nx;
        int i2 = g.dim == 1 ? 0 : i % g.nx;

        auto add_axis = [&](int axis, int idx, double& fwd, double& bwd) {
            double a = spec.drift[static_cast<std::size_t>(axis)](t, x);
            double s = spec.sigma2(t, x, axis, axis);
            bool at_lo = idx == 0;
            bool at_hi = idx == g.nx - 1;
            if (!at_lo && !at_hi) {
                double dcoef = 0.5 * s / dx2;
                fwd += dcoef;
                bwd += dcoef;
                row.center -= 2.0 * dcoef;
                if (a >= 0.0) {
                    fwd += a / dx;
                    row.center -= a / dx;
                } else {
                    bwd += -a / dx;
                    row.center -= -a / dx;
                }
            } else {
                // zero curvature at the edge: second-derivative term vanishes,
                // drift uses the one-sided difference into the domain
                if (at_lo) {
                    fwd += a / dx;
                    row.center -= a / dx;
                } else {
                    bwd += -a / dx;
                    row.center -= -a / dx;
                }
            }
        };

        if (g.dim == 1) {
            add_axis(0, i, row.east, row.west);
        } else {
            add_axis(0, i1, row.east, row.west);
            add_axis(1, i2, row.north, row.south);
            bool interior = i1 > 0 && i1 < g.nx - 1 && i2 > 0 && i2 < g.nx - 1;
            if (interior) {
                double c = spec.sigma2(t, x, 0, 1);
                double w = std::fabs(c) / (2.0 * dx2);
                if (c >= 0.0) {
                    row.ne += w;
                    row.sw += w;
                } else {
                    row.nw += w;
                    row.se += w;
                }
                row.center += 2.0 * w;
                row.east -= w;
                row.west -= w;
                row.north -= w;
                row.south -= w;
            }
        }
        st.rows[static_cast<std::size_t>(i)] = row;
        st.max_abs_center = std::max(st.max_abs_center, std::fabs(row.center));
    }
    return st;
}

double apply_stencil_row(const StencilSlice& st, std::span<const double> slice, int i) {
    const auto& r = st.rows[static_cast<std::size_t>(i)];
    const int nx = st.nx;
    double v = r.center * slice[static_cast<std::size_t>(i)];
    if (st.dim == 1) {
        if (r.east != 0.0) v += r.east * slice[static_cast<std::size_t>(i + 1)];
        if (r.west != 0.0) v += r.west * slice[static_cast<std::size_t>(i - 1)];
        return v;
    }
    if (r.east != 0.0) v += r.east * slice[static_cast<std::size_t>(i + nx)];
    if (r.west != 0.0) v += r.west * slice[static_cast<std::size_t>(i - nx)];
    if (r.north != 0.0) v += r.north * slice[static_cast<std::size_t>(i + 1)];
    if (r.south != 0.0) v += r.south * slice[static_cast<std::size_t>(i - 1)];
    if (r.ne != 0.0) v += r.ne * slice[static_cast<std::size_t>(i + nx + 1)];
    if (r.sw != 0.0) v += r.sw * slice[static_cast<std::size_t>(i - nx - 1)];
    if (r.nw != 0.0) v += r.nw * slice[static_cast<std::size_t>(i - nx + 1)];
    if (r.se != 0.0) v += r.se * slice[static_cast<std::size_t>(i + nx - 1)];
    return v;
}

void apply_stencil(const StencilSlice& st, std::span<const double> slice,
                   std::span<double> out) {
    const int nx = st.nx;
    const int n = static_cast<int>(st.rows.size());
    if (st.dim == 1) {
        for (int i = 0; i < n; ++i) {
            const auto& r = st.rows[static_cast<std::size_t>(i)];
            double v = r.center * slice[static_cast<std::size_t>(i)];
            if (r.east != 0.0) v += r.east * slice[static_cast<std::size_t>(i + 1)];
            if (r.west != 0.0) v += r.west * slice[static_cast<std::size_t>(i - 1)];
            out[static_cast<std::size_t>(i)] = v;
        }
        return;
    }
    for (int i = 0; i < n; ++i) {
        const auto& r = st.rows[static_cast<std::size_t>(i)];
        double v = r.center * slice[static_cast<std::size_t>(i)];
        if (r.east != 0.0) v += r.east * slice[static_cast<std::size_t>(i + nx)];
        if (r.west != 0.0) v += r.west * slice[static_cast<std::size_t>(i - nx)];
        if (r.north != 0.0) v += r.north * slice[static_cast<std::size_t>(i + 1)];
        if (r.south != 0.0) v += r.south * slice[static_cast<std::size_t>(i - 1)];
        if (r.ne != 0.0) v += r.ne * slice[static_cast<std::size_t>(i + nx + 1)];
        if (r.sw != 0.0) v += r.sw * slice[static_cast<std::size_t>(i - nx - 1)];
        if (r.nw != 0.0) v += r.nw * slice[static_cast<std::size_t>(i - nx + 1)];
        if (r.se != 0.0) v += r.se * slice[static_cast<std::size_t>(i + nx - 1)];
        out[static_cast<std::size_t>(i)] = v;
    }
}

std::vector<double> apply_generator(const ProblemSpec& spec, const Grid& g,
                                    std::span<const double> slice, double t) {
    for (double v : slice)
        if (!std::isfinite(v)) throw std::invalid_argument("apply_generator: non-finite input");
    std::vector<double> out(slice.size());
    apply_stencil(build_stencil(spec, g, t), slice, out);
    return out;
}

std::vector<Point> upwind_gradient(const ProblemSpec& spec, const Grid& g,
                                   std::span<const double> slice, double t) {
    std::vector<Point> out(slice.size(), Point{0.0, 0.0});
    const double dx = g.dx;
    for (int i = 0; i < g.num_nodes(); ++i) {
        Point x = g.node(i);
        int idx[2] = {g.dim == 1 ? i : i / g.nx, g.dim == 1 ? 0 : i % g.nx};
        int stride[2] = {g.dim == 1 ? 1 : g.nx, 1};
        for (int axis = 0; axis < g.dim; ++axis) {
            double a = spec.drift[static_cast<std::size_t>(axis)](t, x);
            int k = idx[axis];
            int s = stride[axis];
            double d;
            if (k == 0 || (a >= 0.0 && k < g.nx - 1))
                d = (slice[static_cast<std::size_t>(i + s)] - slice[static_cast<std::size_t>(i)]) / dx;
            else
                d = (slice[static_cast<std::size_t>(i)] - slice[static_cast<std::size_t>(i - s)]) / dx;
            out[static_cast<std::size_t>(i)][static_cast<std::size_t>(axis)] = d;
        }
    }
    return out;
}

double explicit_step_bound(const ProblemSpec& spec, const Grid& g, double penalty_rate) {
    double worst = penalty_rate * spec.jumps.total_mass() + spec.driver_lipschitz;
    for (int m = 0; m <= g.nt; ++m) {
        StencilSlice st = build_stencil(spec, g, g.time(m));
        worst = std::max(worst, st.max_abs_center + penalty_rate * spec.jumps.total_mass() +
                                    spec.driver_lipschitz);
    }
    return worst > 0.0 ? 1.0 / worst : std::numeric_limits<double>::infinity();
}

void check_diagonal_dominance(const ProblemSpec& spec, const Grid& g) {
    if (g.dim < 2) return;
    for (int m = 0; m <= g.nt; ++m) {
        double t = g.time(m);
        for (int i = 0; i < g.num_nodes(); ++i) {
            Point x = g.node(i);
            double c = std::fabs(spec.sigma2(t, x, 0, 1));
            double s11 = spec.sigma2(t, x, 0, 0);
            double s22 = spec.sigma2(t, x, 1, 1);
            if (s11 + 1e-12 < c || s22 + 1e-12 < c) {
                std::ostringstream os;
                os << "diffusion is not diagonally dominant at t=" << t << " x=(" << x[0] << ","
                   << x[1] << "): (ssT)=" << s11 << "," << s22 << " vs cross " << c
                   << "; the 7-point cross stencil would lose monotonicity";
                throw std::invalid_argument(os.str());
            }
        }
    }
}

double fit_growth_constant(const Grid& g, const ValueField& field, double rho) {
    double c = 0.0;
    for (int m = 0; m <= g.nt; ++m)
        for (int i = 0; i < g.num_nodes(); ++i) {
            double denom = 1.0 + std::pow(model::norm(g.node(i), g.dim), rho);
            c = std::max(c, std::fabs(field.at(m, i)) / denom);
        }
    return c;
}

}  // namespace qvi::grid
