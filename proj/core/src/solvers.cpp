#include "qvi/solvers.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "qvi/parallel.hpp"

namespace qvi::solvers {

using model::Point;

void SolveParams::validate() const {
    if (!(fp_tol > 0.0)) throw std::invalid_argument("solver: fp_tol must be positive");
    if (!(sandwich_tol > 0.0)) throw std::invalid_argument("solver: sandwich_tol must be positive");
    if (max_inner < 1) throw std::invalid_argument("solver: max_inner must be >= 1");
    if (lower_iterations < 1) throw std::invalid_argument("solver: K must be >= 1");
    if (penalty_ladder.empty()) throw std::invalid_argument("solver: penalty ladder is empty");
    for (std::size_t j = 0; j < penalty_ladder.size(); ++j) {
        if (penalty_ladder[j] < 0.0)
            throw std::invalid_argument("solver: penalty levels must be >= 0");
        if (j > 0 && penalty_ladder[j] <= penalty_ladder[j - 1])
            throw std::invalid_argument("solver: penalty ladder must be strictly increasing");
    }
    if (sweep == SweepStyle::GaussSeidel && threads != 1)
        throw std::invalid_argument("solver: gauss-seidel sweeps require --threads 1");
}

double scheme_tolerance(const Grid& g) { return 10.0 * (g.dt + g.dx * g.dx); }

BarrierFn constant_barrier(double level) {
    return [level](int, std::span<double> out) {
        std::fill(out.begin(), out.end(), level);
    };
}

BarrierFn field_barrier(ValueField h) {
    auto shared = std::make_shared<ValueField>(std::move(h));
    return [shared](int m, std::span<double> out) {
        auto s = shared->slice(m);
        std::copy(s.begin(), s.end(), out.begin());
    };
}

double never_binding_level(const ProblemSpec& spec, const Grid& g) {
    double max_psi = 0.0, max_f = 0.0;
    for (int i = 0; i < g.num_nodes(); ++i) {
        Point x = g.node(i);
        max_psi = std::max(max_psi, std::fabs(spec.terminal(x)));
        for (int m = 0; m <= g.nt; ++m)
            max_f = std::max(max_f, std::fabs(spec.driver(g.time(m), x, 0.0, Point{0.0, 0.0})));
    }
    double bound = std::exp(spec.driver_lipschitz * spec.horizon) *
                       (max_psi + spec.horizon * max_f) +
                   1.0;
    return -bound;
}

namespace {

enum class SliceKind { LowerBarrier, UpperQvi, Direct };

// Destination interpolation weights and costs frozen per slice; applying them
// reproduces operators::eval_supOP / eval_infOP / eval_penalty bitwise.
struct ActionTable {
    int actions = 0;
    std::vector<grid::InterpWeights> weights;  // nodes x actions
    std::vector<double> cost;                  // nodes x actions
};

ActionTable build_impulse_table(const ProblemSpec& spec, const Grid& g, double t,
                                std::atomic<std::uint64_t>* clamps) {
    ActionTable tab;
    tab.actions = static_cast<int>(spec.impulses.nodes.size());
    const int n = g.num_nodes();
    tab.weights.resize(static_cast<std::size_t>(n * tab.actions));
    tab.cost.resize(static_cast<std::size_t>(n * tab.actions));
    for (int i = 0; i < n; ++i) {
        Point x = g.node(i);
        for (int k = 0; k < tab.actions; ++k) {
            auto idx = static_cast<std::size_t>(i * tab.actions + k);
            tab.weights[idx] = grid::interp_weights(g, spec.after_impulse(t, x, k), clamps);
            tab.cost[idx] = spec.impulse_cost(t, x, spec.impulses.nodes[static_cast<std::size_t>(k)]);
        }
    }
    return tab;
}

ActionTable build_jump_table(const ProblemSpec& spec, const Grid& g, double t,
                             std::atomic<std::uint64_t>* clamps) {
    ActionTable tab;
    tab.actions = static_cast<int>(spec.jumps.nodes.size());
    const int n = g.num_nodes();
    tab.weights.resize(static_cast<std::size_t>(n * tab.actions));
    tab.cost.resize(static_cast<std::size_t>(n * tab.actions));
    for (int i = 0; i < n; ++i) {
        Point x = g.node(i);
        for (int k = 0; k < tab.actions; ++k) {
            auto idx = static_cast<std::size_t>(i * tab.actions + k);
            tab.weights[idx] = grid::interp_weights(g, spec.after_jump(t, x, k), clamps);
            tab.cost[idx] = spec.jump_cost(t, x, spec.jumps.nodes[static_cast<std::size_t>(k)]);
        }
    }
    return tab;
}

double table_sup(const Grid& g, const ActionTable& tab, std::span<const double> slice, int i) {
    double best = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < tab.actions; ++k) {
        auto idx = static_cast<std::size_t>(i * tab.actions + k);
        double cand = grid::interp_apply(g, tab.weights[idx], slice) - tab.cost[idx];
        if (cand > best) best = cand;
    }
    return best;
}

double table_inf(const Grid& g, const ActionTable& tab, std::span<const double> slice, int i) {
    double best = std::numeric_limits<double>::infinity();
    for (int k = 0; k < tab.actions; ++k) {
        auto idx = static_cast<std::size_t>(i * tab.actions + k);
        double cand = grid::interp_apply(g, tab.weights[idx], slice) + tab.cost[idx];
        if (cand < best) best = cand;
    }
    return best;
}

double table_penalty(const Grid& g, const ProblemSpec& spec, const ActionTable& jumps,
                     std::span<const double> slice, int i, double level) {
    double here = slice[static_cast<std::size_t>(i)];
    double acc = 0.0;
    for (int k = 0; k < jumps.actions; ++k) {
        auto idx = static_cast<std::size_t>(i * jumps.actions + k);
        double gap = grid::interp_apply(g, jumps.weights[idx], slice) + jumps.cost[idx] - here;
        if (gap < 0.0) acc += spec.jumps.weights[static_cast<std::size_t>(k)] * (-gap);
    }
    return level * acc;
}

struct StepWorkspace {
    std::vector<double> a, b, c;  // scratch slices
    std::vector<double> barrier;
    std::vector<double> f_cache;
    std::vector<Point> z_cache;
};

class Engine {
public:
    Engine(const ProblemSpec& spec, const Grid& g, const SolveParams& params, double level,
           SliceKind kind, const BarrierFn* barrier)
        : spec_(spec), g_(g), params_(params), level_(level), kind_(kind), barrier_(barrier) {}

    ValueField run(std::vector<std::string>* warnings) {
        params_.validate();
        if (g_.dim == 2) grid::check_diagonal_dominance(spec_, g_);
        if (!spec_.state_only && spec_.driver_lipschitz * g_.dt >= 1.0) {
            std::ostringstream os;
            os << "solver: k_f * dt = " << spec_.driver_lipschitz * g_.dt
               << " >= 1; the driver fixed point cannot contract (reduce dt below "
               << 1.0 / spec_.driver_lipschitz << ")";
            throw std::invalid_argument(os.str());
        }
        if (params_.mode == StepMode::Explicit) {
            double bound = grid::explicit_step_bound(spec_, g_, level_);
            if (g_.dt > bound * (1.0 + 1e-12)) {
                std::ostringstream os;
                os << "explicit step is unstable: dt = " << g_.dt << " exceeds the monotone bound "
                   << bound << " (penalty level " << level_ << "); required dt <= " << bound
                   << " or use implicit-obstacle mode";
                throw std::invalid_argument(os.str());
            }
        }

        ValueField field = ValueField::zeros(g_);
        const int n = g_.num_nodes();
        for (int i = 0; i < n; ++i) field.at(g_.nt, i) = spec_.terminal(g_.node(i));

        ws_.a.resize(static_cast<std::size_t>(n));
        ws_.b.resize(static_cast<std::size_t>(n));
        ws_.c.resize(static_cast<std::size_t>(n));
        ws_.barrier.resize(static_cast<std::size_t>(n));
        ws_.f_cache.resize(static_cast<std::size_t>(n));

        if (kind_ == SliceKind::LowerBarrier) {
            (*barrier_)(g_.nt, ws_.barrier);
            for (int i = 0; i < n; ++i)
                if (ws_.barrier[static_cast<std::size_t>(i)] > field.at(g_.nt, i) + 1e-9) {
                    std::ostringstream os;
                    os << "lower barrier violates the terminal gluing h(T,.) <= psi at node " << i
                       << ": h = " << ws_.barrier[static_cast<std::size_t>(i)]
                       << " > psi = " << field.at(g_.nt, i);
                    throw std::invalid_argument(os.str());
                }
        }

        for (int m = g_.nt - 1; m >= 0; --m) {
            if (kind_ == SliceKind::LowerBarrier) (*barrier_)(m, ws_.barrier);
            step(field, m);
            for (int i = 0; i < n; ++i)
                if (!std::isfinite(field.at(m, i))) {
                    std::ostringstream os;
                    os << "solver produced a non-finite value at t = " << g_.time(m) << ", node "
                       << i;
                    throw std::runtime_error(os.str());
                }
        }
        if (warnings && clamps_.load() > 0)
            warnings->push_back(std::to_string(clamps_.load()) +
                                " destination(s) clamped to the box by <= dx/2");
        return field;
    }

private:
    const ProblemSpec& spec_;
    const Grid& g_;
    SolveParams params_;
    double level_;
    SliceKind kind_;
    const BarrierFn* barrier_;
    StepWorkspace ws_;
    std::atomic<std::uint64_t> clamps_{0};

    void fill_f_cache(double t, std::span<const double> y_slice, bool explicit_z) {
        const int n = g_.num_nodes();
        if (spec_.state_only) {
            parallel_for(n, params_.threads, [&](int i) {
                ws_.f_cache[static_cast<std::size_t>(i)] =
                    spec_.driver(t, g_.node(i), 0.0, Point{0.0, 0.0});
            });
            return;
        }
        ws_.z_cache = grid::upwind_gradient(spec_, g_, y_slice, t);
        parallel_for(n, params_.threads, [&](int i) {
            Point grad = ws_.z_cache[static_cast<std::size_t>(i)];
            Point x = g_.node(i);
            Point z{0.0, 0.0};
            for (int r = 0; r < g_.dim; ++r)
                for (int c = 0; c < g_.dim; ++c)
                    z[static_cast<std::size_t>(r)] +=
                        spec_.diffusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(r)](t, x) *
                        grad[static_cast<std::size_t>(c)];
            ws_.f_cache[static_cast<std::size_t>(i)] =
                spec_.driver(t, x, y_slice[static_cast<std::size_t>(i)], z);
        });
        (void)explicit_z;
    }

    // Explicit update from the known slice m+1:
    //   pde = v^{m+1} + dt (L v^{m+1} - K^n v^{m+1} + f(t_{m+1}, x, v^{m+1}, z)).
    void explicit_pde(const ValueField& field, int m, std::vector<double>& pde) {
        const int n = g_.num_nodes();
        const double t_prev = g_.time(m + 1);
        auto prev = field.slice(m + 1);
        grid::StencilSlice st = grid::build_stencil(spec_, g_, t_prev);
        std::vector<double>& Lv = ws_.a;
        grid::apply_stencil(st, prev, Lv);
        fill_f_cache(t_prev, prev, true);
        std::vector<double> kn;
        if (level_ > 0.0)
            kn = operators::eval_penalty(spec_, g_, prev, t_prev, level_, params_.threads,
                                         &clamps_);
        parallel_for(n, params_.threads, [&](int i) {
            auto iu = static_cast<std::size_t>(i);
            double v = prev[iu] + g_.dt * (Lv[iu] - (level_ > 0.0 ? kn[iu] : 0.0) + ws_.f_cache[iu]);
            pde[iu] = v;
        });
    }

    void step(ValueField& field, int m) {
        if (params_.mode == StepMode::Explicit) step_explicit(field, m);
        else step_implicit(field, m);
    }

    void step_explicit(ValueField& field, int m) {
        const int n = g_.num_nodes();
        const double t_m = g_.time(m);
        std::vector<double>& pde = ws_.b;
        explicit_pde(field, m, pde);
        auto out = field.slice(m);

        if (kind_ == SliceKind::LowerBarrier) {
            parallel_for(n, params_.threads, [&](int i) {
                auto iu = static_cast<std::size_t>(i);
                out[iu] = std::max(ws_.barrier[iu], pde[iu]);
            });
            return;
        }

        // implicit obstacle: iterate w <- proj(Mw, Nw, pde) on the slice
        ActionTable imp = build_impulse_table(spec_, g_, t_m, &clamps_);
        ActionTable jmp;
        if (kind_ == SliceKind::Direct) jmp = build_jump_table(spec_, g_, t_m, &clamps_);
        std::vector<double>& w = ws_.c;
        std::copy(pde.begin(), pde.end(), w.begin());
        std::vector<double> w_new(static_cast<std::size_t>(n));
        for (int it = 0; it < params_.max_inner; ++it) {
            parallel_for(n, params_.threads, [&](int i) {
                auto iu = static_cast<std::size_t>(i);
                double Mw = table_sup(g_, imp, w, i);
                double cand = pde[iu];
                if (kind_ == SliceKind::Direct) {
                    double Nw = table_inf(g_, jmp, w, i);
                    cand = params_.projection == ProjectionOrder::MinMax
                               ? std::max(Mw, std::min(Nw, cand))
                               : std::min(Nw, std::max(Mw, cand));
                } else {
                    cand = std::max(Mw, cand);
                }
                w_new[iu] = cand;
            });
            double delta = 0.0;
            for (int i = 0; i < n; ++i)
                delta = std::max(delta, std::fabs(w_new[static_cast<std::size_t>(i)] -
                                                  w[static_cast<std::size_t>(i)]));
            w.swap(w_new);
            if (delta < params_.fp_tol) {
                std::copy(w.begin(), w.end(), out.begin());
                return;
            }
        }
        std::ostringstream os;
        os << "slice fixed point not reached in " << params_.max_inner << " iterations at t = "
           << t_m;
        throw std::runtime_error(os.str());
    }

    // Implicit slice problem, solved by damped sweeps with the obstacle
    // projection applied inside each sweep (PSOR-like). The penalty diagonal
    // is treated implicitly so arbitrarily large levels stay stable.
    void step_implicit(ValueField& field, int m) {
        const int n = g_.num_nodes();
        const double t_m = g_.time(m);
        auto prev = field.slice(m + 1);
        grid::StencilSlice st = grid::build_stencil(spec_, g_, t_m);
        ActionTable jmp;
        if (level_ > 0.0 || kind_ == SliceKind::Direct)
            jmp = build_jump_table(spec_, g_, t_m, &clamps_);
        ActionTable imp;
        if (kind_ != SliceKind::LowerBarrier) imp = build_impulse_table(spec_, g_, t_m, &clamps_);

        std::vector<double>& w = ws_.c;
        std::copy(prev.begin(), prev.end(), w.begin());
        std::vector<double> w_new(static_cast<std::size_t>(n));
        std::vector<double>& Lw = ws_.a;

        auto node_update = [&](int i, std::span<const double> cur, double Lw_i) {
            auto iu = static_cast<std::size_t>(i);
            const auto& row = st.rows[iu];
            double offdiag = Lw_i - row.center * cur[iu];
            double base_num = prev[iu] + g_.dt * (offdiag + ws_.f_cache[iu]);
            double base_den = 1.0 - g_.dt * row.center;
            double pde;
            if (level_ > 0.0) {
                // exact root of the piecewise-linear scalar equation
                //   v*base_den + dt n sum_j lambda_j (v - d_j)^+ = base_num,
                // so arbitrarily stiff penalties cannot make the sweep chatter
                constexpr int kMax = 32;
                double dbuf[kMax];
                double lbuf[kMax];
                std::vector<double> dvec, lvec;
                double* d = dbuf;
                double* lw = lbuf;
                if (jmp.actions > kMax) {
                    dvec.resize(static_cast<std::size_t>(jmp.actions));
                    lvec.resize(static_cast<std::size_t>(jmp.actions));
                    d = dvec.data();
                    lw = lvec.data();
                }
                for (int k = 0; k < jmp.actions; ++k) {
                    auto idx = static_cast<std::size_t>(i * jmp.actions + k);
                    d[k] = grid::interp_apply(g_, jmp.weights[idx], cur) + jmp.cost[idx];
                    lw[k] = g_.dt * level_ * spec_.jumps.weights[static_cast<std::size_t>(k)];
                }
                // insertion sort by destination value (the mark count is tiny)
                for (int k = 1; k < jmp.actions; ++k) {
                    double dk = d[k], lk = lw[k];
                    int j = k - 1;
                    while (j >= 0 && d[j] > dk) {
                        d[j + 1] = d[j];
                        lw[j + 1] = lw[j];
                        --j;
                    }
                    d[j + 1] = dk;
                    lw[j + 1] = lk;
                }
                double num = base_num, den = base_den;
                pde = num / den;
                for (int k = 0; k <= jmp.actions; ++k) {
                    double v = num / den;
                    bool lower_ok = k == 0 || d[k - 1] < v;
                    bool upper_ok = k == jmp.actions || v <= d[k];
                    if (lower_ok && upper_ok) {
                        pde = v;
                        break;
                    }
                    if (k < jmp.actions) {
                        num += lw[k] * d[k];
                        den += lw[k];
                        pde = num / den;  // fallback: fully active set
                    }
                }
            } else {
                pde = base_num / base_den;
            }
            switch (kind_) {
                case SliceKind::LowerBarrier:
                    return std::max(ws_.barrier[iu], pde);
                case SliceKind::UpperQvi:
                    return std::max(table_sup(g_, imp, cur, i), pde);
                case SliceKind::Direct: {
                    double Mw = table_sup(g_, imp, cur, i);
                    double Nw = table_inf(g_, jmp, cur, i);
                    return params_.projection == ProjectionOrder::MinMax
                               ? std::max(Mw, std::min(Nw, pde))
                               : std::min(Nw, std::max(Mw, pde));
                }
            }
            return pde;
        };

        if (spec_.state_only) fill_f_cache(t_m, w, false);
        for (int it = 0; it < params_.max_inner; ++it) {
            if (!spec_.state_only) fill_f_cache(t_m, w, false);
            double delta = 0.0;
            if (params_.sweep == SweepStyle::Jacobi) {
                grid::apply_stencil(st, w, Lw);
                parallel_for(n, params_.threads, [&](int i) {
                    w_new[static_cast<std::size_t>(i)] = node_update(i, w, Lw[static_cast<std::size_t>(i)]);
                });
                for (int i = 0; i < n; ++i)
                    delta = std::max(delta, std::fabs(w_new[static_cast<std::size_t>(i)] -
                                                      w[static_cast<std::size_t>(i)]));
                w.swap(w_new);
            } else {
                for (int i = 0; i < n; ++i) {
                    auto iu = static_cast<std::size_t>(i);
                    double Lw_i = grid::apply_stencil_row(st, w, i);
                    double updated = node_update(i, w, Lw_i);
                    delta = std::max(delta, std::fabs(updated - w[iu]));
                    w[iu] = updated;
                }
            }
            if (delta < params_.fp_tol) {
                auto out = field.slice(m);
                std::copy(w.begin(), w.end(), out.begin());
                return;
            }
        }
        std::ostringstream os;
        os << "implicit sweeps did not converge in " << params_.max_inner << " iterations at t = "
           << t_m << " (penalty level " << level_ << ")";
        throw std::runtime_error(os.str());
    }
};

double sup_diff(const ValueField& a, const ValueField& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        d = std::max(d, std::fabs(a.data[i] - b.data[i]));
    return d;
}

// max over nodes of (a - b); positive values mean a exceeds b
double max_excess(const ValueField& a, const ValueField& b) {
    double d = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < a.data.size(); ++i) d = std::max(d, a.data[i] - b.data[i]);
    return d;
}

int count_excess(const ValueField& a, const ValueField& b, double allowance) {
    int c = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        if (a.data[i] - b.data[i] > allowance) ++c;
    return c;
}

}  // namespace

ValueField solve_penalized_single_obstacle(const ProblemSpec& spec, const Grid& g,
                                           const SolveParams& params, double level,
                                           const BarrierFn& barrier) {
    Engine engine(spec, g, params, level, SliceKind::LowerBarrier, &barrier);
    return engine.run(nullptr);
}

SolveReport solve_double_obstacle_frozen_upper(const ProblemSpec& spec, const Grid& g,
                                               const SolveParams& params,
                                               const BarrierFn& barrier) {
    auto t0 = std::chrono::steady_clock::now();
    SolveReport rep;
    ValueField previous;
    const double allowance = 5.0 * g.dt;
    for (std::size_t j = 0; j < params.penalty_ladder.size(); ++j) {
        Engine engine(spec, g, params, params.penalty_ladder[j], SliceKind::LowerBarrier,
                      &barrier);
        ValueField w = engine.run(&rep.warnings);
        ++rep.iterations;
        if (j > 0) {
            double delta = sup_diff(w, previous);
            rep.deltas.push_back(delta);
            rep.last_delta = delta;
            int viol = count_excess(w, previous, allowance);
            if (viol > 0) {
                rep.monotonicity_violations += viol;
                rep.worst_monotonicity =
                    std::max(rep.worst_monotonicity, max_excess(w, previous));
            }
            previous = std::move(w);
            if (delta < params.fp_tol) {
                rep.converged = true;
                break;
            }
        } else {
            previous = std::move(w);
        }
    }
    rep.field = std::move(previous);
    if (!rep.converged)
        rep.warnings.push_back("penalty ladder exhausted without fp_tol convergence; last delta " +
                               std::to_string(rep.last_delta));

    // admissibility of the limit: v <= Nv + tol and v >= h - tol
    const double tol = scheme_tolerance(g);
    std::vector<double> h(static_cast<std::size_t>(g.num_nodes()));
    int upper_viol = 0, lower_viol = 0;
    for (int m = 0; m < g.nt; ++m) {
        auto slice = rep.field.slice(m);
        auto N = operators::eval_infOP(spec, g, slice, g.time(m), params.threads);
        barrier(m, h);
        for (int i = 0; i < g.num_nodes(); ++i) {
            auto iu = static_cast<std::size_t>(i);
            if (slice[iu] > N.values[iu] + tol) ++upper_viol;
            if (slice[iu] < h[iu] - tol) ++lower_viol;
        }
    }
    if (upper_viol > 0)
        rep.warnings.push_back("limit exceeds the upper obstacle Nv + tol at " +
                               std::to_string(upper_viol) + " node(s)");
    if (lower_viol > 0)
        rep.warnings.push_back("limit drops below the lower barrier - tol at " +
                               std::to_string(lower_viol) + " node(s)");
    rep.growth_constant = grid::fit_growth_constant(g, rep.field, spec.growth_exponent);
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

SolveReport lower_iteration(const ProblemSpec& spec, const Grid& g, const SolveParams& params) {
    auto t0 = std::chrono::steady_clock::now();
    params.validate();
    SolveReport rep;
    const double allowance = 5.0 * g.dt;

    double floor_level = never_binding_level(spec, g);
    SolveReport inner = solve_double_obstacle_frozen_upper(spec, g, params,
                                                           constant_barrier(floor_level));
    ValueField current = std::move(inner.field);
    auto merge_warnings = [&](const SolveReport& r) {
        for (const auto& w : r.warnings)
            if (std::find(rep.warnings.begin(), rep.warnings.end(), w) == rep.warnings.end())
                rep.warnings.push_back(w);
    };
    merge_warnings(inner);

    for (int k = 1; k <= params.lower_iterations; ++k) {
        ValueField barrier_field = ValueField::zeros(g);
        for (int m = 0; m <= g.nt; ++m) {
            auto M = operators::eval_supOP(spec, g, current.slice(m), g.time(m), params.threads);
            auto out = barrier_field.slice(m);
            std::copy(M.values.begin(), M.values.end(), out.begin());
        }
        SolveReport step =
            solve_double_obstacle_frozen_upper(spec, g, params, field_barrier(std::move(barrier_field)));
        merge_warnings(step);
        ++rep.iterations;
        double delta = sup_diff(step.field, current);
        double drop = max_excess(current, step.field);  // v_{k-1} - v_k, should be <= 5 dt
        rep.deltas.push_back(delta);
        rep.last_delta = delta;
        if (drop > allowance) {
            std::ostringstream os;
            os << "lower iteration lost monotonicity at k = " << k << ": v_k drops below v_{k-1} by "
               << drop << " > 5*dt = " << allowance << " (scheme inconsistency)";
            throw std::runtime_error(os.str());
        }
        if (drop > 0.0) rep.worst_monotonicity = std::max(rep.worst_monotonicity, drop);
        current = std::move(step.field);
        if (delta < params.fp_tol) {
            rep.converged = true;
            break;
        }
    }
    rep.field = std::move(current);
    rep.growth_constant = grid::fit_growth_constant(g, rep.field, spec.growth_exponent);
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

SolveReport upper_iteration(const ProblemSpec& spec, const Grid& g, const SolveParams& params) {
    auto t0 = std::chrono::steady_clock::now();
    params.validate();
    SolveReport rep;
    const double allowance = 5.0 * g.dt;
    ValueField previous;
    for (std::size_t j = 0; j < params.penalty_ladder.size(); ++j) {
        Engine engine(spec, g, params, params.penalty_ladder[j], SliceKind::UpperQvi, nullptr);
        ValueField w = engine.run(&rep.warnings);
        ++rep.iterations;
        if (j > 0) {
            double delta = sup_diff(w, previous);
            rep.deltas.push_back(delta);
            rep.last_delta = delta;
            int viol = count_excess(w, previous, allowance);  // non-increase in n
            if (viol > 0) {
                rep.monotonicity_violations += viol;
                rep.worst_monotonicity = std::max(rep.worst_monotonicity, max_excess(w, previous));
            }
            previous = std::move(w);
            if (delta < params.fp_tol) {
                rep.converged = true;
                break;
            }
        } else {
            previous = std::move(w);
        }
    }
    rep.field = std::move(previous);
    if (!rep.converged)
        rep.warnings.push_back("penalty ladder exhausted without fp_tol convergence; last delta " +
                               std::to_string(rep.last_delta));
    rep.growth_constant = grid::fit_growth_constant(g, rep.field, spec.growth_exponent);
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

ValueField solve_direct(const ProblemSpec& spec, const Grid& g, const SolveParams& params) {
    Engine engine(spec, g, params, 0.0, SliceKind::Direct, nullptr);
    return engine.run(nullptr);
}

GapReport sandwich_gap(const SolveReport& lower, const SolveReport& upper,
                       const ValueField& direct, const Grid& g, double eps_sw) {
    if (lower.field.data.size() != direct.data.size() ||
        upper.field.data.size() != direct.data.size())
        throw std::invalid_argument("sandwich_gap: fields live on different grids");
    GapReport rep;
    rep.tolerance = scheme_tolerance(g) + eps_sw;
    for (std::size_t i = 0; i < direct.data.size(); ++i) {
        double lo = lower.field.data[i], up = upper.field.data[i], d = direct.data[i];
        rep.positive_gap = std::max(rep.positive_gap, lo - up);
        rep.max_lower_minus_direct = std::max(rep.max_lower_minus_direct, lo - d);
        rep.max_direct_minus_upper = std::max(rep.max_direct_minus_upper, d - up);
        rep.max_abs_direct_lower = std::max(rep.max_abs_direct_lower, std::fabs(d - lo));
        rep.max_abs_direct_upper = std::max(rep.max_abs_direct_upper, std::fabs(d - up));
    }
    rep.positive_gap = std::max(rep.positive_gap, 0.0);
    rep.pass = rep.max_lower_minus_direct <= rep.tolerance &&
               rep.max_direct_minus_upper <= rep.tolerance;
    return rep;
}

std::string GapReport::to_text() const {
    std::ostringstream os;
    os << "sandwich gap report\n"
       << "  max (v_K - vbar)^+        : " << positive_gap << '\n'
       << "  max (v_K - direct)        : " << max_lower_minus_direct << '\n'
       << "  max (direct - vbar)       : " << max_direct_minus_upper << '\n'
       << "  max |direct - v_K|        : " << max_abs_direct_lower << '\n'
       << "  max |direct - vbar|       : " << max_abs_direct_upper << '\n'
       << "  tolerance                 : " << tolerance << '\n'
       << "  " << (pass ? "PASS" : "FAIL") << '\n';
    return os.str();
}

std::vector<std::pair<std::string, std::string>> GapReport::to_kv() const {
    auto num = [](double v) {
        std::ostringstream os;
        os << v;
        return os.str();
    };
    return {{"positive_gap", num(positive_gap)},
            {"max_lower_minus_direct", num(max_lower_minus_direct)},
            {"max_direct_minus_upper", num(max_direct_minus_upper)},
            {"max_abs_direct_lower", num(max_abs_direct_lower)},
            {"max_abs_direct_upper", num(max_abs_direct_upper)},
            {"tolerance", num(tolerance)},
            {"pass", pass ? "1" : "0"}};
}

}  // namespace qvi::solvers
