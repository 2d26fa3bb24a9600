#include "qvi/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

namespace qvi::model {

double norm(const Point& x, int dim) {
    double s = 0.0;
    for (int i = 0; i < dim; ++i) s += x[i] * x[i];
    return std::sqrt(s);
}

Point sub(const Point& a, const Point& b, int dim) {
    Point out{0.0, 0.0};
    for (int i = 0; i < dim; ++i) out[i] = a[i] - b[i];
    return out;
}

double JumpMeasure::total_mass() const {
    double s = 0.0;
    for (double w : weights) s += w;
    return s;
}

void JumpMeasure::validate() const {
    if (nodes.empty()) throw std::invalid_argument("jump measure: E must have at least one node");
    if (nodes.size() != weights.size())
        throw std::invalid_argument("jump measure: node/weight count mismatch");
    for (double w : weights)
        if (!(w > 0.0) || !std::isfinite(w))
            throw std::invalid_argument("jump measure: every lambda weight must be positive");
    if (!std::isfinite(total_mass()))
        throw std::invalid_argument("jump measure: total mass must be finite");
}

void ImpulseSpace::validate() const {
    if (nodes.empty()) throw std::invalid_argument("impulse space: U must have at least one node");
}

void NoFreeLoopParams::validate() const {
    if (!(closure_radius > 0.0)) throw std::invalid_argument("no-free-loop: h1 must be positive");
    if (!(cost_floor > 0.0)) throw std::invalid_argument("no-free-loop: h2 must be positive");
    if (max_depth < 1) throw std::invalid_argument("no-free-loop: depth cap must be >= 1");
}

Point ProblemSpec::after_impulse(double t, const Point& x, int b_index) const {
    const Point& b = impulses.nodes[static_cast<std::size_t>(b_index)];
    Point out = x;
    for (int j = 0; j < dim; ++j) out[j] = x[j] + impulse_map[static_cast<std::size_t>(j)](t, x, b);
    return out;
}

Point ProblemSpec::after_jump(double t, const Point& x, int e_index) const {
    const Point& e = jumps.nodes[static_cast<std::size_t>(e_index)];
    Point out = x;
    for (int j = 0; j < dim; ++j) out[j] = x[j] + jump_map[static_cast<std::size_t>(j)](t, x, e);
    return out;
}

double ProblemSpec::sigma2(double t, const Point& x, int i, int j) const {
    double s = 0.0;
    for (int k = 0; k < dim; ++k)
        s += diffusion[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)](t, x) *
             diffusion[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)](t, x);
    return s;
}

void ProblemSpec::validate_shape() const {
    if (dim != 1 && dim != 2) throw std::invalid_argument("spec: dimension must be 1 or 2");
    if (!(horizon > 0.0)) throw std::invalid_argument("spec: horizon T must be positive");
    if (!(cost_floor > 0.0)) throw std::invalid_argument("spec: delta must be positive");
    if (!(impulse_bound > 0.0)) throw std::invalid_argument("spec: K must be positive");
    if (growth_exponent < 1.0) throw std::invalid_argument("spec: rho must be >= 1");
    if (driver_lipschitz < 0.0) throw std::invalid_argument("spec: k_f must be >= 0");
    impulses.validate();
    jumps.validate();
    for (int j = 0; j < dim; ++j) {
        if (!drift[static_cast<std::size_t>(j)]) throw std::invalid_argument("spec: missing drift component");
        if (!impulse_map[static_cast<std::size_t>(j)]) throw std::invalid_argument("spec: missing xi component");
        if (!jump_map[static_cast<std::size_t>(j)]) throw std::invalid_argument("spec: missing gamma component");
        for (int i = 0; i < dim; ++i)
            if (!diffusion[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)])
                throw std::invalid_argument("spec: missing sigma entry");
    }
    if (!impulse_cost || !jump_cost || !driver || !terminal)
        throw std::invalid_argument("spec: missing coefficient");
}

std::vector<std::string> field_vars(int dim) {
    std::vector<std::string> vars{"t"};
    for (int i = 1; i <= dim; ++i) vars.push_back("x" + std::to_string(i));
    return vars;
}

std::vector<std::string> mark_vars(int dim, char mark) {
    std::vector<std::string> vars = field_vars(dim);
    for (int i = 1; i <= dim; ++i) vars.push_back(std::string(1, mark) + std::to_string(i));
    return vars;
}

std::vector<std::string> driver_vars(int dim, bool state_only) {
    std::vector<std::string> vars = field_vars(dim);
    if (!state_only) {
        vars.push_back("y");
        for (int i = 1; i <= dim; ++i) vars.push_back("z" + std::to_string(i));
    }
    return vars;
}

std::vector<std::string> terminal_vars(int dim) {
    std::vector<std::string> vars;
    for (int i = 1; i <= dim; ++i) vars.push_back("x" + std::to_string(i));
    return vars;
}

FieldFn make_field_fn(expr::AstPtr ast, int dim) {
    return [ast, dim](double t, const Point& x) {
        double slots[3] = {t, x[0], dim > 1 ? x[1] : 0.0};
        return expr::eval(*ast, std::span<const double>(slots, static_cast<std::size_t>(1 + dim)));
    };
}

MarkFn make_mark_fn(expr::AstPtr ast, int dim) {
    return [ast, dim](double t, const Point& x, const Point& m) {
        double slots[5];
        slots[0] = t;
        for (int i = 0; i < dim; ++i) {
            slots[1 + i] = x[static_cast<std::size_t>(i)];
            slots[1 + dim + i] = m[static_cast<std::size_t>(i)];
        }
        return expr::eval(*ast,
                          std::span<const double>(slots, static_cast<std::size_t>(1 + 2 * dim)));
    };
}

DriverFn make_driver_fn(expr::AstPtr ast, int dim, bool state_only) {
    if (state_only) {
        return [ast, dim](double t, const Point& x, double, const Point&) {
            double slots[3] = {t, x[0], dim > 1 ? x[1] : 0.0};
            return expr::eval(*ast,
                              std::span<const double>(slots, static_cast<std::size_t>(1 + dim)));
        };
    }
    return [ast, dim](double t, const Point& x, double y, const Point& z) {
        double slots[6];
        slots[0] = t;
        for (int i = 0; i < dim; ++i) slots[1 + i] = x[static_cast<std::size_t>(i)];
        slots[1 + dim] = y;
        for (int i = 0; i < dim; ++i) slots[2 + dim + i] = z[static_cast<std::size_t>(i)];
        return expr::eval(*ast,
                          std::span<const double>(slots, static_cast<std::size_t>(2 + 2 * dim)));
    };
}

TerminalFn make_terminal_fn(expr::AstPtr ast, int dim) {
    return [ast, dim](const Point& x) {
        double slots[2] = {x[0], dim > 1 ? x[1] : 0.0};
        return expr::eval(*ast, std::span<const double>(slots, static_cast<std::size_t>(dim)));
    };
}

bool ValidationReport::all_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

std::string ValidationReport::to_text() const {
    std::ostringstream os;
    os << "assumption validation (" << samples << " samples, seed " << seed << ")\n";
    for (const auto& c : checks) {
        os << "  [" << (c.pass ? "PASS" : "FAIL") << "] " << c.name << ": value=" << c.value;
        if (!c.witness.empty()) os << "  @ " << c.witness;
        os << '\n';
    }
    os << "overall: " << (all_pass() ? "PASS" : "FAIL") << '\n';
    return os.str();
}

std::vector<std::pair<std::string, std::string>> ValidationReport::to_kv() const {
    std::vector<std::pair<std::string, std::string>> kv;
    for (const auto& c : checks) {
        kv.emplace_back("check." + c.name + ".pass", c.pass ? "1" : "0");
        std::ostringstream v;
        v << c.value;
        kv.emplace_back("check." + c.name + ".value", v.str());
    }
    kv.emplace_back("overall.pass", all_pass() ? "1" : "0");
    return kv;
}

namespace {

std::string fmt_point(const Point& x, int dim) {
    std::ostringstream os;
    os << '(';
    for (int i = 0; i < dim; ++i) os << (i ? "," : "") << x[static_cast<std::size_t>(i)];
    os << ')';
    return os.str();
}

struct Sampler {
    std::mt19937_64 rng;
    std::uniform_real_distribution<double> unit{0.0, 1.0};
    double pick(double lo, double hi) { return lo + (hi - lo) * unit(rng); }
    Point point(double radius, int dim) {
        Point p{0.0, 0.0};
        for (int i = 0; i < dim; ++i) p[static_cast<std::size_t>(i)] = pick(-radius, radius);
        return p;
    }
    int index(std::size_t n) { return static_cast<int>(rng() % n); }
};

// Re-throws expression domain errors with the offending sample attached.
template <typename F>
auto with_context(const F& f, const std::string& what) -> decltype(f()) {
    try {
        return f();
    } catch (const expr::EvalError& e) {
        throw expr::EvalError(std::string(e.what()) + " while evaluating " + what);
    }
}

}  // namespace

ValidationReport validate_assumptions(const ProblemSpec& spec, int sample_count, double radius,
                                      std::uint64_t seed) {
    spec.validate_shape();
    if (sample_count < 1) throw std::invalid_argument("validate_assumptions: sample_count >= 1");
    if (radius < spec.impulse_bound)
        throw std::invalid_argument("validate_assumptions: radius must cover K_{gamma,xi}");

    ValidationReport report;
    report.seed = seed;
    report.samples = sample_count;
    Sampler s{std::mt19937_64(seed)};
    const int d = spec.dim;
    const double T = spec.horizon;
    const double tol = 1e-9;

    Check imp{"impulse_bound", true, 0.0, ""};
    Check floor{"cost_floor", true, std::numeric_limits<double>::infinity(), ""};
    Check chi_pos{"jump_cost_nonnegative", true, std::numeric_limits<double>::infinity(), ""};
    Check term{"terminal_consistency", true, 0.0, ""};
    Check lip_a{"lipschitz_a", true, 0.0, ""};
    Check lip_s{"lipschitz_sigma", true, 0.0, ""};
    Check lip_g{"lipschitz_gamma", true, 0.0, ""};
    Check lip_f{"lipschitz_f_yz", true, 0.0, ""};
    Check grow_f{"growth_f", true, 0.0, ""};
    Check grow_psi{"growth_psi", true, 0.0, ""};
    Check grow_ell{"growth_ell", true, 0.0, ""};
    Check grow_chi{"growth_chi", true, 0.0, ""};

    for (int it = 0; it < sample_count; ++it) {
        double t = s.pick(0.0, T);
        Point x = s.point(radius, d);
        int bi = s.index(spec.impulses.nodes.size());
        int ei = s.index(spec.jumps.nodes.size());
        const Point& b = spec.impulses.nodes[static_cast<std::size_t>(bi)];
        const Point& e = spec.jumps.nodes[static_cast<std::size_t>(ei)];
        std::string at = "t=" + std::to_string(t) + " x=" + fmt_point(x, d);

        // Assumption 2.i: |x+xi| v |x+gamma| <= K v |x|
        double cap = std::max(spec.impulse_bound, norm(x, d));
        Point xb = with_context([&] { return spec.after_impulse(t, x, bi); },
                                         at + " b=" + fmt_point(b, d));
        Point xe = with_context([&] { return spec.after_jump(t, x, ei); },
                                         at + " e=" + fmt_point(e, d));
        double worst = std::max(norm(xb, d), norm(xe, d)) - cap;
        if (worst > imp.value || it == 0) {
            imp.value = worst;
            imp.witness = at + " b=" + fmt_point(b, d) + " e=" + fmt_point(e, d);
        }
        if (worst > tol) imp.pass = false;

        // Assumption 3.iii: ell >= delta, chi >= 0
        double ell = with_context([&] { return spec.impulse_cost(t, x, b); },
                                           at + " b=" + fmt_point(b, d));
        if (ell < floor.value) {
            floor.value = ell;
            floor.witness = at;
        }
        if (ell < spec.cost_floor - tol) floor.pass = false;
        double chi = with_context([&] { return spec.jump_cost(t, x, e); },
                                           at + " e=" + fmt_point(e, d));
        if (chi < chi_pos.value) {
            chi_pos.value = chi;
            chi_pos.witness = at;
        }
        if (chi < -tol) chi_pos.pass = false;

        // Assumption 3.ii: sup_b {psi(x+xi(T,x,b)) - ell(T,x,b)} <= psi(x) <= inf_e {...}
        double psi_x = spec.terminal(x);
        double sup_b = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < spec.impulses.nodes.size(); ++k) {
            Point dest = spec.after_impulse(T, x, static_cast<int>(k));
            sup_b = std::max(sup_b, spec.terminal(dest) -
                                        spec.impulse_cost(T, x, spec.impulses.nodes[k]));
        }
        double inf_e = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < spec.jumps.nodes.size(); ++k) {
            Point dest = spec.after_jump(T, x, static_cast<int>(k));
            inf_e = std::min(inf_e,
                             spec.terminal(dest) + spec.jump_cost(T, x, spec.jumps.nodes[k]));
        }
        double viol = std::max(sup_b - psi_x, psi_x - inf_e);
        if (viol > term.value) {
            term.value = viol;
            term.witness = "x=" + fmt_point(x, d);
        }
        if (viol > tol) term.pass = false;

        // Empirical Lipschitz quotients (reported, not thresholded except f).
        Point x2 = s.point(radius, d);
        double h = norm(sub(x2, x, d), d);
        if (h > 1e-10) {
            double da = 0.0, ds = 0.0, dg = 0.0;
            for (int j = 0; j < d; ++j) {
                da += std::fabs(spec.drift[static_cast<std::size_t>(j)](t, x2) -
                                spec.drift[static_cast<std::size_t>(j)](t, x));
                dg += std::fabs(spec.jump_map[static_cast<std::size_t>(j)](t, x2, e) -
                                spec.jump_map[static_cast<std::size_t>(j)](t, x, e));
                for (int i = 0; i < d; ++i)
                    ds += std::fabs(
                        spec.diffusion[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)](t, x2) -
                        spec.diffusion[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)](t, x));
            }
            if (da / h > lip_a.value) { lip_a.value = da / h; lip_a.witness = at; }
            if (ds / h > lip_s.value) { lip_s.value = ds / h; lip_s.witness = at; }
            if (dg / h > lip_g.value) { lip_g.value = dg / h; lip_g.witness = at; }
        }
        if (!spec.state_only) {
            double y1 = s.pick(-3.0, 3.0), y2 = s.pick(-3.0, 3.0);
            Point z1 = s.point(3.0, d), z2 = s.point(3.0, d);
            double dyz = std::fabs(y1 - y2) + norm(sub(z1, z2, d), d);
            if (dyz > 1e-10) {
                double df = std::fabs(spec.driver(t, x, y1, z1) - spec.driver(t, x, y2, z2));
                if (df / dyz > lip_f.value) {
                    lip_f.value = df / dyz;
                    lip_f.witness = at;
                }
            }
        }

        // Polynomial growth fits: C = max |phi| / (1 + |x|^rho).
        double denom = 1.0 + std::pow(norm(x, d), spec.growth_exponent);
        double f0 = spec.driver(t, x, 0.0, Point{0.0, 0.0});
        grow_f.value = std::max(grow_f.value, std::fabs(f0) / denom);
        grow_psi.value = std::max(grow_psi.value, std::fabs(psi_x) / denom);
        grow_ell.value = std::max(grow_ell.value, std::fabs(ell) / denom);
        grow_chi.value = std::max(grow_chi.value, std::fabs(chi) / denom);
    }

    lip_f.pass = spec.state_only || lip_f.value <= spec.driver_lipschitz + 1e-6;
    for (Check* g : {&grow_f, &grow_psi, &grow_ell, &grow_chi})
        g->pass = std::isfinite(g->value);

    report.checks = {imp,   floor, chi_pos, term,     lip_a,    lip_s,
                     lip_g, lip_f, grow_f,  grow_psi, grow_ell, grow_chi};
    return report;
}

double estimate_impulse_bound(const ProblemSpec& spec, int sample_count, std::uint64_t seed) {
    Sampler s{std::mt19937_64(seed)};
    const int d = spec.dim;
    double K = 0.0;
    for (int round = 0; round < 8; ++round) {
        Sampler inner{std::mt19937_64(seed + static_cast<std::uint64_t>(round))};
        double next = K;
        for (int it = 0; it < sample_count; ++it) {
            double t = inner.pick(0.0, spec.horizon);
            Point x = inner.point(std::max(K, 1e-6), d);
            for (std::size_t bi = 0; bi < spec.impulses.nodes.size(); ++bi)
                next = std::max(next, norm(spec.after_impulse(t, x, static_cast<int>(bi)), d));
            for (std::size_t ei = 0; ei < spec.jumps.nodes.size(); ++ei)
                next = std::max(next, norm(spec.after_jump(t, x, static_cast<int>(ei)), d));
        }
        if (next <= K * (1.0 + 1e-12)) return next;
        K = next;
    }
    return K;
}

std::string LoopViolation::to_text() const {
    std::ostringstream os;
    os << "sequence";
    for (const auto& [player, idx] : actions)
        os << ' ' << (player == 1 ? 'b' : 'e') << '[' << idx << ']';
    os << " -> dist " << end_distance << ", |cost| " << std::fabs(cost_sum);
    return os.str();
}

std::string LoopReport::to_text() const {
    std::ostringstream os;
    os << "no-free-loop scan: " << sequences_scanned << " sequences";
    if (budget_exceeded) os << " (budget exceeded, partial coverage)";
    os << '\n';
    if (any_near_loop) os << "  smallest near-loop |cost|: " << min_near_loop_cost << '\n';
    if (violations.empty()) {
        os << "  no violations\n";
    } else {
        os << "  " << violations.size() << " violation(s):\n";
        for (const auto& v : violations) os << "    " << v.to_text() << '\n';
    }
    return os.str();
}

std::vector<std::pair<std::string, std::string>> LoopReport::to_kv() const {
    std::vector<std::pair<std::string, std::string>> kv;
    kv.emplace_back("scanned", std::to_string(sequences_scanned));
    kv.emplace_back("violations", std::to_string(violations.size()));
    kv.emplace_back("budget_exceeded", budget_exceeded ? "1" : "0");
    std::ostringstream v;
    v << min_near_loop_cost;
    kv.emplace_back("min_near_loop_cost", any_near_loop ? v.str() : "none");
    kv.emplace_back("pass", pass() ? "1" : "0");
    return kv;
}

namespace {

struct LoopScanner {
    const ProblemSpec& spec;
    const NoFreeLoopParams& params;
    double t;
    Point x0;
    LoopReport report;
    std::vector<std::pair<int, int>> actions;

    void dfs(const Point& x, double cost, int depth) {
        if (depth >= params.max_depth) return;
        const std::size_t q = spec.impulses.nodes.size();
        const std::size_t m = spec.jumps.nodes.size();
        for (std::size_t k = 0; k < q + m; ++k) {
            if (report.sequences_scanned >= params.budget) {
                report.budget_exceeded = true;
                return;
            }
            ++report.sequences_scanned;
            Point next;
            double step_cost;
            if (k < q) {
                int bi = static_cast<int>(k);
                next = spec.after_impulse(t, x, bi);
                step_cost = spec.impulse_cost(t, x, spec.impulses.nodes[k]);
                actions.emplace_back(1, bi);
            } else {
                int ei = static_cast<int>(k - q);
                next = spec.after_jump(t, x, ei);
                step_cost = -spec.jump_cost(t, x, spec.jumps.nodes[k - q]);
                actions.emplace_back(2, ei);
            }
            double total = cost + step_cost;
            double dist = norm(sub(next, x0, spec.dim), spec.dim);
            if (dist <= params.closure_radius) {
                report.any_near_loop = true;
                report.min_near_loop_cost = std::min(report.min_near_loop_cost, std::fabs(total));
                if (std::fabs(total) < params.cost_floor)
                    report.violations.push_back({actions, total, dist});
            }
            dfs(next, total, depth + 1);
            actions.pop_back();
        }
    }
};

}  // namespace

LoopReport no_free_loop_scan(const ProblemSpec& spec, const NoFreeLoopParams& params, double t,
                             const Point& x0) {
    spec.validate_shape();
    params.validate();
    LoopScanner scanner{spec, params, t, x0, {}, {}};
    scanner.report.min_near_loop_cost = std::numeric_limits<double>::infinity();
    scanner.dfs(x0, 0.0, 0);
    if (!scanner.report.any_near_loop) scanner.report.min_near_loop_cost = 0.0;
    return scanner.report;
}

}  // namespace qvi::model
