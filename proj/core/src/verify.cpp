#include "qvi/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "qvi/operators.hpp"
#include "qvi/parallel.hpp"

namespace qvi::verify {

using model::Point;

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

// PDE residual of one slice against its successor, following the stepping
// convention: explicit reads L and f from slice m+1 at t_{m+1}; implicit
// reads them from slice m at t_m.
std::vector<double> pde_residual_slice(const ValueField& field, const ProblemSpec& spec,
                                       const Grid& g, int m, StepMode mode, int threads) {
    const int n = g.num_nodes();
    std::vector<double> out(static_cast<std::size_t>(n));
    const int src = mode == StepMode::Explicit ? m + 1 : m;
    const double t = g.time(src);
    auto data = field.slice(src);
    grid::StencilSlice st = grid::build_stencil(spec, g, t);
    std::vector<double> Lv(static_cast<std::size_t>(n));
    grid::apply_stencil(st, data, Lv);
    std::vector<Point> grad;
    if (!spec.state_only) grad = grid::upwind_gradient(spec, g, data, t);
    auto cur = field.slice(m);
    auto next = field.slice(m + 1);
    parallel_for(n, threads, [&](int i) {
        auto iu = static_cast<std::size_t>(i);
        Point x = g.node(i);
        Point z{0.0, 0.0};
        if (!spec.state_only)
            for (int r = 0; r < g.dim; ++r)
                for (int c = 0; c < g.dim; ++c)
                    z[static_cast<std::size_t>(r)] +=
                        spec.diffusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(r)](t, x) *
                        grad[iu][static_cast<std::size_t>(c)];
        double f = spec.driver(t, x, data[iu], z);
        out[iu] = -(next[iu] - cur[iu]) / g.dt - Lv[iu] - f;
    });
    return out;
}

ValueField add_perturbation(const ValueField& field, const ProblemSpec& spec, const Grid& g,
                            double theta, double varpi, double varrho) {
    ValueField w = field;
    const double power = 2.0 * varrho + 2.0;
    for (int m = 0; m <= g.nt; ++m) {
        double decay = theta * std::exp(-varpi * g.time(m));
        for (int i = 0; i < g.num_nodes(); ++i) {
            double excess = std::max(model::norm(g.node(i), g.dim) - spec.impulse_bound, 0.0);
            w.at(m, i) += decay * (1.0 + std::pow(excess, power));
        }
    }
    return w;
}

}  // namespace

ResidualReport viscosity_residual(const ValueField& field, const ProblemSpec& spec, const Grid& g,
                                  StepMode mode, int threads) {
    if (!field.all_finite()) throw std::invalid_argument("viscosity_residual: non-finite field");
    ResidualReport rep;
    rep.residual = ValueField::zeros(g);
    rep.min_value = std::numeric_limits<double>::infinity();
    rep.max_value = -std::numeric_limits<double>::infinity();
    const int n = g.num_nodes();

    for (int m = 0; m < g.nt; ++m) {
        auto slice = field.slice(m);
        double t = g.time(m);
        auto M = operators::eval_supOP(spec, g, slice, t, threads);
        auto N = operators::eval_infOP(spec, g, slice, t, threads);
        auto pde = pde_residual_slice(field, spec, g, m, mode, threads);
        for (int i = 0; i < n; ++i) {
            auto iu = static_cast<std::size_t>(i);
            double r = std::min(slice[iu] - M.values[iu],
                                std::max(slice[iu] - N.values[iu], pde[iu]));
            rep.residual.at(m, i) = r;
            double a = std::fabs(r);
            if (a > rep.sup_norm) {
                rep.sup_norm = a;
                rep.worst_m = m;
                rep.worst_i = i;
            }
            rep.l1_norm += a;
            rep.min_value = std::min(rep.min_value, r);
            rep.max_value = std::max(rep.max_value, r);
        }
    }
    rep.l1_norm *= g.dt * std::pow(g.dx, g.dim);
    for (int i = 0; i < n; ++i)
        rep.terminal_sup =
            std::max(rep.terminal_sup, std::fabs(field.at(g.nt, i) - spec.terminal(g.node(i))));
    return rep;
}

void PerturbParams::validate() const {
    if (!(theta >= 0.0)) throw std::invalid_argument("perturbation: theta must be >= 0");
    if (growth_exp < 1.0) throw std::invalid_argument("perturbation: varrho must be >= 1");
    if (varpi_grid.empty()) throw std::invalid_argument("perturbation: empty varpi grid");
    for (double v : varpi_grid)
        if (!(v > 0.0)) throw std::invalid_argument("perturbation: varpi must be positive");
}

CheckReport perturbation_supersolution_check(const ValueField& field, const ProblemSpec& spec,
                                             const Grid& g, const PerturbParams& params,
                                             StepMode mode) {
    params.validate();
    CheckReport rep;
    rep.name = "perturbation_supersolution";
    rep.tolerance = solvers::scheme_tolerance(g);
    auto base = viscosity_residual(field, spec, g, mode);
    rep.details.emplace_back("input_min_residual", base.min_value);
    double varpi0 = std::numeric_limits<double>::infinity();
    for (double varpi : params.varpi_grid) {
        ValueField w = add_perturbation(field, spec, g, params.theta, varpi, params.growth_exp);
        auto res = viscosity_residual(w, spec, g, mode);
        rep.details.emplace_back("min_residual@varpi=" + fmt(varpi), res.min_value);
        if (res.min_value >= -rep.tolerance) varpi0 = std::min(varpi0, varpi);
    }
    rep.value = varpi0;
    rep.pass = std::isfinite(varpi0);
    rep.note = rep.pass ? "empirical varpi_0 = " + fmt(varpi0)
                        : "no varpi in the grid kept the field supersolution-sided";
    return rep;
}

ProblemSpec exponential_transform(const ProblemSpec& spec, double kappa) {
    ProblemSpec out = spec;
    const double T = spec.horizon;
    auto scale_mark = [kappa](const model::MarkFn& fn) {
        return [kappa, fn](double t, const Point& x, const Point& m) {
            return std::exp(kappa * t) * fn(t, x, m);
        };
    };
    out.impulse_cost = scale_mark(spec.impulse_cost);
    out.jump_cost = scale_mark(spec.jump_cost);
    model::TerminalFn base_terminal = spec.terminal;
    out.terminal = [kappa, T, base_terminal](const Point& x) {
        return std::exp(kappa * T) * base_terminal(x);
    };
    model::DriverFn base_driver = spec.driver;
    out.driver = [kappa, base_driver](double t, const Point& x, double y, const Point& z) {
        double down = std::exp(-kappa * t);
        Point zs{z[0] * down, z[1] * down};
        return -kappa * y + std::exp(kappa * t) * base_driver(t, x, y * down, zs);
    };
    out.state_only = spec.state_only && kappa == 0.0;
    out.driver_lipschitz = spec.driver_lipschitz + std::fabs(kappa);
    out.cost_floor = spec.cost_floor * std::min(1.0, std::exp(kappa * T));
    return out;
}

CheckReport exponential_scaling_check(const ProblemSpec& spec, const Grid& g,
                                      const SolveParams& params, double kappa) {
    CheckReport rep;
    rep.name = "exponential_scaling(kappa=" + fmt(kappa) + ")";
    rep.tolerance = solvers::scheme_tolerance(g) * std::exp(std::fabs(kappa) * spec.horizon);
    ProblemSpec scaled = exponential_transform(spec, kappa);
    try {
        scaled.validate_shape();
    } catch (const std::exception& e) {
        rep.pass = false;
        rep.note = std::string("transformed spec failed validation: ") + e.what();
        return rep;
    }
    ValueField v = solvers::solve_direct(spec, g, params);
    ValueField vcheck = solvers::solve_direct(scaled, g, params);
    double worst = 0.0;
    for (int m = 0; m <= g.nt; ++m) {
        double down = std::exp(-kappa * g.time(m));
        for (int i = 0; i < g.num_nodes(); ++i)
            worst = std::max(worst, std::fabs(down * vcheck.at(m, i) - v.at(m, i)));
    }
    rep.value = worst;
    rep.pass = worst <= rep.tolerance;
    rep.details.emplace_back("sup_error", worst);
    return rep;
}

CheckReport comparison_check(const ValueField& sub, const ValueField& super,
                             const ProblemSpec& spec, const Grid& g, StepMode mode) {
    CheckReport rep;
    rep.name = "comparison";
    rep.tolerance = solvers::scheme_tolerance(g);
    auto rsub = viscosity_residual(sub, spec, g, mode);
    auto rsuper = viscosity_residual(super, spec, g, mode);
    if (rsub.max_value > rep.tolerance) {
        std::ostringstream os;
        os << "comparison_check: sub input is not a numerical subsolution (max residual "
           << rsub.max_value << " > " << rep.tolerance << ")";
        throw std::invalid_argument(os.str());
    }
    if (rsuper.min_value < -rep.tolerance) {
        std::ostringstream os;
        os << "comparison_check: super input is not a numerical supersolution (min residual "
           << rsuper.min_value << " < -" << rep.tolerance << ")";
        throw std::invalid_argument(os.str());
    }
    // the terminal slice participates in the nodewise comparison below, so a
    // violated terminal ordering surfaces as FAIL rather than refusal

    double worst = -std::numeric_limits<double>::infinity();
    int worst_m = 0, worst_i = 0, violations = 0;
    for (int m = 0; m <= g.nt; ++m)
        for (int i = 0; i < g.num_nodes(); ++i) {
            double excess = sub.at(m, i) - super.at(m, i);
            if (excess > worst) {
                worst = excess;
                worst_m = m;
                worst_i = i;
            }
            if (excess > rep.tolerance) ++violations;
        }
    rep.value = worst;
    rep.pass = worst <= rep.tolerance;
    rep.details.emplace_back("worst_excess", worst);
    rep.details.emplace_back("violating_nodes", violations);
    std::ostringstream os;
    os << "worst node: slice " << worst_m << ", node " << worst_i;
    rep.note = os.str();
    return rep;
}

std::string ResidualReport::to_text() const {
    std::ostringstream os;
    os << "QVI residual: sup " << sup_norm << ", L1 " << l1_norm << ", worst at (slice "
       << worst_m << ", node " << worst_i << "), one-sided [" << min_value << ", " << max_value
       << "], terminal sup " << terminal_sup << '\n';
    return os.str();
}

std::vector<std::pair<std::string, std::string>> ResidualReport::to_kv() const {
    return {{"sup_norm", fmt(sup_norm)},       {"l1_norm", fmt(l1_norm)},
            {"worst_m", std::to_string(worst_m)}, {"worst_i", std::to_string(worst_i)},
            {"min_value", fmt(min_value)},     {"max_value", fmt(max_value)},
            {"terminal_sup", fmt(terminal_sup)}};
}

std::string CheckReport::to_text() const {
    std::ostringstream os;
    os << name << ": " << (pass ? "PASS" : "FAIL") << " (value " << value << ", tolerance "
       << tolerance << ")";
    if (!note.empty()) os << " - " << note;
    os << '\n';
    for (const auto& [k, v] : details) os << "    " << k << " = " << v << '\n';
    return os.str();
}

std::vector<std::pair<std::string, std::string>> CheckReport::to_kv() const {
    std::vector<std::pair<std::string, std::string>> kv;
    kv.emplace_back(name + ".pass", pass ? "1" : "0");
    kv.emplace_back(name + ".value", fmt(value));
    kv.emplace_back(name + ".tolerance", fmt(tolerance));
    for (const auto& [k, v] : details) kv.emplace_back(name + "." + k, fmt(v));
    return kv;
}

}  // namespace qvi::verify
