#ifndef QVI_VERIFY_HPP
#define QVI_VERIFY_HPP

// Numerical realization of the comparison-principle machinery: discrete QVI
// residuals (same stencils and time convention as the producing scheme),
// the additive supersolution perturbation
//   w = v + theta e^{-varpi t} (1 + ((|x|-K)^+)^{2 varrho + 2}),
// the exponential time scaling v -> e^{kappa t} v with its transformed
// coefficient set, and the sub/supersolution comparison check.

#include <string>
#include <vector>

#include "qvi/solvers.hpp"

namespace qvi::verify {

using grid::Grid;
using grid::ValueField;
using model::ProblemSpec;
using solvers::SolveParams;
using solvers::StepMode;

struct ResidualReport {
    ValueField residual;  // slices 0..nt-1; terminal slice left at zero
    double sup_norm = 0.0;
    double l1_norm = 0.0;  // sum |r| dt dx^d
    int worst_m = 0;
    int worst_i = 0;
    double min_value = 0.0;  // one-sided views for sub/supersolution tests
    double max_value = 0.0;
    double terminal_sup = 0.0;  // max |v(T,.) - psi|
    std::string to_text() const;
    std::vector<std::pair<std::string, std::string>> to_kv() const;
};

/// r(t,x) = min{ v - Mv, max{ v - Nv, -D_t v - L_h v - f } } with the
/// stencils and time convention of the given stepping mode.
ResidualReport viscosity_residual(const ValueField& field, const ProblemSpec& spec, const Grid& g,
                                  StepMode mode = StepMode::Explicit, int threads = 1);

struct PerturbParams {
    double theta = 0.5;                      // theta > 0
    std::vector<double> varpi_grid = {0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0};
    double growth_exp = 2.0;                 // varrho >= 1
    void validate() const;
};

struct CheckReport {
    std::string name;
    bool pass = false;
    double value = 0.0;      // headline: empirical varpi_0, sup error, worst margin
    double tolerance = 0.0;
    std::vector<std::pair<std::string, double>> details;
    std::string note;
    std::string to_text() const;
    std::vector<std::pair<std::string, std::string>> to_kv() const;
};

/// For each varpi reports the minimal one-sided residual of the perturbed
/// field; PASS for a varpi iff it stays >= -tol. value = empirical varpi_0.
CheckReport perturbation_supersolution_check(const ValueField& field, const ProblemSpec& spec,
                                             const Grid& g, const PerturbParams& params,
                                             StepMode mode = StepMode::Explicit);

/// The coefficient set of the e^{kappa t}-scaled problem.
ProblemSpec exponential_transform(const ProblemSpec& spec, double kappa);

/// Solves the original and the scaled problem with solve_direct and compares
/// e^{-kappa t} vcheck against v; PASS within 10 (dt + dx^2) e^{|kappa| T}.
CheckReport exponential_scaling_check(const ProblemSpec& spec, const Grid& g,
                                      const SolveParams& params, double kappa);

/// Numerical comparison principle: refuses inputs that are not one-sided
/// (sub has max r <= tol, super has min r >= -tol, sub(T) <= super(T) + tol),
/// then passes iff sub <= super + tol nodewise.
CheckReport comparison_check(const ValueField& sub, const ValueField& super,
                             const ProblemSpec& spec, const Grid& g,
                             StepMode mode = StepMode::Explicit);

}  // namespace qvi::verify

#endif
