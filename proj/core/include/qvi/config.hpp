#ifndef QVI_CONFIG_HPP
#define QVI_CONFIG_HPP

// Sectioned key = value configuration: "[section]" headers, "#" comments,
// expressions in double quotes. Unknown sections and keys are rejected with
// the byte offset (typo guard).

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qvi/grid.hpp"
#include "qvi/model.hpp"
#include "qvi/solvers.hpp"
#include "qvi/verify.hpp"

namespace qvi::config {

class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& msg, std::size_t offset)
        : std::runtime_error(msg), offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

struct ProblemSection {
    int d = 1;
    double T = 1.0;
    std::vector<std::string> a;                   // d drift expressions
    std::vector<std::vector<std::string>> sigma;  // d x d
    std::vector<std::string> xi;                  // d
    std::string ell;
    std::vector<std::string> gamma;  // d
    std::string chi;
    std::string f;
    std::string psi;
    bool state_only = true;
    double delta = 1e-3;
    std::optional<double> K;  // declared impulse bound wins over the estimate
    double rho = 1.0;
    double k_f = 0.0;
};

struct SpacesSection {
    std::vector<model::Point> U;
    std::vector<model::Point> E;
    std::vector<double> lambda;
};

struct GridSection {
    double R = 1.0;
    int nx = 3;
    int nt = 3;
};

struct SolverSection {
    solvers::SolveParams params;  // mode, sweep, ladder, tolerances, K, projection
    std::optional<int> ladder_cap;  // J: truncates the ladder when present
};

struct SimulateSection {
    int paths = 10000;
    double dt_sim = 0.0;  // required by the simulate command
    std::uint64_t seed = 12345;
    double t0 = 0.0;
    model::Point x0{0.0, 0.0};
};

struct VerifySection {
    double theta = 0.5;
    std::vector<double> varpi = {0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0};
    double varrho = 2.0;
    double kappa = 1.0;
    double h1 = 0.1;
    double h2 = 0.1;
    int kappa_max = 4;
    int samples = 2000;  // assumption-validation sample count
};

struct RunConfig {
    ProblemSection problem;
    SpacesSection spaces;
    GridSection grid;
    SolverSection solver;
    SimulateSection simulate;
    VerifySection verify;
    std::string raw;
    std::string hash;  // FNV-1a of the raw bytes
    std::string stem;  // config filename stem, names the output directory
};

RunConfig parse_config(const std::string& text, const std::string& stem);
RunConfig load_config(const std::string& path);

/// Compiles the coefficient expressions and assembles the ProblemSpec;
/// estimates K_{gamma,xi} when the config does not declare it.
model::ProblemSpec build_problem(const RunConfig& cfg);

grid::Grid build_grid(const RunConfig& cfg, const model::ProblemSpec& spec);

solvers::SolveParams solver_params(const RunConfig& cfg, int threads);

verify::PerturbParams perturb_params(const RunConfig& cfg);

model::NoFreeLoopParams no_free_loop_params(const RunConfig& cfg);

}  // namespace qvi::config

#endif
