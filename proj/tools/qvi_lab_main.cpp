// qvi-lab: command-line laboratory for double-obstacle quasi-variational
// inequalities. Subcommands map onto the library pipeline: validate the
// model assumptions, solve the QVI three ways, extract strategies, simulate
// the controlled jump-diffusion, and run the verification suite.
//
// Exit codes: 0 on success/PASS, 2 when a check fails, 1 on errors.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "qvi/config.hpp"
#include "qvi/io.hpp"
#include "qvi/simulate.hpp"
#include "qvi/solvers.hpp"
#include "qvi/strategy.hpp"
#include "qvi/verify.hpp"

namespace {

namespace fs = std::filesystem;
using namespace qvi;

struct Context {
    config::RunConfig cfg;
    model::ProblemSpec spec;
    grid::Grid grid;
    solvers::SolveParams params;
    fs::path outdir;
    std::string header;
    int threads = 1;
};

Context make_context(const std::string& config_path, const std::string& out_override,
                     int threads, bool needs_grid = true) {
    Context ctx;
    ctx.cfg = config::load_config(config_path);
    ctx.spec = config::build_problem(ctx.cfg);
    if (needs_grid) ctx.grid = config::build_grid(ctx.cfg, ctx.spec);
    ctx.params = config::solver_params(ctx.cfg, threads);
    ctx.threads = threads;
    if (!out_override.empty()) {
        ctx.outdir = out_override;
    } else {
        const char* env_root = std::getenv("QVI_LAB_OUT");
        fs::path root = env_root && *env_root ? fs::path(env_root) : fs::path("out");
        ctx.outdir = root / ctx.cfg.stem;
    }
    fs::create_directories(ctx.outdir);
    ctx.header = io::artifact_header(ctx.cfg.hash);
    return ctx;
}

std::vector<std::pair<std::string, std::string>> solve_report_kv(
    const solvers::SolveReport& rep) {
    auto num = [](double v) { return io::format_double(v); };
    std::vector<std::pair<std::string, std::string>> kv{
        {"iterations", std::to_string(rep.iterations)},
        {"converged", rep.converged ? "1" : "0"},
        {"last_delta", num(rep.last_delta)},
        {"monotonicity_violations", std::to_string(rep.monotonicity_violations)},
        {"worst_monotonicity", num(rep.worst_monotonicity)},
        {"growth_constant", num(rep.growth_constant)},
        {"warnings", std::to_string(rep.warnings.size())}};
    return kv;
}

void print_solve_summary(const char* name, const solvers::SolveReport& rep) {
    std::cout << name << ": " << rep.iterations << " iteration(s), "
              << (rep.converged ? "converged" : "ladder/iteration cap reached") << ", last delta "
              << rep.last_delta << ", wall " << rep.wall_seconds << " s\n";
    for (const auto& w : rep.warnings) std::cout << "  warning: " << w << '\n';
}

int cmd_validate(Context& ctx) {
    auto report = model::validate_assumptions(ctx.spec, ctx.cfg.verify.samples, ctx.cfg.grid.R,
                                              ctx.cfg.simulate.seed);
    std::cout << report.to_text();
    io::write_text_file(ctx.outdir / "validation.txt", ctx.header + report.to_text());
    io::write_kv_file(ctx.outdir / "validation.kv", ctx.header, report.to_kv());
    return report.all_pass() ? 0 : 2;
}

int cmd_solve(Context& ctx) {
    auto field = solvers::solve_direct(ctx.spec, ctx.grid, ctx.params);
    io::write_field_csv(ctx.outdir / "field_direct.csv", ctx.header, ctx.grid, field);
    io::write_obstacles_csv(ctx.outdir / "obstacles_direct.csv", ctx.header, ctx.spec, ctx.grid,
                            field, ctx.threads);
    auto residual = verify::viscosity_residual(field, ctx.spec, ctx.grid, ctx.params.mode,
                                               ctx.threads);
    io::write_field_csv(ctx.outdir / "residual_direct.csv", ctx.header, ctx.grid,
                        residual.residual);
    io::write_kv_file(ctx.outdir / "residual_direct.kv", ctx.header, residual.to_kv());
    std::cout << residual.to_text();
    std::cout << "value at (t0,x0): "
              << grid::interpolate(ctx.grid,
                                   field.slice(ctx.grid.nearest_time(ctx.cfg.simulate.t0)),
                                   ctx.cfg.simulate.x0)
              << '\n';
    return 0;
}

int cmd_bound(Context& ctx, bool lower) {
    solvers::SolveReport rep = lower ? solvers::lower_iteration(ctx.spec, ctx.grid, ctx.params)
                                     : solvers::upper_iteration(ctx.spec, ctx.grid, ctx.params);
    const char* tag = lower ? "lower" : "upper";
    print_solve_summary(tag, rep);
    io::write_field_csv(ctx.outdir / (std::string("field_") + tag + ".csv"), ctx.header,
                        ctx.grid, rep.field);
    io::write_deltas_csv(ctx.outdir / (std::string(tag) + "_deltas.csv"), ctx.header, rep.deltas);
    io::write_kv_file(ctx.outdir / (std::string(tag) + "_report.kv"), ctx.header,
                      solve_report_kv(rep));
    return 0;
}

int cmd_sandwich(Context& ctx) {
    auto lower = solvers::lower_iteration(ctx.spec, ctx.grid, ctx.params);
    print_solve_summary("lower", lower);
    auto upper = solvers::upper_iteration(ctx.spec, ctx.grid, ctx.params);
    print_solve_summary("upper", upper);
    auto direct = solvers::solve_direct(ctx.spec, ctx.grid, ctx.params);
    auto gap = solvers::sandwich_gap(lower, upper, direct, ctx.grid, ctx.params.sandwich_tol);
    std::cout << gap.to_text();
    io::write_field_csv(ctx.outdir / "field_lower.csv", ctx.header, ctx.grid, lower.field);
    io::write_field_csv(ctx.outdir / "field_upper.csv", ctx.header, ctx.grid, upper.field);
    io::write_field_csv(ctx.outdir / "field_direct.csv", ctx.header, ctx.grid, direct);
    io::write_deltas_csv(ctx.outdir / "lower_deltas.csv", ctx.header, lower.deltas);
    io::write_deltas_csv(ctx.outdir / "upper_deltas.csv", ctx.header, upper.deltas);
    io::write_text_file(ctx.outdir / "gap.txt", ctx.header + gap.to_text());
    io::write_kv_file(ctx.outdir / "gap.kv", ctx.header, gap.to_kv());
    return gap.pass ? 0 : 2;
}

int cmd_extract(Context& ctx) {
    auto field = solvers::solve_direct(ctx.spec, ctx.grid, ctx.params);
    double eps_act = solvers::scheme_tolerance(ctx.grid);
    auto policy = strategy::extract_impulse_policy(field, ctx.spec, ctx.grid, eps_act,
                                                   ctx.threads);
    double level = ctx.params.penalty_ladder.back();
    auto density =
        strategy::extract_randomization_density(field, ctx.spec, ctx.grid, level, ctx.threads);
    auto regions = strategy::action_region_report(policy, density, ctx.grid);
    std::cout << regions.to_text();
    for (const auto& d : policy.chain_diagnostics) std::cout << "  diagnostic: " << d << '\n';
    io::write_policy_csv(ctx.outdir / "policy.csv", ctx.header, policy, ctx.grid);
    io::write_density_csv(ctx.outdir / "density.csv", ctx.header, density, ctx.grid);
    io::write_regions_csv(ctx.outdir / "regions.csv", ctx.header, regions);
    io::write_kv_file(ctx.outdir / "regions.kv", ctx.header, regions.to_kv());
    return 0;
}

int cmd_simulate(Context& ctx, int dump_paths) {
    if (!(ctx.cfg.simulate.dt_sim > 0.0))
        throw std::runtime_error("[simulate] dt_sim is required for the simulate command");
    auto field = solvers::solve_direct(ctx.spec, ctx.grid, ctx.params);
    double eps_act = solvers::scheme_tolerance(ctx.grid);
    auto policy = strategy::extract_impulse_policy(field, ctx.spec, ctx.grid, eps_act,
                                                   ctx.threads);
    double level = ctx.params.penalty_ladder.back();
    auto density =
        strategy::extract_randomization_density(field, ctx.spec, ctx.grid, level, ctx.threads);
    int m0 = ctx.grid.nearest_time(ctx.cfg.simulate.t0);
    double target = grid::interpolate(ctx.grid, field.slice(m0), ctx.cfg.simulate.x0);
    auto rep = simulate::estimate_game_value(ctx.spec, ctx.grid, policy, density,
                                             ctx.cfg.simulate.t0, ctx.cfg.simulate.x0,
                                             ctx.cfg.simulate.paths, ctx.cfg.simulate.dt_sim,
                                             ctx.cfg.simulate.seed, target, ctx.threads);
    std::cout << rep.to_text();
    io::write_text_file(ctx.outdir / "mc.txt", ctx.header + rep.to_text());
    io::write_kv_file(ctx.outdir / "mc.kv", ctx.header, rep.to_kv());
    if (dump_paths > 0) {
        std::vector<simulate::PathRecord> records;
        int n = std::min(dump_paths, ctx.cfg.simulate.paths);
        records.reserve(static_cast<std::size_t>(n));
        for (int p = 0; p < n; ++p)
            records.push_back(simulate::simulate_path(
                ctx.spec, ctx.grid, policy, density, ctx.cfg.simulate.t0, ctx.cfg.simulate.x0,
                ctx.cfg.simulate.dt_sim, simulate::path_seed(ctx.cfg.simulate.seed, p)));
        io::write_paths_csv(ctx.outdir / "paths.csv", ctx.header, ctx.spec, records);
    }
    return rep.pass ? 0 : 2;
}

int cmd_verify(Context& ctx) {
    bool all_pass = true;
    std::ostringstream text;
    std::vector<std::pair<std::string, std::string>> kv;
    auto absorb = [&](const verify::CheckReport& rep) {
        all_pass = all_pass && rep.pass;
        text << rep.to_text();
        for (auto& e : rep.to_kv()) kv.push_back(e);
    };

    auto direct = solvers::solve_direct(ctx.spec, ctx.grid, ctx.params);
    auto residual = verify::viscosity_residual(direct, ctx.spec, ctx.grid, ctx.params.mode,
                                               ctx.threads);
    double tol = solvers::scheme_tolerance(ctx.grid);
    verify::CheckReport res_check;
    res_check.name = "residual_direct";
    res_check.value = residual.sup_norm;
    res_check.tolerance = tol;
    res_check.pass = residual.sup_norm <= tol && residual.terminal_sup == 0.0;
    res_check.details.emplace_back("terminal_sup", residual.terminal_sup);
    absorb(res_check);
    io::write_field_csv(ctx.outdir / "residual_direct.csv", ctx.header, ctx.grid,
                        residual.residual);

    auto lower = solvers::lower_iteration(ctx.spec, ctx.grid, ctx.params);
    auto upper = solvers::upper_iteration(ctx.spec, ctx.grid, ctx.params);
    absorb(verify::comparison_check(lower.field, upper.field, ctx.spec, ctx.grid,
                                    ctx.params.mode));
    absorb(verify::perturbation_supersolution_check(upper.field, ctx.spec, ctx.grid,
                                                    config::perturb_params(ctx.cfg),
                                                    ctx.params.mode));
    for (double kappa : {-ctx.cfg.verify.kappa, 0.0, ctx.cfg.verify.kappa})
        absorb(verify::exponential_scaling_check(ctx.spec, ctx.grid, ctx.params, kappa));

    auto loops = model::no_free_loop_scan(ctx.spec, config::no_free_loop_params(ctx.cfg),
                                          ctx.cfg.simulate.t0, ctx.cfg.simulate.x0);
    all_pass = all_pass && loops.pass();
    text << loops.to_text();
    for (auto& e : loops.to_kv()) kv.emplace_back("no_free_loop." + e.first, e.second);

    std::cout << text.str();
    std::cout << "verify: " << (all_pass ? "PASS" : "FAIL") << '\n';
    kv.emplace_back("verify.pass", all_pass ? "1" : "0");
    io::write_text_file(ctx.outdir / "verify.txt", ctx.header + text.str());
    io::write_kv_file(ctx.outdir / "verify.kv", ctx.header, kv);
    return all_pass ? 0 : 2;
}

int cmd_export(Context& ctx) {
    auto field = solvers::solve_direct(ctx.spec, ctx.grid, ctx.params);
    io::write_field_csv(ctx.outdir / "field_direct.csv", ctx.header, ctx.grid, field);
    io::write_obstacles_csv(ctx.outdir / "obstacles_direct.csv", ctx.header, ctx.spec, ctx.grid,
                            field, ctx.threads);
    double eps_act = solvers::scheme_tolerance(ctx.grid);
    auto policy = strategy::extract_impulse_policy(field, ctx.spec, ctx.grid, eps_act,
                                                   ctx.threads);
    auto density = strategy::extract_randomization_density(field, ctx.spec, ctx.grid,
                                                           ctx.params.penalty_ladder.back(),
                                                           ctx.threads);
    io::write_policy_csv(ctx.outdir / "policy.csv", ctx.header, policy, ctx.grid);
    io::write_density_csv(ctx.outdir / "density.csv", ctx.header, density, ctx.grid);
    io::write_regions_csv(ctx.outdir / "regions.csv", ctx.header,
                          strategy::action_region_report(policy, density, ctx.grid));
    std::cout << "exported field, obstacles, policy, density, regions to " << ctx.outdir
              << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"qvi-lab: a numerical laboratory for double-obstacle QVIs"};
    app.require_subcommand(1);

    std::string config_path, out_override;
    int threads = 1;
    int dump_paths = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("config", config_path, "sectioned key=value config file")
            ->required()
            ->check(CLI::ExistingFile);
        sub->add_option("--out", out_override, "output directory (default out/<config-stem>)");
        sub->add_option("--threads", threads, "worker threads inside modules")
            ->check(CLI::PositiveNumber);
        return sub;
    };

    auto* validate = add_common(app.add_subcommand("validate", "check the standing assumptions"));
    auto* solve = add_common(app.add_subcommand("solve", "direct min-max projection solve"));
    auto* blower = add_common(app.add_subcommand("bound-lower", "monotone lower iteration"));
    auto* bupper = add_common(app.add_subcommand("bound-upper", "penalized upper iteration"));
    auto* sandwich = add_common(app.add_subcommand("sandwich", "lower/upper/direct + gap report"));
    auto* extract =
        add_common(app.add_subcommand("extract-strategy", "impulse policy + randomization density"));
    auto* simulate_cmd =
        add_common(app.add_subcommand("simulate", "Monte Carlo of the controlled dynamics"));
    simulate_cmd->add_option("--dump-paths", dump_paths,
                             "write the first N simulated paths to paths.csv");
    auto* verify_cmd = add_common(app.add_subcommand("verify", "residual + appendix test suite"));
    auto* export_cmd = add_common(app.add_subcommand("export", "write all solve artifacts"));

    CLI11_PARSE(app, argc, argv);

    try {
        Context ctx = make_context(config_path, out_override, threads);
        if (validate->parsed()) return cmd_validate(ctx);
        if (solve->parsed()) return cmd_solve(ctx);
        if (blower->parsed()) return cmd_bound(ctx, true);
        if (bupper->parsed()) return cmd_bound(ctx, false);
        if (sandwich->parsed()) return cmd_sandwich(ctx);
        if (extract->parsed()) return cmd_extract(ctx);
        if (simulate_cmd->parsed()) return cmd_simulate(ctx, dump_paths);
        if (verify_cmd->parsed()) return cmd_verify(ctx);
        if (export_cmd->parsed()) return cmd_export(ctx);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
