#include "qvi/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "qvi/io.hpp"

namespace qvi::config {

namespace {

struct RawEntry {
    std::string value;
    std::size_t offset = 0;
    bool used = false;
};

using Section = std::map<std::string, RawEntry>;

struct RawConfig {
    std::map<std::string, Section> sections;
    std::map<std::string, std::size_t> section_offsets;
};

[[noreturn]] void fail(const std::string& msg, std::size_t offset) {
    std::ostringstream os;
    os << msg << " (byte offset " << offset << ")";
    throw ConfigError(os.str(), offset);
}

std::string trim(std::string s) {
    auto issp = [](unsigned char c) { return std::isspace(c); };
    while (!s.empty() && issp(static_cast<unsigned char>(s.front()))) s.erase(s.begin());
    while (!s.empty() && issp(static_cast<unsigned char>(s.back()))) s.pop_back();
    return s;
}

RawConfig tokenize(const std::string& text) {
    RawConfig raw;
    static const std::set<std::string> kSections{"problem", "spaces",   "grid",
                                                 "solver",  "simulate", "verify"};
    std::string current;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        std::string line = text.substr(pos, eol - pos);
        std::size_t line_start = pos;
        pos = eol + 1;

        // strip trailing comment outside quotes
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') quoted = !quoted;
            else if (line[i] == '#' && !quoted) {
                line = line.substr(0, i);
                break;
            }
        }
        std::string t = trim(line);
        if (t.empty()) continue;
        if (t.front() == '[') {
            if (t.back() != ']') fail("unterminated section header", line_start);
            std::string name = trim(t.substr(1, t.size() - 2));
            if (!kSections.count(name)) fail("unknown section [" + name + "]", line_start);
            if (raw.sections.count(name)) fail("duplicate section [" + name + "]", line_start);
            current = name;
            raw.sections[name];
            raw.section_offsets[name] = line_start;
            continue;
        }
        if (current.empty()) fail("key before any [section] header", line_start);
        std::size_t eq = t.find('=');
        if (eq == std::string::npos) fail("expected key = value", line_start);
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty()) fail("empty key", line_start);
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
            value = value.substr(1, value.size() - 2);
        if (raw.sections[current].count(key))
            fail("duplicate key '" + key + "' in [" + current + "]", line_start);
        raw.sections[current][key] = {value, line_start, false};
    }
    return raw;
}

class Reader {
public:
    Reader(RawConfig& raw, const std::string& section) : raw_(raw), section_(section) {}

    bool has(const std::string& key) const {
        auto it = raw_.sections.find(section_);
        return it != raw_.sections.end() && it->second.count(key);
    }

    RawEntry& entry(const std::string& key) {
        auto sit = raw_.sections.find(section_);
        if (sit == raw_.sections.end() || !sit->second.count(key))
            throw ConfigError("missing required key '" + key + "' in [" + section_ + "]", 0);
        RawEntry& e = sit->second[key];
        e.used = true;
        return e;
    }

    std::string str(const std::string& key) { return entry(key).value; }

    std::string str_or(const std::string& key, const std::string& fallback) {
        return has(key) ? str(key) : fallback;
    }

    double number(const std::string& key) {
        RawEntry& e = entry(key);
        return parse_number(e.value, e.offset, key);
    }

    double number_or(const std::string& key, double fallback) {
        return has(key) ? number(key) : fallback;
    }

    long integer(const std::string& key) {
        double v = number(key);
        if (v != std::floor(v)) fail("key '" + key + "' must be an integer", entry(key).offset);
        return static_cast<long>(v);
    }

    long integer_or(const std::string& key, long fallback) {
        return has(key) ? integer(key) : fallback;
    }

    bool flag_or(const std::string& key, bool fallback) {
        if (!has(key)) return fallback;
        RawEntry& e = entry(key);
        if (e.value == "true" || e.value == "1") return true;
        if (e.value == "false" || e.value == "0") return false;
        fail("key '" + key + "' must be true/false", e.offset);
    }

    std::vector<double> numbers(const std::string& key) {
        RawEntry& e = entry(key);
        std::vector<double> out;
        std::istringstream is(e.value);
        std::string tok;
        while (is >> tok) out.push_back(parse_number(tok, e.offset, key));
        if (out.empty()) fail("key '" + key + "' needs at least one number", e.offset);
        return out;
    }

    // whitespace-separated points, components comma-separated: "-1,0 0,1"
    std::vector<model::Point> points(const std::string& key, int dim) {
        RawEntry& e = entry(key);
        std::vector<model::Point> out;
        std::istringstream is(e.value);
        std::string tok;
        while (is >> tok) {
            model::Point p{0.0, 0.0};
            std::size_t start = 0;
            for (int a = 0; a < dim; ++a) {
                std::size_t comma = tok.find(',', start);
                std::string comp = comma == std::string::npos ? tok.substr(start)
                                                              : tok.substr(start, comma - start);
                if (comp.empty()) fail("malformed point in '" + key + "'", e.offset);
                p[static_cast<std::size_t>(a)] = parse_number(comp, e.offset, key);
                if (a + 1 < dim) {
                    if (comma == std::string::npos)
                        fail("point in '" + key + "' needs " + std::to_string(dim) +
                                 " components",
                             e.offset);
                    start = comma + 1;
                }
            }
            out.push_back(p);
        }
        if (out.empty()) fail("key '" + key + "' needs at least one point", e.offset);
        return out;
    }

private:
    RawConfig& raw_;
    std::string section_;

    static double parse_number(const std::string& s, std::size_t offset,
                               const std::string& key) {
        double v = 0.0;
        auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size())
            fail("key '" + key + "': malformed number '" + s + "'", offset);
        return v;
    }
};

void reject_unused(const RawConfig& raw) {
    for (const auto& [section, entries] : raw.sections)
        for (const auto& [key, e] : entries)
            if (!e.used)
                fail("unknown key '" + key + "' in [" + section + "]", e.offset);
}

// indexed coefficient names: a / a1 a2, sigma / sigma11..sigma22, xi, gamma
std::vector<std::string> read_vector_coef(Reader& r, const std::string& base, int dim) {
    std::vector<std::string> out;
    if (dim == 1 && r.has(base)) {
        out.push_back(r.str(base));
        return out;
    }
    for (int i = 1; i <= dim; ++i) out.push_back(r.str(base + std::to_string(i)));
    return out;
}

std::vector<std::vector<std::string>> read_matrix_coef(Reader& r, const std::string& base,
                                                       int dim) {
    std::vector<std::vector<std::string>> out;
    if (dim == 1 && r.has(base)) {
        out.push_back({r.str(base)});
        return out;
    }
    for (int i = 1; i <= dim; ++i) {
        std::vector<std::string> row;
        for (int j = 1; j <= dim; ++j)
            row.push_back(r.str(base + std::to_string(i) + std::to_string(j)));
        out.push_back(row);
    }
    return out;
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::string& stem) {
    RawConfig raw = tokenize(text);
    RunConfig cfg;
    cfg.raw = text;
    cfg.hash = io::fnv1a_hex(text);
    cfg.stem = stem;

    {
        Reader r(raw, "problem");
        cfg.problem.d = static_cast<int>(r.integer("d"));
        if (cfg.problem.d != 1 && cfg.problem.d != 2)
            throw ConfigError("[problem] d must be 1 or 2", 0);
        cfg.problem.T = r.number("T");
        cfg.problem.a = read_vector_coef(r, "a", cfg.problem.d);
        cfg.problem.sigma = read_matrix_coef(r, "sigma", cfg.problem.d);
        cfg.problem.xi = read_vector_coef(r, "xi", cfg.problem.d);
        cfg.problem.ell = r.str("ell");
        cfg.problem.gamma = read_vector_coef(r, "gamma", cfg.problem.d);
        cfg.problem.chi = r.str("chi");
        cfg.problem.f = r.str("f");
        cfg.problem.psi = r.str("psi");
        cfg.problem.state_only = r.flag_or("state_only", true);
        cfg.problem.delta = r.number("delta");
        if (r.has("K")) cfg.problem.K = r.number("K");
        cfg.problem.rho = r.number("rho");
        cfg.problem.k_f = r.number_or("k_f", 0.0);
    }
    {
        Reader r(raw, "spaces");
        cfg.spaces.U = r.points("U", cfg.problem.d);
        cfg.spaces.E = r.points("E", cfg.problem.d);
        cfg.spaces.lambda = r.numbers("lambda");
    }
    {
        Reader r(raw, "grid");
        cfg.grid.R = r.number("R");
        cfg.grid.nx = static_cast<int>(r.integer("nx"));
        cfg.grid.nt = static_cast<int>(r.integer("nt"));
    }
    if (raw.sections.count("solver")) {
        Reader r(raw, "solver");
        std::string mode = r.str_or("mode", "explicit");
        if (mode == "explicit") cfg.solver.params.mode = solvers::StepMode::Explicit;
        else if (mode == "implicit-obstacle")
            cfg.solver.params.mode = solvers::StepMode::ImplicitObstacle;
        else
            throw ConfigError("[solver] mode must be explicit or implicit-obstacle", 0);
        std::string sweep = r.str_or("sweep", "jacobi");
        if (sweep == "jacobi") cfg.solver.params.sweep = solvers::SweepStyle::Jacobi;
        else if (sweep == "gauss-seidel")
            cfg.solver.params.sweep = solvers::SweepStyle::GaussSeidel;
        else
            throw ConfigError("[solver] sweep must be jacobi or gauss-seidel", 0);
        std::string proj = r.str_or("projection", "min-max");
        if (proj == "min-max") cfg.solver.params.projection = solvers::ProjectionOrder::MinMax;
        else if (proj == "max-min")
            cfg.solver.params.projection = solvers::ProjectionOrder::MaxMin;
        else
            throw ConfigError("[solver] projection must be min-max or max-min", 0);
        if (r.has("ladder")) cfg.solver.params.penalty_ladder = r.numbers("ladder");
        cfg.solver.params.fp_tol = r.number_or("eps_fp", cfg.solver.params.fp_tol);
        cfg.solver.params.max_inner =
            static_cast<int>(r.integer_or("max_inner", cfg.solver.params.max_inner));
        cfg.solver.params.lower_iterations =
            static_cast<int>(r.integer_or("K", cfg.solver.params.lower_iterations));
        if (r.has("J")) cfg.solver.ladder_cap = static_cast<int>(r.integer("J"));
        cfg.solver.params.sandwich_tol = r.number_or("eps_sw", cfg.solver.params.sandwich_tol);
    }
    if (raw.sections.count("simulate")) {
        Reader r(raw, "simulate");
        cfg.simulate.paths = static_cast<int>(r.integer_or("paths", cfg.simulate.paths));
        cfg.simulate.dt_sim = r.number_or("dt_sim", 0.0);
        cfg.simulate.seed = static_cast<std::uint64_t>(r.integer_or("seed", 12345));
        cfg.simulate.t0 = r.number_or("t0", 0.0);
        if (r.has("x0")) cfg.simulate.x0 = r.points("x0", cfg.problem.d).at(0);
    }
    if (raw.sections.count("verify")) {
        Reader r(raw, "verify");
        cfg.verify.theta = r.number_or("theta", cfg.verify.theta);
        if (r.has("varpi")) cfg.verify.varpi = r.numbers("varpi");
        cfg.verify.varrho = r.number_or("varrho", cfg.verify.varrho);
        cfg.verify.kappa = r.number_or("kappa", cfg.verify.kappa);
        cfg.verify.h1 = r.number_or("h1", cfg.verify.h1);
        cfg.verify.h2 = r.number_or("h2", cfg.verify.h2);
        cfg.verify.kappa_max = static_cast<int>(r.integer_or("kappa_max", cfg.verify.kappa_max));
        cfg.verify.samples = static_cast<int>(r.integer_or("samples", cfg.verify.samples));
    }
    reject_unused(raw);

    if (cfg.solver.ladder_cap && *cfg.solver.ladder_cap >= 1 &&
        static_cast<std::size_t>(*cfg.solver.ladder_cap) < cfg.solver.params.penalty_ladder.size())
        cfg.solver.params.penalty_ladder.resize(static_cast<std::size_t>(*cfg.solver.ladder_cap));
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    std::filesystem::path p(path);
    return parse_config(buf.str(), p.stem().string());
}

model::ProblemSpec build_problem(const RunConfig& cfg) {
    using namespace model;
    const int d = cfg.problem.d;
    ProblemSpec spec;
    spec.dim = d;
    spec.horizon = cfg.problem.T;
    auto fv = field_vars(d);
    for (int j = 0; j < d; ++j) {
        spec.drift[static_cast<std::size_t>(j)] =
            make_field_fn(expr::parse(cfg.problem.a[static_cast<std::size_t>(j)], fv), d);
        for (int i = 0; i < d; ++i)
            spec.diffusion[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = make_field_fn(
                expr::parse(cfg.problem.sigma[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)], fv), d);
    }
    auto bv = mark_vars(d, 'b');
    for (int j = 0; j < d; ++j)
        spec.impulse_map[static_cast<std::size_t>(j)] =
            make_mark_fn(expr::parse(cfg.problem.xi[static_cast<std::size_t>(j)], bv), d);
    spec.impulse_cost = make_mark_fn(expr::parse(cfg.problem.ell, bv), d);
    auto ev = mark_vars(d, 'e');
    for (int j = 0; j < d; ++j)
        spec.jump_map[static_cast<std::size_t>(j)] =
            make_mark_fn(expr::parse(cfg.problem.gamma[static_cast<std::size_t>(j)], ev), d);
    spec.jump_cost = make_mark_fn(expr::parse(cfg.problem.chi, ev), d);
    spec.state_only = cfg.problem.state_only;
    spec.driver =
        make_driver_fn(expr::parse(cfg.problem.f, driver_vars(d, spec.state_only)), d, spec.state_only);
    spec.terminal = make_terminal_fn(expr::parse(cfg.problem.psi, terminal_vars(d)), d);
    spec.impulses.nodes = cfg.spaces.U;
    spec.jumps.nodes = cfg.spaces.E;
    spec.jumps.weights = cfg.spaces.lambda;
    spec.cost_floor = cfg.problem.delta;
    spec.growth_exponent = cfg.problem.rho;
    spec.driver_lipschitz = cfg.problem.k_f;
    spec.impulse_bound = 1.0;  // placeholder until declared or estimated
    spec.validate_shape();
    spec.impulse_bound =
        cfg.problem.K ? *cfg.problem.K : model::estimate_impulse_bound(spec, 500);
    if (!(spec.impulse_bound > 0.0))
        throw ConfigError("[problem] K must be positive (declared or estimable)", 0);
    return spec;
}

grid::Grid build_grid(const RunConfig& cfg, const model::ProblemSpec& spec) {
    return grid::build_grid(spec, cfg.grid.R, cfg.grid.nx, cfg.grid.nt);
}

solvers::SolveParams solver_params(const RunConfig& cfg, int threads) {
    solvers::SolveParams p = cfg.solver.params;
    p.threads = threads;
    p.validate();
    return p;
}

verify::PerturbParams perturb_params(const RunConfig& cfg) {
    verify::PerturbParams p;
    p.theta = cfg.verify.theta;
    p.varpi_grid = cfg.verify.varpi;
    p.growth_exp = cfg.verify.varrho;
    return p;
}

model::NoFreeLoopParams no_free_loop_params(const RunConfig& cfg) {
    model::NoFreeLoopParams p;
    p.closure_radius = cfg.verify.h1;
    p.cost_floor = cfg.verify.h2;
    p.max_depth = cfg.verify.kappa_max;
    return p;
}

}  // namespace qvi::config
