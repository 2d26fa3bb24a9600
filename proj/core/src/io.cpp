#include "qvi/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "qvi/operators.hpp"

namespace qvi::io {

std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

std::string artifact_header(const std::string& config_hash) {
    return std::string("# qvi-lab ") + kToolVersion + " config=" + config_hash + "\n";
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << content;
}

void write_kv_file(const std::filesystem::path& path, const std::string& header,
                   const std::vector<std::pair<std::string, std::string>>& kv) {
    std::ostringstream os;
    os << header;
    for (const auto& [k, v] : kv) os << k << '=' << v << '\n';
    write_text_file(path, os.str());
}

namespace {

std::string node_label(const grid::Grid& g, int i) {
    model::Point x = g.node(i);
    if (g.dim == 1) return "x=" + format_double(x[0]);
    return "x=(" + format_double(x[0]) + ";" + format_double(x[1]) + ")";
}

}  // namespace

void write_field_csv(const std::filesystem::path& path, const std::string& header,
                     const grid::Grid& g, const grid::ValueField& field) {
    std::ostringstream os;
    os << header << "t";
    for (int i = 0; i < g.num_nodes(); ++i) os << ',' << node_label(g, i);
    os << '\n';
    for (int m = 0; m <= g.nt; ++m) {
        os << format_double(g.time(m));
        for (int i = 0; i < g.num_nodes(); ++i) os << ',' << format_double(field.at(m, i));
        os << '\n';
    }
    write_text_file(path, os.str());
}

void write_obstacles_csv(const std::filesystem::path& path, const std::string& header,
                         const model::ProblemSpec& spec, const grid::Grid& g,
                         const grid::ValueField& field, int threads) {
    std::ostringstream os;
    os << header << "t,x,v,Mv,Nv,argmax_b,argmin_e\n";
    for (int m = 0; m <= g.nt; ++m) {
        auto slice = field.slice(m);
        auto M = operators::eval_supOP(spec, g, slice, g.time(m), threads);
        auto N = operators::eval_infOP(spec, g, slice, g.time(m), threads);
        for (int i = 0; i < g.num_nodes(); ++i) {
            auto iu = static_cast<std::size_t>(i);
            os << format_double(g.time(m)) << ',' << node_label(g, i).substr(2) << ','
               << format_double(slice[iu]) << ',' << format_double(M.values[iu]) << ','
               << format_double(N.values[iu]) << ',' << M.argmax[iu] << ',' << N.argmin[iu]
               << '\n';
        }
    }
    write_text_file(path, os.str());
}

void write_policy_csv(const std::filesystem::path& path, const std::string& header,
                      const strategy::ImpulsePolicy& policy, const grid::Grid& g) {
    std::ostringstream os;
    os << header << "# columns: x-index,intervene,b-index (one block per time slice)\n";
    os << "# eps_act=" << format_double(policy.activation_tol) << '\n';
    for (int m = 0; m <= g.nt; ++m) {
        os << "# slice m=" << m << " t=" << format_double(g.time(m)) << '\n';
        for (int i = 0; i < g.num_nodes(); ++i)
            os << i << ',' << (policy.marked(m, i) ? 1 : 0) << ',' << policy.impulse(m, i)
               << '\n';
    }
    write_text_file(path, os.str());
}

void write_density_csv(const std::filesystem::path& path, const std::string& header,
                       const strategy::RandomizationDensity& density, const grid::Grid& g) {
    std::ostringstream os;
    os << header << "n=" << format_double(density.level) << '\n';
    os << "# columns: x-index,e-index,trigger (one block per time slice)\n";
    for (int m = 0; m <= g.nt; ++m) {
        os << "# slice m=" << m << " t=" << format_double(g.time(m)) << '\n';
        for (int i = 0; i < g.num_nodes(); ++i)
            for (int k = 0; k < density.marks; ++k)
                os << i << ',' << k << ',' << (density.triggered(m, i, k) ? 1 : 0) << '\n';
    }
    write_text_file(path, os.str());
}

void write_regions_csv(const std::filesystem::path& path, const std::string& header,
                       const strategy::RegionReport& report) {
    std::ostringstream os;
    os << header << "slice,intervene_fraction,trigger_fraction\n";
    for (std::size_t m = 0; m < report.intervene_fraction.size(); ++m)
        os << m << ',' << format_double(report.intervene_fraction[m]) << ','
           << format_double(report.trigger_fraction[m]) << '\n';
    write_text_file(path, os.str());
}

void write_deltas_csv(const std::filesystem::path& path, const std::string& header,
                      const std::vector<double>& deltas) {
    std::ostringstream os;
    os << header << "iteration,sup_delta\n";
    for (std::size_t k = 0; k < deltas.size(); ++k)
        os << (k + 1) << ',' << format_double(deltas[k]) << '\n';
    write_text_file(path, os.str());
}

void write_paths_csv(const std::filesystem::path& path, const std::string& header,
                     const model::ProblemSpec& spec,
                     const std::vector<simulate::PathRecord>& records) {
    std::ostringstream os;
    os << header << "path,t,x1" << (spec.dim == 2 ? ",x2" : "") << ",event,cost\n";
    for (std::size_t p = 0; p < records.size(); ++p) {
        const auto& rec = records[p];
        for (std::size_t s = 0; s < rec.states.size(); ++s) {
            double t = rec.t0 + static_cast<double>(s) * rec.dt_sim;
            os << p << ',' << format_double(t) << ',' << format_double(rec.states[s][0]);
            if (spec.dim == 2) os << ',' << format_double(rec.states[s][1]);
            os << ",-,0\n";
        }
        for (const auto& [t, b] : rec.impulses) {
            // the impulse acts on the state at the start of its step
            auto s = static_cast<std::size_t>(std::lround((t - rec.t0) / rec.dt_sim));
            double cost = spec.impulse_cost(t, rec.states[s],
                                            spec.impulses.nodes[static_cast<std::size_t>(b)]);
            os << p << ',' << format_double(t) << ",,impulse[" << b << "],"
               << format_double(cost) << '\n';
        }
        for (const auto& [t, e] : rec.jumps)
            os << p << ',' << format_double(t) << ",,jump[" << e << "],0\n";
        os << "# path " << p << " payoff=" << format_double(rec.payoff)
           << " impulse_cost=" << format_double(rec.impulse_cost_total)
           << " reward=" << format_double(rec.running_reward)
           << " compensation=" << format_double(rec.compensation)
           << " clamped=" << (rec.boundary_clamped ? 1 : 0) << '\n';
    }
    write_text_file(path, os.str());
}

}  // namespace qvi::io
