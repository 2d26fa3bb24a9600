#include "qvi/strategy.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "qvi/operators.hpp"
#include "qvi/parallel.hpp"

namespace qvi::strategy {

using model::Point;

ImpulsePolicy extract_impulse_policy(const ValueField& field, const ProblemSpec& spec,
                                     const Grid& g, double eps_act, int threads) {
    if (!(eps_act > 0.0)) throw std::invalid_argument("extract_impulse_policy: eps_act > 0");
    const int n = g.num_nodes();
    ImpulsePolicy policy;
    policy.activation_tol = eps_act;
    policy.nt = g.nt;
    policy.nodes = n;
    policy.intervene.assign(static_cast<std::size_t>(g.nt + 1) * static_cast<std::size_t>(n), 0);
    policy.impulse_index.assign(policy.intervene.size(), 0);

    for (int m = 0; m <= g.nt; ++m) {
        auto slice = field.slice(m);
        auto M = operators::eval_supOP(spec, g, slice, g.time(m), threads);
        auto base = static_cast<std::size_t>(m) * static_cast<std::size_t>(n);
        for (int i = 0; i < n; ++i) {
            policy.impulse_index[base + static_cast<std::size_t>(i)] =
                M.argmax[static_cast<std::size_t>(i)];
            if (slice[static_cast<std::size_t>(i)] - M.values[static_cast<std::size_t>(i)] <=
                eps_act)
                policy.intervene[base + static_cast<std::size_t>(i)] = 1;
        }
    }

    // chained-impulse guard: discretization can mark the destination of a
    // marked node again; depth > 3 is diagnosed, never followed further
    for (int m = 0; m <= g.nt; ++m) {
        double t = g.time(m);
        for (int i = 0; i < n; ++i) {
            if (!policy.marked(m, i)) continue;
            int node = i;
            int depth = 0;
            std::ostringstream chain;
            chain << i;
            while (depth < 3) {
                Point dest = spec.after_impulse(t, g.node(node), policy.impulse(m, node));
                int next = g.nearest_node(dest);
                if (next == node || !policy.marked(m, next)) break;
                node = next;
                ++depth;
                chain << " -> " << next;
            }
            if (depth == 3) {
                std::ostringstream os;
                os << "impulse chain deeper than 3 at slice " << m << ": " << chain.str();
                policy.chain_diagnostics.push_back(os.str());
            }
        }
    }
    return policy;
}

RandomizationDensity extract_randomization_density(const ValueField& field,
                                                   const ProblemSpec& spec, const Grid& g,
                                                   double level, int threads) {
    if (!(level > 0.0))
        throw std::invalid_argument("extract_randomization_density: level n > 0");
    const int n = g.num_nodes();
    const int marks = static_cast<int>(spec.jumps.nodes.size());
    RandomizationDensity density;
    density.level = level;
    density.nt = g.nt;
    density.nodes = n;
    density.marks = marks;
    density.trigger.assign(
        static_cast<std::size_t>(g.nt + 1) * static_cast<std::size_t>(n) * static_cast<std::size_t>(marks), 0);

    for (int m = 0; m <= g.nt; ++m) {
        auto slice = field.slice(m);
        double t = g.time(m);
        auto base = static_cast<std::size_t>(m) * static_cast<std::size_t>(n);
        parallel_for(n, threads, [&](int i) {
            Point x = g.node(i);
            double here = slice[static_cast<std::size_t>(i)];
            for (int k = 0; k < marks; ++k) {
                Point dest = spec.after_jump(t, x, k);
                double gap = grid::interpolate(g, slice, dest) +
                             spec.jump_cost(t, x, spec.jumps.nodes[static_cast<std::size_t>(k)]) -
                             here;
                if (gap < 0.0)
                    density.trigger[(base + static_cast<std::size_t>(i)) *
                                        static_cast<std::size_t>(marks) +
                                    static_cast<std::size_t>(k)] = 1;
            }
        });
    }
    return density;
}

RegionReport action_region_report(const ImpulsePolicy& policy,
                                  const RandomizationDensity& density, const Grid& g) {
    RegionReport rep;
    const int n = g.num_nodes();
    for (int m = 0; m <= g.nt; ++m) {
        int marked = 0;
        for (int i = 0; i < n; ++i)
            if (policy.marked(m, i)) ++marked;
        rep.intervene_fraction.push_back(static_cast<double>(marked) / n);
        int triggered = 0;
        for (int i = 0; i < n; ++i) {
            bool any = false;
            for (int k = 0; k < density.marks && !any; ++k) any = density.triggered(m, i, k);
            if (any) ++triggered;
        }
        rep.trigger_fraction.push_back(static_cast<double>(triggered) / n);
    }
    return rep;
}

std::string RegionReport::to_text() const {
    std::ostringstream os;
    os << "action regions per time slice (intervene fraction, trigger fraction)\n";
    for (std::size_t m = 0; m < intervene_fraction.size(); ++m)
        os << "  slice " << m << ": " << intervene_fraction[m] << ", " << trigger_fraction[m]
           << '\n';
    return os.str();
}

std::vector<std::pair<std::string, std::string>> RegionReport::to_kv() const {
    std::vector<std::pair<std::string, std::string>> kv;
    auto num = [](double v) {
        std::ostringstream os;
        os << v;
        return os.str();
    };
    double imax = 0.0, tmax = 0.0;
    for (double v : intervene_fraction) imax = std::max(imax, v);
    for (double v : trigger_fraction) tmax = std::max(tmax, v);
    kv.emplace_back("slices", std::to_string(intervene_fraction.size()));
    kv.emplace_back("max_intervene_fraction", num(imax));
    kv.emplace_back("max_trigger_fraction", num(tmax));
    return kv;
}

}  // namespace qvi::strategy
