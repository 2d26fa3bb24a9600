#ifndef QVI_STRATEGY_HPP
#define QVI_STRATEGY_HPP

// Extraction of the two optimal strategies from a solved value field: the
// maximizer's impulse policy (intervene where v - supOP v <= eps_act, play the
// cached argmax b*) and the minimizer's randomization density (intensity n on
// the trigger set {v(t,x+gamma)+chi-v(t,x) < 0}, 0 elsewhere).

#include <cstdint>
#include <string>
#include <vector>

#include "qvi/grid.hpp"

namespace qvi::strategy {

using grid::Grid;
using grid::ValueField;
using model::ProblemSpec;

struct ImpulsePolicy {
    double activation_tol = 0.0;  // eps_act
    int nt = 0;
    int nodes = 0;
    std::vector<std::uint8_t> intervene;  // (nt+1) x nodes
    std::vector<int> impulse_index;       // cached argmax into U
    std::vector<std::string> chain_diagnostics;

    bool marked(int m, int i) const {
        return intervene[static_cast<std::size_t>(m) * static_cast<std::size_t>(nodes) +
                         static_cast<std::size_t>(i)] != 0;
    }
    int impulse(int m, int i) const {
        return impulse_index[static_cast<std::size_t>(m) * static_cast<std::size_t>(nodes) +
                             static_cast<std::size_t>(i)];
    }
};

struct RandomizationDensity {
    double level = 0.0;  // n; realized intensity is n on triggers, 0 elsewhere
    int nt = 0;
    int nodes = 0;
    int marks = 0;  // |E|
    std::vector<std::uint8_t> trigger;  // (nt+1) x nodes x marks

    bool triggered(int m, int i, int e) const {
        return trigger[(static_cast<std::size_t>(m) * static_cast<std::size_t>(nodes) +
                        static_cast<std::size_t>(i)) *
                           static_cast<std::size_t>(marks) +
                       static_cast<std::size_t>(e)] != 0;
    }
};

struct RegionReport {
    std::vector<double> intervene_fraction;  // per time slice
    std::vector<double> trigger_fraction;    // nodes with at least one trigger
    std::string to_text() const;
    std::vector<std::pair<std::string, std::string>> to_kv() const;
};

/// Marks nodes with v - supOP v <= eps_act and caches the argmax impulse.
/// Chains of marked nodes deeper than 3 produce diagnostics instead of loops.
ImpulsePolicy extract_impulse_policy(const ValueField& field, const ProblemSpec& spec,
                                     const Grid& g, double eps_act, int threads = 1);

/// Triggers exactly where v(t, x+gamma(t,x,e)) + chi(t,x,e) - v(t,x) < 0.
RandomizationDensity extract_randomization_density(const ValueField& field,
                                                   const ProblemSpec& spec, const Grid& g,
                                                   double level, int threads = 1);

RegionReport action_region_report(const ImpulsePolicy& policy,
                                  const RandomizationDensity& density, const Grid& g);

}  // namespace qvi::strategy

#endif
