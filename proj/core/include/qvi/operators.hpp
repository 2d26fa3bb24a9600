#ifndef QVI_OPERATORS_HPP
#define QVI_OPERATORS_HPP

// Discrete intervention operators on one time slice:
//   supOP v(t,x) = max_{b in U} { v(t, x + xi(t,x,b)) - ell(t,x,b) }
//   infOP v(t,x) = min_{e in E} { v(t, x + gamma(t,x,e)) + chi(t,x,e) }
// and the penalty operator
//   K^n v(t,x) = n * sum_j lambda_j (v(t, x+gamma(t,x,e_j)) + chi(t,x,e_j) - v(t,x))^-
// Ties break to the lowest action index so extracted strategies are
// reproducible.

#include <atomic>
#include <cstdint>
#include <vector>

#include "qvi/grid.hpp"

namespace qvi::operators {

using grid::Grid;
using model::Point;
using model::ProblemSpec;

struct SupObstacle {
    std::vector<double> values;  // Mv per node
    std::vector<int> argmax;     // index into U
};

struct InfObstacle {
    std::vector<double> values;  // Nv per node
    std::vector<int> argmin;     // index into E
};

/// Cached obstacle fields of one time slice.
struct ObstacleSlice {
    SupObstacle sup;
    InfObstacle inf;
};

SupObstacle eval_supOP(const ProblemSpec& spec, const Grid& g, std::span<const double> slice,
                       double t, int threads = 1,
                       std::atomic<std::uint64_t>* clamp_count = nullptr);

InfObstacle eval_infOP(const ProblemSpec& spec, const Grid& g, std::span<const double> slice,
                       double t, int threads = 1,
                       std::atomic<std::uint64_t>* clamp_count = nullptr);

std::vector<double> eval_penalty(const ProblemSpec& spec, const Grid& g,
                                 std::span<const double> slice, double t, double level,
                                 int threads = 1,
                                 std::atomic<std::uint64_t>* clamp_count = nullptr);

}  // namespace qvi::operators

#endif
